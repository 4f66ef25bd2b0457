#include "sega/detector.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "sega/errors.hpp"

using json = nlohmann::ordered_json;

namespace sega {

MetricsReport evaluate(const std::vector<UserClass>& predictions,
                       const std::vector<UserClass>& labels) {
    if (predictions.size() != labels.size())
        throw ShapeError("evaluate: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
    MetricsReport m;
    for (size_t i = 0; i < labels.size(); ++i)
        ++m.confusion[static_cast<int>(labels[i])][static_cast<int>(predictions[i])];
    double psum = 0, rsum = 0, fsum = 0;
    for (int c = 0; c < 3; ++c) {
        int64_t tp = m.confusion[c][c], fp = 0, fn = 0;
        for (int o = 0; o < 3; ++o) {
            if (o == c) continue;
            fp += m.confusion[o][c];
            fn += m.confusion[c][o];
        }
        auto& pc = m.per_class[c];
        pc.precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
        pc.recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
        pc.f1 = (pc.precision + pc.recall) == 0.0
                    ? 0.0
                    : 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall);
        psum += pc.precision;
        rsum += pc.recall;
        fsum += pc.f1;
    }
    m.macro.precision = psum / 3.0;
    m.macro.recall = rsum / 3.0;
    m.macro.f1 = fsum / 3.0;
    return m;
}

std::string metrics_to_json(const MetricsReport& m) {
    json j;
    json per;
    for (int c = 0; c < 3; ++c) {
        json pc;
        pc["precision"] = m.per_class[c].precision;
        pc["recall"] = m.per_class[c].recall;
        pc["f1"] = m.per_class[c].f1;
        per[class_name(static_cast<UserClass>(c))] = std::move(pc);
    }
    j["per_class"] = std::move(per);
    json macro;
    macro["precision"] = m.macro.precision;
    macro["recall"] = m.macro.recall;
    macro["f1"] = m.macro.f1;
    j["macro"] = std::move(macro);
    json conf = json::array();
    for (int a = 0; a < 3; ++a) {
        json row = json::array();
        for (int b = 0; b < 3; ++b) row.push_back(m.confusion[a][b]);
        conf.push_back(std::move(row));
    }
    j["confusion"] = std::move(conf);
    return j.dump(2);
}

namespace {

struct SplitUsers {
    std::vector<int> rows;
    std::vector<UserClass> labels;
};

SplitUsers split_users(const HeteroGraph& g, Split split) {
    SplitUsers out;
    for (int i = 0; i < g.user_count(); ++i)
        if (g.users[i].split == split && g.users[i].label) {
            out.rows.push_back(i);
            out.labels.push_back(*g.users[i].label);
        }
    return out;
}

std::vector<UserClass> argmax_classes(const std::vector<float>& logits, int rows) {
    std::vector<UserClass> out(rows);
    for (int i = 0; i < rows; ++i) {
        int best = 0;
        for (int c = 1; c < 3; ++c)
            if (logits[i * 3 + c] > logits[i * 3 + best]) best = c;
        out[i] = static_cast<UserClass>(best);
    }
    return out;
}

}  // namespace

std::vector<UserClass> predict_classes(Model& model, const GraphInputsT<float>& inputs,
                                       const std::vector<int>& user_rows) {
    Tape tape;  // eval mode
    VarId zg = model.encode_graph(tape, inputs);
    VarId zu = model.user_embeddings(tape, zg, inputs.n_users);
    VarId logits = model.classify_logits(tape, tape.gather_rows(zu, user_rows));
    return argmax_classes(tape.value(logits), static_cast<int>(user_rows.size()));
}

std::vector<float> predict_probabilities(Model& model, const GraphInputsT<float>& inputs,
                                         const std::vector<int>& user_rows) {
    Tape tape;
    VarId zg = model.encode_graph(tape, inputs);
    VarId zu = model.user_embeddings(tape, zg, inputs.n_users);
    VarId probs = tape.row_softmax(
        model.classify_logits(tape, tape.gather_rows(zu, user_rows)));
    return tape.value(probs);
}

std::vector<float> compute_user_embeddings(Model& model, const GraphInputsT<float>& inputs) {
    Tape tape;
    VarId zg = model.encode_graph(tape, inputs);
    VarId zu = model.user_embeddings(tape, zg, inputs.n_users);
    return tape.value(zu);
}

FinetuneResult finetune(Model& model, const GraphIndex& gi, const GraphInputsT<float>& inputs,
                        const FinetuneConfig& cfg) {
    const auto& g = gi.graph();
    const SplitUsers train = split_users(g, Split::train);
    const SplitUsers valid = split_users(g, Split::valid);
    const SplitUsers test = split_users(g, Split::test);
    if (train.rows.empty()) throw DataError("finetune: train split has no labeled users");

    AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    AdamW optimizer(opt_cfg);
    auto params = model.params().all();
    const int n_train = static_cast<int>(train.rows.size());

    FinetuneResult result;
    double best_f1 = -1.0;
    std::vector<std::vector<float>> best_values;

    auto snapshot = [&] {
        best_values.clear();
        for (auto* p : params) best_values.push_back(p->value);
    };
    auto restore = [&] {
        for (size_t i = 0; i < best_values.size(); ++i) params[i]->value = best_values[i];
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(stream_seed(cfg.seed, "finetune.shuffle", epoch));
        std::vector<int> order(n_train);
        std::iota(order.begin(), order.end(), 0);
        for (int i = n_train - 1; i > 0; --i)
            std::swap(order[i], order[shuffle_rng.uniform_int(static_cast<uint64_t>(i) + 1)]);

        double epoch_loss = 0.0;
        int batch_index = 0;
        for (int start = 0; start < n_train; start += cfg.batch_size, ++batch_index) {
            const int end = std::min(n_train, start + cfg.batch_size);
            std::vector<int> rows;
            std::vector<int> labels;
            for (int i = start; i < end; ++i) {
                rows.push_back(train.rows[order[i]]);
                labels.push_back(static_cast<int>(train.labels[order[i]]));
            }
            Rng drop_rng(stream_seed(cfg.seed, "finetune.drop",
                                     (static_cast<uint64_t>(epoch) << 20) + batch_index));
            Tape::Options opts;
            opts.train = true;
            opts.rng = &drop_rng;
            Tape tape(opts);
            VarId zg = model.encode_graph(tape, inputs);
            VarId zu = model.user_embeddings(tape, zg, inputs.n_users);
            VarId logits = model.classify_logits(tape, tape.gather_rows(zu, rows));
            VarId ce = tape.softmax_cross_entropy(logits, labels);
            VarId loss = tape.add(
                ce, tape.scalar_mul(model.l2_penalty(tape), static_cast<float>(cfg.lambda)));
            epoch_loss += tape.scalar(loss);
            model.params().zero_grads();
            tape.backward(loss);
            optimizer.step(params);
        }

        double valid_f1 = 0.0;
        if (!valid.rows.empty()) {
            auto preds = predict_classes(model, inputs, valid.rows);
            valid_f1 = evaluate(preds, valid.labels).macro.f1;
        }
        if (valid_f1 > best_f1) {
            best_f1 = valid_f1;
            result.best_epoch = epoch;
            snapshot();
        }
        result.log.push_back({epoch + 1, epoch_loss, valid_f1});
    }

    if (!best_values.empty()) restore();
    if (!valid.rows.empty())
        result.valid = evaluate(predict_classes(model, inputs, valid.rows), valid.labels);
    if (!test.rows.empty())
        result.test = evaluate(predict_classes(model, inputs, test.rows), test.labels);
    return result;
}

void write_epoch_log(const std::string& path, const std::vector<EpochLogRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("epoch log: cannot open " + path);
    out << "epoch,train_loss,valid_macro_f1\n";
    for (const auto& r : rows) out << r.epoch << "," << r.train_loss << "," << r.valid_macro_f1 << "\n";
}

}  // namespace sega
