#include "sega/pretrain.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "sega/checkpoint.hpp"
#include "sega/errors.hpp"

namespace sega {

const char* objective_name(PretrainObjective o) {
    return o == PretrainObjective::contrastive ? "contrastive" : "multilabel";
}

std::optional<PretrainObjective> parse_objective(const std::string& name) {
    if (name == "contrastive") return PretrainObjective::contrastive;
    if (name == "multilabel") return PretrainObjective::multilabel;
    return std::nullopt;
}

AnchorSet build_anchor_set(const HeteroGraph& g,
                           const std::map<std::string, StringPairList>& prefs,
                           TemplateKind kind) {
    AnchorSet out;
    PreferenceOracle oracle(prefs);
    std::map<std::string, int> index_of;
    for (int i = 0; i < g.user_count(); ++i) {
        auto profile = oracle.extract_pairs(g.users[i]);
        if (!profile) continue;  // no posts or no parsed pairs: excluded
        auto label = render_prompt(*profile, kind);
        auto [it, inserted] =
            index_of.emplace(label.text, static_cast<int>(out.unique_labels.size()));
        if (inserted) out.unique_labels.push_back(label.text);
        out.users.push_back(i);
        out.profiles.push_back(std::move(*profile));
        out.label_index.push_back(it->second);
    }
    return out;
}

std::vector<int> sample_negatives(int anchor_label, int pool_size, int k, Rng& rng) {
    std::vector<int> eligible;
    eligible.reserve(pool_size > 0 ? pool_size - 1 : 0);
    for (int i = 0; i < pool_size; ++i)
        if (i != anchor_label) eligible.push_back(i);
    if (eligible.empty() || k <= 0) return {};
    const int take = std::min<int>(k, static_cast<int>(eligible.size()));
    // partial Fisher-Yates
    for (int i = 0; i < take; ++i) {
        const auto j = i + static_cast<int>(rng.uniform_int(eligible.size() - i));
        std::swap(eligible[i], eligible[j]);
    }
    eligible.resize(take);
    return eligible;
}

std::vector<float> multilabel_targets(const PreferenceProfile& profile) {
    std::vector<float> out(kPairCount, 0.0f);
    for (const auto& [pair, count] : profile.counts)
        if (count > 0) out[pair_index(pair)] = 1.0f;
    return out;
}

std::vector<Tensor*> pretrain_param_set(Model& model, PretrainObjective objective) {
    std::vector<Tensor*> out;
    for (auto* p : model.params().all()) {
        const bool backbone = p->name.rfind("feat.", 0) == 0 || p->name.rfind("rgt.", 0) == 0 ||
                              p->name.rfind("head.user.", 0) == 0;
        const bool contrastive_head =
            p->name.rfind("head.anchor.", 0) == 0 || p->name.rfind("head.label.", 0) == 0;
        const bool ml_head = p->name.rfind("head.ml.", 0) == 0;
        if (backbone || (objective == PretrainObjective::contrastive && contrastive_head) ||
            (objective == PretrainObjective::multilabel && ml_head))
            out.push_back(p);
    }
    return out;
}

PretrainResult pretrain(Model& model, const GraphInputsT<float>& inputs, const AnchorSet& anchors,
                        EmbeddingProvider& prompt_provider, const PretrainConfig& cfg,
                        PretrainState& state) {
    if (anchors.users.empty())
        throw DataError("pretrain: no eligible anchors (no user has preference pairs)");
    if (cfg.temperature <= 0.0) throw DataError("pretrain: temperature must be positive");

    PretrainResult result;
    result.anchors = static_cast<int>(anchors.users.size());

    // pseudo-label embeddings are static across training; embed once
    std::vector<float> pool_data;
    const bool contrastive = cfg.objective == PretrainObjective::contrastive;
    if (contrastive) {
        pool_data.reserve(anchors.unique_labels.size() * kEmbeddingDim);
        for (const auto& text : anchors.unique_labels) {
            auto v = prompt_provider.embed_text(text);
            pool_data.insert(pool_data.end(), v.begin(), v.end());
        }
    }
    const int pool_size = static_cast<int>(anchors.unique_labels.size());
    const int n_anchors = static_cast<int>(anchors.users.size());

    auto params = pretrain_param_set(model, cfg.objective);

    for (int epoch = state.next_epoch; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(stream_seed(cfg.seed, "pretrain.shuffle", epoch));
        Rng neg_rng(stream_seed(cfg.seed, "pretrain.neg", epoch));
        std::vector<int> order(n_anchors);
        std::iota(order.begin(), order.end(), 0);
        for (int i = n_anchors - 1; i > 0; --i)
            std::swap(order[i], order[shuffle_rng.uniform_int(static_cast<uint64_t>(i) + 1)]);

        double epoch_loss = 0.0;
        int batch_index = 0;
        for (int start = 0; start < n_anchors; start += cfg.batch_size, ++batch_index) {
            const int end = std::min(n_anchors, start + cfg.batch_size);

            // batch rows into z^u, positives, and per-anchor negatives
            std::vector<int> batch_users, pos;
            Csr negs;
            negs.ptr.push_back(0);
            std::vector<std::vector<float>> ml_targets;
            for (int bi = start; bi < end; ++bi) {
                const int a = order[bi];
                if (contrastive) {
                    auto sampled =
                        sample_negatives(anchors.label_index[a], pool_size, cfg.negatives, neg_rng);
                    if (sampled.empty()) {
                        ++result.skipped_anchors;  // every pseudo-label equals the anchor's
                        continue;
                    }
                    negs.idx.insert(negs.idx.end(), sampled.begin(), sampled.end());
                    negs.ptr.push_back(static_cast<int>(negs.idx.size()));
                    pos.push_back(anchors.label_index[a]);
                } else {
                    ml_targets.push_back(multilabel_targets(anchors.profiles[a]));
                }
                batch_users.push_back(anchors.users[a]);
            }
            if (batch_users.empty()) continue;

            Rng drop_rng(stream_seed(cfg.seed, "pretrain.drop", (static_cast<uint64_t>(epoch) << 20) + batch_index));
            Tape::Options opts;
            opts.train = true;
            opts.rng = &drop_rng;
            Tape tape(opts);

            VarId zg = model.encode_graph(tape, inputs);
            VarId zu = model.user_embeddings(tape, zg, inputs.n_users);
            VarId rows = tape.gather_rows(zu, batch_users);
            VarId loss;
            if (contrastive) {
                VarId anchors_proj = model.project_anchor(tape, rows);
                VarId pool = tape.constant({pool_size, kEmbeddingDim}, pool_data);
                VarId labels_proj = model.project_labels(tape, pool);
                loss = tape.infonce(anchors_proj, labels_proj, pos, negs, cfg.temperature);
            } else {
                VarId logits = model.multilabel_logits(tape, rows);
                std::vector<float> targets;
                targets.reserve(ml_targets.size() * kPairCount);
                for (const auto& t : ml_targets) targets.insert(targets.end(), t.begin(), t.end());
                loss = tape.bce_with_logits(logits, targets);
            }
            epoch_loss += tape.scalar(loss);
            model.params().zero_grads();
            tape.backward(loss);
            state.optimizer.step(params);
        }
        result.epoch_losses.push_back(epoch_loss);
    }
    state.next_epoch = cfg.epochs;
    return result;
}

void save_train_checkpoint(const std::string& path, const Model& model,
                           const PretrainState* state) {
    std::vector<const Tensor*> tensors = model.params().all_const();
    std::vector<Tensor> extra;
    if (state) {
        extra = state->optimizer.state_tensors();
        Tensor cursor("train.next_epoch", {1}, false);
        cursor.value = {static_cast<float>(state->next_epoch)};
        extra.push_back(std::move(cursor));
    }
    for (const auto& t : extra) tensors.push_back(&t);
    save_checkpoint(path, tensors);
}

void load_train_checkpoint(const std::string& path, Model& model, PretrainState* state) {
    auto ckpt = load_checkpoint(path);
    model.load_values(ckpt);
    if (state) {
        for (const auto& [name, tensor] : ckpt) {
            if (name.rfind("opt.", 0) == 0) state->optimizer.restore_state(name, tensor.value);
            if (name == "train.next_epoch")
                state->next_epoch = static_cast<int>(tensor.value.at(0));
        }
    }
}

void write_loss_log(const std::string& path, PretrainObjective objective,
                    const std::vector<double>& losses) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("loss log: cannot open " + path);
    out << "epoch,objective,loss\n";
    for (size_t i = 0; i < losses.size(); ++i)
        out << (i + 1) << "," << objective_name(objective) << "," << losses[i] << "\n";
}

}  // namespace sega
