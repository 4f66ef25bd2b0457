// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line. Directional training criteria run the full shipped defaults on the
// synthetic benchmark; numeric criteria run against independent oracles.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "sega/checkpoint.hpp"
#include "sega/config.hpp"
#include "sega/detector.hpp"
#include "sega/features.hpp"
#include "sega/grad_check.hpp"
#include "sega/pca.hpp"
#include "sega/pretrain.hpp"
#include "sega/synth.hpp"

using namespace sega;
namespace fs = std::filesystem;

namespace {

void report(int criterion, bool pass, const std::string& what) {
    std::printf("ACCEPTANCE %2d %s  %s\n", criterion, pass ? "PASS" : "FAIL", what.c_str());
    std::fflush(stdout);
}

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

Tensor64 rand_tensor(const std::string& name, Shape shape, Rng& rng, double scale = 1.0) {
    Tensor64 t(name, std::move(shape), true);
    for (auto& v : t.value) v = rng.normal() * scale;
    return t;
}

void nudge(Tensor64& t, double margin = 0.05) {
    for (auto& v : t.value)
        if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
}

VarId to_scalar(Tape64& tape, VarId y, uint64_t seed) {
    const Shape s = tape.shape(y);
    if (numel(s) == 1) return y;
    Rng rng(seed);
    std::vector<double> left(s[0]), right(s[1]);
    for (auto& v : left) v = rng.normal();
    for (auto& v : right) v = rng.normal();
    VarId l = tape.constant({1, s[0]}, left);
    VarId r = tape.constant({s[1], 1}, right);
    return tape.reduce_sum(tape.matmul(tape.matmul(l, y), r));
}

ModelConfig check_config() {
    ModelConfig cfg;
    cfg.text_dim = 12;
    cfg.hidden_dim = 4;
    cfg.encoder_dim = 16;
    cfg.user_dim = 8;
    cfg.contrastive_dim = 8;
    cfg.heads = 2;
    cfg.layers = 2;
    cfg.dropout = 0.0f;
    return cfg;
}

using EdgeList = std::vector<std::pair<int, int>>;

template <typename S>
GraphInputsT<S> toy_inputs(int n_users, int n_lists, const ModelConfig& cfg, uint64_t seed,
                           const std::array<EdgeList, kRelationCount>& edges) {
    GraphInputsT<S> in;
    in.n_users = n_users;
    in.n_lists = n_lists;
    Rng rng(seed);
    auto fill = [&](std::vector<S>& v, int rows, int width) {
        v.resize(static_cast<size_t>(rows) * width);
        for (auto& x : v) x = static_cast<S>(rng.normal());
    };
    fill(in.user_ind, n_users, kUserIndicators);
    fill(in.user_num, n_users, kUserNumericals);
    fill(in.user_des, n_users, cfg.text_dim);
    fill(in.user_twe, n_users, cfg.text_dim);
    fill(in.list_ind, n_lists, kListIndicators);
    fill(in.list_num, n_lists, kListNumericals);
    fill(in.list_des, n_lists, cfg.text_dim);
    fill(in.list_twe, n_lists, cfg.text_dim);
    const int n = n_users + n_lists;
    in.present.assign(static_cast<size_t>(n) * kRelationCount, 0);
    for (int r = 0; r < kRelationCount; ++r) {
        std::vector<std::vector<int>> rows(n);
        for (auto [s, d] : edges[r]) {
            rows[d].push_back(s);
            in.present[static_cast<size_t>(d) * kRelationCount + r] = 1;
        }
        for (int i = 0; i < n; ++i) {
            rows[i].push_back(i);
            std::sort(rows[i].begin(), rows[i].end());
        }
        auto& adj = in.adj[r];
        adj.ptr.assign(n + 1, 0);
        for (int i = 0; i < n; ++i) adj.ptr[i + 1] = adj.ptr[i] + static_cast<int>(rows[i].size());
        for (int i = 0; i < n; ++i) adj.idx.insert(adj.idx.end(), rows[i].begin(), rows[i].end());
    }
    for (int i = 0; i < n; ++i) {
        bool any = false;
        for (int r = 0; r < kRelationCount; ++r)
            any = any || in.present[static_cast<size_t>(i) * kRelationCount + r];
        if (!any) {
            const NodeKind kind = i < n_users ? NodeKind::user : NodeKind::list;
            for (int r = 0; r < kRelationCount; ++r)
                if (relation_dst_kind(static_cast<Relation>(r)) == kind)
                    in.present[static_cast<size_t>(i) * kRelationCount + r] = 1;
        }
    }
    return in;
}

std::array<EdgeList, kRelationCount> pipeline_edges() {
    std::array<EdgeList, kRelationCount> edges{};
    edges[static_cast<int>(Relation::following)] = {{0, 1}, {1, 2}, {2, 3}, {4, 0}};
    edges[static_cast<int>(Relation::followers)] = {{3, 4}, {5, 2}};
    edges[static_cast<int>(Relation::own)] = {{0, 6}, {3, 7}};
    edges[static_cast<int>(Relation::followed)] = {{1, 6}};
    edges[static_cast<int>(Relation::membership)] = {{6, 2}, {7, 5}};
    return edges;
}

double infonce_value(const std::vector<std::vector<double>>& anchors,
                     const std::vector<std::vector<double>>& pool, const std::vector<int>& pos,
                     const Csr& negs, double tau) {
    Tape64 tape;
    const int d = static_cast<int>(anchors[0].size());
    std::vector<double> zdata, pdata;
    for (const auto& a : anchors) zdata.insert(zdata.end(), a.begin(), a.end());
    for (const auto& p : pool) pdata.insert(pdata.end(), p.begin(), p.end());
    VarId z = tape.constant({static_cast<int>(anchors.size()), d}, zdata);
    VarId p = tape.constant({static_cast<int>(pool.size()), d}, pdata);
    return tape.scalar(tape.infonce(z, p, pos, negs, tau));
}

std::vector<double> unit(int dim, int axis) {
    std::vector<double> v(dim, 0.0);
    v[axis] = 1.0;
    return v;
}

struct World {
    std::unique_ptr<HeteroGraph> graph;
    std::unique_ptr<GraphIndex> index;
    DatasetFeatures feats;
    GraphInputsT<float> inputs;

    explicit World(const HeteroGraph& g) {
        graph = std::make_unique<HeteroGraph>(g);
        index = std::make_unique<GraphIndex>(GraphIndex::build(*graph));
        ProviderConfig pc;
        pc.backend = ProviderBackend::stub;
        pc.stub_seed = 1;
        EmbeddingProvider text(pc);
        feats = build_features(*graph, text);
        inputs = make_graph_inputs<float>(*index, feats);
    }
};

EmbeddingProvider prompt_provider() {
    ProviderConfig pc;
    pc.backend = ProviderBackend::stub;
    pc.stub_seed = 2;
    pc.role = ProviderRole::prompt;
    return EmbeddingProvider(pc);
}

struct ArmResult {
    double f1_sum = 0.0;
    double mean() const { return f1_sum / 3.0; }
};

double run_pipeline_arm(World& w, const std::map<std::string, StringPairList>& prefs,
                        uint64_t seed, bool do_pretrain, int pre_epochs, int fine_epochs) {
    RunConfig rc = default_run_config();
    rc.seed = seed;
    rc.apply_seed();
    rc.pretrain.epochs = pre_epochs;
    rc.finetune.epochs = fine_epochs;
    Model model(rc.model);
    model.init_params(seed);
    if (do_pretrain) {
        auto anchors = build_anchor_set(*w.graph, prefs, rc.pretrain.template_kind);
        auto prompt = prompt_provider();
        PretrainState state(AdamWConfig{.lr = rc.pretrain.lr});
        pretrain(model, w.inputs, anchors, prompt, rc.pretrain, state);
    }
    return finetune(model, *w.index, w.inputs, rc.finetune).test.macro.f1;
}

}  // namespace

TEST_CASE("criterion 1: gradient correctness for ops and composed pipelines") {
    const double t0 = now_seconds();
    double worst_op = 0.0;
    std::string worst_name;
    auto track = [&](const std::string& name, double err) {
        if (err > worst_op) {
            worst_op = err;
            worst_name = name;
        }
        CHECK_MESSAGE(err < 1e-4, name);
    };

    {
        Rng rng(11);
        Tensor64 a = rand_tensor("a", {4, 3}, rng), b = rand_tensor("b", {3, 5}, rng);
        track("matmul", grad_check([&](Tape64& t) {
                            return to_scalar(t, t.matmul(t.leaf(a), t.leaf(b)), 1);
                        }, {&a, &b}).max_rel_error);
    }
    {
        Rng rng(12);
        Tensor64 x = rand_tensor("x", {4, 6}, rng), b = rand_tensor("b", {6}, rng);
        track("add_bias", grad_check([&](Tape64& t) {
                              return to_scalar(t, t.add_bias(t.leaf(x), t.leaf(b)), 2);
                          }, {&x, &b}).max_rel_error);
    }
    {
        Rng rng(13);
        Tensor64 a = rand_tensor("a", {3, 3}, rng), b = rand_tensor("b", {3, 3}, rng);
        track("add+scalar_mul", grad_check([&](Tape64& t) {
                                    return to_scalar(
                                        t, t.scalar_mul(t.add(t.leaf(a), t.leaf(b)), 1.7), 3);
                                }, {&a, &b}).max_rel_error);
    }
    {
        Rng rng(14);
        Tensor64 a = rand_tensor("a", {3, 2}, rng), b = rand_tensor("b", {3, 4}, rng);
        track("concat_cols", grad_check([&](Tape64& t) {
                                 return to_scalar(t, t.concat_cols({t.leaf(a), t.leaf(b)}), 4);
                             }, {&a, &b}).max_rel_error);
        track("concat_rows", grad_check([&](Tape64& t) {
                                 return to_scalar(
                                     t, t.concat_rows({t.leaf(a), t.leaf(a), t.leaf(a)}), 5);
                             }, {&a}).max_rel_error);
    }
    {
        Rng rng(15);
        Tensor64 x = rand_tensor("x", {4, 4}, rng);
        nudge(x);
        track("leaky_relu", grad_check([&](Tape64& t) {
                                return to_scalar(t, t.leaky_relu(t.leaf(x), 0.01), 6);
                            }, {&x}).max_rel_error);
    }
    {
        Rng rng(16);
        Tensor64 x = rand_tensor("x", {3, 5}, rng);
        track("row_softmax", grad_check([&](Tape64& t) {
                                 return to_scalar(t, t.row_softmax(t.leaf(x)), 7);
                             }, {&x}).max_rel_error);
        track("reduce_sum",
              grad_check([&](Tape64& t) { return t.reduce_sum(t.leaf(x)); }, {&x}).max_rel_error);
        track("mean_all",
              grad_check([&](Tape64& t) { return t.mean_all(t.leaf(x)); }, {&x}).max_rel_error);
        track("sum_squares",
              grad_check([&](Tape64& t) { return t.sum_squares(t.leaf(x)); }, {&x}).max_rel_error);
    }
    {
        Rng rng(17);
        Tensor64 x = rand_tensor("x", {2, 4}, rng, 0.5);
        track("exp+log", grad_check([&](Tape64& t) {
                             return to_scalar(
                                 t, t.log_op(t.scalar_mul(t.exp_op(t.leaf(x)), 2.0)), 8);
                         }, {&x}).max_rel_error);
    }
    {
        Rng rng(19);
        Tensor64 a = rand_tensor("a", {6}, rng), b = rand_tensor("b", {6}, rng);
        track("cosine_similarity", grad_check([&](Tape64& t) {
                                       return t.cosine_similarity(t.leaf(a), t.leaf(b));
                                   }, {&a, &b}).max_rel_error);
    }
    {
        Rng rng(20);
        Tensor64 x = rand_tensor("x", {5, 3}, rng);
        track("gather_rows", grad_check([&](Tape64& t) {
                                 return to_scalar(t, t.gather_rows(t.leaf(x), {4, 0, 0, 2}), 9);
                             }, {&x}).max_rel_error);
        track("softmax_cross_entropy",
              grad_check([&](Tape64& t) {
                  return t.softmax_cross_entropy(t.leaf(x), {0, 2, 1, 1, 0});
              }, {&x}).max_rel_error);
    }
    {
        Rng rng(22);
        Tensor64 x = rand_tensor("x", {3, 4}, rng);
        std::vector<double> targets = {1, 0, 0, 1, 0, 1, 0, 0, 1, 1, 1, 0};
        track("bce_with_logits", grad_check([&](Tape64& t) {
                                     return t.bce_with_logits(t.leaf(x), targets);
                                 }, {&x}).max_rel_error);
    }
    {
        Rng rng(23);
        Tensor64 x = rand_tensor("x", {4, 4}, rng);
        Rng mask_rng(0);
        TapeT<double>::Options opts;
        opts.train = true;
        opts.rng = &mask_rng;
        auto make_tape = [&] {
            mask_rng = Rng(99);
            return Tape64(opts);
        };
        track("dropout", grad_check([&](Tape64& t) {
                             return to_scalar(t, t.dropout(t.leaf(x), 0.3), 10);
                         }, {&x}, 1e-3, 0, 0, make_tape).max_rel_error);
    }
    {
        Rng rng(24);
        const int n = 5, d = 8;
        Tensor64 q = rand_tensor("q", {n, d}, rng), k = rand_tensor("k", {n, d}, rng),
                 v = rand_tensor("v", {n, d}, rng);
        Csr adj;
        adj.ptr = {0, 3, 5, 7, 9, 10};
        adj.idx = {0, 1, 2, 1, 3, 2, 0, 3, 4, 4};
        track("masked_attention",
              grad_check([&](Tape64& t) {
                  return to_scalar(t, t.masked_attention(t.leaf(q), t.leaf(k), t.leaf(v), adj, 2),
                                   11);
              }, {&q, &k, &v}).max_rel_error);
    }
    {
        Rng rng(25);
        const int n = 4, d = 6, r = 3;
        Tensor64 sc = rand_tensor("sc", {n, r}, rng);
        Tensor64 h0 = rand_tensor("h0", {n, d}, rng), h1 = rand_tensor("h1", {n, d}, rng),
                 h2 = rand_tensor("h2", {n, d}, rng);
        std::vector<uint8_t> present = {1, 1, 0, 1, 0, 1, 0, 1, 1, 1, 1, 1};
        track("semantic_combine",
              grad_check([&](Tape64& t) {
                  return to_scalar(t,
                                   t.semantic_combine(t.leaf(sc),
                                                      {t.leaf(h0), t.leaf(h1), t.leaf(h2)},
                                                      present),
                                   12);
              }, {&sc, &h0, &h1, &h2}).max_rel_error);
    }
    {
        Rng rng(26);
        Tensor64 z = rand_tensor("z", {2, 4}, rng);
        Tensor64 pool = rand_tensor("pool", {5, 4}, rng);
        Csr negs;
        negs.ptr = {0, 3, 6};
        negs.idx = {2, 3, 4, 0, 2, 4};
        track("infonce", grad_check([&](Tape64& t) {
                             return t.infonce(t.leaf(z), t.leaf(pool), {0, 1}, negs, 0.1);
                         }, {&z, &pool}).max_rel_error);
    }

    // composed pipelines on an 8-node random graph, all parameters checked
    auto cfg = check_config();
    Model64 model(cfg);
    model.init_params(271);
    auto in = toy_inputs<double>(6, 2, cfg, 272, pipeline_edges());

    Rng pool_rng(273);
    std::vector<double> pool_data(5 * cfg.text_dim);
    for (auto& v : pool_data) v = pool_rng.normal();
    const std::vector<int> pos = {0, 1, 2, 3, 4, 0};
    Csr negs;
    negs.ptr = {0};
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 5; ++j)
            if (j != pos[i]) negs.idx.push_back(j);
        negs.ptr.push_back(static_cast<int>(negs.idx.size()));
    }
    auto contrastive_build = [&](Tape64& t) {
        VarId zg = model.encode_graph(t, in);
        VarId zu = model.user_embeddings(t, zg, in.n_users);
        VarId anchors = model.project_anchor(t, zu);
        VarId pool = t.constant({5, cfg.text_dim}, pool_data);
        VarId labels = model.project_labels(t, pool);
        return t.infonce(anchors, labels, pos, negs, 0.1);
    };
    auto contrastive_res = grad_check(contrastive_build, model.params().all(), 1e-3, 0, 0);
    CHECK_MESSAGE(contrastive_res.max_rel_error < 1e-3, contrastive_res.worst_param);

    const std::vector<int> labels = {0, 1, 2, 0, 1, 2};
    auto detector_build = [&](Tape64& t) {
        VarId zg = model.encode_graph(t, in);
        VarId zu = model.user_embeddings(t, zg, in.n_users);
        VarId ce = t.softmax_cross_entropy(model.classify_logits(t, zu), labels);
        return t.add(ce, t.scalar_mul(model.l2_penalty(t), 3e-5));
    };
    auto detector_res = grad_check(detector_build, model.params().all(), 1e-3, 0, 0);
    CHECK_MESSAGE(detector_res.max_rel_error < 1e-3, detector_res.worst_param);

    const double elapsed = now_seconds() - t0;
    CHECK(elapsed < 60.0);
    const bool pass = worst_op < 1e-4 && contrastive_res.max_rel_error < 1e-3 &&
                      detector_res.max_rel_error < 1e-3 && elapsed < 60.0;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "gradients: ops max %.2e, contrastive pipeline %.2e, detector pipeline %.2e "
                  "(%.1fs)",
                  worst_op, contrastive_res.max_rel_error, detector_res.max_rel_error, elapsed);
    report(1, pass, buf);
}

TEST_CASE("criterion 2: infonce closed forms and properties") {
    const int d = 8;
    bool pass = true;

    Csr no_negs;
    no_negs.ptr = {0, 0};
    const double zero_loss = infonce_value({unit(d, 0)}, {unit(d, 0)}, {0}, no_negs, 0.1);
    pass = pass && std::abs(zero_loss - 0.0) < 1e-9;
    CHECK(std::abs(zero_loss) < 1e-9);

    Csr one_neg;
    one_neg.ptr = {0, 1};
    one_neg.idx = {1};
    const double aligned =
        infonce_value({unit(d, 0)}, {unit(d, 0), unit(d, 1)}, {0}, one_neg, 0.1);
    pass = pass && std::abs(aligned - std::log1p(std::exp(-10.0))) < 1e-9;
    CHECK(aligned == doctest::Approx(std::log1p(std::exp(-10.0))).epsilon(1e-9));

    const double split = infonce_value({unit(d, 0)}, {unit(d, 1), unit(d, 1)}, {0}, one_neg, 0.1);
    pass = pass && std::abs(split - std::log(2.0)) < 1e-9;
    CHECK(split == doctest::Approx(std::log(2.0)).epsilon(1e-9));

    Rng rng(314159);
    auto rand_vec = [&](double scale) {
        std::vector<double> v(d);
        for (auto& x : v) x = rng.normal() * scale;
        return v;
    };
    int nonneg = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int k = 1 + static_cast<int>(rng.uniform_int(8));
        std::vector<std::vector<double>> pool;
        for (int i = 0; i <= k; ++i) pool.push_back(rand_vec(0.5 + rng.uniform()));
        Csr negs;
        negs.ptr = {0, k};
        for (int i = 1; i <= k; ++i) negs.idx.push_back(i);
        nonneg += infonce_value({rand_vec(1.5)}, pool, {0}, negs, 0.1) >= 0.0;
    }
    pass = pass && nonneg == 1000;
    CHECK(nonneg == 1000);

    int monotone = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int k = 3;
        std::vector<std::vector<double>> negatives;
        for (int i = 0; i < k; ++i) negatives.push_back(rand_vec(1.0));
        Csr negs;
        negs.ptr = {0, k};
        for (int i = 0; i < k; ++i) negs.idx.push_back(i + 1);
        double last = -1.0;
        bool ok = true;
        for (int step = 0; step <= 8; ++step) {
            const double theta = step * (3.14159265358979 / 8.0);
            std::vector<double> positive(d, 0.0);
            positive[0] = std::cos(theta);
            positive[1] = std::sin(theta);
            std::vector<std::vector<double>> pool;
            pool.push_back(positive);
            for (const auto& n : negatives) pool.push_back(n);
            const double loss = infonce_value({unit(d, 0)}, pool, {0}, negs, 0.1);
            if (step > 0 && loss < last - 1e-12) ok = false;
            last = loss;
        }
        monotone += ok;
    }
    pass = pass && monotone == 100;
    CHECK(monotone == 100);

    report(2, pass, "infonce: 0 / log(1+e^-10) / log 2 to 1e-9; 1000 non-negative; 100 monotone");
}

TEST_CASE("criterion 3: pre-training beats the no-pretrain arm by 0.03 macro F1") {
    const double t0 = now_seconds();
    const auto dir = fs::temp_directory_path() / "sega_accept_c3";
    fs::remove_all(dir);
    auto scfg = synth_default_config();
    scfg.seed = 7;
    synth_generate(scfg, dir.string());
    World world(load_dataset(dir.string()));
    auto prefs = load_prefs((dir / "prefs.jsonl").string());

    ArmResult with_pre, without;
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        with_pre.f1_sum += run_pipeline_arm(world, prefs, seed, true, 100, 150);
        without.f1_sum += run_pipeline_arm(world, prefs, seed, false, 100, 150);
    }
    const double diff = with_pre.mean() - without.mean();
    const double elapsed = now_seconds() - t0;
    CHECK(diff >= 0.03);
    CHECK(elapsed < 600.0);
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "pre-training helps: mean F1 %.4f vs %.4f (diff %+.4f >= 0.03, %.0fs)",
                  with_pre.mean(), without.mean(), diff, elapsed);
    report(3, diff >= 0.03 && elapsed < 600.0, buf);
    fs::remove_all(dir);
}

TEST_CASE("criterion 4: list ablation on a list-routed signal") {
    const auto dir = fs::temp_directory_path() / "sega_accept_c4";
    fs::remove_all(dir);
    auto scfg = synth_list_signal_config();
    scfg.seed = 7;
    synth_generate(scfg, dir.string());
    auto g = load_dataset(dir.string());
    World full(g), stripped(strip_lists(g));
    auto prefs = load_prefs((dir / "prefs.jsonl").string());

    ArmResult with_lists, without;
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        with_lists.f1_sum += run_pipeline_arm(full, prefs, seed, true, 100, 150);
        without.f1_sum += run_pipeline_arm(stripped, prefs, seed, true, 100, 150);
    }
    const double diff = with_lists.mean() - without.mean();
    CHECK(diff >= -0.005);
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "list ablation: full %.4f vs no_list %.4f (diff %+.4f >= -0.005)",
                  with_lists.mean(), without.mean(), diff);
    report(4, diff >= -0.005, buf);
    fs::remove_all(dir);
}

TEST_CASE("criterion 5: default pseudo-label template is byte-exact") {
    PreferenceProfile profile;
    profile.user_id = "u";
    for (auto pair : parse_llm_response("1: news - anger\n2: news - anger\n3: news - anger\n"
                                        "4: news - anger\n5: news - anger\n6: news - anticipation\n"
                                        "7: news - anticipation\n8: news - joy\n9: news - anger\n"
                                        "10: news - anger\n"))
        ++profile.counts[pair];
    const std::string want =
        "The majority of the posts express news with anger emotion, while a minority of them "
        "express news with joy.";
    const std::string got = render_prompt(profile, TemplateKind::default_prompt).text;
    CHECK(got == want);
    report(5, got == want, "default template renders the worked example byte-for-byte");
}

TEST_CASE("criterion 6: metrics against a brute-force oracle") {
    std::mt19937 rng(60606);
    bool pass = true;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<UserClass> preds(200), labels(200);
        for (int i = 0; i < 200; ++i) {
            preds[i] = static_cast<UserClass>(rng() % 3);
            labels[i] = static_cast<UserClass>(rng() % 3);
        }
        auto m = evaluate(preds, labels);
        // independent naive recount
        for (int c = 0; c < 3; ++c) {
            double tp = 0, predicted = 0, actual = 0;
            for (int i = 0; i < 200; ++i) {
                tp += static_cast<int>(preds[i]) == c && static_cast<int>(labels[i]) == c;
                predicted += static_cast<int>(preds[i]) == c;
                actual += static_cast<int>(labels[i]) == c;
            }
            const double precision = predicted == 0 ? 0.0 : tp / predicted;
            const double recall = actual == 0 ? 0.0 : tp / actual;
            const double f1 =
                precision + recall == 0 ? 0.0 : 2 * precision * recall / (precision + recall);
            pass = pass && std::abs(m.per_class[c].precision - precision) < 1e-12 &&
                   std::abs(m.per_class[c].recall - recall) < 1e-12 &&
                   std::abs(m.per_class[c].f1 - f1) < 1e-12;
        }
        CHECK(pass);
        if (!pass) break;
    }
    auto example = evaluate({UserClass::normal, UserClass::normal, UserClass::normal},
                            {UserClass::normal, UserClass::bot, UserClass::troll});
    const bool example_ok = std::abs(example.macro.f1 - 1.0 / 6.0) < 1e-12;
    CHECK(example_ok);
    report(6, pass && example_ok, "evaluate matches brute force on 50x200 and the 1/6 example");
}

TEST_CASE("criterion 7: encoder invariants") {
    auto cfg = check_config();
    Model model(cfg);
    model.init_params(17);

    // exact permutation equivariance on a 6-node graph
    const int n_users = 4, n_lists = 2;
    std::array<EdgeList, kRelationCount> edges{};
    edges[static_cast<int>(Relation::following)] = {{0, 1}, {1, 2}, {3, 0}, {2, 3}};
    edges[static_cast<int>(Relation::followers)] = {{2, 0}, {1, 3}};
    edges[static_cast<int>(Relation::own)] = {{0, 4}, {3, 5}};
    edges[static_cast<int>(Relation::followed)] = {{1, 4}};
    edges[static_cast<int>(Relation::membership)] = {{4, 2}, {5, 1}};
    auto base = toy_inputs<float>(n_users, n_lists, cfg, 41, edges);

    const std::vector<int> perm = {2, 0, 3, 1, 5, 4};
    GraphInputsT<float> permuted;
    permuted.n_users = n_users;
    permuted.n_lists = n_lists;
    auto permute_rows = [&](const std::vector<float>& src, std::vector<float>& dst, int width,
                            int offset, int count) {
        dst.assign(static_cast<size_t>(count) * width, 0.0f);
        for (int i = 0; i < count; ++i)
            std::copy_n(&src[static_cast<size_t>(i) * width], width,
                        &dst[static_cast<size_t>(perm[offset + i] - offset) * width]);
    };
    permute_rows(base.user_ind, permuted.user_ind, kUserIndicators, 0, n_users);
    permute_rows(base.user_num, permuted.user_num, kUserNumericals, 0, n_users);
    permute_rows(base.user_des, permuted.user_des, cfg.text_dim, 0, n_users);
    permute_rows(base.user_twe, permuted.user_twe, cfg.text_dim, 0, n_users);
    permute_rows(base.list_ind, permuted.list_ind, kListIndicators, n_users, n_lists);
    permute_rows(base.list_num, permuted.list_num, kListNumericals, n_users, n_lists);
    permute_rows(base.list_des, permuted.list_des, cfg.text_dim, n_users, n_lists);
    permute_rows(base.list_twe, permuted.list_twe, cfg.text_dim, n_users, n_lists);
    std::array<EdgeList, kRelationCount> mapped{};
    for (int r = 0; r < kRelationCount; ++r)
        for (auto [s, d] : edges[r]) mapped[r].push_back({perm[s], perm[d]});
    auto rebuilt = toy_inputs<float>(n_users, n_lists, cfg, 0, mapped);
    permuted.adj = rebuilt.adj;
    permuted.present = rebuilt.present;

    auto forward = [&](const GraphInputsT<float>& in, typename Model::Probe* probe = nullptr) {
        Tape tape;
        VarId zg = model.encode_graph(tape, in, probe);
        return tape.value(model.user_embeddings(tape, zg, in.n_users));
    };
    auto z_base = forward(base);
    auto z_perm = forward(permuted);
    bool perm_exact = true;
    for (int i = 0; i < n_users; ++i)
        for (int j = 0; j < cfg.user_dim; ++j)
            perm_exact = perm_exact && z_perm[static_cast<size_t>(perm[i]) * cfg.user_dim + j] ==
                                           z_base[static_cast<size_t>(i) * cfg.user_dim + j];
    CHECK(perm_exact);

    // exact two-hop locality on an in-neighbor chain
    std::array<EdgeList, kRelationCount> chain{};
    chain[static_cast<int>(Relation::following)] = {{1, 0}, {2, 1}, {3, 2}};
    chain[static_cast<int>(Relation::followers)] = {{4, 3}, {5, 4}};
    auto loc_in = toy_inputs<float>(6, 0, cfg, 51, chain);
    auto before = forward(loc_in);
    auto perturbed = loc_in;
    for (int j = 0; j < cfg.text_dim; ++j)
        perturbed.user_des[static_cast<size_t>(3) * cfg.text_dim + j] += 1.5f;
    auto after = forward(perturbed);
    bool local_exact = true;
    for (int j = 0; j < cfg.user_dim; ++j)
        local_exact = local_exact && before[j] == after[j];
    CHECK(local_exact);

    // attention rows sum to 1 within 1e-6
    typename Model::Probe probe;
    forward(base, &probe);
    bool rows_ok = true;
    for (int l = 0; l < cfg.layers; ++l)
        for (int r = 0; r < kRelationCount; ++r) {
            const auto& attn = probe.attention[l][r];
            const auto& adj = base.adj[r];
            for (int i = 0; i < adj.rows(); ++i)
                for (int h = 0; h < cfg.heads; ++h) {
                    double sum = 0.0;
                    for (int e = adj.ptr[i]; e < adj.ptr[i + 1]; ++e)
                        sum += attn[static_cast<size_t>(e) * cfg.heads + h];
                    rows_ok = rows_ok && std::abs(sum - 1.0) < 1e-6;
                }
        }
    CHECK(rows_ok);

    report(7, perm_exact && local_exact && rows_ok,
           "encoder: exact permutation equivariance, exact 3-hop locality, attention rows sum to 1");
}

TEST_CASE("criterion 8: determinism and persistence") {
    const auto dir = fs::temp_directory_path() / "sega_accept_c8";
    fs::remove_all(dir);
    auto scfg = synth_default_config();
    scfg.seed = 7;
    scfg.normal_users = 30;
    scfg.bot_users = 6;
    scfg.troll_users = 6;
    scfg.list_count = 6;
    synth_generate(scfg, dir.string());

    // dataset round-trip: save(load(d)) loads back to the same graph
    auto g = load_dataset(dir.string());
    const auto dir2 = fs::temp_directory_path() / "sega_accept_c8_copy";
    fs::remove_all(dir2);
    save_dataset(g, dir2.string());
    const bool dataset_ok = load_dataset(dir2.string()) == g;
    CHECK(dataset_ok);

    // fixed-seed end-to-end reproducibility (shortened epochs, same config twice)
    auto prefs = load_prefs((dir / "prefs.jsonl").string());
    auto run_once = [&] {
        World world(g);
        RunConfig rc = default_run_config();
        rc.seed = 7;
        rc.apply_seed();
        rc.pretrain.epochs = 8;
        rc.finetune.epochs = 10;
        Model model(rc.model);
        model.init_params(rc.seed);
        auto anchors = build_anchor_set(*world.graph, prefs, rc.pretrain.template_kind);
        auto prompt = prompt_provider();
        PretrainState state(AdamWConfig{.lr = rc.pretrain.lr});
        pretrain(model, world.inputs, anchors, prompt, rc.pretrain, state);
        auto ft = finetune(model, *world.index, world.inputs, rc.finetune);
        return std::make_pair(metrics_to_json(ft.test), model.params().all()[0]->value);
    };
    auto [json_a, first_param_a] = run_once();
    auto [json_b, first_param_b] = run_once();
    const bool e2e_ok = json_a == json_b && first_param_a == first_param_b;
    CHECK(e2e_ok);

    // checkpoint round-trip is bitwise
    Model model(default_run_config().model);
    model.init_params(99);
    const auto ck1 = (fs::temp_directory_path() / "sega_accept_c8_1.ckpt").string();
    const auto ck2 = (fs::temp_directory_path() / "sega_accept_c8_2.ckpt").string();
    save_train_checkpoint(ck1, model, nullptr);
    Model reloaded(default_run_config().model);
    reloaded.load_values(load_checkpoint(ck1));
    save_train_checkpoint(ck2, reloaded, nullptr);
    std::ifstream f1(ck1, std::ios::binary), f2(ck2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    const bool ckpt_ok = !s1.empty() && s1 == s2;
    CHECK(ckpt_ok);

    report(8, dataset_ok && e2e_ok && ckpt_ok,
           "bitwise metrics reproduction, bitwise checkpoint round-trip, canonical dataset "
           "round-trip");
    fs::remove_all(dir);
    fs::remove_all(dir2);
    fs::remove(ck1);
    fs::remove(ck2);
}

TEST_CASE("criterion 9: defaults audit") {
    const RunConfig cfg = default_run_config();
    struct Row {
        const char* name;
        double got;
        double want;
    };
    const Row table[] = {
        {"temperature", cfg.pretrain.temperature, 0.1},
        {"negatives", static_cast<double>(cfg.pretrain.negatives), 100},
        {"hidden d_h", static_cast<double>(cfg.model.hidden_dim), 32},
        {"encoder d_out", static_cast<double>(cfg.model.encoder_dim), 128},
        {"user d_u", static_cast<double>(cfg.model.user_dim), 64},
        {"contrastive d_a", static_cast<double>(cfg.model.contrastive_dim), 64},
        {"layers g", static_cast<double>(cfg.model.layers), 2},
        {"max tweets q", static_cast<double>(kMaxTweets), 20},
        {"max words s=L", static_cast<double>(kMaxTextTokens), 50},
        {"dropout", cfg.model.dropout, 0.3f},
        {"learning rate", cfg.finetune.lr, 0.001},
        {"batch size", static_cast<double>(cfg.finetune.batch_size), 2048},
        {"lambda", cfg.finetune.lambda, 3e-5},
        {"pretrain epochs", static_cast<double>(cfg.pretrain.epochs), 100},
        {"finetune epochs", static_cast<double>(cfg.finetune.epochs), 150},
        {"text dim", static_cast<double>(cfg.model.text_dim), 768},
    };
    bool pass = true;
    for (const auto& row : table) {
        const bool ok = std::abs(row.got - row.want) < 1e-9;
        pass = pass && ok;
        INFO(row.name);
        CHECK(ok);
    }
    report(9, pass, "all shipped defaults match the documented hyperparameter set");
}

TEST_CASE("criterion 10: pseudo-label separability under the stub prompt provider") {
    auto provider = prompt_provider();
    PreferenceProfile first, second;
    first.user_id = "a";
    first.counts[{Topic::news, Emotion::anger}] = 7;
    first.counts[{Topic::news, Emotion::joy}] = 1;
    second.user_id = "b";
    second.counts[{Topic::food, Emotion::joy}] = 5;
    second.counts[{Topic::music, Emotion::trust}] = 2;

    std::vector<std::string> renders;
    for (const auto* profile : {&first, &second})
        for (TemplateKind k : {TemplateKind::default_prompt, TemplateKind::short_prompt,
                               TemplateKind::topic_prompt, TemplateKind::emotion_prompt})
            renders.push_back(render_prompt(*profile, k).text);
    bool distinct = true;
    for (size_t i = 0; i < renders.size(); ++i)
        for (size_t j = i + 1; j < renders.size(); ++j)
            distinct = distinct && renders[i] != renders[j];
    CHECK(distinct);

    std::vector<std::vector<float>> vecs;
    for (const auto& text : renders) vecs.push_back(provider.embed_text(text));
    double worst = -1.0;
    for (size_t i = 0; i < vecs.size(); ++i)
        for (size_t j = i + 1; j < vecs.size(); ++j) {
            double dot = 0, na = 0, nb = 0;
            for (int t = 0; t < kEmbeddingDim; ++t) {
                dot += static_cast<double>(vecs[i][t]) * vecs[j][t];
                na += static_cast<double>(vecs[i][t]) * vecs[i][t];
                nb += static_cast<double>(vecs[j][t]) * vecs[j][t];
            }
            worst = std::max(worst, dot / std::sqrt(na * nb));
        }
    CHECK(worst < 0.5);
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "4x2 rendered templates are distinct; max pairwise cosine %.4f < 0.5", worst);
    report(10, distinct && worst < 0.5, buf);
}
