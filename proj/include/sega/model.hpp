#pragma once

// The full model: per-kind feature projections into initial node embeddings,
// a stack of relational graph-transformer layers with semantic attention
// across relations, the user projection, and the task heads (contrastive
// pair projections, 3-class detector, multi-label variant).
//
// Everything is templated on the scalar type; training instantiates float,
// gradient checking instantiates double over the identical code.

#include <array>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "sega/errors.hpp"
#include "sega/features.hpp"
#include "sega/graph.hpp"
#include "sega/rng.hpp"
#include "sega/tensor.hpp"

namespace sega {

struct ModelConfig {
    int text_dim = 768;        // d_des = d_twe = d_p
    int hidden_dim = 32;       // d_h
    int encoder_dim = 128;     // d_out
    int user_dim = 64;         // d_u
    int contrastive_dim = 64;  // d_a
    int heads = 4;
    int layers = 2;            // g
    int classes = 3;
    int multilabel_dim = 153;  // 17 topics x 9 emotions
    float leaky_slope = 0.01f;
    float dropout = 0.3f;

    void validate() const {
        if (encoder_dim != 4 * hidden_dim)
            throw ShapeError("model config: encoder_dim must equal 4 * hidden_dim");
        if (encoder_dim % heads != 0)
            throw ShapeError("model config: head count must divide encoder_dim");
        if (text_dim <= 0 || user_dim <= 0 || contrastive_dim <= 0 || layers <= 0)
            throw ShapeError("model config: dimensions must be positive");
    }
};

template <typename S>
class ParamStore {
public:
    TensorT<S>& add(const std::string& name, Shape shape) {
        auto t = std::make_unique<TensorT<S>>(name, std::move(shape), true);
        auto* p = t.get();
        if (!by_name_.emplace(name, p).second)
            throw ShapeError("parameter registered twice: " + name);
        order_.push_back(std::move(t));
        return *p;
    }

    TensorT<S>& get(const std::string& name) {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) throw ShapeError("unknown parameter: " + name);
        return *it->second;
    }

    bool contains(const std::string& name) const { return by_name_.count(name) > 0; }

    std::vector<TensorT<S>*> all() {
        std::vector<TensorT<S>*> out;
        out.reserve(order_.size());
        for (auto& t : order_) out.push_back(t.get());
        return out;
    }

    std::vector<const TensorT<S>*> all_const() const {
        std::vector<const TensorT<S>*> out;
        out.reserve(order_.size());
        for (const auto& t : order_) out.push_back(t.get());
        return out;
    }

    void zero_grads() {
        for (auto& t : order_) t->zero_grad();
    }

private:
    std::vector<std::unique_ptr<TensorT<S>>> order_;
    std::map<std::string, TensorT<S>*> by_name_;
};

// Constant per-dataset inputs: feature matrices in canonical node order plus
// in-neighbor adjacency (with self-loops) and relation presence per node.
template <typename S>
struct GraphInputsT {
    int n_users = 0;
    int n_lists = 0;
    std::vector<S> user_ind, user_num, user_des, user_twe;
    std::vector<S> list_ind, list_num, list_des, list_twe;
    std::array<Csr, kRelationCount> adj;
    std::vector<uint8_t> present;  // node-major, kRelationCount per node

    int n_nodes() const { return n_users + n_lists; }
};

template <typename S>
GraphInputsT<S> make_graph_inputs(const GraphIndex& gi, const DatasetFeatures& f) {
    GraphInputsT<S> in;
    in.n_users = f.user.count;
    in.n_lists = f.list.count;
    auto cast = [](const std::vector<float>& v) { return std::vector<S>(v.begin(), v.end()); };
    in.user_ind = cast(f.user.ind);
    in.user_num = cast(f.user.num);
    in.user_des = cast(f.user.des);
    in.user_twe = cast(f.user.twe);
    in.list_ind = cast(f.list.ind);
    in.list_num = cast(f.list.num);
    in.list_des = cast(f.list.des);
    in.list_twe = cast(f.list.twe);

    const int n = in.n_nodes();
    in.present.assign(static_cast<size_t>(n) * kRelationCount, 0);
    for (int r = 0; r < kRelationCount; ++r) {
        const auto& incoming = gi.in_adj(static_cast<Relation>(r));
        auto& adj = in.adj[r];
        adj.ptr.assign(n + 1, 0);
        std::vector<std::vector<int>> rows(n);
        for (int i = 0; i < n; ++i) {
            rows[i] = incoming[i];
            if (!rows[i].empty()) in.present[static_cast<size_t>(i) * kRelationCount + r] = 1;
            // mandatory self-loop keeps every neighborhood non-empty
            rows[i].insert(std::lower_bound(rows[i].begin(), rows[i].end(), i), i);
        }
        for (int i = 0; i < n; ++i) adj.ptr[i + 1] = adj.ptr[i] + static_cast<int>(rows[i].size());
        adj.idx.reserve(adj.ptr[n]);
        for (int i = 0; i < n; ++i) adj.idx.insert(adj.idx.end(), rows[i].begin(), rows[i].end());
    }
    // isolated nodes fall back to every relation that targets their kind
    for (int i = 0; i < n; ++i) {
        bool any = false;
        for (int r = 0; r < kRelationCount; ++r)
            any = any || in.present[static_cast<size_t>(i) * kRelationCount + r];
        if (!any) {
            const NodeKind kind = i < in.n_users ? NodeKind::user : NodeKind::list;
            for (int r = 0; r < kRelationCount; ++r)
                if (relation_dst_kind(static_cast<Relation>(r)) == kind)
                    in.present[static_cast<size_t>(i) * kRelationCount + r] = 1;
        }
    }
    return in;
}

template <typename S>
class ModelT {
public:
    // per layer and relation: post-softmax attention weights parallel to adj.idx
    struct Probe {
        std::vector<std::array<std::vector<S>, kRelationCount>> attention;
    };

    explicit ModelT(ModelConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        const int h = cfg_.hidden_dim, enc = cfg_.encoder_dim, txt = cfg_.text_dim;
        auto add_affine = [&](const std::string& prefix, int in, int out) {
            params_.add(prefix + ".W", {in, out});
            params_.add(prefix + ".b", {out});
        };
        add_affine("feat.user.ind", kUserIndicators, h);
        add_affine("feat.user.num", kUserNumericals, h);
        add_affine("feat.user.des", txt, h);
        add_affine("feat.user.twe", txt, h);
        add_affine("feat.list.ind", kListIndicators, h);
        add_affine("feat.list.num", kListNumericals, h);
        add_affine("feat.list.des", txt, h);
        add_affine("feat.list.twe", txt, h);
        add_affine("feat.user.out", 4 * h, enc);
        add_affine("feat.list.out", 4 * h, enc);
        for (int l = 0; l < cfg_.layers; ++l) {
            const std::string lp = "rgt.l" + std::to_string(l);
            for (int r = 0; r < kRelationCount; ++r) {
                const std::string rp = lp + "." + relation_name(static_cast<Relation>(r));
                add_affine(rp + ".q", enc, enc);
                add_affine(rp + ".k", enc, enc);
                add_affine(rp + ".v", enc, enc);
            }
            add_affine(lp + ".sem", enc, 1);
            add_affine(lp + ".out", enc, enc);
        }
        add_affine("head.user", enc, cfg_.user_dim);
        add_affine("head.anchor", cfg_.user_dim, cfg_.contrastive_dim);
        add_affine("head.label", txt, cfg_.contrastive_dim);
        add_affine("head.cls", cfg_.user_dim, cfg_.classes);
        add_affine("head.ml", cfg_.user_dim, cfg_.multilabel_dim);
    }

    const ModelConfig& config() const { return cfg_; }
    ParamStore<S>& params() { return params_; }
    const ParamStore<S>& params() const { return params_; }

    // Kaiming-style uniform fan-in init, seeded per parameter name so the
    // result is independent of registration order. Biases start at zero.
    void init_params(uint64_t seed) {
        for (auto* p : params_.all()) {
            if (p->name.size() >= 2 && p->name.compare(p->name.size() - 2, 2, ".b") == 0) {
                std::fill(p->value.begin(), p->value.end(), S(0));
                continue;
            }
            const int fan_in = p->shape[0];
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
            Rng rng(stream_seed(seed, "init." + p->name));
            for (auto& v : p->value) v = static_cast<S>(rng.uniform_range(-bound, bound));
        }
    }

    // initial node embeddings z0 for all nodes (users first, then lists)
    VarId node_embeddings(TapeT<S>& tape, const GraphInputsT<S>& in) {
        VarId zu = encode_kind(tape, "user", in.n_users,
                               {{kUserIndicators, &in.user_ind},
                                {kUserNumericals, &in.user_num},
                                {cfg_.text_dim, &in.user_des},
                                {cfg_.text_dim, &in.user_twe}});
        VarId zl = encode_kind(tape, "list", in.n_lists,
                               {{kListIndicators, &in.list_ind},
                                {kListNumericals, &in.list_num},
                                {cfg_.text_dim, &in.list_des},
                                {cfg_.text_dim, &in.list_twe}});
        return tape.concat_rows({zu, zl});
    }

    // z0 -> g relational layers -> node embeddings z^(g)
    VarId encode_graph(TapeT<S>& tape, const GraphInputsT<S>& in, Probe* probe = nullptr) {
        VarId z = node_embeddings(tape, in);
        if (probe) probe->attention.resize(cfg_.layers);
        for (int l = 0; l < cfg_.layers; ++l) {
            const std::string lp = "rgt.l" + std::to_string(l);
            std::vector<VarId> parts, score_cols;
            for (int r = 0; r < kRelationCount; ++r) {
                const std::string rp = lp + "." + relation_name(static_cast<Relation>(r));
                VarId q = affine(tape, z, rp + ".q");
                VarId k = affine(tape, z, rp + ".k");
                VarId v = affine(tape, z, rp + ".v");
                VarId h = tape.masked_attention(q, k, v, in.adj[r], cfg_.heads, cfg_.dropout,
                                                probe ? &probe->attention[l][r] : nullptr);
                parts.push_back(h);
                score_cols.push_back(affine(tape, h, lp + ".sem"));
            }
            VarId scores = tape.concat_cols(score_cols);
            VarId combined = tape.semantic_combine(scores, parts, in.present);
            VarId mixed = tape.add(affine(tape, combined, lp + ".out"), z);
            z = tape.dropout(tape.leaky_relu(mixed, static_cast<S>(cfg_.leaky_slope)),
                             cfg_.dropout);
        }
        return z;
    }

    // user rows of z^(g) -> z^u (users only)
    VarId user_embeddings(TapeT<S>& tape, VarId zg, int n_users) {
        std::vector<int> rows(n_users);
        std::iota(rows.begin(), rows.end(), 0);
        VarId u = affine(tape, tape.gather_rows(zg, rows), "head.user");
        return tape.dropout(tape.leaky_relu(u, static_cast<S>(cfg_.leaky_slope)), cfg_.dropout);
    }

    // contrastive projections: pure affine maps, no activation
    VarId project_anchor(TapeT<S>& tape, VarId zu_rows) {
        return affine(tape, zu_rows, "head.anchor");
    }
    VarId project_labels(TapeT<S>& tape, VarId pool) { return affine(tape, pool, "head.label"); }

    VarId classify_logits(TapeT<S>& tape, VarId zu) { return affine(tape, zu, "head.cls"); }
    VarId multilabel_logits(TapeT<S>& tape, VarId zu) { return affine(tape, zu, "head.ml"); }

    // sum of squares over the whole parameter registry
    VarId l2_penalty(TapeT<S>& tape) {
        VarId total = tape.constant({1}, {S(0)});
        for (auto* p : params_.all()) total = tape.add(total, tape.sum_squares(tape.leaf(*p)));
        return total;
    }

    void load_values(const std::map<std::string, Tensor>& ckpt) {
        for (auto* p : params_.all()) {
            auto it = ckpt.find(p->name);
            if (it == ckpt.end())
                throw DataError("checkpoint is missing parameter '" + p->name + "'");
            if (it->second.shape != p->shape)
                throw DataError("checkpoint shape mismatch for '" + p->name + "'");
            p->value.assign(it->second.value.begin(), it->second.value.end());
        }
    }

private:
    VarId affine(TapeT<S>& tape, VarId x, const std::string& prefix) {
        return tape.add_bias(tape.matmul(x, tape.leaf(params_.get(prefix + ".W"))),
                             tape.leaf(params_.get(prefix + ".b")));
    }

    struct FeatureInput {
        int width;
        const std::vector<S>* data;
    };

    VarId encode_kind(TapeT<S>& tape, const std::string& kind, int count,
                      std::initializer_list<FeatureInput> feats) {
        std::vector<VarId> projected;
        const char* names[4] = {"ind", "num", "des", "twe"};
        int fi = 0;
        for (const auto& f : feats) {
            VarId x = tape.constant({count, f.width}, *f.data);
            VarId p = affine(tape, x, "feat." + kind + "." + names[fi]);
            projected.push_back(tape.dropout(
                tape.leaky_relu(p, static_cast<S>(cfg_.leaky_slope)), cfg_.dropout));
            ++fi;
        }
        VarId x = tape.concat_cols(projected);
        return tape.leaky_relu(affine(tape, x, "feat." + kind + ".out"),
                               static_cast<S>(cfg_.leaky_slope));
    }

    ModelConfig cfg_;
    ParamStore<S> params_;
};

using Model = ModelT<float>;
using Model64 = ModelT<double>;

}  // namespace sega
