#pragma once

// Dense tensor numerics with reverse-mode automatic differentiation.
//
// The tape is define-by-run and rebuilt every forward pass. Values are
// float32 during training; the whole machinery is templated on the scalar
// type so gradient checking can run the identical code in float64.
//
// Neighborhood reductions inside the graph-attention op sum their addends in
// an order derived from the values themselves (bit-pattern sort), which makes
// the forward pass exactly invariant under node relabeling.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "sega/errors.hpp"
#include "sega/rng.hpp"

namespace sega {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Persistent tensor: holds trainable parameters and their gradients between
// tape rebuilds.
template <typename S>
struct TensorT {
    std::string name;
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;
    bool requires_grad = false;
    bool grad_valid = false;

    TensorT() = default;
    TensorT(std::string n, Shape sh, bool rg = true)
        : name(std::move(n)), shape(std::move(sh)), requires_grad(rg) {
        value.assign(static_cast<size_t>(numel(shape)), S(0));
    }

    int64_t size() const { return numel(shape); }

    void zero_grad() {
        grad.assign(value.size(), S(0));
        grad_valid = false;
    }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

// CSR adjacency used by the fused attention op; row i's neighbors are
// idx[ptr[i] .. ptr[i+1]).
struct Csr {
    std::vector<int> ptr;
    std::vector<int> idx;

    int rows() const { return static_cast<int>(ptr.size()) - 1; }
    int degree(int i) const { return ptr[i + 1] - ptr[i]; }
};

using VarId = int;

namespace detail {

// Total order on scalars that depends only on the value's bit pattern, so a
// sum over a permuted multiset visits addends in the same order.
inline uint64_t value_bits(float v) { return std::bit_cast<uint32_t>(v); }
inline uint64_t value_bits(double v) { return std::bit_cast<uint64_t>(v); }

}  // namespace detail

template <typename S>
class TapeT {
public:
    struct Options {
        bool train = false;
        Rng* rng = nullptr;       // dropout stream; required when train and p > 0
        bool check_finite = true;
    };

    explicit TapeT(Options opts = {}) : opts_(opts) {}

    const Options& options() const { return opts_; }

    // ---- construction of leaves -------------------------------------------

    VarId leaf(TensorT<S>& t) {
        check_values(t.value, "leaf '" + t.name + "'");
        VarId id = new_slot(t.shape, t.value, t.requires_grad);
        slots_[id].param = &t;
        return id;
    }

    VarId constant(Shape shape, std::vector<S> data) {
        if (static_cast<int64_t>(data.size()) != numel(shape))
            throw ShapeError("constant: data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        check_values(data, "constant");
        return new_slot(std::move(shape), std::move(data), false);
    }

    // ---- accessors ---------------------------------------------------------

    const Shape& shape(VarId v) const { return slots_[v].shape; }
    const std::vector<S>& value(VarId v) const { return slots_[v].value; }
    const std::vector<S>& grad(VarId v) const { return slots_[v].grad; }
    S scalar(VarId v) const {
        if (slots_[v].value.size() != 1) throw ShapeError("scalar: var is not rank-0");
        return slots_[v].value[0];
    }

    // ---- primitive ops -----------------------------------------------------

    VarId matmul(VarId a, VarId b) {
        const auto& sa = shape(a);
        const auto& sb = shape(b);
        if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
            throw ShapeError("matmul: incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));
        const int m = sa[0], k = sa[1], n = sb[1];
        std::vector<S> out(static_cast<size_t>(m) * n, S(0));
        const auto& A = value(a);
        const auto& B = value(b);
        for (int i = 0; i < m; ++i) {
            for (int p = 0; p < k; ++p) {
                const S aip = A[static_cast<size_t>(i) * k + p];
                if (aip == S(0)) continue;
                const S* brow = &B[static_cast<size_t>(p) * n];
                S* orow = &out[static_cast<size_t>(i) * n];
                for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
            }
        }
        VarId y = result({m, n}, std::move(out), "matmul", {a, b});
        if (slots_[y].recorded) {
            record([this, a, b, y, m, k, n] {
                const auto& A = slots_[a].value;
                const auto& B = slots_[b].value;
                const auto& dY = slots_[y].grad;
                if (slots_[a].requires_grad) {
                    auto& dA = slots_[a].grad;
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < n; ++j) {
                            const S g = dY[static_cast<size_t>(i) * n + j];
                            if (g == S(0)) continue;
                            const S* brow = &B[0] + j;
                            for (int p = 0; p < k; ++p)
                                dA[static_cast<size_t>(i) * k + p] += g * brow[static_cast<size_t>(p) * n];
                        }
                }
                if (slots_[b].requires_grad) {
                    auto& dB = slots_[b].grad;
                    for (int i = 0; i < m; ++i)
                        for (int p = 0; p < k; ++p) {
                            const S aip = A[static_cast<size_t>(i) * k + p];
                            if (aip == S(0)) continue;
                            const S* grow = &dY[static_cast<size_t>(i) * n];
                            S* brow = &dB[static_cast<size_t>(p) * n];
                            for (int j = 0; j < n; ++j) brow[j] += aip * grow[j];
                        }
                }
            });
        }
        return y;
    }

    // Y = X + row-broadcast bias
    VarId add_bias(VarId x, VarId b) {
        const auto& sx = shape(x);
        const auto& sb = shape(b);
        if (sx.size() != 2 || sb.size() != 1 || sb[0] != sx[1])
            throw ShapeError("add_bias: shapes " + shape_str(sx) + " + " + shape_str(sb));
        const int m = sx[0], n = sx[1];
        std::vector<S> out(value(x));
        const auto& bias = value(b);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] += bias[j];
        VarId y = result({m, n}, std::move(out), "add_bias", {x, b});
        if (slots_[y].recorded) {
            record([this, x, b, y, m, n] {
                const auto& dY = slots_[y].grad;
                if (slots_[x].requires_grad) {
                    auto& dX = slots_[x].grad;
                    for (size_t i = 0; i < dY.size(); ++i) dX[i] += dY[i];
                }
                if (slots_[b].requires_grad) {
                    auto& dB = slots_[b].grad;
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < n; ++j) dB[j] += dY[static_cast<size_t>(i) * n + j];
                }
            });
        }
        return y;
    }

    VarId add(VarId a, VarId b) {
        if (shape(a) != shape(b))
            throw ShapeError("add: shapes " + shape_str(shape(a)) + " vs " + shape_str(shape(b)));
        std::vector<S> out(value(a));
        const auto& B = value(b);
        for (size_t i = 0; i < out.size(); ++i) out[i] += B[i];
        VarId y = result(shape(a), std::move(out), "add", {a, b});
        if (slots_[y].recorded) {
            record([this, a, b, y] {
                const auto& dY = slots_[y].grad;
                if (slots_[a].requires_grad) {
                    auto& dA = slots_[a].grad;
                    for (size_t i = 0; i < dY.size(); ++i) dA[i] += dY[i];
                }
                if (slots_[b].requires_grad) {
                    auto& dB = slots_[b].grad;
                    for (size_t i = 0; i < dY.size(); ++i) dB[i] += dY[i];
                }
            });
        }
        return y;
    }

    VarId scalar_mul(VarId x, S c) {
        std::vector<S> out(value(x));
        for (auto& v : out) v *= c;
        VarId y = result(shape(x), std::move(out), "scalar_mul", {x});
        if (slots_[y].recorded) {
            record([this, x, y, c] {
                const auto& dY = slots_[y].grad;
                auto& dX = slots_[x].grad;
                for (size_t i = 0; i < dY.size(); ++i) dX[i] += c * dY[i];
            });
        }
        return y;
    }

    VarId concat_cols(const std::vector<VarId>& parts) {
        if (parts.empty()) throw ShapeError("concat_cols: no inputs");
        const int m = shape(parts[0])[0];
        int total = 0;
        for (VarId p : parts) {
            const auto& sp = shape(p);
            if (sp.size() != 2 || sp[0] != m)
                throw ShapeError("concat_cols: row mismatch, got " + shape_str(sp));
            total += sp[1];
        }
        std::vector<S> out(static_cast<size_t>(m) * total);
        int col = 0;
        for (VarId p : parts) {
            const int w = shape(p)[1];
            const auto& V = value(p);
            for (int i = 0; i < m; ++i)
                std::copy_n(&V[static_cast<size_t>(i) * w], w,
                            &out[static_cast<size_t>(i) * total + col]);
            col += w;
        }
        VarId y = result({m, total}, std::move(out), "concat_cols", parts);
        if (slots_[y].recorded) {
            record([this, parts, y, m, total] {
                const auto& dY = slots_[y].grad;
                int col = 0;
                for (VarId p : parts) {
                    const int w = slots_[p].shape[1];
                    if (slots_[p].requires_grad) {
                        auto& dP = slots_[p].grad;
                        for (int i = 0; i < m; ++i)
                            for (int j = 0; j < w; ++j)
                                dP[static_cast<size_t>(i) * w + j] +=
                                    dY[static_cast<size_t>(i) * total + col + j];
                    }
                    col += w;
                }
            });
        }
        return y;
    }

    VarId concat_rows(const std::vector<VarId>& parts) {
        if (parts.empty()) throw ShapeError("concat_rows: no inputs");
        const int w = shape(parts[0])[1];
        int total = 0;
        for (VarId p : parts) {
            const auto& sp = shape(p);
            if (sp.size() != 2 || sp[1] != w)
                throw ShapeError("concat_rows: column mismatch, got " + shape_str(sp));
            total += sp[0];
        }
        std::vector<S> out;
        out.reserve(static_cast<size_t>(total) * w);
        for (VarId p : parts) {
            const auto& V = value(p);
            out.insert(out.end(), V.begin(), V.end());
        }
        VarId y = result({total, w}, std::move(out), "concat_rows", parts);
        if (slots_[y].recorded) {
            record([this, parts, y] {
                const auto& dY = slots_[y].grad;
                size_t off = 0;
                for (VarId p : parts) {
                    const size_t n = slots_[p].value.size();
                    if (slots_[p].requires_grad) {
                        auto& dP = slots_[p].grad;
                        for (size_t i = 0; i < n; ++i) dP[i] += dY[off + i];
                    }
                    off += n;
                }
            });
        }
        return y;
    }

    VarId leaky_relu(VarId x, S slope) {
        std::vector<S> out(value(x));
        for (auto& v : out)
            if (v < S(0)) v *= slope;
        VarId y = result(shape(x), std::move(out), "leaky_relu", {x});
        if (slots_[y].recorded) {
            record([this, x, y, slope] {
                const auto& X = slots_[x].value;
                const auto& dY = slots_[y].grad;
                auto& dX = slots_[x].grad;
                for (size_t i = 0; i < dY.size(); ++i)
                    dX[i] += dY[i] * (X[i] > S(0) ? S(1) : slope);
            });
        }
        return y;
    }

    VarId row_softmax(VarId x) {
        const auto& sx = shape(x);
        if (sx.size() != 2) throw ShapeError("row_softmax: need rank-2, got " + shape_str(sx));
        const int m = sx[0], n = sx[1];
        std::vector<S> out(static_cast<size_t>(m) * n);
        const auto& X = value(x);
        for (int i = 0; i < m; ++i) {
            const S* row = &X[static_cast<size_t>(i) * n];
            S mx = row[0];
            for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
            double denom = 0.0;
            for (int j = 0; j < n; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
            for (int j = 0; j < n; ++j)
                out[static_cast<size_t>(i) * n + j] =
                    static_cast<S>(std::exp(static_cast<double>(row[j] - mx)) / denom);
        }
        VarId y = result({m, n}, std::move(out), "row_softmax", {x});
        if (slots_[y].recorded) {
            record([this, x, y, m, n] {
                const auto& Y = slots_[y].value;
                const auto& dY = slots_[y].grad;
                auto& dX = slots_[x].grad;
                for (int i = 0; i < m; ++i) {
                    const S* yrow = &Y[static_cast<size_t>(i) * n];
                    const S* grow = &dY[static_cast<size_t>(i) * n];
                    double dot = 0.0;
                    for (int j = 0; j < n; ++j) dot += static_cast<double>(yrow[j]) * grow[j];
                    for (int j = 0; j < n; ++j)
                        dX[static_cast<size_t>(i) * n + j] +=
                            yrow[j] * (grow[j] - static_cast<S>(dot));
                }
            });
        }
        return y;
    }

    VarId reduce_sum(VarId x) {
        double acc = 0.0;
        for (S v : value(x)) acc += static_cast<double>(v);
        VarId y = result({1}, {static_cast<S>(acc)}, "reduce_sum", {x});
        if (slots_[y].recorded) {
            record([this, x, y] {
                const S g = slots_[y].grad[0];
                auto& dX = slots_[x].grad;
                for (auto& v : dX) v += g;
            });
        }
        return y;
    }

    VarId mean_all(VarId x) {
        const auto n = static_cast<double>(value(x).size());
        double acc = 0.0;
        for (S v : value(x)) acc += static_cast<double>(v);
        VarId y = result({1}, {static_cast<S>(acc / n)}, "mean_all", {x});
        if (slots_[y].recorded) {
            record([this, x, y, n] {
                const S g = static_cast<S>(slots_[y].grad[0] / n);
                auto& dX = slots_[x].grad;
                for (auto& v : dX) v += g;
            });
        }
        return y;
    }

    VarId log_op(VarId x) {
        std::vector<S> out(value(x));
        for (auto& v : out) {
            if (v <= S(0)) throw NumericError("log: non-positive input");
            v = std::log(v);
        }
        VarId y = result(shape(x), std::move(out), "log", {x});
        if (slots_[y].recorded) {
            record([this, x, y] {
                const auto& X = slots_[x].value;
                const auto& dY = slots_[y].grad;
                auto& dX = slots_[x].grad;
                for (size_t i = 0; i < dY.size(); ++i) dX[i] += dY[i] / X[i];
            });
        }
        return y;
    }

    VarId exp_op(VarId x) {
        std::vector<S> out(value(x));
        for (auto& v : out) v = std::exp(v);
        VarId y = result(shape(x), std::move(out), "exp", {x});
        if (slots_[y].recorded) {
            record([this, x, y] {
                const auto& Y = slots_[y].value;
                const auto& dY = slots_[y].grad;
                auto& dX = slots_[x].grad;
                for (size_t i = 0; i < dY.size(); ++i) dX[i] += dY[i] * Y[i];
            });
        }
        return y;
    }

    // cosine similarity of two equal-length vectors (rank-1) -> scalar
    VarId cosine_similarity(VarId a, VarId b) {
        const auto& A = value(a);
        const auto& B = value(b);
        if (A.size() != B.size())
            throw ShapeError("cosine_similarity: length mismatch " + std::to_string(A.size()) +
                             " vs " + std::to_string(B.size()));
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (size_t i = 0; i < A.size(); ++i) {
            dot += static_cast<double>(A[i]) * B[i];
            na += static_cast<double>(A[i]) * A[i];
            nb += static_cast<double>(B[i]) * B[i];
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        if (na == 0.0 || nb == 0.0)
            throw NumericError("cosine_similarity: zero-norm input");
        const double cos = dot / (na * nb);
        VarId y = result({1}, {static_cast<S>(cos)}, "cosine_similarity", {a, b});
        if (slots_[y].recorded) {
            record([this, a, b, y, na, nb, cos] {
                const double g = slots_[y].grad[0];
                const auto& A = slots_[a].value;
                const auto& B = slots_[b].value;
                if (slots_[a].requires_grad) {
                    auto& dA = slots_[a].grad;
                    for (size_t i = 0; i < A.size(); ++i)
                        dA[i] += static_cast<S>(g * (B[i] / (na * nb) - cos * A[i] / (na * na)));
                }
                if (slots_[b].requires_grad) {
                    auto& dB = slots_[b].grad;
                    for (size_t i = 0; i < B.size(); ++i)
                        dB[i] += static_cast<S>(g * (A[i] / (na * nb) - cos * B[i] / (nb * nb)));
                }
            });
        }
        return y;
    }

    // Inverted dropout; identity in eval mode.
    VarId dropout(VarId x, double p) {
        if (!opts_.train || p <= 0.0) return x;
        if (p >= 1.0) throw ShapeError("dropout: rate must be < 1");
        if (!opts_.rng) throw NumericError("dropout: train mode requires an RNG stream");
        const double keep = 1.0 - p;
        auto mask = std::make_shared<std::vector<uint8_t>>(value(x).size());
        std::vector<S> out(value(x));
        for (size_t i = 0; i < out.size(); ++i) {
            const bool kept = opts_.rng->uniform() >= p;
            (*mask)[i] = kept;
            out[i] = kept ? static_cast<S>(out[i] / keep) : S(0);
        }
        VarId y = result(shape(x), std::move(out), "dropout", {x});
        if (slots_[y].recorded) {
            record([this, x, y, mask, keep] {
                const auto& dY = slots_[y].grad;
                auto& dX = slots_[x].grad;
                for (size_t i = 0; i < dY.size(); ++i)
                    if ((*mask)[i]) dX[i] += static_cast<S>(dY[i] / keep);
            });
        }
        return y;
    }

    VarId gather_rows(VarId x, std::vector<int> rows) {
        const auto& sx = shape(x);
        if (sx.size() != 2) throw ShapeError("gather_rows: need rank-2, got " + shape_str(sx));
        const int n = sx[0], d = sx[1];
        for (int r : rows)
            if (r < 0 || r >= n)
                throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range [0," +
                                 std::to_string(n) + ")");
        const int b = static_cast<int>(rows.size());
        std::vector<S> out(static_cast<size_t>(b) * d);
        const auto& X = value(x);
        for (int i = 0; i < b; ++i)
            std::copy_n(&X[static_cast<size_t>(rows[i]) * d], d, &out[static_cast<size_t>(i) * d]);
        auto rows_ptr = std::make_shared<std::vector<int>>(std::move(rows));
        VarId y = result({b, d}, std::move(out), "gather_rows", {x});
        if (slots_[y].recorded) {
            record([this, x, y, rows_ptr, d] {
                const auto& dY = slots_[y].grad;
                auto& dX = slots_[x].grad;
                for (size_t i = 0; i < rows_ptr->size(); ++i)
                    for (int j = 0; j < d; ++j)
                        dX[static_cast<size_t>((*rows_ptr)[i]) * d + j] +=
                            dY[i * static_cast<size_t>(d) + j];
            });
        }
        return y;
    }

    VarId sum_squares(VarId x) {
        double acc = 0.0;
        for (S v : value(x)) acc += static_cast<double>(v) * v;
        VarId y = result({1}, {static_cast<S>(acc)}, "sum_squares", {x});
        if (slots_[y].recorded) {
            record([this, x, y] {
                const S g = slots_[y].grad[0];
                const auto& X = slots_[x].value;
                auto& dX = slots_[x].grad;
                for (size_t i = 0; i < X.size(); ++i) dX[i] += S(2) * X[i] * g;
            });
        }
        return y;
    }

    // Summed softmax cross-entropy against integer class labels.
    VarId softmax_cross_entropy(VarId logits, const std::vector<int>& labels) {
        const auto& sl = shape(logits);
        if (sl.size() != 2 || sl[0] != static_cast<int>(labels.size()))
            throw ShapeError("softmax_cross_entropy: logits " + shape_str(sl) + " vs " +
                             std::to_string(labels.size()) + " labels");
        const int b = sl[0], c = sl[1];
        for (int y : labels)
            if (y < 0 || y >= c) throw ShapeError("softmax_cross_entropy: label out of range");
        const auto& X = value(logits);
        auto probs = std::make_shared<std::vector<S>>(static_cast<size_t>(b) * c);
        double loss = 0.0;
        for (int i = 0; i < b; ++i) {
            const S* row = &X[static_cast<size_t>(i) * c];
            S mx = row[0];
            for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
            double denom = 0.0;
            for (int j = 0; j < c; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
            for (int j = 0; j < c; ++j)
                (*probs)[static_cast<size_t>(i) * c + j] =
                    static_cast<S>(std::exp(static_cast<double>(row[j] - mx)) / denom);
            loss += std::log(denom) - static_cast<double>(row[labels[i]] - mx);
        }
        auto labels_ptr = std::make_shared<std::vector<int>>(labels);
        VarId y = result({1}, {static_cast<S>(loss)}, "softmax_cross_entropy", {logits});
        if (slots_[y].recorded) {
            record([this, logits, y, probs, labels_ptr, b, c] {
                const S g = slots_[y].grad[0];
                auto& dX = slots_[logits].grad;
                for (int i = 0; i < b; ++i)
                    for (int j = 0; j < c; ++j) {
                        S p = (*probs)[static_cast<size_t>(i) * c + j];
                        if (j == (*labels_ptr)[i]) p -= S(1);
                        dX[static_cast<size_t>(i) * c + j] += g * p;
                    }
            });
        }
        return y;
    }

    // Mean binary cross-entropy with logits against a multi-hot target matrix.
    VarId bce_with_logits(VarId logits, const std::vector<S>& targets) {
        const auto& sl = shape(logits);
        if (sl.size() != 2 || value(logits).size() != targets.size())
            throw ShapeError("bce_with_logits: logits " + shape_str(sl) + " vs " +
                             std::to_string(targets.size()) + " targets");
        const auto& X = value(logits);
        double loss = 0.0;
        for (size_t i = 0; i < X.size(); ++i) {
            const double x = X[i], t = targets[i];
            loss += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
        }
        const double n = static_cast<double>(X.size());
        auto targets_ptr = std::make_shared<std::vector<S>>(targets);
        VarId y = result({1}, {static_cast<S>(loss / n)}, "bce_with_logits", {logits});
        if (slots_[y].recorded) {
            record([this, logits, y, targets_ptr, n] {
                const double g = slots_[y].grad[0];
                const auto& X = slots_[logits].value;
                auto& dX = slots_[logits].grad;
                for (size_t i = 0; i < X.size(); ++i) {
                    const double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(X[i])));
                    dX[i] += static_cast<S>(g * (sig - (*targets_ptr)[i]) / n);
                }
            });
        }
        return y;
    }

    // ---- fused graph ops ---------------------------------------------------

    // Masked multi-head scaled dot-product attention over per-node neighbor
    // lists (self-loops are the caller's responsibility). Optional dropout on
    // the attention weights in train mode. If `attn_out` is non-null the
    // post-softmax (pre-dropout) weights are copied there, parallel to adj.idx
    // per head: attn_out[(ptr[i]+j)*heads + h].
    VarId masked_attention(VarId q, VarId k, VarId v, const Csr& adj, int heads,
                           double attn_dropout = 0.0, std::vector<S>* attn_out = nullptr) {
        const auto& sq = shape(q);
        if (sq.size() != 2 || shape(k) != sq || shape(v) != sq)
            throw ShapeError("masked_attention: Q/K/V must share shape, got " + shape_str(sq));
        const int n = sq[0], d = sq[1];
        if (d % heads != 0) throw ShapeError("masked_attention: head count must divide width");
        if (adj.rows() != n) throw ShapeError("masked_attention: adjacency rows != node count");
        const int hd = d / heads;
        const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));
        const auto& Q = value(q);
        const auto& K = value(k);
        const auto& V = value(v);

        const size_t nnz = adj.idx.size();
        // per (edge slot, head): softmax weight and dropout-scaled weight
        auto alpha = std::make_shared<std::vector<S>>(nnz * heads, S(0));
        auto alpha_used = std::make_shared<std::vector<S>>(nnz * heads, S(0));

        const bool use_dropout = opts_.train && attn_dropout > 0.0;
        if (use_dropout && !opts_.rng)
            throw NumericError("masked_attention: train-mode dropout requires an RNG stream");
        const double keep = 1.0 - attn_dropout;

        std::vector<S> out(static_cast<size_t>(n) * d, S(0));
        std::vector<S> scores;
        std::vector<int> ord;
        for (int i = 0; i < n; ++i) {
            const int deg = adj.degree(i);
            if (deg == 0)
                throw ShapeError("masked_attention: node " + std::to_string(i) +
                                 " has an empty neighborhood (missing self-loop)");
            const int base = adj.ptr[i];
            for (int h = 0; h < heads; ++h) {
                const S* qrow = &Q[static_cast<size_t>(i) * d + static_cast<size_t>(h) * hd];
                scores.assign(deg, S(0));
                for (int e = 0; e < deg; ++e) {
                    const int j = adj.idx[base + e];
                    const S* krow = &K[static_cast<size_t>(j) * d + static_cast<size_t>(h) * hd];
                    S s = S(0);
                    for (int t = 0; t < hd; ++t) s += qrow[t] * krow[t];
                    scores[e] = s * scale;
                }
                // value-determined neighbor order: by score bits, ties broken
                // by the V row bytes, so sums do not depend on node labels
                ord.resize(deg);
                std::iota(ord.begin(), ord.end(), 0);
                std::sort(ord.begin(), ord.end(), [&](int x, int yy) {
                    const auto bx = detail::value_bits(scores[x]);
                    const auto by = detail::value_bits(scores[yy]);
                    if (bx != by) return bx < by;
                    const int jx = adj.idx[base + x], jy = adj.idx[base + yy];
                    const S* vx = &V[static_cast<size_t>(jx) * d + static_cast<size_t>(h) * hd];
                    const S* vy = &V[static_cast<size_t>(jy) * d + static_cast<size_t>(h) * hd];
                    for (int t = 0; t < hd; ++t) {
                        const auto ax = detail::value_bits(vx[t]);
                        const auto ay = detail::value_bits(vy[t]);
                        if (ax != ay) return ax < ay;
                    }
                    return false;
                });
                S mx = scores[0];
                for (int e = 1; e < deg; ++e) mx = std::max(mx, scores[e]);
                double denom = 0.0;
                for (int e = 0; e < deg; ++e)
                    denom += std::exp(static_cast<double>(scores[ord[e]] - mx));
                for (int e = 0; e < deg; ++e) {
                    const size_t slot = static_cast<size_t>(base + e) * heads + h;
                    (*alpha)[slot] =
                        static_cast<S>(std::exp(static_cast<double>(scores[e] - mx)) / denom);
                }
                // attention-weight dropout, drawn in stored edge order
                for (int e = 0; e < deg; ++e) {
                    const size_t slot = static_cast<size_t>(base + e) * heads + h;
                    S a = (*alpha)[slot];
                    if (use_dropout)
                        a = (opts_.rng->uniform() >= attn_dropout) ? static_cast<S>(a / keep) : S(0);
                    (*alpha_used)[slot] = a;
                }
                S* orow = &out[static_cast<size_t>(i) * d + static_cast<size_t>(h) * hd];
                for (int t = 0; t < hd; ++t) {
                    double acc = 0.0;
                    for (int e = 0; e < deg; ++e) {
                        const int es = ord[e];
                        const int j = adj.idx[base + es];
                        acc += static_cast<double>(
                                   (*alpha_used)[static_cast<size_t>(base + es) * heads + h]) *
                               V[static_cast<size_t>(j) * d + static_cast<size_t>(h) * hd + t];
                    }
                    orow[t] = static_cast<S>(acc);
                }
            }
        }
        if (attn_out) *attn_out = *alpha;

        auto adj_ptr = std::make_shared<Csr>(adj);
        VarId y = result({n, d}, std::move(out), "masked_attention", {q, k, v});
        if (slots_[y].recorded) {
            record([this, q, k, v, y, adj_ptr, heads, hd, d, scale, alpha, alpha_used, keep,
                    use_dropout] {
                const auto& Q = slots_[q].value;
                const auto& K = slots_[k].value;
                const auto& V = slots_[v].value;
                const auto& dY = slots_[y].grad;
                auto& dQ = slots_[q].grad;
                auto& dK = slots_[k].grad;
                auto& dV = slots_[v].grad;
                const bool gq = slots_[q].requires_grad;
                const bool gk = slots_[k].requires_grad;
                const bool gv = slots_[v].requires_grad;
                const int n = adj_ptr->rows();
                std::vector<double> dalpha;
                for (int i = 0; i < n; ++i) {
                    const int deg = adj_ptr->degree(i);
                    const int base = adj_ptr->ptr[i];
                    for (int h = 0; h < heads; ++h) {
                        const S* grow = &dY[static_cast<size_t>(i) * d + static_cast<size_t>(h) * hd];
                        dalpha.assign(deg, 0.0);
                        for (int e = 0; e < deg; ++e) {
                            const int j = adj_ptr->idx[base + e];
                            const size_t slot = static_cast<size_t>(base + e) * heads + h;
                            const S au = (*alpha_used)[slot];
                            const S* vrow =
                                &V[static_cast<size_t>(j) * d + static_cast<size_t>(h) * hd];
                            double da = 0.0;
                            for (int t = 0; t < hd; ++t) {
                                da += static_cast<double>(grow[t]) * vrow[t];
                                if (gv)
                                    dV[static_cast<size_t>(j) * d + static_cast<size_t>(h) * hd + t] +=
                                        au * grow[t];
                            }
                            // undo dropout scaling; dropped weights carry no gradient
                            if (use_dropout)
                                da = (au == S(0) && (*alpha)[slot] != S(0)) ? 0.0 : da / keep;
                            dalpha[e] = da;
                        }
                        double dot = 0.0;
                        for (int e = 0; e < deg; ++e)
                            dot += dalpha[e] *
                                   (*alpha)[static_cast<size_t>(base + e) * heads + h];
                        const S* qrow =
                            &Q[static_cast<size_t>(i) * d + static_cast<size_t>(h) * hd];
                        for (int e = 0; e < deg; ++e) {
                            const int j = adj_ptr->idx[base + e];
                            const size_t slot = static_cast<size_t>(base + e) * heads + h;
                            const double ds =
                                static_cast<double>((*alpha)[slot]) * (dalpha[e] - dot) * scale;
                            const S* krow =
                                &K[static_cast<size_t>(j) * d + static_cast<size_t>(h) * hd];
                            for (int t = 0; t < hd; ++t) {
                                if (gq)
                                    dQ[static_cast<size_t>(i) * d + static_cast<size_t>(h) * hd + t] +=
                                        static_cast<S>(ds * krow[t]);
                                if (gk)
                                    dK[static_cast<size_t>(j) * d + static_cast<size_t>(h) * hd + t] +=
                                        static_cast<S>(ds * qrow[t]);
                            }
                        }
                    }
                }
            });
        }
        return y;
    }

    // Per-node softmax over per-relation scalar scores, restricted to the
    // relations present at each node, then a convex combination of the
    // relation-specific node representations.
    //   scores: [N, R]; parts: R tensors of [N, D]; present: N*R mask.
    VarId semantic_combine(VarId scores, const std::vector<VarId>& parts,
                           const std::vector<uint8_t>& present) {
        const int r = static_cast<int>(parts.size());
        const auto& ss = shape(scores);
        if (ss.size() != 2 || ss[1] != r)
            throw ShapeError("semantic_combine: scores " + shape_str(ss) + " vs " +
                             std::to_string(r) + " parts");
        const int n = ss[0];
        if (present.size() != static_cast<size_t>(n) * r)
            throw ShapeError("semantic_combine: presence mask size mismatch");
        const auto& sp = shape(parts[0]);
        const int d = sp[1];
        for (VarId p : parts)
            if (shape(p) != sp) throw ShapeError("semantic_combine: part shape mismatch");
        if (sp[0] != n) throw ShapeError("semantic_combine: part rows != score rows");

        const auto& SC = value(scores);
        auto beta = std::make_shared<std::vector<S>>(static_cast<size_t>(n) * r, S(0));
        std::vector<S> out(static_cast<size_t>(n) * d, S(0));
        for (int i = 0; i < n; ++i) {
            S mx = std::numeric_limits<S>::lowest();
            int cnt = 0;
            for (int c = 0; c < r; ++c)
                if (present[static_cast<size_t>(i) * r + c]) {
                    mx = std::max(mx, SC[static_cast<size_t>(i) * r + c]);
                    ++cnt;
                }
            if (cnt == 0)
                throw ShapeError("semantic_combine: node " + std::to_string(i) +
                                 " has no present relation");
            double denom = 0.0;
            for (int c = 0; c < r; ++c)
                if (present[static_cast<size_t>(i) * r + c])
                    denom += std::exp(static_cast<double>(SC[static_cast<size_t>(i) * r + c] - mx));
            for (int c = 0; c < r; ++c)
                if (present[static_cast<size_t>(i) * r + c])
                    (*beta)[static_cast<size_t>(i) * r + c] = static_cast<S>(
                        std::exp(static_cast<double>(SC[static_cast<size_t>(i) * r + c] - mx)) /
                        denom);
            for (int c = 0; c < r; ++c) {
                const S b = (*beta)[static_cast<size_t>(i) * r + c];
                if (b == S(0)) continue;
                const auto& P = value(parts[c]);
                for (int t = 0; t < d; ++t)
                    out[static_cast<size_t>(i) * d + t] += b * P[static_cast<size_t>(i) * d + t];
            }
        }
        auto present_ptr = std::make_shared<std::vector<uint8_t>>(present);
        std::vector<VarId> ins = parts;
        ins.push_back(scores);
        VarId y = result({n, d}, std::move(out), "semantic_combine", ins);
        if (slots_[y].recorded) {
            record([this, scores, parts, y, beta, present_ptr, n, d, r] {
                const auto& dY = slots_[y].grad;
                std::vector<double> dbeta(r);
                for (int i = 0; i < n; ++i) {
                    const S* grow = &dY[static_cast<size_t>(i) * d];
                    double dot = 0.0;
                    for (int c = 0; c < r; ++c) {
                        dbeta[c] = 0.0;
                        if (!(*present_ptr)[static_cast<size_t>(i) * r + c]) continue;
                        const auto& P = slots_[parts[c]].value;
                        const S b = (*beta)[static_cast<size_t>(i) * r + c];
                        for (int t = 0; t < d; ++t) {
                            dbeta[c] += static_cast<double>(grow[t]) * P[static_cast<size_t>(i) * d + t];
                            if (slots_[parts[c]].requires_grad)
                                slots_[parts[c]].grad[static_cast<size_t>(i) * d + t] += b * grow[t];
                        }
                        dot += dbeta[c] * b;
                    }
                    if (slots_[scores].requires_grad) {
                        auto& dS = slots_[scores].grad;
                        for (int c = 0; c < r; ++c)
                            if ((*present_ptr)[static_cast<size_t>(i) * r + c])
                                dS[static_cast<size_t>(i) * r + c] += static_cast<S>(
                                    static_cast<double>((*beta)[static_cast<size_t>(i) * r + c]) *
                                    (dbeta[c] - dot));
                    }
                }
            });
        }
        return y;
    }

    // InfoNCE over a batch of anchors against a pool of projected pseudo-label
    // embeddings. Candidate set per anchor = its positive plus sampled
    // negatives; similarities are cosine, scaled by 1/tau; the loss is summed
    // over anchors.
    //   z: [B, d]; pool: [L, d]; pos[i] in [0, L); negs: CSR over anchors.
    VarId infonce(VarId z, VarId pool, const std::vector<int>& pos, const Csr& negs, double tau) {
        const auto& sz = shape(z);
        const auto& sp = shape(pool);
        if (sz.size() != 2 || sp.size() != 2 || sz[1] != sp[1])
            throw ShapeError("infonce: z " + shape_str(sz) + " vs pool " + shape_str(sp));
        if (tau <= 0.0) throw NumericError("infonce: temperature must be positive");
        const int b = sz[0], d = sz[1], l = sp[0];
        if (static_cast<int>(pos.size()) != b || negs.rows() != b)
            throw ShapeError("infonce: positive/negative lists must cover the batch");
        const auto& Z = value(z);
        const auto& P = value(pool);

        auto pool_norm = std::make_shared<std::vector<double>>(l, 0.0);
        for (int j = 0; j < l; ++j) {
            double nn = 0.0;
            for (int t = 0; t < d; ++t)
                nn += static_cast<double>(P[static_cast<size_t>(j) * d + t]) *
                      P[static_cast<size_t>(j) * d + t];
            (*pool_norm)[j] = std::sqrt(nn);
        }
        auto z_norm = std::make_shared<std::vector<double>>(b, 0.0);

        // per anchor: candidate pool rows, softmax probs, cosines
        auto cand = std::make_shared<std::vector<std::vector<int>>>(b);
        auto prob = std::make_shared<std::vector<std::vector<double>>>(b);
        auto cosv = std::make_shared<std::vector<std::vector<double>>>(b);
        double loss = 0.0;
        for (int i = 0; i < b; ++i) {
            double nn = 0.0;
            for (int t = 0; t < d; ++t)
                nn += static_cast<double>(Z[static_cast<size_t>(i) * d + t]) *
                      Z[static_cast<size_t>(i) * d + t];
            (*z_norm)[i] = std::sqrt(nn);
            if ((*z_norm)[i] == 0.0)
                throw NumericError("infonce: zero-norm anchor embedding at batch row " +
                                   std::to_string(i));
            auto& ci = (*cand)[i];
            ci.push_back(pos[i]);
            for (int e = negs.ptr[i]; e < negs.ptr[i + 1]; ++e) ci.push_back(negs.idx[e]);
            const int m = static_cast<int>(ci.size());
            auto& pi = (*prob)[i];
            auto& si = (*cosv)[i];
            pi.assign(m, 0.0);
            si.assign(m, 0.0);
            for (int c = 0; c < m; ++c) {
                const int j = ci[c];
                if (j < 0 || j >= l) throw ShapeError("infonce: pool index out of range");
                if ((*pool_norm)[j] == 0.0)
                    throw NumericError("infonce: zero-norm pseudo-label embedding at pool row " +
                                       std::to_string(j));
                double dot = 0.0;
                for (int t = 0; t < d; ++t)
                    dot += static_cast<double>(Z[static_cast<size_t>(i) * d + t]) *
                           P[static_cast<size_t>(j) * d + t];
                si[c] = dot / ((*z_norm)[i] * (*pool_norm)[j]);
            }
            double mx = si[0] / tau;
            for (int c = 1; c < m; ++c) mx = std::max(mx, si[c] / tau);
            double denom = 0.0;
            for (int c = 0; c < m; ++c) denom += std::exp(si[c] / tau - mx);
            for (int c = 0; c < m; ++c) pi[c] = std::exp(si[c] / tau - mx) / denom;
            loss += std::log(denom) - (si[0] / tau - mx);
        }
        VarId y = result({1}, {static_cast<S>(loss)}, "infonce", {z, pool});
        if (slots_[y].recorded) {
            record([this, z, pool, y, cand, prob, cosv, z_norm, pool_norm, tau, b, d] {
                const double g = slots_[y].grad[0];
                const auto& Z = slots_[z].value;
                const auto& P = slots_[pool].value;
                auto& dZ = slots_[z].grad;
                auto& dP = slots_[pool].grad;
                const bool gz = slots_[z].requires_grad;
                const bool gp = slots_[pool].requires_grad;
                for (int i = 0; i < b; ++i) {
                    const auto& ci = (*cand)[i];
                    const double nz = (*z_norm)[i];
                    for (size_t c = 0; c < ci.size(); ++c) {
                        const int j = ci[c];
                        const double np = (*pool_norm)[j];
                        const double cos = (*cosv)[i][c];
                        double ds = g * (*prob)[i][c];
                        if (c == 0) ds -= g;
                        const double dcos = ds / tau;
                        for (int t = 0; t < d; ++t) {
                            const double zi = Z[static_cast<size_t>(i) * d + t];
                            const double pj = P[static_cast<size_t>(j) * d + t];
                            if (gz)
                                dZ[static_cast<size_t>(i) * d + t] +=
                                    static_cast<S>(dcos * (pj / (nz * np) - cos * zi / (nz * nz)));
                            if (gp)
                                dP[static_cast<size_t>(j) * d + t] +=
                                    static_cast<S>(dcos * (zi / (nz * np) - cos * pj / (np * np)));
                        }
                    }
                }
            });
        }
        return y;
    }

    // ---- backward ----------------------------------------------------------

    void backward(VarId loss) {
        if (backward_done_)
            throw NumericError("backward: called twice on the same tape; rebuild the forward pass");
        if (slots_[loss].value.size() != 1)
            throw ShapeError("backward: loss must be scalar, got " + shape_str(slots_[loss].shape));
        backward_done_ = true;
        for (auto& slot : slots_) slot.grad.assign(slot.value.size(), S(0));
        slots_[loss].grad[0] = S(1);
        for (auto it = backward_fns_.rbegin(); it != backward_fns_.rend(); ++it) (*it)();
        for (auto& slot : slots_) {
            if (slot.param && slot.param->requires_grad) {
                auto& p = *slot.param;
                if (p.grad.size() != p.value.size() || !p.grad_valid)
                    p.grad.assign(p.value.size(), S(0));
                for (size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += slot.grad[i];
                p.grad_valid = true;
            }
        }
    }

    size_t op_count() const { return backward_fns_.size(); }

private:
    struct Slot {
        Shape shape;
        std::vector<S> value;
        std::vector<S> grad;
        bool requires_grad = false;
        bool recorded = false;  // true when a backward closure was recorded for the producing op
        TensorT<S>* param = nullptr;
    };

    VarId new_slot(Shape shape, std::vector<S> value, bool requires_grad) {
        slots_.push_back(Slot{std::move(shape), std::move(value), {}, requires_grad, false, nullptr});
        return static_cast<VarId>(slots_.size() - 1);
    }

    VarId result(Shape shape, std::vector<S> value, const char* op, const std::vector<VarId>& ins) {
        if (opts_.check_finite) check_values(value, op);
        bool rg = false;
        for (VarId i : ins) rg = rg || slots_[i].requires_grad;
        VarId id = new_slot(std::move(shape), std::move(value), rg);
        slots_[id].recorded = rg;
        return id;
    }

    void record(std::function<void()> fn) { backward_fns_.push_back(std::move(fn)); }

    void check_values(const std::vector<S>& vals, const std::string& where) const {
        if (!opts_.check_finite) return;
        for (S v : vals)
            if (!std::isfinite(static_cast<double>(v)))
                throw NumericError("non-finite value in " + where);
    }

    Options opts_;
    std::vector<Slot> slots_;
    std::vector<std::function<void()>> backward_fns_;
    bool backward_done_ = false;
};

using Tape = TapeT<float>;
using Tape64 = TapeT<double>;

}  // namespace sega
