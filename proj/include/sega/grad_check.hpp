#pragma once

// Finite-difference gradient checking. Runs in float64: the forward builder
// is handed a fresh Tape64 for every evaluation, analytic gradients are read
// off one backward pass, and each checked coordinate is perturbed by +/- eps
// for a central difference.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sega/rng.hpp"
#include "sega/tensor.hpp"

namespace sega {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    int64_t worst_coord = -1;
};

// `build` constructs the scalar loss on the given tape from the current
// parameter values. `coords_per_param` limits how many coordinates of each
// parameter are probed (0 = all), sampled deterministically from `seed`.
// `make_tape` lets callers supply tape options (e.g. a replayed dropout
// stream); it must produce an equivalent tape on every call.
inline GradCheckResult grad_check(const std::function<VarId(Tape64&)>& build,
                                  const std::vector<Tensor64*>& params, double eps = 1e-3,
                                  int coords_per_param = 0, uint64_t seed = 0,
                                  const std::function<Tape64()>& make_tape = {}) {
    auto fresh_tape = [&]() { return make_tape ? make_tape() : Tape64(); };
    for (auto* p : params) p->zero_grad();
    {
        Tape64 tape = fresh_tape();
        VarId loss = build(tape);
        tape.backward(loss);
    }
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto* p : params) analytic.push_back(p->grad);

    auto eval = [&]() {
        Tape64 tape = fresh_tape();
        return tape.scalar(build(tape));
    };

    GradCheckResult res;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto* p = params[pi];
        const int64_t n = static_cast<int64_t>(p->value.size());
        std::vector<int64_t> coords;
        if (coords_per_param <= 0 || coords_per_param >= n) {
            coords.resize(n);
            for (int64_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            Rng rng(stream_seed(seed, "gradcheck", pi));
            for (int c = 0; c < coords_per_param; ++c)
                coords.push_back(static_cast<int64_t>(rng.uniform_int(n)));
        }
        for (int64_t i : coords) {
            const double keep = p->value[i];
            p->value[i] = keep + eps;
            const double up = eval();
            p->value[i] = keep - eps;
            const double dn = eval();
            p->value[i] = keep;
            const double numeric = (up - dn) / (2.0 * eps);
            const double a = analytic[pi][i];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1.0});
            if (rel > res.max_rel_error) {
                res.max_rel_error = rel;
                res.worst_param = p->name;
                res.worst_coord = i;
            }
        }
    }
    return res;
}

}  // namespace sega
