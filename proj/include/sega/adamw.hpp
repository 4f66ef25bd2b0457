#pragma once

// AdamW with decoupled weight decay. The run configuration keeps optimizer
// weight decay at 0 because L2 regularization enters through the fine-tune
// loss instead.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sega/errors.hpp"
#include "sega/tensor.hpp"

namespace sega {

struct AdamWConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

template <typename S>
class AdamWT {
public:
    explicit AdamWT(AdamWConfig cfg = {}) : cfg_(cfg) {}

    const AdamWConfig& config() const { return cfg_; }
    int64_t step_count() const { return step_; }

    void step(const std::vector<TensorT<S>*>& params) {
        for (auto* p : params) {
            if (!p->grad_valid || p->grad.size() != p->value.size())
                throw NumericError("adamw: parameter '" + p->name + "' has no gradient");
        }
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (auto* p : params) {
            auto& m = moment1_[p->name];
            auto& v = moment2_[p->name];
            if (m.size() != p->value.size()) m.assign(p->value.size(), S(0));
            if (v.size() != p->value.size()) v.assign(p->value.size(), S(0));
            for (size_t i = 0; i < p->value.size(); ++i) {
                const double g = p->grad[i];
                const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
                const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
                m[i] = static_cast<S>(mi);
                v[i] = static_cast<S>(vi);
                const double mhat = mi / bc1;
                const double vhat = vi / bc2;
                const double update =
                    mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p->value[i];
                p->value[i] = static_cast<S>(p->value[i] - cfg_.lr * update);
            }
        }
    }

    // Optimizer state exposed as named tensors so a checkpoint can carry it.
    std::vector<TensorT<S>> state_tensors() const {
        std::vector<TensorT<S>> out;
        for (const auto& [name, m] : moment1_) {
            TensorT<S> t("opt.m." + name, {static_cast<int>(m.size())}, false);
            t.value = m;
            out.push_back(std::move(t));
        }
        for (const auto& [name, v] : moment2_) {
            TensorT<S> t("opt.v." + name, {static_cast<int>(v.size())}, false);
            t.value = v;
            out.push_back(std::move(t));
        }
        TensorT<S> t("opt.step", {1}, false);
        t.value = {static_cast<S>(step_)};
        out.push_back(std::move(t));
        return out;
    }

    void restore_state(const std::string& name, const std::vector<S>& value) {
        if (name == "opt.step") {
            step_ = static_cast<int64_t>(value.at(0));
        } else if (name.rfind("opt.m.", 0) == 0) {
            moment1_[name.substr(6)] = value;
        } else if (name.rfind("opt.v.", 0) == 0) {
            moment2_[name.substr(6)] = value;
        }
    }

private:
    AdamWConfig cfg_;
    int64_t step_ = 0;
    std::map<std::string, std::vector<S>> moment1_;
    std::map<std::string, std::vector<S>> moment2_;
};

using AdamW = AdamWT<float>;

}  // namespace sega
