#pragma once

#include <cmath>
#include <vector>

#include "gridlang/nn/network.hpp"

namespace gridlang::nn {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected adaptive-moment update. Moment slots follow the parameter
// enumeration order, so optimizer state stays aligned as long as the config
// does not change.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    uint64_t steps() const { return t_; }

    void step(ParameterSet& params, const ParameterSet& grads) {
        if (!(params.cfg == grads.cfg))
            throw ShapeMismatchError("adam: parameter/gradient config mismatch");
        std::vector<const Tensor*> gs;
        grads.for_each([&](const char*, const Tensor& t) { gs.push_back(&t); });

        if (m_.empty()) {
            params.for_each([&](const char*, Tensor& t) {
                m_.emplace_back(t.shape);
                v_.emplace_back(t.shape);
            });
        }

        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

        size_t slot = 0;
        params.for_each([&](const char* name, Tensor& p) {
            const Tensor& g = *gs[slot];
            if (!p.same_shape(g))
                throw ShapeMismatchError(std::string("adam: gradient shape mismatch for ") + name);
            Tensor& m = m_[slot];
            Tensor& v = v_[slot];
            for (size_t i = 0; i < p.numel(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
            ++slot;
        });
    }

private:
    AdamConfig cfg_;
    uint64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

} // namespace gridlang::nn
