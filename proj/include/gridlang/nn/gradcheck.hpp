#pragma once

#include <string>
#include <vector>

#include "gridlang/nn/network.hpp"

namespace gridlang::nn {

// Central finite-difference verification of the analytic TD-loss gradient.
// Components are subsampled per tensor; rewards are kept small so every
// sample sits in the smooth quadratic region of the Huber loss.

struct GradCheckEntry {
    std::string tensor;
    double max_rel_err = 0.0;
    size_t checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tol = 0.0;
    bool pass = true;

    double worst() const {
        double w = 0.0;
        for (const auto& e : entries) w = std::max(w, e.max_rel_err);
        return w;
    }
};

namespace detail {

inline std::vector<BatchSample> gradcheck_batch(const NetworkConfig& cfg, Rng& rng) {
    std::vector<BatchSample> batch(3);
    for (size_t i = 0; i < batch.size(); ++i) {
        BatchSample& s = batch[i];
        s.frames.resize(cfg.input_len());
        s.next_frames.resize(cfg.input_len());
        for (double& v : s.frames) v = rng.uniform();
        for (double& v : s.next_frames) v = rng.uniform();
        const size_t len = 4 + rng.uniform_int(5);
        s.tokens.resize(len);
        for (int& t : s.tokens) t = static_cast<int>(rng.uniform_int(cfg.vocab_size));
        s.action = static_cast<int>(rng.uniform_int(cfg.n_actions));
        s.reward = 0.3 * (rng.uniform() - 0.5);
        s.done = i == batch.size() - 1; // keep one terminal sample in the mix
    }
    return batch;
}

} // namespace detail

inline GradCheckReport gradient_check(const NetworkConfig& cfg, uint64_t seed,
                                      double h = 1e-4, double tol = 1e-3,
                                      size_t max_components_per_tensor = 24) {
    Rng rng(mix_seed(seed, 0x6AD));
    ParameterSet params = ParameterSet::init(cfg, rng);
    Rng target_rng(mix_seed(seed, 0x7A6));
    ParameterSet target = ParameterSet::init(cfg, target_rng);
    std::vector<BatchSample> batch = detail::gradcheck_batch(cfg, rng);
    std::vector<double> weights(batch.size());
    for (double& w : weights) w = 0.5 + 0.5 * rng.uniform();

    const double gamma = 0.97;
    ParameterSet analytic;
    td_loss(params, target, batch, gamma, /*double_q=*/false, weights, &analytic);

    auto loss_at = [&] {
        return td_loss(params, target, batch, gamma, false, weights).loss;
    };

    GradCheckReport report;
    report.tol = tol;

    std::vector<Tensor*> grad_tensors;
    analytic.for_each([&](const char*, Tensor& t) { grad_tensors.push_back(&t); });

    size_t slot = 0;
    params.for_each([&](const char* name, Tensor& t) {
        const Tensor& g = *grad_tensors[slot++];
        GradCheckEntry entry;
        entry.tensor = name;

        std::vector<size_t> components;
        if (t.numel() <= max_components_per_tensor) {
            for (size_t i = 0; i < t.numel(); ++i) components.push_back(i);
        } else {
            for (size_t i = 0; i < max_components_per_tensor; ++i)
                components.push_back(rng.uniform_int(t.numel()));
        }

        for (size_t idx : components) {
            const double saved = t[idx];
            t[idx] = saved + h;
            const double plus = loss_at();
            t[idx] = saved - h;
            const double minus = loss_at();
            t[idx] = saved;
            const double numeric = (plus - minus) / (2.0 * h);
            const double denom = std::max({std::abs(numeric), std::abs(g[idx]), 1e-6});
            entry.max_rel_err =
                std::max(entry.max_rel_err, std::abs(numeric - g[idx]) / denom);
        }
        entry.checked = components.size();
        if (entry.max_rel_err > tol) report.pass = false;
        report.entries.push_back(std::move(entry));
    });
    return report;
}

} // namespace gridlang::nn
