// Test-only oracles, written independently of the library code paths they
// check: brute-force instruction generation, a linear-scan prefix-sum
// sampler, and exact value iteration over the environment's transition
// function.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gridlang/env.hpp"
#include "gridlang/lang.hpp"

namespace oracles {

namespace gl = gridlang;

// ---------------------------------------------------------------------------
// Brute-force language enumeration.
//
// Generates every referent tuple and every connector string over the allowed
// alphabet, accepts connector strings with the last-position rule, resolves
// orders by direct list surgery, and filters consecutive repeats. Everything
// here is re-derived from first principles rather than calling into the
// library's enumerate/validate pair.

struct BruteInstruction {
    std::vector<int> referents;   // 0=red, 1=blue, 2=green, surface order
    std::vector<int> connectors;  // 0=comma, 1=butfirst, 2=butbefore
    std::vector<int> order;       // resolved execution order
};

inline bool brute_connectors_ok(const std::vector<int>& connectors) {
    int nonlinear = 0;
    for (size_t i = 0; i < connectors.size(); ++i) {
        if (connectors[i] != 0) {
            ++nonlinear;
            if (i + 1 != connectors.size()) return false;
        }
    }
    return nonlinear <= 1;
}

inline std::vector<int> brute_resolve(const std::vector<int>& referents,
                                      const std::vector<int>& connectors) {
    std::vector<int> order = referents;
    if (!connectors.empty() && connectors.back() == 1) { // but first
        const int moved = order.back();
        order.pop_back();
        order.insert(order.begin(), moved);
    } else if (!connectors.empty() && connectors.back() == 2) { // but before
        const int moved = order.back();
        order.pop_back();
        order.insert(order.end() - 1, moved);
    }
    return order;
}

inline bool brute_no_repeats(const std::vector<int>& order) {
    for (size_t i = 1; i < order.size(); ++i)
        if (order[i] == order[i - 1]) return false;
    return true;
}

// All valid instructions of the subset with exactly n sub-goals.
// allowed_nonlinear: 0 = none (comma subset), 1 = butfirst, 2 = butbefore.
inline std::vector<BruteInstruction> brute_enumerate(int allowed_nonlinear, int n) {
    std::vector<BruteInstruction> out;
    const long tuples = static_cast<long>(std::pow(3, n));
    for (long t = 0; t < tuples; ++t) {
        std::vector<int> referents(static_cast<size_t>(n));
        long rest = t;
        for (int i = n - 1; i >= 0; --i) {
            referents[static_cast<size_t>(i)] = static_cast<int>(rest % 3);
            rest /= 3;
        }
        // connector strings over {comma, allowed_nonlinear}
        const int alphabet = allowed_nonlinear == 0 ? 1 : 2;
        const long strings = n >= 2 ? static_cast<long>(std::pow(alphabet, n - 1)) : 1;
        for (long s = 0; s < strings; ++s) {
            std::vector<int> connectors(static_cast<size_t>(n - 1), 0);
            long code = s;
            for (int i = 0; i < n - 1; ++i) {
                if (code % alphabet == 1) connectors[static_cast<size_t>(i)] = allowed_nonlinear;
                code /= alphabet;
            }
            if (!brute_connectors_ok(connectors)) continue;
            BruteInstruction instr{referents, connectors,
                                   brute_resolve(referents, connectors)};
            if (!brute_no_repeats(instr.order)) continue;
            out.push_back(std::move(instr));
        }
    }
    return out;
}

inline size_t brute_count(int allowed_nonlinear, int min_n, int max_n) {
    size_t total = 0;
    for (int n = min_n; n <= max_n; ++n) total += brute_enumerate(allowed_nonlinear, n).size();
    return total;
}

// Canonical key for comparing the brute-force set against the library's.
inline std::string brute_key(const std::vector<int>& referents,
                             const std::vector<int>& connectors) {
    std::string key;
    for (int r : referents) key += static_cast<char>('0' + r);
    key += '|';
    for (int c : connectors) key += static_cast<char>('0' + c);
    return key;
}

inline std::string instr_key(const gl::lang::Instruction& instr) {
    std::vector<int> referents, connectors;
    for (auto r : instr.subgoals) referents.push_back(static_cast<int>(r));
    for (auto c : instr.connectors) connectors.push_back(static_cast<int>(c));
    return brute_key(referents, connectors);
}

// ---------------------------------------------------------------------------
// Linear-scan prefix-sum sampling oracle.

// First index whose inclusive cumulative sum exceeds value.
inline size_t linear_prefix_search(const std::vector<double>& masses, double value) {
    double cumulative = 0.0;
    for (size_t i = 0; i < masses.size(); ++i) {
        cumulative += masses[i];
        if (value < cumulative) return i;
    }
    return masses.size() - 1;
}

// ---------------------------------------------------------------------------
// Exact value iteration over the environment's one-step dynamics.

struct ValueIterationResult {
    // q[state][action]; state index = (progress * height + y) * width + x
    std::vector<std::array<double, 4>> q;
    int width = 0, height = 0, plan_len = 0;

    size_t index(int x, int y, int progress) const {
        return static_cast<size_t>((progress * height + y) * width + x);
    }
};

inline ValueIterationResult value_iteration(const gl::env::GridLayout& layout,
                                            const gl::lang::ExecutionPlan& plan,
                                            const gl::env::RewardConfig& rewards,
                                            bool shaped, double tol = 1e-13,
                                            int max_iters = 100000) {
    using namespace gl::env;
    const int plan_len = static_cast<int>(plan.size());
    ValueIterationResult result;
    result.width = layout.width;
    result.height = layout.height;
    result.plan_len = plan_len;
    const size_t n_states =
        static_cast<size_t>(plan_len * layout.height * layout.width);
    result.q.assign(n_states, {0.0, 0.0, 0.0, 0.0});
    std::vector<double> v(n_states, 0.0);

    const int huge_steps = 1 << 29; // no timeout inside the oracle MDP

    for (int iter = 0; iter < max_iters; ++iter) {
        double delta = 0.0;
        for (int progress = 0; progress < plan_len; ++progress) {
            for (int y = 0; y < layout.height; ++y) {
                for (int x = 0; x < layout.width; ++x) {
                    EnvState state{gl::Cell{x, y}, plan, progress, 0, Status::Running};
                    const size_t si = result.index(x, y, progress);
                    double best = -1e300;
                    for (int a = 0; a < kNumActions; ++a) {
                        StepOutcome out = transition(layout, rewards, huge_steps, state,
                                                     static_cast<Action>(a));
                        const double reward = shaped ? out.r_shaped : out.r_base;
                        double next_v = 0.0;
                        if (!out.done)
                            next_v = v[result.index(out.next.agent.x, out.next.agent.y,
                                                    out.next.progress)];
                        const double q = reward + rewards.gamma * next_v;
                        result.q[si][static_cast<size_t>(a)] = q;
                        best = std::max(best, q);
                    }
                    delta = std::max(delta, std::abs(best - v[si]));
                    v[si] = best;
                }
            }
        }
        if (delta < tol) break;
    }
    return result;
}

// Argmax set with a tie tolerance.
inline std::vector<int> argmax_set(const std::array<double, 4>& q, double tol = 1e-9) {
    double best = q[0];
    for (double val : q) best = std::max(best, val);
    std::vector<int> out;
    for (int a = 0; a < 4; ++a)
        if (q[static_cast<size_t>(a)] >= best - tol) out.push_back(a);
    return out;
}

// ---------------------------------------------------------------------------
// Central finite differences of a scalar function w.r.t. one variable.

inline double central_difference(const std::function<double()>& f, double& variable,
                                 double h = 1e-4) {
    const double saved = variable;
    variable = saved + h;
    const double plus = f();
    variable = saved - h;
    const double minus = f();
    variable = saved;
    return (plus - minus) / (2.0 * h);
}

} // namespace oracles
