#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "gridlang/common.hpp"
#include "gridlang/env.hpp"

namespace gridlang::replay {

// ---------------------------------------------------------------------------
// Sum tree
//
// Classic array-backed binary tree over a power-of-two leaf count. Internal
// nodes hold (sum, max) of their children; parents are recomputed from
// children on update, so sums never drift from the leaves.

class SumTree {
public:
    explicit SumTree(size_t capacity) {
        capacity_ = 1;
        while (capacity_ < capacity) capacity_ <<= 1;
        sum_.assign(2 * capacity_, 0.0);
        max_.assign(2 * capacity_, 0.0);
    }

    size_t capacity() const { return capacity_; }
    double total() const { return sum_[1]; }
    double max_leaf() const { return max_[1]; }

    double get(size_t leaf) const {
        check_leaf(leaf);
        return sum_[capacity_ + leaf];
    }

    void set(size_t leaf, double mass) {
        check_leaf(leaf);
        if (!(mass >= 0.0)) throw Error("sum tree mass must be non-negative");
        size_t node = capacity_ + leaf;
        sum_[node] = mass;
        max_[node] = mass;
        for (node >>= 1; node >= 1; node >>= 1) {
            sum_[node] = sum_[2 * node] + sum_[2 * node + 1];
            max_[node] = std::max(max_[2 * node], max_[2 * node + 1]);
            if (node == 1) break;
        }
    }

    // First leaf whose inclusive cumulative sum exceeds value.
    size_t prefix_search(double value) const {
        size_t node = 1;
        while (node < capacity_) {
            const size_t left = 2 * node;
            if (value < sum_[left]) {
                node = left;
            } else {
                value -= sum_[left];
                node = left + 1;
            }
        }
        return node - capacity_;
    }

    // Max relative deviation between stored internal sums and a recompute
    // from the leaves.
    double max_consistency_error() const {
        double worst = 0.0;
        std::vector<double> rebuilt(sum_.size(), 0.0);
        for (size_t i = capacity_; i < 2 * capacity_; ++i) rebuilt[i] = sum_[i];
        for (size_t i = capacity_ - 1; i >= 1; --i) {
            rebuilt[i] = rebuilt[2 * i] + rebuilt[2 * i + 1];
            const double scale = std::max(1.0, std::abs(rebuilt[i]));
            worst = std::max(worst, std::abs(rebuilt[i] - sum_[i]) / scale);
        }
        return worst;
    }

private:
    void check_leaf(size_t leaf) const {
        if (leaf >= capacity_) throw IndexOutOfRangeError("sum tree leaf out of range");
    }

    size_t capacity_ = 0;
    std::vector<double> sum_;
    std::vector<double> max_;
};

// ---------------------------------------------------------------------------
// Transitions

struct Transition {
    env::CompactStack frames;
    std::vector<int> tokens; // instruction token ids, identical within an episode
    int action = 0;
    double reward = 0.0; // shaped
    env::CompactStack next_frames;
    bool done = false;
};

// ---------------------------------------------------------------------------
// Uniform ring buffer

class UniformReplay {
public:
    explicit UniformReplay(size_t capacity) : capacity_(capacity) {
        if (capacity_ == 0) throw Error("replay capacity must be positive");
        store_.reserve(capacity_);
    }

    size_t size() const { return store_.size(); }
    size_t capacity() const { return capacity_; }
    const Transition& at(size_t i) const {
        if (i >= store_.size()) throw IndexOutOfRangeError("replay index out of range");
        return store_[i];
    }

    void push(Transition t) {
        if (store_.size() < capacity_) {
            store_.push_back(std::move(t));
        } else {
            store_[write_] = std::move(t);
        }
        write_ = (write_ + 1) % capacity_;
    }

    // I.i.d. uniform indices, with replacement; batches larger than the
    // buffer are allowed.
    std::vector<size_t> sample(size_t batch, Rng& rng) const {
        if (store_.empty()) throw EmptyBufferError("sample from empty replay buffer");
        std::vector<size_t> indices(batch);
        for (auto& idx : indices) idx = rng.uniform_int(store_.size());
        return indices;
    }

private:
    size_t capacity_;
    size_t write_ = 0;
    std::vector<Transition> store_;
};

// ---------------------------------------------------------------------------
// Proportional prioritized replay

struct PERConfig {
    double alpha = 0.6;
    double beta_start = 0.4;
    double beta_end = 1.0;
    uint64_t beta_anneal_steps = 100000;
    double epsilon_priority = 1e-3;
    size_t capacity = size_t{1} << 17;

    void validate() const {
        if (alpha < 0.0) throw ConfigError("per.alpha must be >= 0");
        if (beta_start <= 0.0 || beta_start > 1.0 || beta_end <= 0.0 || beta_end > 1.0)
            throw ConfigError("per.beta must lie in (0, 1]");
        if (epsilon_priority <= 0.0) throw ConfigError("per.epsilon_priority must be > 0");
        if (capacity == 0) throw ConfigError("per.capacity must be positive");
    }

    double beta_at(uint64_t step) const {
        if (step >= beta_anneal_steps || beta_anneal_steps == 0) return beta_end;
        const double t = static_cast<double>(step) / static_cast<double>(beta_anneal_steps);
        return beta_start + (beta_end - beta_start) * t;
    }
};

struct PrioritizedSample {
    std::vector<size_t> indices;
    std::vector<double> weights; // max-normalized, in (0, 1]
};

class PrioritizedReplay {
public:
    explicit PrioritizedReplay(PERConfig cfg) : cfg_(cfg), tree_(cfg.capacity) {
        cfg_.validate();
        store_.reserve(cfg_.capacity);
    }

    const PERConfig& config() const { return cfg_; }
    size_t size() const { return store_.size(); }
    size_t capacity() const { return cfg_.capacity; }
    const Transition& at(size_t i) const {
        if (i >= store_.size()) throw IndexOutOfRangeError("replay index out of range");
        return store_[i];
    }
    const SumTree& tree() const { return tree_; }

    // New transitions take the current max leaf priority (1.0 into an empty
    // buffer) so every experience is replayed at least once.
    void push(Transition t) {
        const double mass = store_.empty() ? 1.0 : tree_.max_leaf();
        size_t slot;
        if (store_.size() < cfg_.capacity) {
            slot = store_.size();
            store_.push_back(std::move(t));
        } else {
            slot = write_;
            store_[slot] = std::move(t);
        }
        write_ = (write_ + 1) % cfg_.capacity;
        tree_.set(slot, mass);
    }

    // Stratified proportional sampling: the total mass is split into `batch`
    // equal segments with one uniform draw each, mapped through the tree's
    // prefix search. Weights are (N * P(i))^-beta, normalized by the batch
    // max.
    PrioritizedSample sample(size_t batch, double beta, Rng& rng) const {
        if (store_.empty()) throw EmptyBufferError("sample from empty replay buffer");
        if (batch == 0) throw Error("batch must be positive");

        PrioritizedSample out;
        out.indices.resize(batch);
        out.weights.resize(batch);
        const double total = tree_.total();
        const double segment = total / static_cast<double>(batch);
        const auto n = static_cast<double>(store_.size());

        double max_weight = 0.0;
        for (size_t k = 0; k < batch; ++k) {
            const double v = (static_cast<double>(k) + rng.uniform()) * segment;
            size_t idx = tree_.prefix_search(std::min(v, std::nextafter(total, 0.0)));
            idx = std::min(idx, store_.size() - 1);
            const double p = tree_.get(idx) / total;
            out.indices[k] = idx;
            out.weights[k] = std::pow(n * p, -beta);
            max_weight = std::max(max_weight, out.weights[k]);
        }
        for (auto& w : out.weights) w /= max_weight;
        return out;
    }

    // Sampling distribution over live entries: P(i) = p_i / sum_j p_j where
    // p_i is the stored (already exponentiated) leaf mass.
    std::vector<double> probabilities() const {
        std::vector<double> probs(store_.size());
        const double total = tree_.total();
        for (size_t i = 0; i < store_.size(); ++i) probs[i] = tree_.get(i) / total;
        return probs;
    }

    void update_priorities(const std::vector<size_t>& indices,
                           const std::vector<double>& td_errors) {
        if (indices.size() != td_errors.size())
            throw Error("update_priorities: indices/errors size mismatch");
        for (size_t k = 0; k < indices.size(); ++k) {
            if (indices[k] >= store_.size())
                throw IndexOutOfRangeError("update_priorities: index out of range");
            const double p = std::abs(td_errors[k]) + cfg_.epsilon_priority;
            tree_.set(indices[k], std::pow(p, cfg_.alpha));
        }
    }

private:
    PERConfig cfg_;
    SumTree tree_;
    size_t write_ = 0;
    std::vector<Transition> store_;
};

} // namespace gridlang::replay
