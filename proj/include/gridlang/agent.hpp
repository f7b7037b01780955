#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gridlang/common.hpp"
#include "gridlang/env.hpp"
#include "gridlang/lang.hpp"
#include "gridlang/nn/adam.hpp"
#include "gridlang/nn/network.hpp"
#include "gridlang/replay.hpp"

namespace gridlang::agent {

enum class ReplayMode : int { Uniform = 0, Prioritized = 1 };

inline const char* replay_name(ReplayMode m) {
    return m == ReplayMode::Uniform ? "uniform" : "prioritized";
}

inline ReplayMode parse_replay(const std::string& name) {
    if (name == "uniform" || name == "simple") return ReplayMode::Uniform;
    if (name == "prioritized" || name == "per") return ReplayMode::Prioritized;
    throw ConfigError("unknown replay mode: " + name);
}

struct AgentConfig {
    double gamma = 0.99;
    double eps_start = 1.0;
    double eps_end = 0.05;
    uint64_t eps_decay_steps = 100000;
    int updates_per_episode = 0; // 0 = one update per collected step
    size_t batch_size = 32;
    ReplayMode replay = ReplayMode::Prioritized;
    bool double_q = true;
    uint64_t seed = 1;
    nn::AdamConfig optim;
    replay::PERConfig per; // capacity is shared with the uniform buffer
    env::RewardConfig rewards;
    int max_steps_per_subgoal = 30;
    double stop_at_success = 0.0; // early-stop threshold on greedy success; 0 = off

    double epsilon_at(uint64_t env_steps) const {
        if (env_steps >= eps_decay_steps || eps_decay_steps == 0) return eps_end;
        const double t =
            static_cast<double>(env_steps) / static_cast<double>(eps_decay_steps);
        return eps_start + (eps_end - eps_start) * t;
    }
};

// Epsilon-greedy with lowest-index argmax tie-break; eps = 0 consumes no
// randomness so greedy evaluation stays deterministic.
inline env::Action select_action(const nn::QValues& q, double epsilon, Rng& rng) {
    if (epsilon < 0.0 || epsilon > 1.0) throw Error("select_action: epsilon outside [0, 1]");
    if (epsilon > 0.0 && rng.uniform() < epsilon)
        return static_cast<env::Action>(rng.uniform_int(q.size()));
    return static_cast<env::Action>(nn::argmax_lowest(q));
}

struct EpisodeStats {
    bool success = false;
    int steps = 0;
    double shaped_return = 0.0;
    double base_return = 0.0;
};

struct EpochStats {
    int epoch = 0;
    double train_success_rate = 0.0;
    double mean_return = 0.0;
    double mean_steps = 0.0;
    double epsilon = 0.0;
    double wall_time_sec = 0.0;
};

// Greedy (eps = 0) rollout of a parameter set on one instruction.
inline EpisodeStats greedy_rollout(const nn::ParameterSet& params,
                                   const env::GridLayout& layout,
                                   const env::RewardConfig& rewards,
                                   const lang::Instruction& instr,
                                   int max_steps_per_subgoal) {
    const lang::ExecutionPlan plan = lang::resolve_plan(instr);
    env::Environment environment(layout, plan, rewards,
                                 env::default_max_steps(plan.size(), max_steps_per_subgoal));
    auto [state, stack] = environment.reset();
    const std::vector<int> tokens = lang::token_ids(instr);
    const std::vector<double> instr_vec = nn::encode_instruction(params, tokens);

    EpisodeStats stats;
    while (!state.terminal()) {
        const nn::QValues q = nn::forward_with_instr(params, stack.flatten(), instr_vec);
        const auto action = static_cast<env::Action>(nn::argmax_lowest(q));
        auto result = environment.step(action);
        state = result.state;
        stack = result.frames;
        stats.steps += 1;
        stats.shaped_return += result.r_shaped;
        stats.base_return += result.r_base;
    }
    stats.success = state.status == env::Status::Success;
    return stats;
}

// ---------------------------------------------------------------------------
// Trainer
//
// Single-actor loop: one episode per training instruction in a fixed order,
// replay updates after each episode, and a hard target-network copy after
// every full pass over the instructions.

class Trainer {
public:
    Trainer(env::GridLayout layout, nn::NetworkConfig net_cfg, AgentConfig cfg,
            std::vector<lang::Instruction> instructions)
        : layout_(std::move(layout)), cfg_(cfg), rng_(mix_seed(cfg.seed, 0x7124)),
          instructions_(std::move(instructions)) {
        if (instructions_.empty()) throw EmptyInstructionSetError("no training instructions");
        env::validate_layout(layout_);
        cfg_.rewards.gamma = cfg_.gamma; // one gamma for shaping and TD targets
        cfg_.per.validate();

        Rng init_rng(mix_seed(cfg_.seed, 0x1417));
        online_ = nn::ParameterSet::init(net_cfg, init_rng);
        target_ = online_;
        adam_ = nn::Adam(cfg_.optim);
        if (cfg_.replay == ReplayMode::Prioritized) {
            per_.emplace(cfg_.per);
        } else {
            uniform_.emplace(cfg_.per.capacity);
        }
    }

    const nn::ParameterSet& params() const { return online_; }
    const nn::ParameterSet& target() const { return target_; }
    const AgentConfig& config() const { return cfg_; }
    const std::vector<lang::Instruction>& instructions() const { return instructions_; }
    uint64_t env_steps() const { return env_steps_; }
    int epoch() const { return epoch_; }
    const std::vector<int>& sync_epochs() const { return sync_epochs_; }
    size_t replay_size() const { return per_ ? per_->size() : uniform_->size(); }

    EpisodeStats run_episode(const lang::Instruction& instr) {
        const lang::ExecutionPlan plan = lang::resolve_plan(instr);
        env::Environment environment(
            layout_, plan, cfg_.rewards,
            env::default_max_steps(plan.size(), cfg_.max_steps_per_subgoal));
        auto [state, stack] = environment.reset();

        const std::vector<int> tokens = lang::token_ids(instr);
        const std::vector<double> instr_vec = nn::encode_instruction(online_, tokens);

        std::array<Cell, env::kStackSize> agent_hist;
        agent_hist.fill(state.agent);

        EpisodeStats stats;
        while (!state.terminal()) {
            const nn::QValues q =
                nn::forward_with_instr(online_, stack.flatten(), instr_vec);
            const env::Action action =
                select_action(q, cfg_.epsilon_at(env_steps_), rng_);

            replay::Transition t;
            t.frames = compact_stack(agent_hist);
            t.tokens = tokens;
            t.action = static_cast<int>(action);

            auto result = environment.step(action);
            state = result.state;
            stack = result.frames;
            push_hist(agent_hist, state.agent);

            t.reward = result.r_shaped;
            t.next_frames = compact_stack(agent_hist);
            t.done = result.done;
            if (per_) per_->push(std::move(t));
            else uniform_->push(std::move(t));

            env_steps_ += 1;
            stats.steps += 1;
            stats.shaped_return += result.r_shaped;
            stats.base_return += result.r_base;
        }
        stats.success = state.status == env::Status::Success;

        const int updates =
            cfg_.updates_per_episode > 0 ? cfg_.updates_per_episode : stats.steps;
        for (int u = 0; u < updates; ++u) {
            if (replay_size() >= cfg_.batch_size) update_once();
        }
        return stats;
    }

    // One full pass over the training instructions, then a hard target sync.
    EpochStats train_epoch() {
        const auto started = std::chrono::steady_clock::now();
        double sum_return = 0.0;
        double sum_steps = 0.0;
        for (const auto& instr : instructions_) {
            const EpisodeStats ep = run_episode(instr);
            sum_return += ep.shaped_return;
            sum_steps += ep.steps;
        }
        target_ = online_;
        sync_epochs_.push_back(epoch_);
        epoch_ += 1;

        EpochStats stats;
        stats.epoch = epoch_;
        stats.mean_return = sum_return / static_cast<double>(instructions_.size());
        stats.mean_steps = sum_steps / static_cast<double>(instructions_.size());
        stats.epsilon = cfg_.epsilon_at(env_steps_);
        stats.train_success_rate = evaluate_greedy(instructions_);
        stats.wall_time_sec =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                .count();
        return stats;
    }

    double evaluate_greedy(const std::vector<lang::Instruction>& instrs) const {
        if (instrs.empty()) throw EmptyInstructionSetError("evaluate_greedy: no instructions");
        size_t successes = 0;
        for (const auto& instr : instrs) {
            if (greedy_rollout(online_, layout_, cfg_.rewards, instr,
                               cfg_.max_steps_per_subgoal)
                    .success)
                ++successes;
        }
        return static_cast<double>(successes) / static_cast<double>(instrs.size());
    }

    struct Curve {
        std::vector<EpochStats> epochs;
    };

    template <typename Callback>
    Curve train(int budget, Callback&& per_epoch) {
        if (budget < 1) throw Error("train: epoch budget must be >= 1");
        Curve curve;
        for (int e = 0; e < budget; ++e) {
            EpochStats stats = train_epoch();
            curve.epochs.push_back(stats);
            per_epoch(stats, *this);
            if (cfg_.stop_at_success > 0.0 &&
                stats.train_success_rate >= cfg_.stop_at_success)
                break;
        }
        return curve;
    }

    Curve train(int budget) {
        return train(budget, [](const EpochStats&, const Trainer&) {});
    }

private:
    static void push_hist(std::array<Cell, env::kStackSize>& hist, const Cell& agent) {
        for (size_t i = 0; i + 1 < hist.size(); ++i) hist[i] = hist[i + 1];
        hist.back() = agent;
    }

    env::CompactStack compact_stack(const std::array<Cell, env::kStackSize>& hist) const {
        env::CompactStack stack;
        for (size_t i = 0; i < hist.size(); ++i)
            stack[i] = env::compact_observation(layout_, hist[i]);
        return stack;
    }

    void update_once() {
        const size_t batch_size = cfg_.batch_size;
        std::vector<size_t> indices;
        std::vector<double> weights;
        if (per_) {
            auto sample = per_->sample(batch_size, cfg_.per.beta_at(env_steps_), rng_);
            indices = std::move(sample.indices);
            weights = std::move(sample.weights);
        } else {
            indices = uniform_->sample(batch_size, rng_);
            weights.assign(batch_size, 1.0);
        }

        std::vector<nn::BatchSample> batch(batch_size);
        for (size_t i = 0; i < batch_size; ++i) {
            const replay::Transition& t =
                per_ ? per_->at(indices[i]) : uniform_->at(indices[i]);
            nn::BatchSample& s = batch[i];
            env::densify_stack(t.frames, layout_.height, layout_.width, s.frames);
            env::densify_stack(t.next_frames, layout_.height, layout_.width, s.next_frames);
            s.tokens = t.tokens;
            s.action = t.action;
            s.reward = t.reward;
            s.done = t.done;
        }

        nn::ParameterSet grads;
        const nn::TdLossResult td = nn::td_loss(online_, target_, batch, cfg_.gamma,
                                                cfg_.double_q, weights, &grads);
        adam_.step(online_, grads);
        if (per_) per_->update_priorities(indices, td.td_errors);
    }

    env::GridLayout layout_;
    AgentConfig cfg_;
    Rng rng_;
    std::vector<lang::Instruction> instructions_;
    nn::ParameterSet online_;
    nn::ParameterSet target_;
    nn::Adam adam_;
    std::optional<replay::PrioritizedReplay> per_;
    std::optional<replay::UniformReplay> uniform_;
    uint64_t env_steps_ = 0;
    int epoch_ = 0;
    std::vector<int> sync_epochs_;
};

} // namespace gridlang::agent
