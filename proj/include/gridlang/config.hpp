#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gridlang/agent.hpp"
#include "gridlang/env.hpp"
#include "gridlang/harness.hpp"
#include "gridlang/lang.hpp"
#include "gridlang/nn/network.hpp"

namespace gridlang::config {

// Merged view of every tunable in the workbench. Serialized into each run
// directory as flat dotted keys so any result can be re-derived.
// Precedence: built-in defaults < config file < command-line overrides.

struct RunConfig {
    uint64_t seed = 1;

    lang::Subset subset = lang::Subset::Comma;
    double proportion = 0.9;
    int train_max_subgoals = 3;
    int total_max_subgoals = 6;

    std::string layout_path; // empty = the built-in default layout
    nn::NetworkConfig net;
    agent::AgentConfig agent;
    int epochs = 50;
    int checkpoint_every = 25; // epochs; 0 disables periodic checkpoints

    std::vector<double> experiment_proportions{0.1, 0.2, 0.3, 0.4, 0.5,
                                               0.6, 0.7, 0.8, 0.9};
    std::vector<uint64_t> experiment_seeds{1};

    env::GridLayout resolve_layout() const {
        return layout_path.empty() ? env::default_layout() : env::load_layout(layout_path);
    }

    // The master seed drives every stochastic stream.
    agent::AgentConfig agent_for_run() const {
        agent::AgentConfig out = agent;
        out.seed = seed;
        out.rewards.gamma = out.gamma;
        return out;
    }
};

namespace detail {

inline std::string bool_str(bool b) { return b ? "true" : "false"; }

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("expected a boolean, got: " + v);
}

template <typename T>
std::string join_list(const std::vector<T>& values) {
    std::ostringstream out;
    for (size_t i = 0; i < values.size(); ++i) {
        if (i) out << ",";
        out << values[i];
    }
    return out.str();
}

inline std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(value);
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

} // namespace detail

inline std::map<std::string, std::string> to_keys(const RunConfig& c) {
    std::map<std::string, std::string> kv;
    auto put = [&kv](const std::string& key, const auto& value) {
        std::ostringstream out;
        out << value;
        kv[key] = out.str();
    };

    put("run.seed", c.seed);
    put("lang.subset", lang::subset_name(c.subset));
    put("lang.proportion", c.proportion);
    put("lang.train_max_subgoals", c.train_max_subgoals);
    put("lang.total_max_subgoals", c.total_max_subgoals);

    put("env.layout", c.layout_path.empty() ? "default" : c.layout_path);
    put("env.max_steps_per_subgoal", c.agent.max_steps_per_subgoal);
    put("env.reward_correct", c.agent.rewards.r_correct);
    put("env.reward_wrong", c.agent.rewards.r_wrong);
    put("env.reward_step", c.agent.rewards.r_step);
    put("env.shaping", detail::bool_str(c.agent.rewards.shaping));

    put("net.fusion", nn::fusion_name(c.net.fusion));
    put("net.in_channels", c.net.in_channels);
    put("net.grid_h", c.net.grid_h);
    put("net.grid_w", c.net.grid_w);
    put("net.conv1_filters", c.net.conv1_filters);
    put("net.conv1_kernel", c.net.conv1_kernel);
    put("net.conv1_stride", c.net.conv1_stride);
    put("net.conv2_filters", c.net.conv2_filters);
    put("net.conv2_kernel", c.net.conv2_kernel);
    put("net.conv2_stride", c.net.conv2_stride);
    put("net.vocab_size", c.net.vocab_size);
    put("net.embed_dim", c.net.embed_dim);
    put("net.instr_dim", c.net.instr_dim);
    put("net.trunk_hidden", c.net.trunk_hidden);
    put("net.n_actions", c.net.n_actions);

    put("agent.gamma", c.agent.gamma);
    put("agent.eps_start", c.agent.eps_start);
    put("agent.eps_end", c.agent.eps_end);
    put("agent.eps_decay_steps", c.agent.eps_decay_steps);
    put("agent.updates_per_episode", c.agent.updates_per_episode);
    put("agent.batch_size", c.agent.batch_size);
    put("agent.replay", agent::replay_name(c.agent.replay));
    put("agent.double_q", detail::bool_str(c.agent.double_q));
    put("agent.lr", c.agent.optim.lr);
    put("agent.adam_beta1", c.agent.optim.beta1);
    put("agent.adam_beta2", c.agent.optim.beta2);
    put("agent.adam_eps", c.agent.optim.eps);
    put("agent.stop_at_success", c.agent.stop_at_success);
    put("agent.epochs", c.epochs);
    put("agent.checkpoint_every", c.checkpoint_every);

    put("replay.capacity", c.agent.per.capacity);
    put("replay.alpha", c.agent.per.alpha);
    put("replay.beta_start", c.agent.per.beta_start);
    put("replay.beta_end", c.agent.per.beta_end);
    put("replay.beta_anneal_steps", c.agent.per.beta_anneal_steps);
    put("replay.epsilon_priority", c.agent.per.epsilon_priority);

    kv["experiment.proportions"] = detail::join_list(c.experiment_proportions);
    kv["experiment.seeds"] = detail::join_list(c.experiment_seeds);
    return kv;
}

inline void apply_key(RunConfig& c, const std::string& key, const std::string& value) {
    auto as_double = [&] {
        try {
            return std::stod(value);
        } catch (...) {
            throw ConfigError("bad numeric value for " + key + ": " + value);
        }
    };
    auto as_u64 = [&] {
        try {
            return static_cast<uint64_t>(std::stoull(value));
        } catch (...) {
            throw ConfigError("bad integer value for " + key + ": " + value);
        }
    };
    auto as_int = [&] { return static_cast<int>(as_u64()); };
    auto as_size = [&] { return static_cast<size_t>(as_u64()); };

    if (key == "run.seed") c.seed = as_u64();
    else if (key == "lang.subset") c.subset = lang::parse_subset(value);
    else if (key == "lang.proportion") c.proportion = as_double();
    else if (key == "lang.train_max_subgoals") c.train_max_subgoals = as_int();
    else if (key == "lang.total_max_subgoals") c.total_max_subgoals = as_int();
    else if (key == "env.layout") c.layout_path = value == "default" ? "" : value;
    else if (key == "env.max_steps_per_subgoal") c.agent.max_steps_per_subgoal = as_int();
    else if (key == "env.reward_correct") c.agent.rewards.r_correct = as_double();
    else if (key == "env.reward_wrong") c.agent.rewards.r_wrong = as_double();
    else if (key == "env.reward_step") c.agent.rewards.r_step = as_double();
    else if (key == "env.shaping") c.agent.rewards.shaping = detail::parse_bool(value);
    else if (key == "net.fusion") c.net.fusion = nn::parse_fusion(value);
    else if (key == "net.in_channels") c.net.in_channels = as_size();
    else if (key == "net.grid_h") c.net.grid_h = as_size();
    else if (key == "net.grid_w") c.net.grid_w = as_size();
    else if (key == "net.conv1_filters") c.net.conv1_filters = as_size();
    else if (key == "net.conv1_kernel") c.net.conv1_kernel = as_size();
    else if (key == "net.conv1_stride") c.net.conv1_stride = as_size();
    else if (key == "net.conv2_filters") c.net.conv2_filters = as_size();
    else if (key == "net.conv2_kernel") c.net.conv2_kernel = as_size();
    else if (key == "net.conv2_stride") c.net.conv2_stride = as_size();
    else if (key == "net.vocab_size") c.net.vocab_size = as_size();
    else if (key == "net.embed_dim") c.net.embed_dim = as_size();
    else if (key == "net.instr_dim") c.net.instr_dim = as_size();
    else if (key == "net.trunk_hidden") c.net.trunk_hidden = as_size();
    else if (key == "net.n_actions") c.net.n_actions = as_size();
    else if (key == "agent.gamma") c.agent.gamma = as_double();
    else if (key == "agent.eps_start") c.agent.eps_start = as_double();
    else if (key == "agent.eps_end") c.agent.eps_end = as_double();
    else if (key == "agent.eps_decay_steps") c.agent.eps_decay_steps = as_u64();
    else if (key == "agent.updates_per_episode") c.agent.updates_per_episode = as_int();
    else if (key == "agent.batch_size") c.agent.batch_size = as_size();
    else if (key == "agent.replay") c.agent.replay = agent::parse_replay(value);
    else if (key == "agent.double_q") c.agent.double_q = detail::parse_bool(value);
    else if (key == "agent.lr") c.agent.optim.lr = as_double();
    else if (key == "agent.adam_beta1") c.agent.optim.beta1 = as_double();
    else if (key == "agent.adam_beta2") c.agent.optim.beta2 = as_double();
    else if (key == "agent.adam_eps") c.agent.optim.eps = as_double();
    else if (key == "agent.stop_at_success") c.agent.stop_at_success = as_double();
    else if (key == "agent.epochs") c.epochs = as_int();
    else if (key == "agent.checkpoint_every") c.checkpoint_every = as_int();
    else if (key == "replay.capacity") c.agent.per.capacity = as_size();
    else if (key == "replay.alpha") c.agent.per.alpha = as_double();
    else if (key == "replay.beta_start") c.agent.per.beta_start = as_double();
    else if (key == "replay.beta_end") c.agent.per.beta_end = as_double();
    else if (key == "replay.beta_anneal_steps") c.agent.per.beta_anneal_steps = as_u64();
    else if (key == "replay.epsilon_priority") c.agent.per.epsilon_priority = as_double();
    else if (key == "experiment.proportions") {
        c.experiment_proportions.clear();
        for (const auto& item : detail::split_list(value))
            c.experiment_proportions.push_back(std::stod(item));
    } else if (key == "experiment.seeds") {
        c.experiment_seeds.clear();
        for (const auto& item : detail::split_list(value))
            c.experiment_seeds.push_back(std::stoull(item));
    } else {
        throw ConfigError("unknown config key: " + key);
    }
}

inline std::string serialize(const RunConfig& c) {
    std::ostringstream out;
    for (const auto& [key, value] : to_keys(c)) out << key << " = " << value << "\n";
    return out.str();
}

inline void apply_override(RunConfig& c, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must look like key=value: " + assignment);
    auto trim = [](std::string s) {
        const auto first = s.find_first_not_of(" \t");
        const auto last = s.find_last_not_of(" \t");
        return first == std::string::npos ? std::string{} : s.substr(first, last - first + 1);
    };
    apply_key(c, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

inline RunConfig load_file(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        bool blank = true;
        for (char ch : line)
            if (!std::isspace(static_cast<unsigned char>(ch))) blank = false;
        if (blank) continue;
        try {
            apply_override(base, line);
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return base;
}

inline void save_file(const RunConfig& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write config file: " + path);
    out << serialize(c);
}

} // namespace gridlang::config
