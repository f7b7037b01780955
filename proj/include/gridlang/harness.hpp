#pragma once

#include <algorithm>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridlang/agent.hpp"
#include "gridlang/common.hpp"
#include "gridlang/env.hpp"
#include "gridlang/lang.hpp"

namespace gridlang::harness {

// ---------------------------------------------------------------------------
// Success-rate evaluation

struct EvalConfig {
    env::RewardConfig rewards;
    int max_steps_per_subgoal = 30;
};

using Policy = std::function<env::Action(const env::EnvState&, const env::FrameStack&)>;
using PolicyFactory =
    std::function<Policy(const lang::Instruction&, const lang::ExecutionPlan&)>;

// Fraction of instructions whose episode ends in Success under the given
// (deterministic) policy.
inline double evaluate_success_rate(const PolicyFactory& make_policy,
                                    const std::vector<lang::Instruction>& instructions,
                                    const env::GridLayout& layout, const EvalConfig& cfg) {
    if (instructions.empty())
        throw EmptyInstructionSetError("evaluate_success_rate: no instructions");
    size_t successes = 0;
    for (const auto& instr : instructions) {
        const lang::ExecutionPlan plan = lang::resolve_plan(instr);
        env::Environment environment(
            layout, plan, cfg.rewards,
            env::default_max_steps(plan.size(), cfg.max_steps_per_subgoal));
        auto [state, stack] = environment.reset();
        Policy policy = make_policy(instr, plan);
        while (!state.terminal()) {
            auto result = environment.step(policy(state, stack));
            state = result.state;
            stack = result.frames;
        }
        if (state.status == env::Status::Success) ++successes;
    }
    return static_cast<double>(successes) / static_cast<double>(instructions.size());
}

// Greedy policy of a trained Q-network.
inline PolicyFactory greedy_net_policy(const nn::ParameterSet& params) {
    return [&params](const lang::Instruction& instr, const lang::ExecutionPlan&) -> Policy {
        auto instr_vec = std::make_shared<std::vector<double>>(
            nn::encode_instruction(params, lang::token_ids(instr)));
        return [&params, instr_vec](const env::EnvState&, const env::FrameStack& stack) {
            const nn::QValues q =
                nn::forward_with_instr(params, stack.flatten(), *instr_vec);
            return static_cast<env::Action>(nn::argmax_lowest(q));
        };
    };
}

inline double evaluate_success_rate(const nn::ParameterSet& params,
                                    const std::vector<lang::Instruction>& instructions,
                                    const env::GridLayout& layout, const EvalConfig& cfg) {
    return evaluate_success_rate(greedy_net_policy(params), instructions, layout, cfg);
}

// ---------------------------------------------------------------------------
// Scripted shortest-path oracle
//
// Walks BFS shortest paths leg by leg through the resolved plan, treating
// every non-target object cell as blocked so it never trips the
// wrong-object rule. Useful as an end-to-end consistency probe for the
// language, environment, and evaluator.

inline env::Action oracle_action(const env::GridLayout& layout, const env::EnvState& state) {
    if (state.terminal() || state.progress >= static_cast<int>(state.plan.size()))
        return env::Action::Up;
    const Cell target = layout.object(state.plan[static_cast<size_t>(state.progress)]);

    auto blocked = [&](const Cell& c) {
        if (c == target) return false;
        for (const Cell& obj : layout.objects)
            if (c == obj) return true;
        return false;
    };

    // Distance-to-target over passable cells.
    const size_t n_cells = static_cast<size_t>(layout.width * layout.height);
    std::vector<int> dist(n_cells, -1);
    auto at = [&](const Cell& c) -> int& {
        return dist[static_cast<size_t>(c.y * layout.width + c.x)];
    };
    std::vector<Cell> queue{target};
    at(target) = 0;
    for (size_t head = 0; head < queue.size(); ++head) {
        const Cell c = queue[head];
        for (int a = 0; a < env::kNumActions; ++a) {
            const Cell next = env::apply_move(layout, c, static_cast<env::Action>(a));
            if (next == c || blocked(next) || at(next) >= 0) continue;
            at(next) = at(c) + 1;
            queue.push_back(next);
        }
    }

    env::Action best = env::Action::Up;
    int best_dist = -1;
    for (int a = 0; a < env::kNumActions; ++a) {
        const Cell next = env::apply_move(layout, state.agent, static_cast<env::Action>(a));
        if (next == state.agent || blocked(next) || at(next) < 0) continue;
        if (best_dist < 0 || at(next) < best_dist) {
            best_dist = at(next);
            best = static_cast<env::Action>(a);
        }
    }
    return best;
}

inline PolicyFactory oracle_policy(const env::GridLayout& layout) {
    return [&layout](const lang::Instruction&, const lang::ExecutionPlan&) -> Policy {
        return [&layout](const env::EnvState& state, const env::FrameStack&) {
            return oracle_action(layout, state);
        };
    };
}

// ---------------------------------------------------------------------------
// Experiment protocol

struct ExperimentSpec {
    lang::Subset subset = lang::Subset::Comma;
    std::vector<double> proportions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    nn::Fusion fusion = nn::Fusion::Concatenation;
    agent::ReplayMode replay = agent::ReplayMode::Prioritized;
    std::vector<uint64_t> seeds{1};
    int epochs = 50;
    std::string layout_path; // empty = default layout
};

inline ExperimentSpec experiment_from_json(const nlohmann::json& j) {
    ExperimentSpec spec;
    try {
        if (j.contains("subset")) spec.subset = lang::parse_subset(j.at("subset"));
        if (j.contains("proportions"))
            spec.proportions = j.at("proportions").get<std::vector<double>>();
        if (j.contains("fusion")) spec.fusion = nn::parse_fusion(j.at("fusion"));
        if (j.contains("replay")) spec.replay = agent::parse_replay(j.at("replay"));
        if (j.contains("seeds")) spec.seeds = j.at("seeds").get<std::vector<uint64_t>>();
        if (j.contains("epochs")) spec.epochs = j.at("epochs").get<int>();
        if (j.contains("layout")) spec.layout_path = j.at("layout").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaMismatchError(std::string("bad experiment spec: ") + e.what());
    }
    if (spec.proportions.empty() || spec.seeds.empty() || spec.epochs < 1)
        throw ConfigError("experiment spec needs proportions, seeds, and epochs >= 1");
    return spec;
}

struct CellResult {
    lang::Subset subset = lang::Subset::Comma;
    double proportion = 0.0;
    nn::Fusion fusion = nn::Fusion::Concatenation;
    agent::ReplayMode replay = agent::ReplayMode::Prioritized;
    uint64_t seed = 0;
    int epochs = 0;
    double train_success = 0.0;
    std::optional<double> comma_train_success; // non-Comma subsets only
    std::optional<double> test_success;        // biggest proportion only
    std::optional<double> comma_test_success;

    friend bool operator==(const CellResult&, const CellResult&) = default;
};

struct EvalReport {
    std::vector<CellResult> cells;
};

inline nlohmann::ordered_json cell_to_json(const CellResult& c) {
    nlohmann::ordered_json j;
    j["subset"] = lang::subset_name(c.subset);
    j["proportion"] = c.proportion;
    j["fusion"] = nn::fusion_name(c.fusion);
    j["replay"] = agent::replay_name(c.replay);
    j["seed"] = c.seed;
    j["epochs"] = c.epochs;
    j["train_success"] = c.train_success;
    j["comma_train_success"] =
        c.comma_train_success ? nlohmann::ordered_json(*c.comma_train_success) : nullptr;
    j["test_success"] = c.test_success ? nlohmann::ordered_json(*c.test_success) : nullptr;
    j["comma_test_success"] =
        c.comma_test_success ? nlohmann::ordered_json(*c.comma_test_success) : nullptr;
    return j;
}

inline CellResult cell_from_json(const nlohmann::json& j) {
    static const std::vector<std::string> kFields = {
        "subset",        "proportion",          "fusion",
        "replay",        "seed",                "epochs",
        "train_success", "comma_train_success", "test_success",
        "comma_test_success"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(kFields.begin(), kFields.end(), key) == kFields.end())
            throw SchemaMismatchError("unknown result field: " + key);
    }
    for (const auto& field : kFields)
        if (!j.contains(field)) throw SchemaMismatchError("missing result field: " + field);

    CellResult c;
    try {
        c.subset = lang::parse_subset(j.at("subset"));
        c.proportion = j.at("proportion").get<double>();
        c.fusion = nn::parse_fusion(j.at("fusion"));
        c.replay = agent::parse_replay(j.at("replay"));
        c.seed = j.at("seed").get<uint64_t>();
        c.epochs = j.at("epochs").get<int>();
        c.train_success = j.at("train_success").get<double>();
        auto opt = [&](const char* key) -> std::optional<double> {
            if (j.at(key).is_null()) return std::nullopt;
            return j.at(key).get<double>();
        };
        c.comma_train_success = opt("comma_train_success");
        c.test_success = opt("test_success");
        c.comma_test_success = opt("comma_test_success");
    } catch (const nlohmann::json::exception& e) {
        throw SchemaMismatchError(std::string("bad result record: ") + e.what());
    }
    return c;
}

inline void persist_results(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open results file for writing: " + path);
    for (const auto& cell : report.cells) out << cell_to_json(cell).dump() << "\n";
}

inline EvalReport load_results(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open results file: " + path);
    EvalReport report;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw SchemaMismatchError(std::string("bad result line: ") + e.what());
        }
        report.cells.push_back(cell_from_json(j));
    }
    return report;
}

// Comma-only members of an instruction list.
inline std::vector<lang::Instruction> comma_members(
    const std::vector<lang::Instruction>& instructions) {
    std::vector<lang::Instruction> out;
    for (const auto& instr : instructions) {
        const auto subsets = lang::subset_membership(instr);
        if (std::find(subsets.begin(), subsets.end(), lang::Subset::Comma) != subsets.end())
            out.push_back(instr);
    }
    return out;
}

// Run every (proportion x seed) cell of the spec: split, train, evaluate on
// the train split, and evaluate on the held-out 4-6 sub-goal instructions
// for the biggest proportion only. Finished cells are appended to
// `results_path` as they complete, so partial sweeps persist.
inline EvalReport run_experiment(const ExperimentSpec& spec, const env::GridLayout& layout,
                                 nn::NetworkConfig net_cfg, agent::AgentConfig agent_cfg,
                                 const std::string& results_path = "",
                                 std::ostream* progress = nullptr) {
    const double biggest =
        *std::max_element(spec.proportions.begin(), spec.proportions.end());
    net_cfg.fusion = spec.fusion;
    agent_cfg.replay = spec.replay;

    std::ofstream results_out;
    if (!results_path.empty()) {
        results_out.open(results_path, std::ios::app);
        if (!results_out) throw Error("cannot open results file: " + results_path);
    }

    EvalReport report;
    const EvalConfig eval_cfg{agent_cfg.rewards, agent_cfg.max_steps_per_subgoal};
    for (uint64_t seed : spec.seeds) {
        for (double proportion : spec.proportions) {
            lang::SplitSpec split_spec;
            split_spec.proportion = proportion;
            split_spec.seed = seed;
            const lang::Split split = lang::split_train_test(spec.subset, split_spec);

            agent::AgentConfig cell_cfg = agent_cfg;
            cell_cfg.seed =
                mix_seed(seed, 0xCE11 + static_cast<uint64_t>(std::llround(proportion * 10)));
            agent::Trainer trainer(layout, net_cfg, cell_cfg, split.train);
            trainer.train(spec.epochs);

            CellResult cell;
            cell.subset = spec.subset;
            cell.proportion = proportion;
            cell.fusion = spec.fusion;
            cell.replay = spec.replay;
            cell.seed = seed;
            cell.epochs = spec.epochs;
            cell.train_success =
                evaluate_success_rate(trainer.params(), split.train, layout, eval_cfg);

            if (spec.subset != lang::Subset::Comma) {
                const auto comma_train = comma_members(split.train);
                if (!comma_train.empty())
                    cell.comma_train_success =
                        evaluate_success_rate(trainer.params(), comma_train, layout, eval_cfg);
            }
            if (proportion == biggest) {
                cell.test_success =
                    evaluate_success_rate(trainer.params(), split.test, layout, eval_cfg);
                if (spec.subset != lang::Subset::Comma) {
                    const auto comma_test = comma_members(split.test);
                    if (!comma_test.empty())
                        cell.comma_test_success = evaluate_success_rate(
                            trainer.params(), comma_test, layout, eval_cfg);
                }
            }

            if (results_out.is_open()) {
                results_out << cell_to_json(cell).dump() << "\n";
                results_out.flush();
            }
            if (progress != nullptr) {
                *progress << "cell subset=" << lang::subset_name(cell.subset)
                          << " proportion=" << cell.proportion << " seed=" << cell.seed
                          << " train_success=" << cell.train_success << "\n";
            }
            report.cells.push_back(std::move(cell));
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Summary tables

namespace detail {

struct ComboKey {
    nn::Fusion fusion;
    agent::ReplayMode replay;
};

inline const std::vector<std::pair<ComboKey, std::string>>& combo_columns() {
    static const std::vector<std::pair<ComboKey, std::string>> columns = {
        {{nn::Fusion::Concatenation, agent::ReplayMode::Uniform}, "DDQN+Cat"},
        {{nn::Fusion::GatedAttention, agent::ReplayMode::Uniform}, "DDQN+GA"},
        {{nn::Fusion::Concatenation, agent::ReplayMode::Prioritized}, "DDQN+Cat+PER"},
        {{nn::Fusion::GatedAttention, agent::ReplayMode::Prioritized}, "DDQN+GA+PER"},
    };
    return columns;
}

inline std::string format_cell(const std::vector<double>& values, bool parenthesized) {
    if (values.empty()) return "-";
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    std::ostringstream out;
    out << std::fixed << std::setprecision(1);
    if (parenthesized) out << "(" << mean * 100.0 << "%)";
    else out << mean * 100.0 << "%";
    return out.str();
}

inline void render_table(std::ostream& out, const std::string& title,
                         const std::vector<CellResult>& cells, bool testing) {
    const auto& columns = combo_columns();
    static const lang::Subset kSubsets[] = {
        lang::Subset::Comma, lang::Subset::CommaButFirst, lang::Subset::CommaButBefore};

    std::vector<std::vector<std::string>> rows;
    for (lang::Subset subset : kSubsets) {
        std::vector<std::string> main_row{lang::subset_name(subset)};
        std::vector<std::string> comma_row{"  (comma within)"};
        bool any_main = false, any_comma = false;
        for (const auto& [combo, label] : columns) {
            std::vector<double> main_vals, comma_vals;
            for (const CellResult& c : cells) {
                if (c.subset != subset || c.fusion != combo.fusion ||
                    c.replay != combo.replay)
                    continue;
                if (testing) {
                    if (c.test_success) main_vals.push_back(*c.test_success);
                    if (c.comma_test_success) comma_vals.push_back(*c.comma_test_success);
                } else {
                    main_vals.push_back(c.train_success);
                    if (c.comma_train_success)
                        comma_vals.push_back(*c.comma_train_success);
                }
            }
            if (!main_vals.empty()) any_main = true;
            if (!comma_vals.empty()) any_comma = true;
            main_row.push_back(format_cell(main_vals, false));
            comma_row.push_back(format_cell(comma_vals, true));
        }
        if (any_main) rows.push_back(std::move(main_row));
        if (any_comma && subset != lang::Subset::Comma) rows.push_back(std::move(comma_row));
    }

    std::vector<std::string> header{"Language Subset"};
    for (const auto& [combo, label] : columns) header.push_back(label);

    std::vector<size_t> widths(header.size());
    for (size_t i = 0; i < header.size(); ++i) widths[i] = header[i].size();
    for (const auto& row : rows)
        for (size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());

    out << title << "\n";
    auto emit = [&](const std::vector<std::string>& row) {
        for (size_t i = 0; i < row.size(); ++i)
            out << std::left << std::setw(static_cast<int>(widths[i]) + 2) << row[i];
        out << "\n";
    };
    emit(header);
    for (const auto& row : rows) emit(row);
}

} // namespace detail

// Plain-text summary: training success averaged over proportions (and
// seeds), plus held-out success for the biggest-proportion runs.
inline std::string render_summary(const EvalReport& report) {
    std::ostringstream out;
    detail::render_table(out, "Success rates at training instructions (mean over proportions)",
                         report.cells, false);
    out << "\n";
    detail::render_table(out,
                         "Success rates at testing instructions (biggest training proportion)",
                         report.cells, true);
    return out.str();
}

} // namespace gridlang::harness
