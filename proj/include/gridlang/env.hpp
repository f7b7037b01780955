#pragma once

#include <array>
#include <deque>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gridlang/common.hpp"
#include "gridlang/lang.hpp"

namespace gridlang::env {

using lang::ExecutionPlan;
using lang::Referent;

// ---------------------------------------------------------------------------
// Layout

struct GridLayout {
    int width = 10;
    int height = 10;
    Cell agent_start{1, 5};
    std::array<Cell, lang::kNumReferents> objects{Cell{6, 5}, Cell{4, 9}, Cell{3, 0}};

    const Cell& object(Referent r) const { return objects[static_cast<size_t>(r)]; }
    bool in_bounds(const Cell& c) const {
        return c.x >= 0 && c.x < width && c.y >= 0 && c.y < height;
    }
};

inline GridLayout default_layout() { return GridLayout{}; }

inline void validate_layout(const GridLayout& layout) {
    if (layout.width < 2 || layout.height < 2)
        throw InvalidLayoutError("layout must be at least 2x2");
    std::vector<Cell> cells{layout.agent_start};
    for (const Cell& c : layout.objects) cells.push_back(c);
    for (size_t i = 0; i < cells.size(); ++i) {
        if (!layout.in_bounds(cells[i])) throw InvalidLayoutError("cell out of bounds");
        for (size_t j = i + 1; j < cells.size(); ++j)
            if (cells[i] == cells[j]) throw InvalidLayoutError("cells must be distinct");
    }
}

// Seeded random layout: distinct cells for the agent and the three objects.
inline GridLayout random_layout(Rng& rng, int width = 10, int height = 10) {
    GridLayout layout;
    layout.width = width;
    layout.height = height;
    std::vector<Cell> taken;
    auto draw = [&] {
        for (;;) {
            Cell c{static_cast<int>(rng.uniform_int(static_cast<uint64_t>(width))),
                   static_cast<int>(rng.uniform_int(static_cast<uint64_t>(height)))};
            bool clash = false;
            for (const Cell& t : taken)
                if (t == c) clash = true;
            if (!clash) {
                taken.push_back(c);
                return c;
            }
        }
    };
    layout.agent_start = draw();
    for (auto& obj : layout.objects) obj = draw();
    return layout;
}

inline nlohmann::ordered_json layout_to_json(const GridLayout& layout) {
    nlohmann::ordered_json j;
    j["width"] = layout.width;
    j["height"] = layout.height;
    j["agent_start"] = {layout.agent_start.x, layout.agent_start.y};
    nlohmann::ordered_json objs;
    for (int r = 0; r < lang::kNumReferents; ++r) {
        const Cell& c = layout.objects[static_cast<size_t>(r)];
        objs[lang::referent_name(static_cast<Referent>(r))] = {c.x, c.y};
    }
    j["objects"] = std::move(objs);
    return j;
}

inline GridLayout layout_from_json(const nlohmann::json& j) {
    GridLayout layout;
    try {
        layout.width = j.at("width").get<int>();
        layout.height = j.at("height").get<int>();
        layout.agent_start = {j.at("agent_start").at(0).get<int>(),
                              j.at("agent_start").at(1).get<int>()};
        for (int r = 0; r < lang::kNumReferents; ++r) {
            const auto& cell = j.at("objects").at(lang::referent_name(static_cast<Referent>(r)));
            layout.objects[static_cast<size_t>(r)] = {cell.at(0).get<int>(),
                                                      cell.at(1).get<int>()};
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidLayoutError(std::string("bad layout record: ") + e.what());
    }
    validate_layout(layout);
    return layout;
}

inline void save_layout(const GridLayout& layout, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open layout file for writing: " + path);
    out << layout_to_json(layout).dump() << "\n";
}

inline GridLayout load_layout(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open layout file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidLayoutError(std::string("bad layout file: ") + e.what());
    }
    return layout_from_json(j);
}

// ---------------------------------------------------------------------------
// Actions, state, rewards

enum class Action : int { Up = 0, Down = 1, Left = 2, Right = 3 };
constexpr int kNumActions = 4;

inline const char* action_name(Action a) {
    switch (a) {
        case Action::Up: return "up";
        case Action::Down: return "down";
        case Action::Left: return "left";
        case Action::Right: return "right";
    }
    throw Error("action_name: bad action");
}

inline Cell apply_move(const GridLayout& layout, const Cell& from, Action a) {
    Cell to = from;
    switch (a) {
        case Action::Up: to.y += 1; break;
        case Action::Down: to.y -= 1; break;
        case Action::Left: to.x -= 1; break;
        case Action::Right: to.x += 1; break;
    }
    return layout.in_bounds(to) ? to : from; // off-grid moves are no-ops
}

enum class Status : int { Running = 0, Success = 1, Failure = 2, Timeout = 3 };

inline const char* status_name(Status s) {
    switch (s) {
        case Status::Running: return "running";
        case Status::Success: return "success";
        case Status::Failure: return "failure";
        case Status::Timeout: return "timeout";
    }
    throw Error("status_name: bad status");
}

struct EnvState {
    Cell agent;
    ExecutionPlan plan;
    int progress = 0; // index of the current sub-goal
    int steps = 0;
    Status status = Status::Running;

    bool terminal() const { return status != Status::Running; }
};

struct RewardConfig {
    double gamma = 0.99;
    double r_correct = 1.0;
    double r_wrong = -1.0;
    double r_step = 0.0;
    bool shaping = true;
};

// ---------------------------------------------------------------------------
// Distances and shaping

// Shortest 4-connected path length; the grid has no obstacles, so this
// equals Manhattan distance, but the search keeps the contract honest for
// any future layout variant.
inline int bfs_distance(const GridLayout& layout, const Cell& from, const Cell& to) {
    if (!layout.in_bounds(from) || !layout.in_bounds(to))
        throw InvalidLayoutError("bfs_distance: cell out of bounds");
    if (from == to) return 0;
    std::vector<int> dist(static_cast<size_t>(layout.width * layout.height), -1);
    auto at = [&](const Cell& c) -> int& {
        return dist[static_cast<size_t>(c.y * layout.width + c.x)];
    };
    std::deque<Cell> queue{from};
    at(from) = 0;
    while (!queue.empty()) {
        Cell c = queue.front();
        queue.pop_front();
        for (int a = 0; a < kNumActions; ++a) {
            Cell n = apply_move(layout, c, static_cast<Action>(a));
            if (n == c || at(n) >= 0) continue;
            at(n) = at(c) + 1;
            if (n == to) return at(n);
            queue.push_back(n);
        }
    }
    throw InvalidLayoutError("bfs_distance: target unreachable");
}

// Phi(s) = -distance(agent, current sub-goal object); 0 for any terminal
// state so that episodic shaping preserves the optimal policy set.
inline double potential(const GridLayout& layout, const EnvState& state) {
    if (state.terminal() || state.progress >= static_cast<int>(state.plan.size())) return 0.0;
    const Cell& goal = layout.object(state.plan[static_cast<size_t>(state.progress)]);
    return -static_cast<double>(bfs_distance(layout, state.agent, goal));
}

inline double shaped_reward(double r_base, double phi_s, double phi_next, double gamma) {
    return r_base + gamma * phi_next - phi_s;
}

// ---------------------------------------------------------------------------
// Observations

// One-hot occupancy planes, channel order {agent, red, blue, green},
// row-major within a plane.
struct Observation {
    int height = 0;
    int width = 0;
    std::vector<double> data; // (4, height, width)

    double& at(int channel, int y, int x) {
        return data[static_cast<size_t>((channel * height + y) * width + x)];
    }
    double at(int channel, int y, int x) const {
        return data[static_cast<size_t>((channel * height + y) * width + x)];
    }
};

constexpr int kObsChannels = 1 + lang::kNumReferents;
constexpr int kStackSize = 4;

inline Observation encode_observation(const GridLayout& layout, const EnvState& state) {
    Observation obs;
    obs.height = layout.height;
    obs.width = layout.width;
    obs.data.assign(static_cast<size_t>(kObsChannels * layout.height * layout.width), 0.0);
    obs.at(0, state.agent.y, state.agent.x) = 1.0;
    for (int r = 0; r < lang::kNumReferents; ++r) {
        const Cell& c = layout.objects[static_cast<size_t>(r)];
        obs.at(1 + r, c.y, c.x) = 1.0;
    }
    return obs;
}

// Compact per-frame snapshot used by the replay buffer; planes are
// reconstructed on demand.
struct CompactObs {
    std::array<Cell, kObsChannels> cells{}; // agent, red, blue, green
};

using CompactStack = std::array<CompactObs, kStackSize>;

// Last 4 observations, newest last; flattening concatenates the slots'
// channels oldest first.
struct FrameStack {
    int height = 0;
    int width = 0;
    std::array<Observation, kStackSize> slots;

    void fill(const Observation& obs) {
        height = obs.height;
        width = obs.width;
        for (auto& slot : slots) slot = obs;
    }

    void push(const Observation& obs) {
        for (int i = 0; i + 1 < kStackSize; ++i) slots[static_cast<size_t>(i)] =
            std::move(slots[static_cast<size_t>(i + 1)]);
        slots[kStackSize - 1] = obs;
    }

    std::vector<double> flatten() const {
        std::vector<double> flat;
        flat.reserve(static_cast<size_t>(kStackSize * kObsChannels * height * width));
        for (const auto& slot : slots)
            flat.insert(flat.end(), slot.data.begin(), slot.data.end());
        return flat;
    }
};

inline FrameStack push_frame(FrameStack stack, const Observation& obs) {
    stack.push(obs);
    return stack;
}

inline CompactObs compact_observation(const GridLayout& layout, const Cell& agent) {
    CompactObs c;
    c.cells[0] = agent;
    for (int r = 0; r < lang::kNumReferents; ++r)
        c.cells[static_cast<size_t>(1 + r)] = layout.objects[static_cast<size_t>(r)];
    return c;
}

// Densify a compact stack into the (16, H, W) network input.
inline void densify_stack(const CompactStack& stack, int height, int width,
                          std::vector<double>& out) {
    out.assign(static_cast<size_t>(kStackSize * kObsChannels * height * width), 0.0);
    size_t plane = 0;
    for (const CompactObs& obs : stack) {
        for (const Cell& c : obs.cells) {
            out[(plane * static_cast<size_t>(height) + static_cast<size_t>(c.y)) *
                    static_cast<size_t>(width) +
                static_cast<size_t>(c.x)] = 1.0;
            ++plane;
        }
    }
}

// ---------------------------------------------------------------------------
// Transition dynamics

struct StepOutcome {
    EnvState next;
    double r_base = 0.0;
    double r_shaped = 0.0;
    bool done = false;
};

// Pure single-step dynamics. Entering the current sub-goal's cell advances
// the plan; entering any other object's cell fails the episode; reaching
// max_steps times out. Collision triggers only on an actual cell change.
inline StepOutcome transition(const GridLayout& layout, const RewardConfig& rewards,
                              int max_steps, const EnvState& state, Action action) {
    if (state.terminal()) throw SteppedAfterDoneError("step on terminated episode");

    StepOutcome out;
    out.next = state;
    out.next.agent = apply_move(layout, state.agent, action);
    out.next.steps = state.steps + 1;
    out.r_base = rewards.r_step;

    if (out.next.agent != state.agent) {
        const Cell& goal = layout.object(state.plan[static_cast<size_t>(state.progress)]);
        if (out.next.agent == goal) {
            out.next.progress += 1;
            out.r_base += rewards.r_correct;
            if (out.next.progress == static_cast<int>(state.plan.size()))
                out.next.status = Status::Success;
        } else {
            for (const Cell& obj : layout.objects) {
                if (out.next.agent == obj) {
                    out.next.status = Status::Failure;
                    out.r_base += rewards.r_wrong;
                    break;
                }
            }
        }
    }
    if (out.next.status == Status::Running && out.next.steps >= max_steps)
        out.next.status = Status::Timeout;

    out.done = out.next.terminal();
    const double phi_s = potential(layout, state);
    const double phi_next = potential(layout, out.next); // 0 when terminal
    out.r_shaped = shaped_reward(out.r_base, phi_s, phi_next, rewards.gamma);
    return out;
}

// ---------------------------------------------------------------------------
// Episode wrapper

class Environment {
public:
    Environment(GridLayout layout, ExecutionPlan plan, RewardConfig rewards, int max_steps)
        : layout_(std::move(layout)), plan_(std::move(plan)), rewards_(rewards),
          max_steps_(max_steps) {
        validate_layout(layout_);
        if (plan_.empty()) throw InvalidLayoutError("execution plan is empty");
        if (layout_.object(plan_.front()) == layout_.agent_start)
            throw InvalidLayoutError("agent starts on the first sub-goal object");
        if (max_steps_ < 1) throw InvalidLayoutError("max_steps must be positive");
    }

    std::pair<EnvState, FrameStack> reset() {
        state_ = EnvState{layout_.agent_start, plan_, 0, 0, Status::Running};
        stack_.fill(encode_observation(layout_, state_));
        return {state_, stack_};
    }

    struct StepResult {
        EnvState state;
        FrameStack frames;
        double reward = 0.0; // shaped when shaping is enabled
        bool done = false;
        double r_base = 0.0;
        double r_shaped = 0.0;
    };

    StepResult step(Action action) {
        StepOutcome out = transition(layout_, rewards_, max_steps_, state_, action);
        state_ = out.next;
        stack_.push(encode_observation(layout_, state_));
        return {state_, stack_, rewards_.shaping ? out.r_shaped : out.r_base,
                out.done, out.r_base, out.r_shaped};
    }

    const EnvState& state() const { return state_; }
    const FrameStack& frames() const { return stack_; }
    const GridLayout& layout() const { return layout_; }
    const ExecutionPlan& plan() const { return plan_; }
    const RewardConfig& rewards() const { return rewards_; }
    int max_steps() const { return max_steps_; }

private:
    GridLayout layout_;
    ExecutionPlan plan_;
    RewardConfig rewards_;
    int max_steps_;
    EnvState state_;
    FrameStack stack_;
};

inline int default_max_steps(size_t plan_len, int per_subgoal = 30) {
    return per_subgoal * static_cast<int>(plan_len);
}

// ---------------------------------------------------------------------------
// Rendering

// 10 rows of 10 glyphs, highest y first; the agent occludes objects.
inline std::string render_ascii(const GridLayout& layout, const EnvState& state) {
    static const char* kObjectGlyphs[lang::kNumReferents] = {"R", "B", "G"};
    std::string out;
    for (int y = layout.height - 1; y >= 0; --y) {
        for (int x = 0; x < layout.width; ++x) {
            const Cell here{x, y};
            const char* glyph = "·";
            for (int r = 0; r < lang::kNumReferents; ++r)
                if (layout.objects[static_cast<size_t>(r)] == here)
                    glyph = kObjectGlyphs[r];
            if (state.agent == here) glyph = "A";
            out += glyph;
        }
        out += '\n';
    }
    return out;
}

// Episode trace record, one per step.
inline nlohmann::ordered_json trace_record(int step, Action action, const EnvState& state,
                                           double r_base, double r_shaped) {
    nlohmann::ordered_json j;
    j["step"] = step;
    j["action"] = action_name(action);
    j["agent"] = {state.agent.x, state.agent.y};
    j["progress"] = state.progress;
    j["r_base"] = r_base;
    j["r_shaped"] = r_shaped;
    j["status"] = status_name(state.status);
    return j;
}

} // namespace gridlang::env
