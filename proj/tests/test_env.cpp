#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "gridlang/env.hpp"
#include "oracles.hpp"

using namespace gridlang;
using env::Action;
using env::Environment;
using env::GridLayout;
using env::Status;
using lang::Referent;

namespace {

const auto R = Referent::Red;
const auto B = Referent::Blue;
const auto G = Referent::Green;

GridLayout small_layout() {
    GridLayout layout;
    layout.width = 5;
    layout.height = 5;
    layout.agent_start = {2, 0};
    layout.objects = {Cell{0, 0}, Cell{4, 4}, Cell{2, 4}}; // red, blue, green
    return layout;
}

env::RewardConfig rewards(double gamma = 0.99, bool shaping = true) {
    env::RewardConfig cfg;
    cfg.gamma = gamma;
    cfg.shaping = shaping;
    return cfg;
}

// Random plan without consecutive repeats.
lang::ExecutionPlan random_plan(Rng& rng, size_t max_len = 4) {
    const size_t len = 1 + rng.uniform_int(max_len);
    lang::ExecutionPlan plan;
    while (plan.size() < len) {
        const auto r = static_cast<Referent>(rng.uniform_int(3));
        if (!plan.empty() && plan.back() == r) continue;
        plan.push_back(r);
    }
    return plan;
}

} // namespace

// ---------------------------------------------------------------------------
// Layout

TEST(Layout, DefaultMatchesTheReferenceFigure) {
    const GridLayout layout = env::default_layout();
    EXPECT_EQ(layout.width, 10);
    EXPECT_EQ(layout.height, 10);
    EXPECT_EQ(layout.agent_start, (Cell{1, 5}));
    EXPECT_EQ(layout.object(R), (Cell{6, 5}));
    EXPECT_EQ(layout.object(B), (Cell{4, 9}));
    EXPECT_EQ(layout.object(G), (Cell{3, 0}));
    EXPECT_NO_THROW(env::validate_layout(layout));
}

TEST(Layout, ValidationRejectsClashesAndOutOfBounds) {
    GridLayout bad = env::default_layout();
    bad.agent_start = bad.object(R);
    EXPECT_THROW(env::validate_layout(bad), InvalidLayoutError);
    bad = env::default_layout();
    bad.objects[0] = {12, 3};
    EXPECT_THROW(env::validate_layout(bad), InvalidLayoutError);
}

TEST(Layout, FileRoundTrip) {
    const std::string path = ::testing::TempDir() + "layout_roundtrip.json";
    const GridLayout layout = small_layout();
    env::save_layout(layout, path);
    const GridLayout loaded = env::load_layout(path);
    EXPECT_EQ(loaded.width, layout.width);
    EXPECT_EQ(loaded.agent_start, layout.agent_start);
    EXPECT_EQ(loaded.objects, layout.objects);
    std::remove(path.c_str());
}

TEST(Layout, RandomLayoutIsValidAndSeeded) {
    Rng a(42), b(42);
    const GridLayout la = env::random_layout(a);
    EXPECT_NO_THROW(env::validate_layout(la));
    EXPECT_EQ(env::random_layout(b).agent_start, la.agent_start);
}

// ---------------------------------------------------------------------------
// bfs_distance / potential / shaped_reward

TEST(Distances, MatchesManhattanOnTheOpenGrid) {
    const GridLayout layout = env::default_layout();
    EXPECT_EQ(env::bfs_distance(layout, {1, 5}, {6, 5}), 5);
    EXPECT_EQ(env::bfs_distance(layout, {3, 3}, {3, 3}), 0);
    EXPECT_EQ(env::bfs_distance(layout, {3, 0}, {4, 9}), 10);

    Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        const Cell a{static_cast<int>(rng.uniform_int(10)),
                     static_cast<int>(rng.uniform_int(10))};
        const Cell b{static_cast<int>(rng.uniform_int(10)),
                     static_cast<int>(rng.uniform_int(10))};
        EXPECT_EQ(env::bfs_distance(layout, a, b), manhattan(a, b));
    }
}

TEST(Potential, AdjacentTerminalAndFigureStart) {
    const GridLayout layout = env::default_layout();
    env::EnvState state{{5, 5}, {R}, 0, 0, Status::Running};
    EXPECT_DOUBLE_EQ(env::potential(layout, state), -1.0);

    state.agent = layout.agent_start;
    EXPECT_DOUBLE_EQ(env::potential(layout, state), -5.0);

    state.status = Status::Success;
    EXPECT_DOUBLE_EQ(env::potential(layout, state), 0.0);
    state.status = Status::Timeout;
    EXPECT_DOUBLE_EQ(env::potential(layout, state), 0.0);
}

TEST(ShapedReward, FormulaAndGammaOneIdentity) {
    EXPECT_NEAR(env::shaped_reward(0.0, -3.0, -2.0, 0.99), 1.02, 1e-12);
    EXPECT_DOUBLE_EQ(env::shaped_reward(0.0, -7.25, -7.25, 1.0), 0.0);
}

// ---------------------------------------------------------------------------
// reset

TEST(Reset, FigureLayoutPlanes) {
    Environment environment(env::default_layout(), {R}, rewards(), 30);
    auto [state, stack] = environment.reset();
    EXPECT_EQ(state.agent, (Cell{1, 5}));
    EXPECT_EQ(state.progress, 0);
    EXPECT_EQ(state.steps, 0);
    EXPECT_EQ(state.status, Status::Running);

    const env::Observation& obs = stack.slots[0];
    EXPECT_DOUBLE_EQ(obs.at(0, 5, 1), 1.0);  // agent plane
    EXPECT_DOUBLE_EQ(obs.at(1, 5, 6), 1.0);  // red plane
    EXPECT_DOUBLE_EQ(obs.at(2, 9, 4), 1.0);  // blue plane
    EXPECT_DOUBLE_EQ(obs.at(3, 0, 3), 1.0);  // green plane
    for (int c = 0; c < env::kObsChannels; ++c) {
        double sum = 0.0;
        for (int y = 0; y < 10; ++y)
            for (int x = 0; x < 10; ++x) sum += obs.at(c, y, x);
        EXPECT_DOUBLE_EQ(sum, 1.0);
    }
}

TEST(Reset, StackSlotsIdenticalAndDeterministic) {
    Environment environment(env::default_layout(), {R, B}, rewards(), 60);
    auto [state1, stack1] = environment.reset();
    for (int i = 1; i < env::kStackSize; ++i)
        EXPECT_EQ(stack1.slots[static_cast<size_t>(i)].data, stack1.slots[0].data);

    auto [state2, stack2] = environment.reset();
    EXPECT_EQ(state1.agent, state2.agent);
    EXPECT_EQ(stack1.flatten(), stack2.flatten());
}

TEST(Reset, RejectsBadSetups) {
    EXPECT_THROW(Environment(env::default_layout(), {}, rewards(), 30), InvalidLayoutError);
    GridLayout layout = env::default_layout();
    layout.agent_start = layout.object(R);
    EXPECT_THROW(Environment(layout, {R}, rewards(), 30), InvalidLayoutError);
}

// ---------------------------------------------------------------------------
// step

TEST(Step, SuccessOnLastSubgoal) {
    Environment environment(env::default_layout(), {R}, rewards(0.99, false), 300);
    environment.reset();
    for (int i = 0; i < 4; ++i) environment.step(Action::Right);
    auto result = environment.step(Action::Right); // onto (6,5)
    EXPECT_TRUE(result.done);
    EXPECT_EQ(result.state.status, Status::Success);
    EXPECT_EQ(result.state.progress, 1);
    EXPECT_DOUBLE_EQ(result.r_base, 1.0);
    EXPECT_DOUBLE_EQ(result.reward, 1.0); // shaping off: base reward reported
}

TEST(Step, WrongObjectFails) {
    Environment environment(env::default_layout(), {B}, rewards(), 300);
    environment.reset();
    for (int i = 0; i < 4; ++i) environment.step(Action::Right);
    auto result = environment.step(Action::Right); // red at (6,5) is not the goal
    EXPECT_TRUE(result.done);
    EXPECT_EQ(result.state.status, Status::Failure);
    EXPECT_DOUBLE_EQ(result.r_base, -1.0);
}

TEST(Step, OffGridMoveIsNoOp) {
    Environment environment(env::default_layout(), {R}, rewards(), 300);
    environment.reset();
    auto result = environment.step(Action::Left); // x=1 -> x=0
    EXPECT_EQ(result.state.agent, (Cell{0, 5}));
    result = environment.step(Action::Left); // blocked by the boundary
    EXPECT_EQ(result.state.agent, (Cell{0, 5}));
    EXPECT_EQ(result.state.steps, 2);
    EXPECT_EQ(result.state.status, Status::Running);
}

TEST(Step, TimeoutAtMaxSteps) {
    Environment environment(env::default_layout(), {R}, rewards(), 3);
    environment.reset();
    environment.step(Action::Up);
    environment.step(Action::Down);
    auto result = environment.step(Action::Up);
    EXPECT_TRUE(result.done);
    EXPECT_EQ(result.state.status, Status::Timeout);
    EXPECT_THROW(environment.step(Action::Up), SteppedAfterDoneError);
}

TEST(Step, StayingOnAVisitedObjectDoesNotFail) {
    Environment environment(small_layout(), {R, B}, rewards(), 300);
    environment.reset();
    environment.step(Action::Left);
    auto result = environment.step(Action::Left); // onto red at (0,0)
    EXPECT_EQ(result.state.progress, 1);
    EXPECT_EQ(result.state.status, Status::Running);

    result = environment.step(Action::Left); // off-grid no-op while on red
    EXPECT_EQ(result.state.status, Status::Running);
    result = environment.step(Action::Down); // also a no-op at y=0
    EXPECT_EQ(result.state.status, Status::Running);
    EXPECT_EQ(result.state.agent, (Cell{0, 0}));
}

TEST(Step, ReenteringAVisitedObjectFails) {
    Environment environment(small_layout(), {R, B}, rewards(), 300);
    environment.reset();
    environment.step(Action::Left);
    environment.step(Action::Left); // red visited
    environment.step(Action::Up);   // step off
    auto result = environment.step(Action::Down); // re-enter red: now a wrong object
    EXPECT_EQ(result.state.status, Status::Failure);
}

TEST(Step, DeterministicTrajectories) {
    const std::vector<Action> actions = {Action::Right, Action::Up, Action::Right,
                                         Action::Down, Action::Right, Action::Right,
                                         Action::Right};
    auto run = [&] {
        Environment environment(env::default_layout(), {R, G}, rewards(), 300);
        environment.reset();
        std::vector<double> rs;
        for (Action a : actions) {
            auto result = environment.step(a);
            rs.push_back(result.reward);
            if (result.done) break;
        }
        return std::make_pair(rs, environment.state().status);
    };
    const auto a = run();
    const auto b = run();
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(a.second, b.second);
}

TEST(Step, EpisodeEndsInExactlyOneTerminalStatus) {
    Rng rng(123);
    for (int episode = 0; episode < 300; ++episode) {
        const auto plan = random_plan(rng);
        Environment environment(env::default_layout(), plan, rewards(),
                                env::default_max_steps(plan.size()));
        auto [state, stack] = environment.reset();
        int prev_progress = 0;
        while (!state.terminal()) {
            auto result = environment.step(static_cast<Action>(rng.uniform_int(4)));
            state = result.state;
            EXPECT_GE(state.progress, prev_progress); // monotone progress
            prev_progress = state.progress;
        }
        EXPECT_TRUE(state.status == Status::Success || state.status == Status::Failure ||
                    state.status == Status::Timeout);
        if (state.status == Status::Failure) {
            // failure never lands on the current sub-goal's cell
            EXPECT_NE(state.agent, environment.layout().object(
                                       plan[static_cast<size_t>(state.progress)]));
        }
        if (state.status == Status::Success)
            EXPECT_EQ(state.progress, static_cast<int>(plan.size()));
    }
}

// ---------------------------------------------------------------------------
// Shaping properties

TEST(Shaping, TelescopingWithGammaOne) {
    Rng rng(777);
    for (int episode = 0; episode < 1000; ++episode) {
        const auto plan = random_plan(rng);
        Environment environment(env::default_layout(), plan, rewards(1.0, true),
                                env::default_max_steps(plan.size()));
        auto [state, stack] = environment.reset();
        const double phi0 = env::potential(environment.layout(), state);
        double shaped_sum = 0.0, base_sum = 0.0;
        while (!state.terminal()) {
            auto result = environment.step(static_cast<Action>(rng.uniform_int(4)));
            state = result.state;
            shaped_sum += result.r_shaped;
            base_sum += result.r_base;
        }
        EXPECT_NEAR(shaped_sum - base_sum, -phi0, 1e-9);
    }
}

TEST(Shaping, PolicyInvarianceUnderValueIteration) {
    const GridLayout layout = small_layout();
    const env::RewardConfig cfg = rewards(0.9, true);

    for (const lang::ExecutionPlan& plan :
         {lang::ExecutionPlan{R}, lang::ExecutionPlan{R, B}}) {
        const auto shaped = oracles::value_iteration(layout, plan, cfg, true);
        const auto base = oracles::value_iteration(layout, plan, cfg, false);
        for (int progress = 0; progress < static_cast<int>(plan.size()); ++progress) {
            for (int y = 0; y < layout.height; ++y) {
                for (int x = 0; x < layout.width; ++x) {
                    const size_t si = shaped.index(x, y, progress);
                    EXPECT_EQ(oracles::argmax_set(shaped.q[si]),
                              oracles::argmax_set(base.q[si]))
                        << "x=" << x << " y=" << y << " progress=" << progress;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Observations and frame stack

TEST(FrameStack, RingSemantics) {
    const GridLayout layout = env::default_layout();
    env::EnvState state{{0, 0}, {R}, 0, 0, Status::Running};
    env::FrameStack stack;
    stack.fill(env::encode_observation(layout, state));

    std::vector<env::Observation> pushed;
    for (int i = 1; i <= 5; ++i) {
        state.agent = {i, 0};
        pushed.push_back(env::encode_observation(layout, state));
        stack = env::push_frame(stack, pushed.back());
    }
    // after 5 pushes the stack holds pushes 2..5
    for (int slot = 0; slot < env::kStackSize; ++slot)
        EXPECT_EQ(stack.slots[static_cast<size_t>(slot)].data,
                  pushed[static_cast<size_t>(slot) + 1].data);
}

TEST(FrameStack, CompactDensifyMatchesFlatten) {
    const GridLayout layout = env::default_layout();
    env::EnvState state{{2, 7}, {R}, 0, 0, Status::Running};
    env::FrameStack stack;
    stack.fill(env::encode_observation(layout, state));
    env::CompactStack compact;
    compact.fill(env::compact_observation(layout, state.agent));

    state.agent = {3, 7};
    stack.push(env::encode_observation(layout, state));
    for (size_t i = 0; i + 1 < compact.size(); ++i) compact[i] = compact[i + 1];
    compact.back() = env::compact_observation(layout, state.agent);

    std::vector<double> dense;
    env::densify_stack(compact, layout.height, layout.width, dense);
    EXPECT_EQ(dense, stack.flatten());
}

// ---------------------------------------------------------------------------
// Rendering

TEST(Render, FigureLayoutGlyphPositions) {
    const GridLayout layout = env::default_layout();
    env::EnvState state{layout.agent_start, {R}, 0, 0, Status::Running};
    const std::string text = env::render_ascii(layout, state);
    EXPECT_EQ(text, env::render_ascii(layout, state)); // deterministic

    std::vector<std::string> rows;
    std::istringstream in(text);
    std::string row;
    while (std::getline(in, row)) rows.push_back(row);
    ASSERT_EQ(rows.size(), 10u);

    // rows are printed top-down, highest y first; the empty glyph is multi-byte
    auto glyph_at = [&](int y, int x) {
        const std::string& line = rows[static_cast<size_t>(9 - y)];
        size_t byte = 0;
        for (int col = 0; col < x; ++col)
            byte += (line[byte] & 0x80) ? 2 : 1;
        return (line[byte] & 0x80) ? line.substr(byte, 2) : line.substr(byte, 1);
    };
    EXPECT_EQ(glyph_at(5, 1), "A");
    EXPECT_EQ(glyph_at(5, 6), "R");
    EXPECT_EQ(glyph_at(9, 4), "B");
    EXPECT_EQ(glyph_at(0, 3), "G");
    EXPECT_EQ(glyph_at(4, 4), "·");
}

TEST(Render, TraceRecordFields) {
    env::EnvState state{{2, 3}, {R}, 0, 4, Status::Running};
    const auto record = env::trace_record(4, Action::Left, state, 0.0, 0.75);
    EXPECT_EQ(record.at("step").get<int>(), 4);
    EXPECT_EQ(record.at("action").get<std::string>(), "left");
    EXPECT_EQ(record.at("agent").at(0).get<int>(), 2);
    EXPECT_EQ(record.at("progress").get<int>(), 0);
    EXPECT_DOUBLE_EQ(record.at("r_shaped").get<double>(), 0.75);
    EXPECT_EQ(record.at("status").get<std::string>(), "running");
}
