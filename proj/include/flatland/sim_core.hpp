#pragma once

// Synchronous multi-agent stepping on a rail grid.
//
// Order of events in one step:
//   1. malfunction onsets are drawn; every agent with a positive counter
//      stays this step and its counter is decremented;
//   2. active agents resolve their actions; moves are committed when the
//      destination is free, is not wanted by a lower-id agent, and is not
//      part of a swap or longer rotation cycle;
//   3. agents arriving at their target become Done and leave the map;
//   4. waiting agents issuing a movement action enter their start cell if
//      it is still free (ascending id);
//   5. the clock advances and rewards are computed.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "flatland/rail_gen.hpp"
#include "flatland/rail_grid.hpp"
#include "flatland/random.hpp"
#include "flatland/rewards.hpp"

namespace flatland {

class InvalidTask : public Error {
public:
    using Error::Error;
};

class EpisodeFinished : public Error {
public:
    using Error::Error;
};

enum class Action : std::uint8_t { NoOp = 0, Left = 1, Forward = 2, Right = 3, Halt = 4 };
inline constexpr int kActionCount = 5;

constexpr Action action_from_int(int v) {
    if (v < 0 || v >= kActionCount) throw Error("action out of range: " + std::to_string(v));
    return static_cast<Action>(v);
}
constexpr int to_int(Action a) noexcept { return static_cast<int>(a); }
constexpr bool is_movement(Action a) noexcept {
    return a == Action::Forward || a == Action::Left || a == Action::Right;
}

enum class AgentStatus : std::uint8_t { ReadyToDepart = 0, Active = 1, Done = 2 };

constexpr const char* to_string(AgentStatus s) noexcept {
    switch (s) {
        case AgentStatus::ReadyToDepart: return "ready";
        case AgentStatus::Active: return "active";
        case AgentStatus::Done: return "done";
    }
    return "?";
}

struct Agent {
    std::size_t id = 0;
    Position start;
    Direction start_direction = Direction::North;
    Position target;
    AgentStatus status = AgentStatus::ReadyToDepart;
    Position position;                        // meaningful only while Active
    Direction direction = Direction::North;   // meaningful only while Active
    double speed = 1.0;
    int malfunction_remaining = 0;
    bool moving = false;

    bool active() const noexcept { return status == AgentStatus::Active; }
    AgentTask task() const noexcept { return {start, start_direction, target}; }

    friend bool operator==(const Agent&, const Agent&) = default;
};

struct MalfunctionParams {
    double probability = 0.0;
    int min_duration = 0;
    int max_duration = 0;

    friend bool operator==(const MalfunctionParams&, const MalfunctionParams&) = default;
};

inline constexpr std::int32_t kNoAgent = -1;

struct EnvState {
    Grid grid;
    std::vector<Agent> agents;
    int t = 0;
    int max_steps = 0;
    MalfunctionParams malfunction;
    RewardConfig reward_config;
    std::uint64_t seed = 0;
    Rng malfunction_rng;
    std::vector<std::int32_t> occupancy;  // agent id per cell or kNoAgent
    bool done = false;

    std::int32_t occupant(Position p) const noexcept {
        return grid.contains(p) ? occupancy[grid.index(p)] : kNoAgent;
    }
    std::size_t count(AgentStatus s) const noexcept {
        return static_cast<std::size_t>(
            std::count_if(agents.begin(), agents.end(), [s](const Agent& a) { return a.status == s; }));
    }
    bool all_done() const noexcept { return count(AgentStatus::Done) == agents.size(); }
    std::vector<AgentTask> tasks() const {
        std::vector<AgentTask> out;
        for (const auto& a : agents) out.push_back(a.task());
        return out;
    }

    friend bool operator==(const EnvState&, const EnvState&) = default;
};

inline int default_max_steps(const Grid& grid) { return 8 * (grid.width() + grid.height()); }

/// Builds the initial state. max_steps <= 0 selects 8 * (width + height).
inline EnvState reset(const Grid& grid, std::span<const AgentTask> tasks, const MalfunctionParams& malfunction,
                      const RewardConfig& reward_config, std::uint64_t seed, int max_steps = 0) {
    if (malfunction.probability < 0.0 || malfunction.probability > 1.0) {
        throw Error("malfunction probability must lie in [0, 1]");
    }
    if (malfunction.min_duration < 0 || malfunction.min_duration > malfunction.max_duration) {
        throw Error("malfunction durations must satisfy 0 <= min <= max");
    }
    EnvState s;
    s.grid = grid;
    s.max_steps = max_steps > 0 ? max_steps : default_max_steps(grid);
    s.malfunction = malfunction;
    s.reward_config = reward_config;
    s.seed = seed;
    s.malfunction_rng = Rng(seed, "malfunction");
    s.occupancy.assign(grid.size(), kNoAgent);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const AgentTask& task = tasks[i];
        for (Position p : {task.start, task.target}) {
            if (!grid.contains(p) || grid[p].empty()) {
                throw InvalidTask("agent " + std::to_string(i) + ": cell (" + std::to_string(p.x) + "," +
                                  std::to_string(p.y) + ") is not a rail cell");
            }
        }
        Agent a;
        a.id = i;
        a.start = task.start;
        a.start_direction = task.direction;
        a.target = task.target;
        s.agents.push_back(a);
    }
    s.done = s.agents.empty();
    return s;
}

struct EffectiveMove {
    enum class Kind : std::uint8_t { Stay, MoveTo, ReverseInPlaceDeadEnd };
    Kind kind = Kind::Stay;
    Position cell;
    Direction direction = Direction::North;
    bool illegal = false;  // requested action was not executable and was replaced by a no-op

    bool moves() const noexcept { return kind != Kind::Stay; }
    friend bool operator==(const EffectiveMove&, const EffectiveMove&) = default;
};

namespace detail {

// Where a movement action leads from (p, d), ignoring other agents. Forward
// follows the straight exit, or the only exit of a curve or dead end.
inline std::optional<EffectiveMove> movement_target(const Grid& grid, Position p, Direction d, Action action) {
    const DirectionMask m = grid.mask(p, d);
    std::optional<Direction> out;
    switch (action) {
        case Action::Forward:
            if (m.contains(d)) out = d;
            else out = m.only();
            break;
        case Action::Left:
            if (m.contains(turn_left(d))) out = turn_left(d);
            break;
        case Action::Right:
            if (m.contains(turn_right(d))) out = turn_right(d);
            break;
        default:
            break;
    }
    if (!out) return std::nullopt;
    const Position n = step_towards(p, *out);
    if (!grid.contains(n)) return std::nullopt;
    EffectiveMove mv;
    mv.kind = (*out == opposite(d)) ? EffectiveMove::Kind::ReverseInPlaceDeadEnd : EffectiveMove::Kind::MoveTo;
    mv.cell = n;
    mv.direction = *out;
    return mv;
}

}  // namespace detail

/// Effective move for an active agent, before occupancy checks.
inline EffectiveMove resolve_action(const EnvState& state, std::size_t agent_id, Action action) {
    const Agent& a = state.agents.at(agent_id);
    if (!a.active()) return {};
    auto noop = [&](bool illegal) {
        EffectiveMove mv;
        if (a.moving) {
            if (auto fwd = detail::movement_target(state.grid, a.position, a.direction, Action::Forward)) mv = *fwd;
        }
        mv.illegal = illegal;
        return mv;
    };
    switch (action) {
        case Action::Halt: return {};
        case Action::NoOp: return noop(false);
        case Action::Forward:
        case Action::Left:
        case Action::Right:
            if (auto mv = detail::movement_target(state.grid, a.position, a.direction, action)) return *mv;
            return noop(true);
    }
    return {};
}

/// Draws malfunction onsets for healthy agents that are Active or waiting.
/// Returns the number of onsets.
inline int draw_malfunctions(EnvState& state) {
    int onsets = 0;
    const MalfunctionParams& mp = state.malfunction;
    for (Agent& a : state.agents) {
        if (a.status == AgentStatus::Done || a.malfunction_remaining > 0) continue;
        if (state.malfunction_rng.bernoulli(mp.probability)) {
            a.malfunction_remaining = static_cast<int>(state.malfunction_rng.uniform_int(mp.min_duration, mp.max_duration));
            ++onsets;
        }
    }
    return onsets;
}

struct StepInfo {
    std::vector<bool> illegal;
    std::vector<bool> malfunctioning;
    std::vector<bool> moved;
    int malfunction_onsets = 0;
};

struct StepResult {
    std::vector<double> rewards;
    std::vector<bool> agent_done;
    bool done = false;
    StepInfo info;
};

inline StepResult step(EnvState& state, std::span<const Action> actions) {
    if (state.done) throw EpisodeFinished("step called on a finished episode");
    const std::size_t n = state.agents.size();
    if (actions.size() != n) {
        throw Error("expected " + std::to_string(n) + " actions, got " + std::to_string(actions.size()));
    }

    StepResult result;
    result.info.illegal.assign(n, false);
    result.info.malfunctioning.assign(n, false);
    result.info.moved.assign(n, false);
    result.info.malfunction_onsets = draw_malfunctions(state);

    for (std::size_t i = 0; i < n; ++i) {
        Agent& a = state.agents[i];
        if (a.status != AgentStatus::Done && a.malfunction_remaining > 0) {
            --a.malfunction_remaining;
            result.info.malfunctioning[i] = true;
        }
    }

    // Intents of active agents.
    std::vector<EffectiveMove> intent(n);
    std::vector<std::int32_t> claimant(state.grid.size(), kNoAgent);
    for (std::size_t i = 0; i < n; ++i) {
        Agent& a = state.agents[i];
        if (!a.active() || result.info.malfunctioning[i]) continue;
        intent[i] = resolve_action(state, i, actions[i]);
        result.info.illegal[i] = intent[i].illegal;
        if (actions[i] == Action::Halt) a.moving = false;
        if (intent[i].moves()) {
            a.moving = true;
            auto& c = claimant[state.grid.index(intent[i].cell)];
            if (c == kNoAgent) c = static_cast<std::int32_t>(i);
        }
    }

    // 0 = unresolved, 1 = in progress, 2 = committed, 3 = stays
    std::vector<std::uint8_t> mark(n, 0);
    auto resolve = [&](auto&& self, std::size_t i) -> bool {
        if (mark[i] == 2) return true;
        if (mark[i] == 3 || mark[i] == 1) return false;
        if (!intent[i].moves() || claimant[state.grid.index(intent[i].cell)] != static_cast<std::int32_t>(i)) {
            mark[i] = 3;
            return false;
        }
        mark[i] = 1;
        const std::int32_t occ = state.occupancy[state.grid.index(intent[i].cell)];
        const bool ok = occ == kNoAgent || self(self, static_cast<std::size_t>(occ));
        mark[i] = ok ? 2 : 3;
        return ok;
    };
    for (std::size_t i = 0; i < n; ++i) {
        if (state.agents[i].active()) resolve(resolve, i);
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (mark[i] == 2) state.occupancy[state.grid.index(state.agents[i].position)] = kNoAgent;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (mark[i] != 2) continue;
        Agent& a = state.agents[i];
        a.position = intent[i].cell;
        a.direction = intent[i].direction;
        result.info.moved[i] = true;
        if (a.position == a.target) {
            a.status = AgentStatus::Done;
            a.moving = false;
        } else {
            state.occupancy[state.grid.index(a.position)] = static_cast<std::int32_t>(i);
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        Agent& a = state.agents[i];
        if (a.status != AgentStatus::ReadyToDepart || result.info.malfunctioning[i] || !is_movement(actions[i])) continue;
        auto& occ = state.occupancy[state.grid.index(a.start)];
        if (occ != kNoAgent) continue;
        a.status = AgentStatus::Active;
        a.position = a.start;
        a.direction = a.start_direction;
        a.moving = true;
        result.info.moved[i] = true;
        if (a.position == a.target) a.status = AgentStatus::Done;
        else occ = static_cast<std::int32_t>(i);
    }

    ++state.t;
    const bool all_done = state.all_done();
    result.rewards.resize(n);
    result.agent_done.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const bool done_i = state.agents[i].status == AgentStatus::Done;
        result.agent_done[i] = done_i;
        result.rewards[i] = step_reward(done_i, all_done, result.info.illegal[i], state.reward_config);
    }
    state.done = all_done || state.t >= state.max_steps;
    result.done = state.done;
    return result;
}

inline StepResult step(EnvState& state, std::initializer_list<Action> actions) {
    return step(state, std::span<const Action>(actions.begin(), actions.size()));
}

/// Active agents that can never move again given current occupancy: every
/// exit is held by an agent that is itself permanently blocked. Covers
/// head-on pairs, rotation cycles and agents queued behind them.
inline std::set<std::size_t> detect_deadlock(const EnvState& state) {
    const std::size_t n = state.agents.size();
    std::vector<std::vector<std::size_t>> blockers(n);
    std::vector<bool> candidate(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        const Agent& a = state.agents[i];
        if (!a.active()) continue;
        const DirectionMask m = state.grid.mask(a.position, a.direction);
        bool any_exit = false;
        bool all_held = true;
        for (Direction d : kAllDirections) {
            if (!m.contains(d)) continue;
            const Position next = step_towards(a.position, d);
            if (!state.grid.contains(next)) continue;
            any_exit = true;
            const std::int32_t occ = state.occupant(next);
            if (occ == kNoAgent) {
                all_held = false;
                break;
            }
            blockers[i].push_back(static_cast<std::size_t>(occ));
        }
        candidate[i] = any_exit && all_held;
    }
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (!candidate[i]) continue;
            for (std::size_t b : blockers[i]) {
                if (!candidate[b]) {
                    candidate[i] = false;
                    changed = true;
                    break;
                }
            }
        }
    }
    std::set<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (candidate[i]) out.insert(i);
    }
    return out;
}

}  // namespace flatland
