#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "flatland/observations.hpp"
#include "flatland/random.hpp"
#include "flatland/sim_core.hpp"

namespace flatland {

/// Chooses one action per agent. Implementations own any RNG stream they use.
class Policy {
public:
    virtual ~Policy() = default;
    virtual std::string_view name() const = 0;
    /// Called once before an episode starts.
    virtual void reset(const EnvState&) {}
    virtual Action act(const EnvState& state, std::size_t agent_id) = 0;
    /// Called after every step with its outcome.
    virtual void after_step(const EnvState&, const StepResult&) {}

    /// One action per agent; remote policies override this to batch a step.
    virtual std::vector<Action> act_all(const EnvState& state) {
        std::vector<Action> out;
        out.reserve(state.agents.size());
        for (std::size_t i = 0; i < state.agents.size(); ++i) out.push_back(act(state, i));
        return out;
    }
};

class RandomPolicy final : public Policy {
public:
    explicit RandomPolicy(std::uint64_t seed) : rng_(seed, "random-policy") {}
    std::string_view name() const override { return "random"; }
    Action act(const EnvState&, std::size_t) override {
        return static_cast<Action>(rng_.uniform_int(0, kActionCount - 1));
    }

private:
    Rng rng_;
};

class ForwardPolicy final : public Policy {
public:
    std::string_view name() const override { return "forward"; }
    Action act(const EnvState&, std::size_t) override { return Action::Forward; }
};

/// Follows the distance map greedily; ties prefer Left, Forward, Right.
/// Agents do not yield to each other.
class ShortestPathPolicy final : public Policy {
public:
    std::string_view name() const override { return "shortest-path"; }
    void reset(const EnvState&) override { cache_.clear(); }

    Action act(const EnvState& state, std::size_t agent_id) override {
        const Agent& a = state.agents.at(agent_id);
        switch (a.status) {
            case AgentStatus::Done: return Action::NoOp;
            case AgentStatus::ReadyToDepart: return Action::Forward;
            case AgentStatus::Active: break;
        }
        const DistanceMap& map = cache_.get(state.grid, a.target);
        Action best = Action::Halt;  // no path
        int best_dist = DistanceMap::kUnreachable;
        for (Action candidate : {Action::Left, Action::Forward, Action::Right}) {
            auto mv = detail::movement_target(state.grid, a.position, a.direction, candidate);
            if (!mv) continue;
            const int d = map.at(mv->cell, mv->direction);
            if (d < best_dist) {
                best_dist = d;
                best = candidate;
            }
        }
        return best;
    }

private:
    DistanceMapCache cache_;
};

inline std::unique_ptr<Policy> random_policy(std::uint64_t seed) { return std::make_unique<RandomPolicy>(seed); }
inline std::unique_ptr<Policy> forward_policy() { return std::make_unique<ForwardPolicy>(); }
inline std::unique_ptr<Policy> shortest_path_policy() { return std::make_unique<ShortestPathPolicy>(); }

/// "random", "forward" or "shortest-path"; throws on anything else.
inline std::unique_ptr<Policy> make_policy(std::string_view name, std::uint64_t seed) {
    if (name == "random") return random_policy(seed);
    if (name == "forward") return forward_policy();
    if (name == "shortest-path") return shortest_path_policy();
    throw Error("unknown policy: " + std::string(name));
}

}  // namespace flatland
