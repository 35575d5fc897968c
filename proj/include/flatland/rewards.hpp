#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace flatland {

struct RewardConfig {
    double alpha = 1.0;
    double beta = 1.0;
    double illegal_penalty = 0.0;  // benchmark profile keeps this at 0

    friend bool operator==(const RewardConfig&, const RewardConfig&) = default;
};

/// alpha * local + beta * global + penalty, with local in {-1, 0} and global in {0, 1}.
constexpr double step_reward(bool agent_done, bool all_done, bool illegal_move, const RewardConfig& cfg) noexcept {
    const double local = agent_done ? 0.0 : -1.0;
    const double global = all_done ? 1.0 : 0.0;
    return cfg.alpha * local + cfg.beta * global + (illegal_move ? cfg.illegal_penalty : 0.0);
}

struct EpisodeTrace {
    std::vector<std::vector<double>> rewards;  // [agent][t-1] for t = 1..steps
    std::vector<bool> completed;
    int steps = 0;
    int max_steps = 0;
    RewardConfig reward_config;

    std::size_t agent_count() const noexcept { return rewards.size(); }
};

inline double episode_return(const EpisodeTrace& trace, std::size_t agent) {
    const auto& r = trace.rewards.at(agent);
    return std::accumulate(r.begin(), r.end(), 0.0);
}

/// 1 + g / (alpha * max_steps), capped at 1. This is a reporting convention;
/// rankings use the raw score.
inline double normalized_return(double episode_return_value, double alpha, int max_steps) {
    if (alpha <= 0.0 || max_steps <= 0) return 0.0;
    return std::min(1.0, 1.0 + episode_return_value / (alpha * static_cast<double>(max_steps)));
}

inline double normalized_return(const EpisodeTrace& trace, std::size_t agent) {
    return normalized_return(episode_return(trace, agent), trace.reward_config.alpha, trace.max_steps);
}

struct EnvResult {
    std::string label;
    std::vector<double> returns;
};

struct Score {
    double total = 0.0;
    std::vector<double> per_env;
};

inline Score benchmark_score(std::span<const EnvResult> results) {
    Score s;
    for (const auto& env : results) {
        const double sum = std::accumulate(env.returns.begin(), env.returns.end(), 0.0);
        s.per_env.push_back(sum);
        s.total += sum;
    }
    return s;
}

}  // namespace flatland
