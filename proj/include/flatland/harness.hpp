#pragma once

// Episode runner and the two evaluation rounds.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "flatland/observations.hpp"
#include "flatland/policies.hpp"
#include "flatland/rail_gen.hpp"
#include "flatland/random.hpp"
#include "flatland/rewards.hpp"
#include "flatland/sim_core.hpp"
#include "flatland/trace.hpp"

namespace flatland {

using Clock = std::chrono::steady_clock;

/// Everything needed to build one episode's initial state.
struct EpisodeSpec {
    std::string label;
    GeneratorParams generator;
    MalfunctionParams malfunction;
    RewardConfig reward_config;
    int max_steps = 0;  // <= 0: default cap
};

/// Generates the rail, assigns tasks and resets; every stream is seeded from generator.seed.
inline EnvState make_env(const EpisodeSpec& spec) {
    GeneratedRail rail = generate_sparse(spec.generator);
    const auto tasks = assign_tasks(rail.grid, rail.cities, spec.generator.n_agents, spec.generator.seed);
    return reset(rail.grid, tasks, spec.malfunction, spec.reward_config, spec.generator.seed, spec.max_steps);
}

struct EpisodeRow {
    std::string label;
    std::uint64_t seed = 0;
    int width = 0;
    int height = 0;
    std::size_t agents = 0;
    std::size_t done = 0;
    double completion = 0.0;
    std::vector<double> returns;
    int steps = 0;
    double wall_seconds = 0.0;
};

inline nlohmann::json to_json(const EpisodeRow& r) {
    return {{"label", r.label},   {"seed", r.seed},       {"width", r.width},
            {"height", r.height}, {"agents", r.agents},   {"done", r.done},
            {"completion", r.completion}, {"returns", r.returns}, {"steps", r.steps},
            {"wall_seconds", r.wall_seconds}};
}

struct EpisodeOptions {
    int step_budget = 0;                    // <= 0: run until done
    std::optional<Clock::time_point> deadline;  // abort the episode once passed
    std::ostream* trace_out = nullptr;
    int tree_depth = -1;                    // >= 0: export tree observations per step
};

struct EpisodeOutcome {
    EpisodeTrace trace;
    EpisodeRow row;
    bool aborted = false;  // deadline passed before the episode ended
};

inline std::vector<std::vector<double>> all_trees(const EnvState& state, int depth, DistanceMapCache& cache) {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < state.agents.size(); ++i) {
        const Agent& a = state.agents[i];
        if (!a.active()) {
            out.emplace_back();
            continue;
        }
        out.push_back(flatten_tree(build_tree_observation(state, i, depth, cache.get(state.grid, a.target)), depth));
    }
    return out;
}

inline EpisodeOutcome run_episode(EnvState env, Policy& policy, const EpisodeOptions& opt = {}) {
    const auto started = Clock::now();
    EpisodeOutcome out;
    const std::size_t n = env.agents.size();
    out.trace.rewards.assign(n, {});
    out.trace.completed.assign(n, false);
    out.trace.max_steps = env.max_steps;
    out.trace.reward_config = env.reward_config;
    out.row.seed = env.seed;
    out.row.width = env.grid.width();
    out.row.height = env.grid.height();
    out.row.agents = n;

    std::optional<TraceWriter> writer;
    DistanceMapCache tree_cache;
    if (opt.trace_out) {
        writer.emplace(*opt.trace_out);
        writer->write(trace_header(env, policy.name()));
    }
    policy.reset(env);
    int taken = 0;
    while (!env.done && (opt.step_budget <= 0 || taken < opt.step_budget)) {
        if (opt.deadline && Clock::now() > *opt.deadline) {
            out.aborted = true;
            break;
        }
        const std::vector<Action> actions = policy.act_all(env);
        const StepResult result = step(env, actions);
        policy.after_step(env, result);
        ++taken;
        for (std::size_t i = 0; i < n; ++i) out.trace.rewards[i].push_back(result.rewards[i]);
        if (writer) {
            if (opt.tree_depth >= 0) {
                const auto trees = all_trees(env, opt.tree_depth, tree_cache);
                writer->write(trace_step(env, actions, result, &trees));
            } else {
                writer->write(trace_step(env, actions, result));
            }
        }
    }
    out.trace.steps = env.t;
    for (std::size_t i = 0; i < n; ++i) {
        out.trace.completed[i] = env.agents[i].status == AgentStatus::Done;
        out.row.returns.push_back(episode_return(out.trace, i));
    }
    out.row.done = env.count(AgentStatus::Done);
    out.row.completion = n ? static_cast<double>(out.row.done) / static_cast<double>(n) : 1.0;
    out.row.steps = env.t;
    out.row.wall_seconds = std::chrono::duration<double>(Clock::now() - started).count();
    if (writer) writer->write(trace_summary(out.trace));
    return out;
}

using PolicyFactory = std::function<std::unique_ptr<Policy>(std::uint64_t seed)>;

inline PolicyFactory named_policy_factory(std::string name) {
    make_policy(name, 0);  // validate eagerly
    return [name = std::move(name)](std::uint64_t seed) { return make_policy(name, seed); };
}

/// Runs the specs on `workers` threads. Episodes not finished by the deadline
/// come back empty.
inline std::vector<std::optional<EpisodeRow>> run_episodes(const std::vector<EpisodeSpec>& specs,
                                                           const PolicyFactory& factory, unsigned workers,
                                                           std::optional<Clock::time_point> deadline = std::nullopt) {
    std::vector<std::optional<EpisodeRow>> rows(specs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < specs.size(); i = next++) {
            try {
                if (deadline && Clock::now() > *deadline) continue;
                auto policy = factory(specs[i].generator.seed);
                EpisodeOptions opt;
                opt.deadline = deadline;
                EpisodeOutcome outcome = run_episode(make_env(specs[i]), *policy, opt);
                if (outcome.aborted) continue;
                outcome.row.label = specs[i].label;
                rows[i] = std::move(outcome.row);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    workers = std::max(1U, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, specs.size()))));
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return rows;
}

inline unsigned default_workers() { return std::max(1U, std::thread::hardware_concurrency()); }

// ---------------------------------------------------------------------------
// Suites and rounds

struct TestGroup {
    std::string label;
    std::vector<EpisodeSpec> episodes;
};

struct TestSuite {
    std::vector<TestGroup> groups;
};

/// Settings of the fixed 25x25 / 5-agent benchmark.
inline GeneratorParams benchmark_generator(std::uint64_t seed) {
    GeneratorParams p;
    p.width = 25;
    p.height = 25;
    p.n_cities = 4;
    p.n_agents = 5;
    p.max_parallel_tracks = 2;
    p.seed = seed;
    return p;
}

/// City count keeping the benchmark density of 4 cities per 625 cells.
inline int cities_for(int width, int height) {
    return std::max(2, static_cast<int>(std::lround(4.0 * width * height / 625.0)));
}

inline EpisodeSpec scaled_episode(std::string label, int side, int agents, std::uint64_t seed,
                                  const MalfunctionParams& malfunction, const RewardConfig& reward) {
    EpisodeSpec e;
    e.label = std::move(label);
    e.generator = benchmark_generator(seed);
    e.generator.width = e.generator.height = side;
    e.generator.n_agents = agents;
    e.generator.n_cities = cities_for(side, side);
    e.malfunction = malfunction;
    e.reward_config = reward;
    return e;
}

struct SuiteConfig {
    std::uint64_t seed = 0;
    int episodes_per_test = 10;
    MalfunctionParams malfunction;
    RewardConfig reward_config;
};

inline constexpr int kRound1Groups = 14;

/// Fourteen groups of growing size: side 25 + 5k, agents 5 + 3k.
inline TestSuite round1_suite(const SuiteConfig& cfg) {
    TestSuite suite;
    for (int k = 0; k < kRound1Groups; ++k) {
        TestGroup g;
        g.label = "test-" + std::to_string(k);
        const int side = 25 + 5 * k;
        const int agents = 5 + 3 * k;
        for (int e = 0; e < cfg.episodes_per_test; ++e) {
            const auto seed = derive_seed(cfg.seed, "round1", (static_cast<std::uint64_t>(k) << 32) | e);
            g.episodes.push_back(scaled_episode(g.label + "/" + std::to_string(e), side, agents, seed,
                                                cfg.malfunction, cfg.reward_config));
        }
        suite.groups.push_back(std::move(g));
    }
    return suite;
}

/// Test k of round 2: cell count grows by 1.5 and agent count by 1.4 per test.
struct Round2Size {
    int side = 0;
    int agents = 0;
};

inline Round2Size round2_size(int k) {
    return {static_cast<int>(std::lround(25.0 * std::pow(std::sqrt(1.5), k))),
            static_cast<int>(std::lround(5.0 * std::pow(1.4, k)))};
}

inline TestGroup round2_test(const SuiteConfig& cfg, int k) {
    const Round2Size size = round2_size(k);
    TestGroup g;
    g.label = "test-" + std::to_string(k);
    for (int e = 0; e < cfg.episodes_per_test; ++e) {
        const auto seed = derive_seed(cfg.seed, "round2", (static_cast<std::uint64_t>(k) << 32) | e);
        g.episodes.push_back(scaled_episode(g.label + "/" + std::to_string(e), size.side, size.agents, seed,
                                            cfg.malfunction, cfg.reward_config));
    }
    return g;
}

inline constexpr double kCompletionFloor = 0.25;
inline constexpr double kCompletionFloorTolerance = 1e-12;

/// True when the mean completion of a test is strictly below 25%.
inline bool below_completion_floor(std::span<const double> completions) {
    if (completions.empty()) return false;
    double sum = 0.0;
    for (double c : completions) sum += c;
    return sum / static_cast<double>(completions.size()) < kCompletionFloor - kCompletionFloorTolerance;
}

struct GroupRow {
    std::string label;
    int width = 0;
    int height = 0;
    std::size_t agents = 0;
    std::size_t episodes = 0;
    double mean_completion = 0.0;
    double score = 0.0;
};

inline nlohmann::json to_json(const GroupRow& g) {
    return {{"label", g.label},       {"width", g.width},       {"height", g.height},
            {"agents", g.agents},     {"episodes", g.episodes}, {"mean_completion", g.mean_completion},
            {"score", g.score}};
}

struct RunReport {
    std::string round;
    std::string policy;
    bool failed = false;
    std::optional<double> score;  // absent when failed
    std::string stop_reason;
    std::vector<GroupRow> groups;
    std::vector<EpisodeRow> episodes;
    double wall_seconds = 0.0;
    nlohmann::json schedule;

    bool scored() const noexcept { return !failed && score.has_value(); }
};

inline nlohmann::json to_json(const RunReport& r) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : r.groups) groups.push_back(to_json(g));
    nlohmann::json episodes = nlohmann::json::array();
    for (const auto& e : r.episodes) episodes.push_back(to_json(e));
    return {{"round", r.round},
            {"policy", r.policy},
            {"status", r.failed ? "FAILED" : "SCORED"},
            {"score", r.score ? nlohmann::json(*r.score) : nlohmann::json(nullptr)},
            {"stop_reason", r.stop_reason},
            {"schedule", r.schedule},
            {"groups", std::move(groups)},
            {"episodes", std::move(episodes)},
            {"wall_seconds", r.wall_seconds}};
}

inline GroupRow summarize_group(const std::string& label, const std::vector<EpisodeRow>& rows) {
    GroupRow g;
    g.label = label;
    g.episodes = rows.size();
    double completion = 0.0;
    for (const auto& r : rows) {
        g.width = r.width;
        g.height = r.height;
        g.agents = r.agents;
        completion += r.completion;
        for (double v : r.returns) g.score += v;
    }
    g.mean_completion = rows.empty() ? 0.0 : completion / static_cast<double>(rows.size());
    return g;
}

inline double total_score(const std::vector<EpisodeRow>& rows) {
    std::vector<EnvResult> envs;
    for (const auto& r : rows) envs.push_back({r.label, r.returns});
    return benchmark_score(envs).total;
}

struct RoundOptions {
    double wall_budget_seconds = 600.0;
    unsigned workers = default_workers();
    int max_tests = 0;  // round 2 only; <= 0: unbounded
    std::string policy_name;
};

/// Every group must finish inside the budget; otherwise the run is FAILED
/// and carries no score.
inline RunReport run_round1(const TestSuite& suite, const PolicyFactory& factory, const RoundOptions& opt) {
    const auto started = Clock::now();
    const auto deadline = started + std::chrono::duration_cast<Clock::duration>(
                                        std::chrono::duration<double>(std::max(0.0, opt.wall_budget_seconds)));
    RunReport report;
    report.round = "round1";
    report.policy = opt.policy_name;
    report.schedule = {{"groups", suite.groups.size()}, {"wall_budget_seconds", opt.wall_budget_seconds}};
    for (const auto& group : suite.groups) {
        if (Clock::now() >= deadline) {
            report.failed = true;
            break;
        }
        auto rows = run_episodes(group.episodes, factory, opt.workers, deadline);
        std::vector<EpisodeRow> done;
        for (auto& r : rows) {
            if (r) done.push_back(std::move(*r));
        }
        report.groups.push_back(summarize_group(group.label, done));
        for (auto& r : done) report.episodes.push_back(std::move(r));
        if (done.size() != rows.size()) {
            report.failed = true;
            break;
        }
    }
    if (Clock::now() > deadline) report.failed = true;
    report.stop_reason = report.failed ? "wall_budget" : "complete";
    if (!report.failed) report.score = total_score(report.episodes);
    report.wall_seconds = std::chrono::duration<double>(Clock::now() - started).count();
    return report;
}

/// Open-ended progression: stops at the first test whose mean completion is
/// below 25%, when the budget runs out, or after max_tests tests.
inline RunReport run_round2(const SuiteConfig& cfg, const PolicyFactory& factory, const RoundOptions& opt) {
    const auto started = Clock::now();
    const auto deadline = started + std::chrono::duration_cast<Clock::duration>(
                                        std::chrono::duration<double>(std::max(0.0, opt.wall_budget_seconds)));
    RunReport report;
    report.round = "round2";
    report.policy = opt.policy_name;
    report.schedule = {{"start_side", 25},
                       {"start_agents", 5},
                       {"cell_growth", 1.5},
                       {"agent_growth", 1.4},
                       {"episodes_per_test", cfg.episodes_per_test},
                       {"completion_floor", kCompletionFloor},
                       {"wall_budget_seconds", opt.wall_budget_seconds},
                       {"max_tests", opt.max_tests}};
    for (int k = 0;; ++k) {
        if (opt.max_tests > 0 && k >= opt.max_tests) {
            report.stop_reason = "max_tests";
            break;
        }
        if (Clock::now() >= deadline) {
            report.stop_reason = "wall_budget";
            break;
        }
        std::vector<std::optional<EpisodeRow>> rows;
        try {
            rows = run_episodes(round2_test(cfg, k).episodes, factory, opt.workers, deadline);
        } catch (const GenerationFailed&) {
            report.stop_reason = "generation_failed";
            break;
        } catch (const TaskAssignmentFailed&) {
            report.stop_reason = "generation_failed";
            break;
        }
        std::vector<EpisodeRow> done;
        std::vector<double> completions;
        for (auto& r : rows) {
            if (!r) continue;
            completions.push_back(r->completion);
            done.push_back(std::move(*r));
        }
        report.groups.push_back(summarize_group("test-" + std::to_string(k), done));
        for (auto& r : done) report.episodes.push_back(std::move(r));
        if (done.size() != rows.size()) {
            report.stop_reason = "wall_budget";
            break;
        }
        if (below_completion_floor(completions)) {
            report.stop_reason = "completion_floor";
            break;
        }
    }
    report.score = total_score(report.episodes);
    report.wall_seconds = std::chrono::duration<double>(Clock::now() - started).count();
    return report;
}

}  // namespace flatland
