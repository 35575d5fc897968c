// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <sys/socket.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <thread>

#include "flatland/flatland.hpp"
#include "support/oracles.hpp"
#include "support/properties.hpp"

using namespace flatland;
using Seconds = std::chrono::duration<double>;

namespace {

// Pinned tolerances and limits.
constexpr double kMemoryTimeLimit = 1.0;           // seconds
constexpr std::size_t kMemoryBytes = 2'000'000;
constexpr double kBaselineTimeLimit = 300.0;       // seconds
constexpr double kShortestPathMin = 0.50;
constexpr double kRandomMax = 0.35;
constexpr double kFormulaTolerance = 1e-12;
constexpr long kPropertySteps = 1000;
constexpr int kOracleEnvs = 50;
constexpr int kMaxTreeDepth = 3;
constexpr int kSerializationSeeds = 100;

struct Result {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const char* name, const std::function<Result()>& criterion) {
    Result r;
    const auto started = Clock::now();
    try {
        r = criterion();
    } catch (const std::exception& e) {
        r = {false, std::string("exception: ") + e.what()};
    }
    const double secs = Seconds(Clock::now() - started).count();
    if (!r.pass) ++failures;
    std::printf("%s %s (%.2fs) %s\n", r.pass ? "PASS" : "FAIL", name, secs, r.detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

EnvState benchmark_env(std::uint64_t seed) {
    EpisodeSpec spec;
    spec.generator = benchmark_generator(seed);
    return make_env(spec);
}

Result memory() {
    const auto started = Clock::now();
    const Grid g(1000, 1000);
    const double secs = Seconds(Clock::now() - started).count();
    const bool ok = g.storage_bytes() == kMemoryBytes && secs < kMemoryTimeLimit;
    return {ok, std::to_string(g.storage_bytes()) + " bytes, built in " + fmt("%.4fs", secs)};
}

Result baselines() {
    const auto started = Clock::now();
    std::vector<EpisodeSpec> specs;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        EpisodeSpec e;
        e.label = "bench/" + std::to_string(seed);
        e.generator = benchmark_generator(seed);
        specs.push_back(e);
    }
    auto mean = [&](const char* name) {
        double sum = 0;
        for (const auto& row : run_episodes(specs, named_policy_factory(name), default_workers())) {
            sum += row.value().completion;
        }
        return sum / static_cast<double>(specs.size());
    };
    const double sp = mean("shortest-path");
    const double fw = mean("forward");
    const double rnd = mean("random");
    const double secs = Seconds(Clock::now() - started).count();
    const bool ok = sp > fw && fw >= rnd && sp >= kShortestPathMin && rnd <= kRandomMax && secs < kBaselineTimeLimit;
    return {ok, fmt("shortest-path=%.3f forward=%.3f random=%.3f", sp, fw, rnd)};
}

Result distance_maps() {
    long states = 0;
    for (std::uint64_t seed = 0; seed < kOracleEnvs; ++seed) {
        const EnvState s = benchmark_env(seed);
        for (const Agent& a : s.agents) {
            const DistanceMap map = build_distance_map(s.grid, a.target);
            for (std::size_t i = 0; i < s.grid.size(); ++i) {
                const Position p = s.grid.position(i);
                for (Direction d : kAllDirections) {
                    ++states;
                    if (map.at(p, d) != oracle::bfs_distance(s.grid, p.x, p.y, to_int(d), a.target.x, a.target.y)) {
                        return {false, "mismatch on seed " + std::to_string(seed) + " at (" + std::to_string(p.x) +
                                           "," + std::to_string(p.y) + ")"};
                    }
                }
            }
        }
    }
    return {true, std::to_string(states) + " states over " + std::to_string(kOracleEnvs) + " envs"};
}

bool same(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a[i] == b[i])) return false;
    }
    return true;
}

Result trees() {
    long compared = 0;
    for (std::uint64_t seed = 0; seed < kOracleEnvs; ++seed) {
        EnvState s = benchmark_env(seed);
        ShortestPathPolicy policy;
        policy.reset(s);
        DistanceMapCache cache;
        // sample the episode at several points so every agent is seen on the map
        for (int t = 0; t < 40 && !s.done; ++t) {
            step(s, policy.act_all(s));
            if (t % 4 != 0) continue;
            for (std::size_t i = 0; i < s.agents.size(); ++i) {
                if (!s.agents[i].active()) continue;
                for (int depth = 1; depth <= kMaxTreeDepth; ++depth) {
                    const auto lib = flatten_tree(
                        build_tree_observation(s, i, depth, cache.get(s.grid, s.agents[i].target)), depth);
                    ++compared;
                    if (!same(lib, oracle::flattened_tree(s, i, depth))) {
                        return {false, "mismatch on seed " + std::to_string(seed) + " agent " + std::to_string(i) +
                                           " depth " + std::to_string(depth) + " t=" + std::to_string(s.t)};
                    }
                }
            }
        }
    }
    return {true, std::to_string(compared) + " trees"};
}

Result properties() {
    const props::Outcome checks[] = {props::occupancy_exclusive(kPropertySteps),
                                     props::agent_count_conserved(kPropertySteps),
                                     props::no_swaps(kPropertySteps), props::deterministic(kPropertySteps)};
    const char* names[] = {"occupancy", "conservation", "swaps", "determinism"};
    std::string detail;
    bool ok = true;
    for (std::size_t i = 0; i < 4; ++i) {
        detail += std::string(names[i]) + "=" + std::to_string(checks[i].steps) + " ";
        if (checks[i].violation || checks[i].steps < kPropertySteps) {
            ok = false;
            detail += "[" + checks[i].violation.value_or("too few steps") + "] ";
        }
    }
    return {ok, detail + "steps"};
}

Result formulas() {
    bool ok = std::abs(density_value(0, 100) - 1.0) <= kFormulaTolerance &&
              std::abs(density_value(4, 100) - std::exp(-0.4)) <= kFormulaTolerance &&
              std::abs(density_value(100, 100) - std::exp(-10.0)) <= kFormulaTolerance;
    const RewardConfig cfg;
    ok = ok && step_reward(false, false, false, cfg) == -1.0 && step_reward(true, false, false, cfg) == 0.0 &&
         step_reward(true, true, false, cfg) == 1.0;

    const std::vector<AgentTask> tasks{{{1, 0}, Direction::East, {4, 0}}};
    std::vector<CellTransitions> cells{CellTransitions(0x0004), CellTransitions(0x0401), CellTransitions(0x0401),
                                       CellTransitions(0x0401), CellTransitions(0x0100)};
    EnvState s = reset(Grid(5, 1, cells), tasks, {}, cfg, 0);
    double g = 0;
    while (!s.done) g += step(s, {Action::Forward}).rewards[0];
    ok = ok && g == -2.0;
    return {ok, fmt("density(4,100)=%.15f g=%.0f", density_value(4, 100), g)};
}

Result round_protocol() {
    const bool floor_24 = below_completion_floor(std::vector<double>{0.24});
    const bool floor_25 = below_completion_floor(std::vector<double>{0.25});

    SuiteConfig cfg;
    cfg.episodes_per_test = 2;
    RoundOptions opt;
    opt.wall_budget_seconds = 0.0;
    opt.workers = 1;
    const RunReport r1 = run_round1(round1_suite(cfg), named_policy_factory("forward"), opt);
    const bool over_budget = r1.failed && !r1.score && to_json(r1)["status"] == "FAILED";

    // a policy that never moves stops round 2 after its first test
    struct Halt final : Policy {
        std::string_view name() const override { return "halt"; }
        Action act(const EnvState&, std::size_t) override { return Action::Halt; }
    };
    RoundOptions opt2;
    opt2.workers = 2;
    const RunReport r2 =
        run_round2(cfg, [](std::uint64_t) { return std::make_unique<Halt>(); }, opt2);
    const bool early = r2.stop_reason == "completion_floor" && r2.groups.size() == 1;

    const bool ok = floor_24 && !floor_25 && over_budget && early;
    return {ok, std::string("stop@24%=") + (floor_24 ? "yes" : "no") + " stop@25%=" + (floor_25 ? "yes" : "no") +
                    " round1-over-budget=" + (over_budget ? "FAILED/no score" : "scored") +
                    " round2-stop=" + r2.stop_reason};
}

Result serialization() {
    for (std::uint64_t seed = 0; seed < kSerializationSeeds; ++seed) {
        EpisodeSpec spec;
        spec.generator = benchmark_generator(seed);
        spec.malfunction = {0.01, 1, 3};
        const EnvState s = make_env(spec);
        const std::string a = serialize_env(s);
        const std::string b = serialize_env(deserialize_env(a));
        if (a != b) return {false, "seed " + std::to_string(seed) + " differs"};
    }
    return {true, std::to_string(kSerializationSeeds) + " seeds"};
}

Result remote() {
    int matched = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const EnvState env = benchmark_env(seed);
        std::ostringstream local_trace, remote_trace;
        ForwardPolicy local;
        EpisodeOptions eopt;
        eopt.trace_out = &local_trace;
        run_episode(env, local, eopt);

        int fds[2];
        if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) return {false, "socketpair failed"};
        LineChannel server(fds[0], true), client(fds[1], true);
        std::thread peer([&] {
            for (;;) {
                const auto msg = client.read_message(std::chrono::seconds(30));
                if (msg["type"] != "reset" && msg["type"] != "obs") break;
                client.send({{"type", "act"},
                             {"t", msg["t"]},
                             {"actions", std::vector<int>(msg["obs"].size(), to_int(Action::Forward))}});
            }
        });
        RemoteOptions ropt;
        ropt.step_deadline = std::chrono::seconds(30);
        const RemoteSession session = serve_remote_episode(env, server, ropt, &remote_trace);
        peer.join();

        std::istringstream la(local_trace.str()), ra(remote_trace.str());
        if (read_trace(la).steps != read_trace(ra).steps || session.timeouts != 0) {
            return {false, "trace differs on seed " + std::to_string(seed)};
        }
        ++matched;
    }
    return {true, std::to_string(matched) + " episodes with identical traces"};
}

}  // namespace

int main() {
    report("grid-memory", memory);
    report("baseline-ordering", baselines);
    report("distance-map-oracle", distance_maps);
    report("tree-oracle", trees);
    report("property-suite", properties);
    report("formula-spot-checks", formulas);
    report("round-protocol", round_protocol);
    report("serialization-round-trip", serialization);
    report("remote-protocol", remote);
    std::printf("%d failure(s)\n", failures);
    return failures == 0 ? 0 : 1;
}
