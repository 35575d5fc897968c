#include <csignal>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "flatland/flatland.hpp"

using namespace flatland;
using nlohmann::json;

namespace {

struct Config {
    GeneratorParams generator = benchmark_generator(0);
    MalfunctionParams malfunction;
    RewardConfig reward;
    int max_steps = 0;
    int episodes_per_test = 10;
    double wall_budget_seconds = 600.0;
    unsigned workers = default_workers();
    int max_tests = 0;
    RemoteOptions remote;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << text;
}

template <typename T>
void take(const json& obj, const char* key, T& into, const std::string& section) {
    if (!obj.contains(key)) return;
    try {
        into = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError("/" + section + "/" + key, e.what());
    }
}

Config load_config(const std::string& path) {
    Config c;
    if (path.empty()) return c;
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": byte " + std::to_string(e.byte), e.what());
    }
    if (!j.is_object()) throw ParseError(path, "config must be an object");
    static const std::set<std::string> known{"generator", "malfunction", "reward", "max_steps", "evaluation", "remote"};
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw ParseError(path + ": /" + key, "unknown section");
    }
    const json empty = json::object();
    const json& g = j.value("generator", empty);
    take(g, "width", c.generator.width, "generator");
    take(g, "height", c.generator.height, "generator");
    take(g, "n_cities", c.generator.n_cities, "generator");
    take(g, "n_agents", c.generator.n_agents, "generator");
    take(g, "max_parallel_tracks", c.generator.max_parallel_tracks, "generator");
    take(g, "grid_mode", c.generator.grid_mode, "generator");
    take(g, "passing_loops", c.generator.passing_loops, "generator");
    take(g, "close_ring", c.generator.close_ring, "generator");
    const json& m = j.value("malfunction", empty);
    take(m, "probability", c.malfunction.probability, "malfunction");
    take(m, "min_duration", c.malfunction.min_duration, "malfunction");
    take(m, "max_duration", c.malfunction.max_duration, "malfunction");
    const json& r = j.value("reward", empty);
    take(r, "alpha", c.reward.alpha, "reward");
    take(r, "beta", c.reward.beta, "reward");
    take(r, "illegal_penalty", c.reward.illegal_penalty, "reward");
    take(j, "max_steps", c.max_steps, "");
    const json& e = j.value("evaluation", empty);
    take(e, "episodes_per_test", c.episodes_per_test, "evaluation");
    take(e, "wall_budget_seconds", c.wall_budget_seconds, "evaluation");
    take(e, "workers", c.workers, "evaluation");
    take(e, "max_tests", c.max_tests, "evaluation");
    const json& rm = j.value("remote", empty);
    int deadline_ms = static_cast<int>(c.remote.step_deadline.count());
    take(rm, "step_deadline_ms", deadline_ms, "remote");
    c.remote.step_deadline = std::chrono::milliseconds(deadline_ms);
    take(rm, "tree_depth", c.remote.tree_depth, "remote");
    if (c.workers == 0) c.workers = default_workers();
    return c;
}

EnvState env_from(const Config& c, std::uint64_t seed) {
    EpisodeSpec spec;
    spec.generator = c.generator;
    spec.generator.seed = seed;
    spec.malfunction = c.malfunction;
    spec.reward_config = c.reward;
    spec.max_steps = c.max_steps;
    return make_env(spec);
}

// Replays a trace's actions against its header env up to step `until`.
EnvState replay(const ParsedTrace& trace, int until) {
    EnvState s = to_env_state(env_file_from_json(trace.header.at("env")));
    for (const auto& rec : trace.steps) {
        if (s.t >= until || s.done) break;
        std::vector<Action> actions;
        for (const auto& a : rec.at("actions")) actions.push_back(action_from_int(a.get<int>()));
        step(s, actions);
    }
    return s;
}

struct RemoteEndpoint {
    bool stdio = false;
    int port = -1;
};

// Waits for one client on the endpoint and returns its channel.
std::unique_ptr<LineChannel> open_endpoint(const RemoteEndpoint& ep, int& listen_fd) {
    if (ep.stdio) return std::make_unique<LineChannel>(STDIN_FILENO, STDOUT_FILENO);
    if (ep.port < 0) throw Error("remote policy needs --stdio or --port");
    if (listen_fd < 0) {
        listen_fd = listen_tcp(static_cast<std::uint16_t>(ep.port));
        std::cerr << "listening on 127.0.0.1:" << bound_port(listen_fd) << std::endl;
    }
    return std::make_unique<LineChannel>(accept_tcp(listen_fd), true);
}

}  // namespace

int main(int argc, char** argv) {
    std::signal(SIGPIPE, SIG_IGN);
    CLI::App app{"Multi-agent railway grid simulator"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("-c,--config", config_path, "JSON config file")->check(CLI::ExistingFile);

    std::uint64_t seed = 0;
    std::string out_path, env_path, policy_name = "shortest-path", trace_path, report_path;
    int tree_depth = -1, round = 1, render_step = -1, episodes = 1;
    RemoteEndpoint endpoint;

    auto* gen = app.add_subcommand("generate", "Generate an environment file");
    gen->add_option("--seed", seed, "Generator seed")->required();
    gen->add_option("-o,--out", out_path, "Output file (default stdout)");

    auto* run = app.add_subcommand("run", "Run one episode");
    run->add_option("--env", env_path, "Environment file")->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "Policy seed; also the generator seed without --env")->required();
    run->add_option("--policy", policy_name, "random|forward|shortest-path|remote")
        ->check(CLI::IsMember({"random", "forward", "shortest-path", "remote"}));
    run->add_option("--trace", trace_path, "Write an NDJSON trace");
    run->add_option("--tree-depth", tree_depth, "Export tree observations of this depth in the trace");
    run->add_option("--report", report_path, "Write the report here instead of stdout");
    run->add_flag("--stdio", endpoint.stdio, "Remote client on stdin/stdout");
    run->add_option("--port", endpoint.port, "Remote client over TCP on this port");

    auto* eval = app.add_subcommand("evaluate", "Run a benchmark round");
    eval->add_option("--seed", seed, "Suite seed")->required();
    eval->add_option("--policy", policy_name, "random|forward|shortest-path")
        ->check(CLI::IsMember({"random", "forward", "shortest-path"}));
    eval->add_option("--round", round, "1 or 2")->check(CLI::IsMember({1, 2}));
    eval->add_option("--report", report_path, "Write the report here instead of stdout");

    auto* render = app.add_subcommand("render", "Render an environment or a trace step as SVG");
    auto* render_env = render->add_option("--env", env_path, "Environment file")->check(CLI::ExistingFile);
    auto* render_trace = render->add_option("--trace", trace_path, "Trace file")->check(CLI::ExistingFile);
    render->add_option("--step", render_step, "Trace step to show (default last)");
    render->add_option("-o,--out", out_path, "Output file (default stdout)");
    render_env->excludes(render_trace);

    auto* serve = app.add_subcommand("serve", "Host remote-agent sessions for an environment");
    serve->add_option("--env", env_path, "Environment file")->required()->check(CLI::ExistingFile);
    serve->add_flag("--stdio", endpoint.stdio, "Single session on stdin/stdout");
    serve->add_option("--port", endpoint.port, "TCP port (0 picks a free one)");
    serve->add_option("--episodes", episodes, "Sessions to serve before exiting");
    serve->add_option("--trace", trace_path, "Trace of the last session");

    CLI11_PARSE(app, argc, argv);

    try {
        const Config cfg = load_config(config_path);

        if (*gen) {
            write_output(out_path, serialize_env(env_from(cfg, seed)));
            return 0;
        }

        if (*run) {
            EnvState env = env_path.empty() ? env_from(cfg, seed) : deserialize_env(read_file(env_path));
            std::ofstream trace_file;
            if (!trace_path.empty()) {
                trace_file.open(trace_path, std::ios::binary);
                if (!trace_file) throw Error("cannot write " + trace_path);
            }
            EpisodeOptions opt;
            opt.trace_out = trace_path.empty() ? nullptr : &trace_file;
            opt.tree_depth = tree_depth;
            json report;
            if (policy_name == "remote") {
                int listen_fd = -1;
                auto channel = open_endpoint(endpoint, listen_fd);
                RemoteOptions ropt = cfg.remote;
                if (tree_depth >= 0) ropt.tree_depth = tree_depth;
                const RemoteSession s = serve_remote_episode(env, *channel, ropt, opt.trace_out);
                report = to_json(s.outcome.row);
                report["timeouts"] = s.timeouts;
                if (listen_fd >= 0) ::close(listen_fd);
                if (endpoint.stdio && report_path.empty()) {
                    std::cerr << report.dump(1) << "\n";
                    return 0;
                }
            } else {
                auto policy = make_policy(policy_name, seed);
                report = to_json(run_episode(std::move(env), *policy, opt).row);
            }
            report["policy"] = policy_name;
            write_output(report_path, report.dump(1) + "\n");
            return 0;
        }

        if (*eval) {
            SuiteConfig suite_cfg;
            suite_cfg.seed = seed;
            suite_cfg.episodes_per_test = cfg.episodes_per_test;
            suite_cfg.malfunction = cfg.malfunction;
            suite_cfg.reward_config = cfg.reward;
            RoundOptions ropt;
            ropt.wall_budget_seconds = cfg.wall_budget_seconds;
            ropt.workers = cfg.workers;
            ropt.max_tests = cfg.max_tests;
            ropt.policy_name = policy_name;
            const auto factory = named_policy_factory(policy_name);
            const RunReport report = round == 1 ? run_round1(round1_suite(suite_cfg), factory, ropt)
                                                : run_round2(suite_cfg, factory, ropt);
            write_output(report_path, to_json(report).dump(1) + "\n");
            if (!report.scored()) {
                std::cerr << "FAILED: " << report.stop_reason << "\n";
                return 1;
            }
            return 0;
        }

        if (*render) {
            EnvState state;
            if (!trace_path.empty()) {
                std::ifstream in(trace_path, std::ios::binary);
                const ParsedTrace trace = read_trace(in);
                state = replay(trace, render_step < 0 ? std::numeric_limits<int>::max() : render_step);
            } else if (!env_path.empty()) {
                state = deserialize_env(read_file(env_path));
            } else {
                throw Error("render needs --env or --trace");
            }
            write_output(out_path, render_svg(state));
            return 0;
        }

        if (*serve) {
            const EnvState env = deserialize_env(read_file(env_path));
            int listen_fd = -1;
            for (int i = 0; i < std::max(1, episodes); ++i) {
                auto channel = open_endpoint(endpoint, listen_fd);
                std::ofstream trace_file;
                if (!trace_path.empty()) trace_file.open(trace_path, std::ios::binary);
                try {
                    const RemoteSession s =
                        serve_remote_episode(env, *channel, cfg.remote, trace_path.empty() ? nullptr : &trace_file);
                    std::cerr << "session " << i << ": completion " << s.outcome.row.completion << ", timeouts "
                              << s.timeouts << "\n";
                } catch (const ProtocolError& e) {
                    std::cerr << "session " << i << ": protocol error: " << e.what() << "\n";
                    if (endpoint.stdio) return 3;
                }
                if (endpoint.stdio) break;
            }
            if (listen_fd >= 0) ::close(listen_fd);
            return 0;
        }
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
