#pragma once

// Episode traces as newline-delimited JSON: one header record, one record per
// step, one summary record. Infinite observation values are written as the
// strings "inf" and "-inf".

#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flatland/env_file.hpp"
#include "flatland/rewards.hpp"
#include "flatland/sim_core.hpp"

namespace flatland {

inline constexpr std::string_view kTraceVersion = "flatland-trace/1";

inline nlohmann::json finite_or_string(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

inline double number_or_infinity(const nlohmann::json& v) {
    if (v.is_string()) {
        const auto& s = v.get_ref<const std::string&>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw Error("expected a number or \"inf\"/\"-inf\", got \"" + s + "\"");
    }
    return v.get<double>();
}

inline nlohmann::json agent_snapshot(const Agent& a) {
    nlohmann::json j{{"status", to_string(a.status)}, {"malfunction", a.malfunction_remaining}};
    if (a.active()) {
        j["position"] = {a.position.x, a.position.y};
        j["direction"] = std::string(1, direction_letter(a.direction));
    }
    return j;
}

inline nlohmann::json trace_header(const EnvState& initial, std::string_view policy) {
    return {{"type", "header"}, {"version", kTraceVersion}, {"policy", policy}, {"env", to_json(to_env_file(initial))}};
}

/// `trees` holds one flattened tree per agent (empty for inactive agents) when exported.
inline nlohmann::json trace_step(const EnvState& after, std::span<const Action> actions, const StepResult& result,
                                 const std::vector<std::vector<double>>* trees = nullptr) {
    nlohmann::json acts = nlohmann::json::array();
    for (Action a : actions) acts.push_back(to_int(a));
    nlohmann::json agents = nlohmann::json::array();
    for (const Agent& a : after.agents) agents.push_back(agent_snapshot(a));
    nlohmann::json illegal = nlohmann::json::array();
    for (std::size_t i = 0; i < result.info.illegal.size(); ++i) {
        if (result.info.illegal[i]) illegal.push_back(i);
    }
    nlohmann::json j{{"type", "step"},   {"t", after.t},         {"actions", std::move(acts)},
                     {"rewards", result.rewards}, {"agents", std::move(agents)}, {"illegal", std::move(illegal)}};
    if (trees) {
        nlohmann::json tj = nlohmann::json::array();
        for (const auto& tree : *trees) {
            nlohmann::json values = nlohmann::json::array();
            for (double v : tree) values.push_back(finite_or_string(v));
            tj.push_back(std::move(values));
        }
        j["trees"] = std::move(tj);
    }
    return j;
}

inline nlohmann::json trace_summary(const EpisodeTrace& trace) {
    std::vector<double> returns;
    std::size_t done = 0;
    for (std::size_t i = 0; i < trace.agent_count(); ++i) {
        returns.push_back(episode_return(trace, i));
        if (trace.completed[i]) ++done;
    }
    const double completion = trace.agent_count() ? static_cast<double>(done) / trace.agent_count() : 1.0;
    return {{"type", "summary"},
            {"steps", trace.steps},
            {"max_steps", trace.max_steps},
            {"completed", trace.completed},
            {"returns", returns},
            {"completion", completion}};
}

/// Streams records to `out`, one line each.
class TraceWriter {
public:
    explicit TraceWriter(std::ostream& out) : out_(&out) {}
    void write(const nlohmann::json& record) { *out_ << record.dump() << '\n'; }

private:
    std::ostream* out_;
};

/// What a trace file holds once read back.
struct ParsedTrace {
    nlohmann::json header;
    std::vector<nlohmann::json> steps;
    std::optional<nlohmann::json> summary;
};

inline ParsedTrace read_trace(std::istream& in) {
    ParsedTrace out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("line " + std::to_string(line_no), e.what());
        }
        const std::string type = j.value("type", "");
        if (type == "header") {
            out.header = std::move(j);
        } else if (type == "step") {
            out.steps.push_back(std::move(j));
        } else if (type == "summary") {
            out.summary = std::move(j);
        } else {
            throw ParseError("line " + std::to_string(line_no), "unknown record type '" + type + "'");
        }
    }
    if (out.header.is_null()) throw ParseError("line 1", "missing header record");
    return out;
}

/// Rebuilds per-agent rewards from the step records alone.
inline EpisodeTrace episode_from_trace(const ParsedTrace& parsed) {
    const EnvFile env = env_file_from_json(parsed.header.at("env"));
    EpisodeTrace trace;
    trace.reward_config = env.reward_config;
    trace.max_steps = env.max_steps;
    trace.rewards.assign(env.tasks.size(), {});
    trace.completed.assign(env.tasks.size(), false);
    for (const auto& step : parsed.steps) {
        const auto& rewards = step.at("rewards");
        const auto& agents = step.at("agents");
        if (rewards.size() != env.tasks.size() || agents.size() != env.tasks.size()) {
            throw ParseError("step " + std::to_string(step.value("t", -1)), "agent count mismatch");
        }
        for (std::size_t i = 0; i < env.tasks.size(); ++i) {
            trace.rewards[i].push_back(rewards[i].get<double>());
            trace.completed[i] = agents[i].at("status") == "done";
        }
        trace.steps = step.at("t").get<int>();
    }
    return trace;
}

}  // namespace flatland
