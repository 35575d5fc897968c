#pragma once

// Environment files: a versioned JSON document whose cell payload is the
// row-major array of 16-bit codes, little-endian, base64 encoded.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "flatland/rail_grid.hpp"
#include "flatland/rewards.hpp"
#include "flatland/sim_core.hpp"

namespace flatland {

inline constexpr std::string_view kEnvFileVersion = "flatland-env/1";

/// Malformed input. `location` is a JSON pointer or "byte N".
class ParseError : public Error {
public:
    ParseError(std::string location, const std::string& what)
        : Error(location + ": " + what), location_(std::move(location)) {}
    const std::string& location() const noexcept { return location_; }

private:
    std::string location_;
};

namespace base64 {

inline constexpr std::string_view kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string encode(const std::vector<std::uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (std::uint32_t{bytes[i]} << 16) | (std::uint32_t{bytes[i + 1]} << 8) | bytes[i + 2];
        for (int shift : {18, 12, 6, 0}) out.push_back(kAlphabet[(v >> shift) & 63U]);
    }
    const std::size_t rest = bytes.size() - i;
    if (rest > 0) {
        std::uint32_t v = std::uint32_t{bytes[i]} << 16;
        if (rest == 2) v |= std::uint32_t{bytes[i + 1]} << 8;
        out.push_back(kAlphabet[(v >> 18) & 63U]);
        out.push_back(kAlphabet[(v >> 12) & 63U]);
        out.push_back(rest == 2 ? kAlphabet[(v >> 6) & 63U] : '=');
        out.push_back('=');
    }
    return out;
}

/// Strict decoder: padded input only, no whitespace.
inline std::vector<std::uint8_t> decode(std::string_view text) {
    auto value = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    if (text.size() % 4 != 0) throw Error("base64 length is not a multiple of 4");
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        const bool last = i + 4 == text.size();
        int pad = 0;
        std::uint32_t v = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            const char c = text[i + k];
            if (c == '=' && last && k >= 2) {
                ++pad;
                v <<= 6;
                continue;
            }
            const int d = value(c);
            if (d < 0 || pad > 0) throw Error("invalid base64 character at offset " + std::to_string(i + k));
            v = (v << 6) | static_cast<std::uint32_t>(d);
        }
        out.push_back(static_cast<std::uint8_t>(v >> 16));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
    }
    return out;
}

}  // namespace base64

/// Two bytes per cell, row-major, low byte first.
inline std::vector<std::uint8_t> cell_payload(const Grid& grid) {
    std::vector<std::uint8_t> out;
    out.reserve(grid.size() * 2);
    for (CellTransitions c : grid.cells()) {
        out.push_back(static_cast<std::uint8_t>(c.code() & 0xFFU));
        out.push_back(static_cast<std::uint8_t>(c.code() >> 8));
    }
    return out;
}

inline std::optional<Direction> direction_from_letter(std::string_view s) {
    if (s.size() != 1) return std::nullopt;
    switch (s[0]) {
        case 'N': return Direction::North;
        case 'E': return Direction::East;
        case 'S': return Direction::South;
        case 'W': return Direction::West;
        default: return std::nullopt;
    }
}

struct EnvFile {
    int width = 0;
    int height = 0;
    std::vector<std::uint16_t> cells;
    std::vector<AgentTask> tasks;
    MalfunctionParams malfunction;
    RewardConfig reward_config;
    std::uint64_t seed = 0;
    int max_steps = 0;

    friend bool operator==(const EnvFile&, const EnvFile&) = default;
};

/// Captures the t = 0 description of a state (tasks, not live positions).
inline EnvFile to_env_file(const EnvState& state) {
    EnvFile f;
    f.width = state.grid.width();
    f.height = state.grid.height();
    for (CellTransitions c : state.grid.cells()) f.cells.push_back(c.code());
    f.tasks = state.tasks();
    f.malfunction = state.malfunction;
    f.reward_config = state.reward_config;
    f.seed = state.seed;
    f.max_steps = state.max_steps;
    return f;
}

inline nlohmann::json to_json(const EnvFile& f) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(f.cells.size() * 2);
    for (std::uint16_t c : f.cells) {
        bytes.push_back(static_cast<std::uint8_t>(c & 0xFFU));
        bytes.push_back(static_cast<std::uint8_t>(c >> 8));
    }
    nlohmann::json agents = nlohmann::json::array();
    for (const auto& t : f.tasks) {
        agents.push_back({{"start", {t.start.x, t.start.y}},
                          {"direction", std::string(1, direction_letter(t.direction))},
                          {"target", {t.target.x, t.target.y}}});
    }
    return {
        {"version", kEnvFileVersion},
        {"width", f.width},
        {"height", f.height},
        {"cells", base64::encode(bytes)},
        {"agents", std::move(agents)},
        {"malfunction",
         {{"probability", f.malfunction.probability},
          {"min_duration", f.malfunction.min_duration},
          {"max_duration", f.malfunction.max_duration}}},
        {"reward",
         {{"alpha", f.reward_config.alpha},
          {"beta", f.reward_config.beta},
          {"illegal_penalty", f.reward_config.illegal_penalty}}},
        {"seed", f.seed},
        {"max_steps", f.max_steps},
    };
}

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) throw ParseError(path.empty() ? "/" : path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(path + "/" + key, "missing field");
    return *it;
}

template <typename T>
T get_as(const nlohmann::json& obj, const std::string& key, const std::string& path) {
    const auto& v = field(obj, key, path);
    try {
        return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + "/" + key, e.what());
    }
}

inline int get_int(const nlohmann::json& obj, const std::string& key, const std::string& path) {
    const auto& v = field(obj, key, path);
    if (!v.is_number_integer()) throw ParseError(path + "/" + key, "expected an integer");
    return v.get<int>();
}

inline double get_number(const nlohmann::json& obj, const std::string& key, const std::string& path) {
    const auto& v = field(obj, key, path);
    if (!v.is_number()) throw ParseError(path + "/" + key, "expected a number");
    return v.get<double>();
}

inline Position get_position(const nlohmann::json& obj, const std::string& key, const std::string& path) {
    const auto& v = field(obj, key, path);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
        throw ParseError(path + "/" + key, "expected [x, y]");
    }
    return {v[0].get<int>(), v[1].get<int>()};
}

}  // namespace detail

inline EnvFile env_file_from_json(const nlohmann::json& j) {
    using namespace detail;
    const auto version = get_as<std::string>(j, "version", "");
    if (version != kEnvFileVersion) throw ParseError("/version", "unsupported version '" + version + "'");
    EnvFile f;
    f.width = get_int(j, "width", "");
    f.height = get_int(j, "height", "");
    if (f.width <= 0 || f.height <= 0) throw ParseError("/width", "dimensions must be positive");
    std::vector<std::uint8_t> bytes;
    try {
        bytes = base64::decode(get_as<std::string>(j, "cells", ""));
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        throw ParseError("/cells", e.what());
    }
    const std::size_t n = static_cast<std::size_t>(f.width) * static_cast<std::size_t>(f.height);
    if (bytes.size() != 2 * n) {
        throw ParseError("/cells", "payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                                       std::to_string(2 * n));
    }
    f.cells.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        f.cells[i] = static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
    }
    const auto& agents = field(j, "agents", "");
    if (!agents.is_array()) throw ParseError("/agents", "expected an array");
    for (std::size_t i = 0; i < agents.size(); ++i) {
        const std::string path = "/agents/" + std::to_string(i);
        AgentTask t;
        t.start = get_position(agents[i], "start", path);
        t.target = get_position(agents[i], "target", path);
        const auto d = direction_from_letter(get_as<std::string>(agents[i], "direction", path));
        if (!d) throw ParseError(path + "/direction", "expected one of N, E, S, W");
        t.direction = *d;
        f.tasks.push_back(t);
    }
    const auto& m = field(j, "malfunction", "");
    f.malfunction.probability = get_number(m, "probability", "/malfunction");
    f.malfunction.min_duration = get_int(m, "min_duration", "/malfunction");
    f.malfunction.max_duration = get_int(m, "max_duration", "/malfunction");
    const auto& r = field(j, "reward", "");
    f.reward_config.alpha = get_number(r, "alpha", "/reward");
    f.reward_config.beta = get_number(r, "beta", "/reward");
    f.reward_config.illegal_penalty = get_number(r, "illegal_penalty", "/reward");
    const auto& seed = field(j, "seed", "");
    if (!seed.is_number_unsigned()) throw ParseError("/seed", "expected an unsigned integer");
    f.seed = seed.get<std::uint64_t>();
    f.max_steps = get_int(j, "max_steps", "");
    return f;
}

inline EnvState to_env_state(const EnvFile& f) {
    std::vector<CellTransitions> cells;
    cells.reserve(f.cells.size());
    for (std::uint16_t c : f.cells) cells.emplace_back(c);
    try {
        return reset(Grid(f.width, f.height, std::move(cells)), f.tasks, f.malfunction, f.reward_config, f.seed,
                     f.max_steps);
    } catch (const InvalidTask& e) {
        throw ParseError("/agents", e.what());
    } catch (const Error& e) {
        throw ParseError("/", e.what());
    }
}

/// Pretty-printed with sorted keys and a trailing newline, so equal states
/// give equal bytes.
inline std::string serialize_env(const EnvState& state) { return to_json(to_env_file(state)).dump(1) + "\n"; }

inline EnvFile parse_env_file(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("byte " + std::to_string(e.byte), e.what());
    }
    return env_file_from_json(j);
}

inline EnvState deserialize_env(std::string_view text) { return to_env_state(parse_env_file(text)); }

}  // namespace flatland
