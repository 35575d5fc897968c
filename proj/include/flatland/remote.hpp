#pragma once

// Remote agents over newline-delimited JSON on a file descriptor pair
// (stdio, a socketpair or a TCP connection).
//
// server -> client: {"type":"reset","t":0,"env":{...},"obs":[...]}
//                   {"type":"obs","t":T,"obs":[...],"rewards":[...]}
//                   {"type":"done","report":{...}}
//                   {"type":"error","message":"..."}
// client -> server: {"type":"act","t":T,"actions":[...]}   ("t" optional)
//
// Actions are integers 0..4 or the names noop/left/forward/right/halt. An
// act whose "t" does not match the current step is dropped. If no valid act
// arrives before the deadline the step runs with every agent on NoOp.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "flatland/env_file.hpp"
#include "flatland/harness.hpp"
#include "flatland/observations.hpp"
#include "flatland/policies.hpp"
#include "flatland/sim_core.hpp"
#include "flatland/trace.hpp"

namespace flatland {

class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Raised by callers that treat a missed deadline as fatal; the session
/// itself only counts misses.
class PolicyTimeout : public Error {
public:
    using Error::Error;
};

class LineChannel {
public:
    LineChannel(int in_fd, int out_fd, bool owns = false) : in_(in_fd), out_(out_fd), owns_(owns) {}
    explicit LineChannel(int fd, bool owns = false) : LineChannel(fd, fd, owns) {}
    LineChannel(const LineChannel&) = delete;
    LineChannel& operator=(const LineChannel&) = delete;
    ~LineChannel() { close(); }

    void close() {
        if (!owns_) return;
        owns_ = false;
        ::close(in_);
        if (out_ != in_) ::close(out_);
    }

    void send(const nlohmann::json& message) { send_line(message.dump()); }

    void send_line(std::string_view line) {
        std::string data(line);
        data.push_back('\n');
        std::size_t off = 0;
        while (off < data.size()) {
            ssize_t n = ::send(out_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
            if (n < 0 && errno == ENOTSOCK) n = ::write(out_, data.data() + off, data.size() - off);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw ProtocolError(std::string("write failed: ") + std::strerror(errno));
            }
            off += static_cast<std::size_t>(n);
        }
    }

    /// Next line without its newline; nullopt on timeout. Throws on end of stream.
    std::optional<std::string> read_line(std::chrono::milliseconds timeout) {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        for (;;) {
            if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
                std::string line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return line;
            }
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline -
                                                                                   std::chrono::steady_clock::now());
            if (left.count() < 0) return std::nullopt;
            pollfd pfd{in_, POLLIN, 0};
            const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
            if (ready < 0) {
                if (errno == EINTR) continue;
                throw ProtocolError(std::string("poll failed: ") + std::strerror(errno));
            }
            if (ready == 0) return std::nullopt;
            char chunk[4096];
            const ssize_t n = ::read(in_, chunk, sizeof chunk);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw ProtocolError(std::string("read failed: ") + std::strerror(errno));
            }
            if (n == 0) throw ProtocolError("peer closed the connection");
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    /// Blocking read of one JSON message.
    nlohmann::json read_message(std::chrono::milliseconds timeout = std::chrono::hours(24)) {
        auto line = read_line(timeout);
        if (!line) throw PolicyTimeout("no message before the deadline");
        try {
            return nlohmann::json::parse(*line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ProtocolError(std::string("malformed JSON: ") + e.what());
        }
    }

private:
    int in_;
    int out_;
    bool owns_;
    std::string buffer_;
};

inline Action parse_action(const nlohmann::json& v) {
    if (v.is_number_integer()) {
        const auto i = v.get<std::int64_t>();
        if (i < 0 || i >= kActionCount) throw ProtocolError("action out of range: " + std::to_string(i));
        return static_cast<Action>(i);
    }
    if (v.is_string()) {
        const auto& s = v.get_ref<const std::string&>();
        if (s == "noop") return Action::NoOp;
        if (s == "left") return Action::Left;
        if (s == "forward") return Action::Forward;
        if (s == "right") return Action::Right;
        if (s == "halt") return Action::Halt;
        throw ProtocolError("unknown action '" + s + "'");
    }
    throw ProtocolError("action must be an integer or a name");
}

/// Per-agent observation sent to remote clients. With tree_depth >= 0 active
/// agents also carry their flattened tree.
inline nlohmann::json remote_observation(const EnvState& state, int tree_depth, DistanceMapCache& cache) {
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i = 0; i < state.agents.size(); ++i) {
        const Agent& a = state.agents[i];
        nlohmann::json j = agent_snapshot(a);
        j["id"] = i;
        j["target"] = {a.target.x, a.target.y};
        if (tree_depth >= 0 && a.active()) {
            nlohmann::json values = nlohmann::json::array();
            for (double v : flatten_tree(build_tree_observation(state, i, tree_depth, cache.get(state.grid, a.target)),
                                         tree_depth)) {
                values.push_back(finite_or_string(v));
            }
            j["tree"] = std::move(values);
        }
        out.push_back(std::move(j));
    }
    return out;
}

struct RemoteOptions {
    std::chrono::milliseconds step_deadline{100};
    int tree_depth = -1;
};

/// Policy whose actions come from the peer of a LineChannel.
class RemotePolicy final : public Policy {
public:
    RemotePolicy(LineChannel& channel, RemoteOptions opt) : channel_(&channel), opt_(opt) {}

    std::string_view name() const override { return "remote"; }
    int timeouts() const noexcept { return timeouts_; }

    void reset(const EnvState& state) override {
        cache_.clear();
        channel_->send({{"type", "reset"},
                        {"t", state.t},
                        {"env", to_json(to_env_file(state))},
                        {"obs", remote_observation(state, opt_.tree_depth, cache_)}});
    }

    void after_step(const EnvState& state, const StepResult& result) override {
        if (state.done) return;
        channel_->send({{"type", "obs"},
                        {"t", state.t},
                        {"obs", remote_observation(state, opt_.tree_depth, cache_)},
                        {"rewards", result.rewards}});
    }

    Action act(const EnvState& state, std::size_t agent_id) override { return act_all(state).at(agent_id); }

    std::vector<Action> act_all(const EnvState& state) override {
        const auto deadline = std::chrono::steady_clock::now() + opt_.step_deadline;
        for (;;) {
            const auto left =
                std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
            std::optional<std::string> line;
            if (left.count() >= 0) line = channel_->read_line(left);
            if (!line) {
                ++timeouts_;
                return std::vector<Action>(state.agents.size(), Action::NoOp);
            }
            if (line->empty()) continue;
            nlohmann::json msg;
            try {
                msg = nlohmann::json::parse(*line);
            } catch (const nlohmann::json::parse_error& e) {
                fail(std::string("malformed JSON: ") + e.what());
            }
            if (!msg.is_object() || msg.value("type", "") != "act") fail("expected an act message");
            if (msg.contains("t") && msg["t"] != state.t) continue;  // stale
            const auto it = msg.find("actions");
            if (it == msg.end() || !it->is_array()) fail("act message needs an actions array");
            if (it->size() != state.agents.size()) {
                fail("expected " + std::to_string(state.agents.size()) + " actions, got " +
                     std::to_string(it->size()));
            }
            std::vector<Action> out;
            try {
                for (const auto& v : *it) out.push_back(parse_action(v));
            } catch (const ProtocolError& e) {
                fail(e.what());
            }
            return out;
        }
    }

private:
    [[noreturn]] void fail(const std::string& message) {
        try {
            channel_->send({{"type", "error"}, {"message", message}});
        } catch (const ProtocolError&) {
        }
        channel_->close();
        throw ProtocolError(message);
    }

    LineChannel* channel_;
    RemoteOptions opt_;
    DistanceMapCache cache_;
    int timeouts_ = 0;
};

struct RemoteSession {
    EpisodeOutcome outcome;
    int timeouts = 0;
};

/// Runs one episode driven by the peer and closes with a done message.
inline RemoteSession serve_remote_episode(const EnvState& env, LineChannel& channel, const RemoteOptions& opt = {},
                                          std::ostream* trace_out = nullptr) {
    RemotePolicy policy(channel, opt);
    EpisodeOptions eopt;
    eopt.trace_out = trace_out;
    RemoteSession s;
    s.outcome = run_episode(env, policy, eopt);
    s.timeouts = policy.timeouts();
    nlohmann::json report = to_json(s.outcome.row);
    report["timeouts"] = s.timeouts;
    channel.send({{"type", "done"}, {"report", std::move(report)}});
    return s;
}

// ---------------------------------------------------------------------------
// TCP helpers

inline int listen_tcp(std::uint16_t port, const std::string& host = "127.0.0.1") {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw Error(std::string("socket: ") + std::strerror(errno));
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        throw Error("invalid listen address " + host);
    }
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(fd, 4) < 0) {
        const std::string err = std::strerror(errno);
        ::close(fd);
        throw Error("cannot listen on " + host + ":" + std::to_string(port) + ": " + err);
    }
    return fd;
}

inline std::uint16_t bound_port(int listen_fd) {
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd, reinterpret_cast<sockaddr*>(&addr), &len);
    return ntohs(addr.sin_port);
}

inline int accept_tcp(int listen_fd) {
    for (;;) {
        const int fd = ::accept(listen_fd, nullptr, nullptr);
        if (fd >= 0) return fd;
        if (errno != EINTR) throw Error(std::string("accept: ") + std::strerror(errno));
    }
}

inline int connect_tcp(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
        throw Error("cannot resolve " + host);
    }
    const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    const int rc = fd < 0 ? -1 : ::connect(fd, res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc < 0) {
        if (fd >= 0) ::close(fd);
        throw Error("cannot connect to " + host + ":" + std::to_string(port));
    }
    return fd;
}

}  // namespace flatland
