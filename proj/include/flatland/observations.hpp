#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <unordered_map>
#include <vector>

#include "flatland/rail_grid.hpp"
#include "flatland/sim_core.hpp"

namespace flatland {

class NotActive : public Error {
public:
    using Error::Error;
};

class DepthMismatch : public Error {
public:
    using Error::Error;
};

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();
inline constexpr double kAbsent = -std::numeric_limits<double>::infinity();

/// Steps to a target from every (cell, facing) state of the grid.
///
/// The target states (target, d) are 0 when some neighbouring state can move
/// into the target facing d. Unreachable states hold kUnreachable.
class DistanceMap {
public:
    static constexpr int kUnreachable = std::numeric_limits<int>::max();

    DistanceMap() = default;
    DistanceMap(int width, int height, Position target)
        : width_(width), height_(height), target_(target),
          dist_(static_cast<std::size_t>(width) * height * 4, kUnreachable) {}

    Position target() const noexcept { return target_; }
    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }

    int at(Position p, Direction d) const noexcept {
        if (p.x < 0 || p.y < 0 || p.x >= width_ || p.y >= height_) return kUnreachable;
        return dist_[slot(p, d)];
    }
    bool reachable(Position p, Direction d) const noexcept { return at(p, d) != kUnreachable; }
    /// Distance as a real number, +infinity when unreachable.
    double real(Position p, Direction d) const noexcept {
        const int v = at(p, d);
        return v == kUnreachable ? kInfinity : static_cast<double>(v);
    }

    void set(Position p, Direction d, int v) noexcept { dist_[slot(p, d)] = v; }
    std::span<const int> raw() const noexcept { return dist_; }

    friend bool operator==(const DistanceMap&, const DistanceMap&) = default;

private:
    std::size_t slot(Position p, Direction d) const noexcept {
        return (static_cast<std::size_t>(p.y) * width_ + p.x) * 4 + static_cast<std::size_t>(to_int(d));
    }

    int width_ = 0;
    int height_ = 0;
    Position target_;
    std::vector<int> dist_;
};

/// Backward breadth-first search from every entry into the target.
inline DistanceMap build_distance_map(const Grid& grid, Position target) {
    DistanceMap map(grid.width(), grid.height(), target);
    std::deque<std::pair<Position, Direction>> queue;
    auto expand_predecessors = [&](Position cell, Direction facing, int value) {
        const Position from = step_towards(cell, opposite(facing));
        if (!grid.contains(from) || from == target) return;
        for (Direction in : kAllDirections) {
            if (!grid.mask(from, in).contains(facing) || map.reachable(from, in)) continue;
            map.set(from, in, value + 1);
            queue.emplace_back(from, in);
        }
    };
    if (!grid.contains(target)) return map;
    for (Direction d : kAllDirections) {
        const Position from = step_towards(target, opposite(d));
        if (!grid.contains(from)) continue;
        for (Direction in : kAllDirections) {
            if (grid.mask(from, in).contains(d)) {
                map.set(target, d, 0);
                break;
            }
        }
    }
    for (Direction d : kAllDirections) {
        if (map.at(target, d) == 0) queue.emplace_back(target, d);
    }
    while (!queue.empty()) {
        auto [p, d] = queue.front();
        queue.pop_front();
        expand_predecessors(p, d, map.at(p, d));
    }
    return map;
}

/// Distance maps keyed by target cell, invalidated when the grid changes.
class DistanceMapCache {
public:
    const DistanceMap& get(const Grid& grid, Position target) {
        if (!(grid.width() == grid_.width() && grid.height() == grid_.height() && grid == grid_)) {
            grid_ = grid;
            maps_.clear();
        }
        const std::size_t key = grid.index(target);
        auto it = maps_.find(key);
        if (it == maps_.end()) it = maps_.emplace(key, build_distance_map(grid, target)).first;
        return it->second;
    }
    void clear() {
        maps_.clear();
        grid_ = Grid();
    }

private:
    Grid grid_;
    std::unordered_map<std::size_t, DistanceMap> maps_;
};

// ---------------------------------------------------------------------------
// Tree observation

enum TreeFeature : std::size_t {
    kOwnTargetDistance = 0,
    kOtherTargetDistance = 1,
    kOtherAgentDistance = 2,
    kConflict = 3,
    kUnusableSwitchDistance = 4,
    kSegmentLength = 5,
    kRemainingDistance = 6,
    kSameDirectionAgents = 7,
    kOppositeDirectionAgents = 8,
};
inline constexpr std::size_t kTreeFeatureCount = 9;

enum class Branch : std::uint8_t { Left = 0, Forward = 1, Right = 2, Backward = 3 };
inline constexpr std::array<Branch, 4> kBranchOrder{Branch::Left, Branch::Forward, Branch::Right, Branch::Backward};

constexpr Direction branch_direction(Direction facing, Branch b) noexcept {
    return rotate_clockwise(facing, b == Branch::Left ? 3 : b == Branch::Forward ? 0 : b == Branch::Right ? 1 : 2);
}

struct TreeNode {
    std::array<double, kTreeFeatureCount> features{};
    std::array<std::unique_ptr<TreeNode>, 4> children;  // Left, Forward, Right, Backward

    const TreeNode* child(Branch b) const noexcept { return children[static_cast<std::size_t>(b)].get(); }
};

struct TreeObservation {
    TreeNode root;
    int depth = 0;
};

inline std::size_t tree_node_count(int depth) {
    std::size_t n = 0, level = 1;
    for (int k = 0; k <= depth; ++k, level *= 4) n += level;
    return n;
}

inline std::size_t flattened_tree_size(int depth) { return kTreeFeatureCount * tree_node_count(depth); }

namespace detail {

class TreeBuilder {
public:
    TreeBuilder(const EnvState& state, std::size_t agent_id, const DistanceMap& own)
        : state_(state), self_(agent_id), own_(own), other_target_(state.grid.size(), 0),
          step_cap_(static_cast<int>(state.grid.size()) * 4) {
        for (const Agent& a : state.agents) {
            if (a.id != agent_id && a.status != AgentStatus::Done) other_target_[state.grid.index(a.target)] = 1;
        }
    }

    void expand(TreeNode& node, Position pos, Direction facing, int travelled, int depth_left) const {
        if (depth_left <= 0 || pos == target()) return;
        const DirectionMask exits = state_.grid.mask(pos, facing);
        for (Branch b : kBranchOrder) {
            const Direction out = branch_direction(facing, b);
            if (!exits.contains(out) || !state_.grid.contains(step_towards(pos, out))) continue;
            auto child = std::make_unique<TreeNode>();
            auto [end, end_facing, length] = walk(*child, pos, out, travelled);
            expand(*child, end, end_facing, travelled + length, depth_left - 1);
            node.children[static_cast<std::size_t>(b)] = std::move(child);
        }
    }

    Position target() const noexcept { return state_.agents[self_].target; }

private:
    struct WalkEnd {
        Position cell;
        Direction facing;
        int length;
    };

    WalkEnd walk(TreeNode& node, Position from, Direction out, int travelled) const {
        auto& f = node.features;
        f.fill(0.0);
        for (auto k : {kOwnTargetDistance, kOtherTargetDistance, kOtherAgentDistance, kUnusableSwitchDistance}) f[k] = kAbsent;
        auto first = [&](TreeFeature k, int v) {
            if (f[k] == kAbsent) f[k] = static_cast<double>(v);
        };

        const Grid& grid = state_.grid;
        Position p = step_towards(from, out);
        Direction d = out;
        int steps = 1;
        while (true) {
            const int here = travelled + steps;
            if (p == target()) first(kOwnTargetDistance, here);
            if (other_target_[grid.index(p)]) first(kOtherTargetDistance, here);
            const std::int32_t occ = state_.occupant(p);
            if (occ != kNoAgent && static_cast<std::size_t>(occ) != self_) {
                first(kOtherAgentDistance, here);
                const Direction od = state_.agents[static_cast<std::size_t>(occ)].direction;
                if (od == d) {
                    f[kSameDirectionAgents] += 1.0;
                } else if (od == opposite(d)) {
                    f[kOppositeDirectionAgents] += 1.0;
                    // both keep moving: they meet halfway, inside this segment iff past its start
                    if (here > 2 * travelled) f[kConflict] = 1.0;
                }
            }
            const DirectionMask m = grid.mask(p, d);
            if (is_switch(grid[p]) && m.count() < 2) first(kUnusableSwitchDistance, here);

            const auto next = m.only();
            if (p == target() || !next || *next == opposite(d) || steps >= step_cap_ ||
                !grid.contains(step_towards(p, *next))) {
                break;
            }
            p = step_towards(p, *next);
            d = *next;
            ++steps;
        }
        f[kSegmentLength] = static_cast<double>(steps);
        f[kRemainingDistance] = p == target() ? 0.0 : own_.real(p, d);
        return {p, d, steps};
    }

    const EnvState& state_;
    std::size_t self_;
    const DistanceMap& own_;
    std::vector<std::uint8_t> other_target_;
    int step_cap_;
};

}  // namespace detail

/// Four-branched tree from the agent's pose. Branches follow the agent's
/// relative left, forward, right and (at dead ends) backward exits; each
/// branch walks until a switch with a choice, a dead end or the own target.
inline TreeObservation build_tree_observation(const EnvState& state, std::size_t agent_id, int depth,
                                              const DistanceMap& own) {
    const Agent& a = state.agents.at(agent_id);
    if (!a.active()) throw NotActive("agent " + std::to_string(agent_id) + " is not on the map");
    if (depth < 1) throw Error("tree depth must be at least 1");
    TreeObservation tree;
    tree.depth = depth;
    auto& f = tree.root.features;
    f.fill(0.0);
    for (auto k : {kOwnTargetDistance, kOtherTargetDistance, kOtherAgentDistance, kUnusableSwitchDistance}) f[k] = kAbsent;
    f[kRemainingDistance] = own.real(a.position, a.direction);
    detail::TreeBuilder builder(state, agent_id, own);
    builder.expand(tree.root, a.position, a.direction, 0, depth);
    return tree;
}

inline TreeObservation build_tree_observation(const EnvState& state, std::size_t agent_id, int depth) {
    const Agent& a = state.agents.at(agent_id);
    if (!a.active()) throw NotActive("agent " + std::to_string(agent_id) + " is not on the map");
    return build_tree_observation(state, agent_id, depth, build_distance_map(state.grid, a.target));
}

namespace detail {
inline void flatten_into(const TreeNode* node, int depth_left, std::vector<double>& out) {
    if (!node) {
        out.insert(out.end(), flattened_tree_size(depth_left), kAbsent);
        return;
    }
    out.insert(out.end(), node->features.begin(), node->features.end());
    for (std::size_t b = 0; b < 4; ++b) {
        if (depth_left == 0) {
            if (node->children[b]) throw DepthMismatch("tree is deeper than the requested depth");
            continue;
        }
        flatten_into(node->children[b].get(), depth_left - 1, out);
    }
}
}  // namespace detail

/// Pre-order (node, then Left, Forward, Right, Backward) with absent subtrees
/// padded by -infinity; length depends on depth only.
inline std::vector<double> flatten_tree(const TreeObservation& tree, int depth) {
    if (tree.depth != depth) {
        throw DepthMismatch("tree built with depth " + std::to_string(tree.depth) + ", flattened with " +
                            std::to_string(depth));
    }
    std::vector<double> out;
    out.reserve(flattened_tree_size(depth));
    detail::flatten_into(&tree.root, depth, out);
    return out;
}

// ---------------------------------------------------------------------------
// Global observation

inline constexpr int kGlobalChannels = 5;

struct GlobalObservation {
    int height = 0;
    int width = 0;
    std::vector<double> data;  // [y][x][channel]

    double at(int y, int x, int channel) const {
        return data.at((static_cast<std::size_t>(y) * width + x) * kGlobalChannels + channel);
    }
    double& at(int y, int x, int channel) {
        return data.at((static_cast<std::size_t>(y) * width + x) * kGlobalChannels + channel);
    }
};

constexpr double encode_direction(Direction d) noexcept { return (to_int(d) + 1) / 4.0; }

/// Channels: 0 own pose, 1 other poses, 2 malfunction counters, 3 speeds,
/// 4 waiting agents per start cell. Poses store (direction + 1) / 4.
inline GlobalObservation build_global_observation(const EnvState& state, std::size_t agent_id) {
    GlobalObservation obs;
    obs.height = state.grid.height();
    obs.width = state.grid.width();
    obs.data.assign(static_cast<std::size_t>(obs.height) * obs.width * kGlobalChannels, 0.0);
    for (const Agent& a : state.agents) {
        if (a.active()) {
            const int channel = a.id == agent_id ? 0 : 1;
            obs.at(a.position.y, a.position.x, channel) = encode_direction(a.direction);
            obs.at(a.position.y, a.position.x, 2) = static_cast<double>(a.malfunction_remaining);
            obs.at(a.position.y, a.position.x, 3) = a.speed;
        } else if (a.status == AgentStatus::ReadyToDepart) {
            obs.at(a.start.y, a.start.x, 4) += 1.0;
        }
    }
    return obs;
}

// ---------------------------------------------------------------------------
// Density observation

inline double density_value(int t, int t_max) {
    return std::exp(-static_cast<double>(t) / std::sqrt(static_cast<double>(t_max)));
}

struct ProjectedCell {
    Position cell;
    int t;
};

/// Greedy descent of the distance map from the agent's pose, at most t_max
/// steps. Waiting agents start at their start cell with t = 1.
inline std::vector<ProjectedCell> project_shortest_path(const EnvState& state, const Agent& a, const DistanceMap& map,
                                                        int t_max) {
    std::vector<ProjectedCell> path;
    if (a.status == AgentStatus::Done) return path;
    Position p = a.active() ? a.position : a.start;
    Direction d = a.active() ? a.direction : a.start_direction;
    int t = a.active() ? 0 : 1;
    if (t > t_max) return path;
    path.push_back({p, t});
    while (t < t_max && p != a.target && map.reachable(p, d)) {
        const DirectionMask m = state.grid.mask(p, d);
        std::optional<Direction> best;
        int best_dist = DistanceMap::kUnreachable;
        for (Branch b : kBranchOrder) {
            const Direction out = branch_direction(d, b);
            if (!m.contains(out)) continue;
            const Position n = step_towards(p, out);
            const int v = map.at(n, out);
            if (v < best_dist) {
                best_dist = v;
                best = out;
            }
        }
        if (!best) break;
        p = step_towards(p, *best);
        d = *best;
        ++t;
        path.push_back({p, t});
    }
    return path;
}

struct DensityObservation {
    int height = 0;
    int width = 0;
    std::vector<double> own;     // [y][x]
    std::vector<double> others;  // [y][x], mean over all other agents
};

inline DensityObservation build_density_observation(const EnvState& state, std::size_t agent_id, int t_max,
                                                    DistanceMapCache& cache) {
    if (t_max < 1) throw Error("t_max must be at least 1");
    DensityObservation obs;
    obs.height = state.grid.height();
    obs.width = state.grid.width();
    const std::size_t cells = state.grid.size();
    obs.own.assign(cells, 0.0);
    obs.others.assign(cells, 0.0);
    std::vector<double> scratch(cells);
    for (const Agent& a : state.agents) {
        std::fill(scratch.begin(), scratch.end(), 0.0);
        if (a.status != AgentStatus::Done) {
            const DistanceMap& map = cache.get(state.grid, a.target);
            for (const auto& pc : project_shortest_path(state, a, map, t_max)) {
                double& v = scratch[state.grid.index(pc.cell)];
                v = std::max(v, density_value(pc.t, t_max));
            }
        }
        auto& dst = a.id == agent_id ? obs.own : obs.others;
        for (std::size_t i = 0; i < cells; ++i) dst[i] += scratch[i];
    }
    if (state.agents.size() > 1) {
        const double others = static_cast<double>(state.agents.size() - 1);
        for (double& v : obs.others) v /= others;
    }
    return obs;
}

inline DensityObservation build_density_observation(const EnvState& state, std::size_t agent_id, int t_max) {
    DistanceMapCache cache;
    return build_density_observation(state, agent_id, t_max, cache);
}

}  // namespace flatland
