#pragma once

// Sparse railway generation and agent task assignment.
//
// Cities are short horizontal stations: one main track, or with two tracks a
// crossover whose platforms are fused by simple switches at both ends.
// Consecutive cities (and optionally the last and first) are joined by
// corridors found with a turn-penalised search whose every step keeps the
// touched cell a valid case. Long straights get equal-length passing loops.
// Unused station ends are closed with dead ends.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "flatland/rail_grid.hpp"
#include "flatland/random.hpp"

namespace flatland {

class GenerationFailed : public Error {
public:
    using Error::Error;
};

class TaskAssignmentFailed : public Error {
public:
    using Error::Error;
};

struct GeneratorParams {
    int width = 25;
    int height = 25;
    int n_cities = 2;
    int n_agents = 5;
    int max_parallel_tracks = 2;
    bool passing_loops = true;
    bool close_ring = true;
    bool grid_mode = false;
    std::uint64_t seed = 0;

    friend bool operator==(const GeneratorParams&, const GeneratorParams&) = default;
};

struct City {
    Position center;
    std::vector<Position> station_tracks;

    friend bool operator==(const City&, const City&) = default;
};

struct GeneratedRail {
    Grid grid;
    std::vector<City> cities;
};

struct AgentTask {
    Position start;
    Direction direction = Direction::North;
    Position target;

    friend bool operator==(const AgentTask&, const AgentTask&) = default;
};

/// Undirected track pieces inside one cell: pairs of sides joined by rail,
/// plus dead-end stubs open to one side.
class LinkSet {
public:
    constexpr LinkSet() = default;

    static constexpr int pair_index(Direction a, Direction b) noexcept {
        int lo = std::min(to_int(a), to_int(b));
        int hi = std::max(to_int(a), to_int(b));
        constexpr std::array<int, 16> table{-1, 0, 1, 2, 0, -1, 3, 4, 1, 3, -1, 5, 2, 4, 5, -1};
        return table[static_cast<std::size_t>(lo * 4 + hi)];
    }

    constexpr LinkSet with_pair(Direction a, Direction b) const noexcept {
        LinkSet s = *this;
        s.bits_ |= static_cast<std::uint16_t>(1U << pair_index(a, b));
        return s;
    }
    constexpr LinkSet with_stub(Direction side) const noexcept {
        LinkSet s = *this;
        s.bits_ |= static_cast<std::uint16_t>(1U << (6 + to_int(side)));
        return s;
    }
    constexpr bool has_pair(Direction a, Direction b) const noexcept { return (bits_ >> pair_index(a, b)) & 1U; }
    constexpr bool has_stub(Direction side) const noexcept { return (bits_ >> (6 + to_int(side))) & 1U; }
    constexpr bool empty() const noexcept { return bits_ == 0; }
    constexpr std::uint16_t bits() const noexcept { return bits_; }

    constexpr CellTransitions to_cell() const noexcept {
        CellTransitions c;
        for (Direction a : kAllDirections) {
            for (Direction b : kAllDirections) {
                if (to_int(a) < to_int(b) && has_pair(a, b)) {
                    c = c.with(opposite(a), b).with(opposite(b), a);
                }
            }
            if (has_stub(a)) c = c.with(opposite(a), a);
        }
        return c;
    }

    static constexpr LinkSet from_cell(CellTransitions cell) noexcept {
        LinkSet s;
        for (Direction in : kAllDirections) {
            const DirectionMask m = transition_mask(cell, in);
            const Direction entry = opposite(in);
            for (Direction out : kAllDirections) {
                if (!m.contains(out)) continue;
                s = (out == entry) ? s.with_stub(out) : s.with_pair(entry, out);
            }
        }
        return s;
    }

    friend constexpr bool operator==(LinkSet, LinkSet) = default;

private:
    std::uint16_t bits_ = 0;
};

/// Breadth-first travel distance on the directed (cell, facing) graph;
/// -1 when the target cannot be reached.
inline int travel_distance(const Grid& grid, Position from, Direction facing, Position target) {
    if (!grid.contains(from)) return -1;
    if (from == target) return 0;
    std::vector<int> dist(grid.size() * 4, -1);
    std::deque<std::pair<Position, Direction>> queue;
    queue.emplace_back(from, facing);
    dist[grid.index(from) * 4 + static_cast<std::size_t>(to_int(facing))] = 0;
    while (!queue.empty()) {
        auto [p, d] = queue.front();
        queue.pop_front();
        const int here = dist[grid.index(p) * 4 + static_cast<std::size_t>(to_int(d))];
        const DirectionMask m = grid.mask(p, d);
        for (Direction out : kAllDirections) {
            if (!m.contains(out)) continue;
            const Position n = step_towards(p, out);
            if (!grid.contains(n)) continue;
            if (n == target) return here + 1;
            auto& slot = dist[grid.index(n) * 4 + static_cast<std::size_t>(to_int(out))];
            if (slot >= 0) continue;
            slot = here + 1;
            queue.emplace_back(n, out);
        }
    }
    return -1;
}

inline bool target_reachable(const Grid& grid, Position from, Direction facing, Position target) {
    return travel_distance(grid, from, facing, target) >= 0;
}

namespace detail {

inline constexpr int kMaxGenerationAttempts = 10;

// Footprint of a city around its center (cx, cy): main track columns
// cx-2..cx+3 on row cy, exit cells one column beyond each end, one extra
// track above and below, and a one-cell margin.
struct CityLayout {
    Position center;
    int x0() const { return center.x - 2; }
    int x1() const { return center.x + 3; }
    int box_x0() const { return center.x - 3; }
    int box_x1() const { return center.x + 4; }
    int box_y0() const { return center.y - 2; }
    int box_y1() const { return center.y + 2; }
    bool in_box(Position p) const {
        return p.x >= box_x0() && p.x <= box_x1() && p.y >= box_y0() && p.y <= box_y1();
    }
    // Station rows plus exit cells; passing loops may use the rest of the box.
    bool in_core(Position p) const {
        return p.x >= box_x0() && p.x <= box_x1() && p.y >= center.y - 1 && p.y <= center.y + 1;
    }
    Position west_exit() const { return {x0() - 1, center.y}; }
    Position east_exit() const { return {x1() + 1, center.y}; }
};

inline bool well_separated(Position a, Position b) {
    const int dx = std::abs(a.x - b.x);
    const int dy = std::abs(a.y - b.y);
    return dx >= 10 || dy >= 6;
}

class RailBuilder {
public:
    RailBuilder(int w, int h) : width_(w), height_(h), links_(static_cast<std::size_t>(w) * h) {}

    bool contains(Position p) const { return p.x >= 0 && p.y >= 0 && p.x < width_ && p.y < height_; }
    LinkSet& at(Position p) { return links_[idx(p)]; }
    LinkSet at(Position p) const { return links_[idx(p)]; }

    bool try_add_pair(Position p, Direction a, Direction b) {
        const LinkSet next = at(p).with_pair(a, b);
        if (!is_valid_cell(next.to_cell())) return false;
        at(p) = next;
        return true;
    }
    bool can_add_pair(Position p, Direction a, Direction b) const {
        return is_valid_cell(at(p).with_pair(a, b).to_cell());
    }

    Grid build() const {
        std::vector<CellTransitions> cells;
        cells.reserve(links_.size());
        for (LinkSet s : links_) cells.push_back(s.to_cell());
        return Grid(width_, height_, std::move(cells));
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t idx(Position p) const { return static_cast<std::size_t>(p.y) * width_ + p.x; }

private:
    int width_;
    int height_;
    std::vector<LinkSet> links_;
};

inline std::vector<Position> place_cities(const GeneratorParams& params, Rng& rng) {
    const int lo_x = 4, hi_x = params.width - 6;
    const int lo_y = 3, hi_y = params.height - 4;
    if (hi_x < lo_x || hi_y < lo_y) throw GenerationFailed("grid too small for a single city");
    std::vector<Position> centers;
    if (params.grid_mode) {
        const int rows = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(params.n_cities))));
        const int cols = (params.n_cities + rows - 1) / rows;
        for (int k = 0; k < params.n_cities; ++k) {
            const int r = k / cols;
            const int c = k % cols;
            const int x = cols == 1 ? (lo_x + hi_x) / 2 : lo_x + (hi_x - lo_x) * c / (cols - 1);
            const int y = rows == 1 ? (lo_y + hi_y) / 2 : lo_y + (hi_y - lo_y) * r / (rows - 1);
            centers.push_back({x, y});
        }
        for (std::size_t i = 0; i < centers.size(); ++i) {
            for (std::size_t j = 0; j < i; ++j) {
                if (!well_separated(centers[i], centers[j])) {
                    throw GenerationFailed("city lattice violates minimum spacing for " +
                                           std::to_string(params.n_cities) + " cities");
                }
            }
        }
        return centers;
    }
    for (int k = 0; k < params.n_cities; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < 500 && !placed; ++attempt) {
            const Position c{static_cast<int>(rng.uniform_int(lo_x, hi_x)), static_cast<int>(rng.uniform_int(lo_y, hi_y))};
            if (std::all_of(centers.begin(), centers.end(), [&](Position o) { return well_separated(c, o); })) {
                centers.push_back(c);
                placed = true;
            }
        }
        if (!placed) return {};
    }
    return centers;
}

// Nearest-neighbour chain keeps corridors short and mostly non-overlapping.
inline std::vector<Position> chain_order(std::vector<Position> centers) {
    std::vector<Position> out;
    if (centers.empty()) return out;
    out.push_back(centers.front());
    centers.erase(centers.begin());
    while (!centers.empty()) {
        const Position last = out.back();
        auto best = std::min_element(centers.begin(), centers.end(), [&](Position a, Position b) {
            auto da = std::abs(a.x - last.x) + std::abs(a.y - last.y);
            auto db = std::abs(b.x - last.x) + std::abs(b.y - last.y);
            return da < db;
        });
        out.push_back(*best);
        centers.erase(best);
    }
    return out;
}

// Cell `along` steps ahead of s and `side` steps to the left (negative: right).
inline Position offset(Position s, Direction t, int along, int side) {
    for (int i = 0; i < along; ++i) s = step_towards(s, t);
    const Direction lateral = side > 0 ? turn_left(t) : turn_right(t);
    for (int i = 0; i < std::abs(side); ++i) s = step_towards(s, lateral);
    return s;
}

// Turns the straight run S..M (`span` cells after s, heading t) into two lanes
// of equal length. Lane A goes straight out of S, drops one row right and
// enters M from the side; lane B leaves S to the left and rejoins the row at
// `bend`, entering M straight. The straight exit and the left exit of either
// end therefore lead onto different lanes. Returns false if a cell would be
// invalid.
inline bool lay_crossover(RailBuilder& b, Position s, Direction t, int span, int bend) {
    const Direction back = opposite(t), l = turn_left(t), r = turn_right(t);
    auto at = [&](int along, int side) { return offset(s, t, along, side); };
    bool ok = true;
    auto put = [&](Position p, LinkSet links) {
        b.at(p) = links;
        ok = ok && is_valid_cell(links.to_cell());
    };
    const Position m = at(span, 0);
    put(s, b.at(s).with_pair(back, l));
    put(m, b.at(m).with_pair(r, t));
    put(at(0, 1), LinkSet().with_pair(r, t));
    for (int k = 1; k < bend; ++k) put(at(k, 1), LinkSet().with_pair(back, t));
    put(at(bend, 1), LinkSet().with_pair(back, r));
    put(at(bend, 0), LinkSet().with_pair(l, t));
    for (int k = bend + 1; k < span; ++k) put(at(k, 0), LinkSet().with_pair(back, t));
    put(at(1, 0), LinkSet().with_pair(back, r));
    put(at(1, -1), LinkSet().with_pair(l, t));
    for (int k = 2; k < span; ++k) put(at(k, -1), LinkSet().with_pair(back, t));
    put(at(span, -1), LinkSet().with_pair(back, l));
    return ok;
}

inline constexpr int kLoopSpan = 4;
inline constexpr int kLoopBend = 2;

// One main track; with two or more tracks the station is a crossover so that
// opposing through trains use different platforms.
inline void build_station(RailBuilder& b, const CityLayout& city, int tracks) {
    const int y = city.center.y;
    for (int x = city.x0(); x <= city.x1(); ++x) b.try_add_pair({x, y}, Direction::West, Direction::East);
    if (tracks >= 2) lay_crossover(b, {city.x0(), y}, Direction::East, city.x1() - city.x0(), 2);
}

struct RouteStep {
    Position cell;
    Direction entry;
    Direction exit;
};

// Cheapest corridor from `start` (entered through `start_entry`) to `goal`
// (left through `goal_exit`). Cells inside any city footprint are off limits
// except the two endpoint cells.
inline std::vector<RouteStep> find_route(const RailBuilder& b, const std::vector<CityLayout>& cities,
                                         Position start, Direction start_entry, Position goal, Direction goal_exit) {
    const std::size_t n_states = static_cast<std::size_t>(b.width()) * b.height() * 4;
    constexpr int kInf = std::numeric_limits<int>::max();
    std::vector<int> cost(n_states, kInf);
    std::vector<std::int64_t> parent(n_states, -1);
    std::vector<std::int8_t> parent_exit(n_states, -1);
    auto sid = [&](Position p, Direction entry) { return b.idx(p) * 4 + static_cast<std::size_t>(to_int(entry)); };
    auto blocked = [&](Position p) {
        if (p == goal || p == start) return false;
        return std::any_of(cities.begin(), cities.end(), [&](const CityLayout& c) { return c.in_box(p); });
    };

    using Item = std::pair<int, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
    cost[sid(start, start_entry)] = 0;
    open.emplace(0, sid(start, start_entry));
    while (!open.empty()) {
        auto [c, s] = open.top();
        open.pop();
        if (c != cost[s]) continue;
        const Position p = [&] {
            const std::size_t cell = s / 4;
            return Position{static_cast<int>(cell % b.width()), static_cast<int>(cell / b.width())};
        }();
        const Direction entry = direction_from_int(static_cast<int>(s % 4));
        if (p == goal && b.can_add_pair(p, entry, goal_exit)) {
            std::vector<RouteStep> route{{p, entry, goal_exit}};
            std::size_t cur = s;
            while (parent[cur] >= 0) {
                const auto prev = static_cast<std::size_t>(parent[cur]);
                const std::size_t cell = prev / 4;
                route.push_back({Position{static_cast<int>(cell % b.width()), static_cast<int>(cell / b.width())},
                                 direction_from_int(static_cast<int>(prev % 4)), direction_from_int(parent_exit[cur])});
                cur = prev;
            }
            std::reverse(route.begin(), route.end());
            return route;
        }
        for (Direction exit : kAllDirections) {
            if (exit == entry) continue;
            const Position n = step_towards(p, exit);
            if (!b.contains(n) || blocked(n)) continue;
            if (!b.can_add_pair(p, entry, exit)) continue;
            const int turn = (exit == opposite(entry)) ? 0 : 1;
            const int crowd = b.at(n).empty() ? 0 : 4;
            const std::size_t ns = sid(n, opposite(exit));
            const int nc = c + 1 + turn + crowd;
            if (nc < cost[ns]) {
                cost[ns] = nc;
                parent[ns] = static_cast<std::int64_t>(s);
                parent_exit[ns] = static_cast<std::int8_t>(to_int(exit));
                open.emplace(nc, ns);
            }
        }
    }
    return {};
}

// Free cells needed by lay_crossover beside a straight run S..M of `span`
// cells starting at s with heading t.
inline std::vector<Position> crossover_lanes(Position s, Direction t, int span, int bend) {
    std::vector<Position> out;
    for (int k = 0; k <= bend; ++k) out.push_back(offset(s, t, k, 1));
    for (int k = 1; k <= span; ++k) out.push_back(offset(s, t, k, -1));
    return out;
}

inline bool try_passing_loop(RailBuilder& b, const std::vector<CityLayout>& cities, Position s, Direction t) {
    for (Position p : crossover_lanes(s, t, kLoopSpan, kLoopBend)) {
        if (!b.contains(p) || !b.at(p).empty()) return false;
        if (std::any_of(cities.begin(), cities.end(), [&](const CityLayout& c) { return c.in_core(p); })) return false;
    }
    RailBuilder next = b;
    if (!lay_crossover(next, s, t, kLoopSpan, kLoopBend)) return false;
    b = std::move(next);
    return true;
}

inline void add_passing_loops(RailBuilder& b, const std::vector<CityLayout>& cities, const std::vector<RouteStep>& route) {
    auto plain_straight = [&](const RouteStep& st) {
        return st.exit == opposite(st.entry) && b.at(st.cell) == LinkSet().with_pair(st.entry, st.exit);
    };
    std::size_t i = 0;
    while (i + kLoopSpan < route.size()) {
        bool run = true;
        for (std::size_t k = i; k <= i + kLoopSpan && run; ++k) {
            run = plain_straight(route[k]) && route[k].exit == route[i].exit;
        }
        const Direction t = route[i].exit;
        if (run && (try_passing_loop(b, cities, route[i].cell, t) ||
                    try_passing_loop(b, cities, route[i + kLoopSpan].cell, opposite(t)))) {
            i += kLoopSpan + 2;
        } else {
            ++i;
        }
    }
}

inline bool generate_attempt(const GeneratorParams& params, Rng& rng, GeneratedRail& out) {
    std::vector<Position> centers = place_cities(params, rng);
    if (static_cast<int>(centers.size()) < params.n_cities) return false;
    centers = chain_order(std::move(centers));
    std::vector<CityLayout> cities;
    for (Position c : centers) cities.push_back({c});

    const int tracks = std::clamp(params.max_parallel_tracks, 1, 2);
    RailBuilder builder(params.width, params.height);
    for (const auto& c : cities) build_station(builder, c, tracks);

    std::vector<std::pair<std::size_t, std::size_t>> links;
    for (std::size_t i = 0; i + 1 < cities.size(); ++i) links.emplace_back(i, i + 1);
    if (params.close_ring && cities.size() >= 3) links.emplace_back(cities.size() - 1, 0);
    // Each link prefers the exit facing the other city but falls back to the
    // unused one, so interior cities become through stations.
    std::vector<std::array<bool, 2>> exit_used(cities.size(), {false, false});
    auto exit_options = [&](std::size_t from, std::size_t to) {
        const bool facing = cities[to].center.x >= cities[from].center.x;
        std::vector<bool> out;
        for (bool east : {facing, !facing}) {
            if (!exit_used[from][east]) out.push_back(east);
        }
        if (out.empty()) out.push_back(facing);
        return out;
    };
    for (std::size_t k = 0; k < links.size(); ++k) {
        const auto [ia, ib] = links[k];
        const CityLayout& a = cities[ia];
        const CityLayout& b = cities[ib];
        const bool required = k + 1 < cities.size();  // the ring closure is optional
        std::vector<RouteStep> route;
        bool a_east = false, b_east = false;
        for (bool ea : exit_options(ia, ib)) {
            for (bool eb : exit_options(ib, ia)) {
                route = find_route(builder, cities, ea ? a.east_exit() : a.west_exit(),
                                   ea ? Direction::West : Direction::East, eb ? b.east_exit() : b.west_exit(),
                                   eb ? Direction::West : Direction::East);
                if (!route.empty()) {
                    a_east = ea;
                    b_east = eb;
                    break;
                }
            }
            if (!route.empty()) break;
        }
        if (route.empty()) {
            if (required) return false;
            continue;
        }
        RailBuilder backup = builder;
        bool ok = true;
        for (const auto& step : route) {
            if (!builder.try_add_pair(step.cell, step.entry, step.exit)) {
                ok = false;
                break;
            }
        }
        if (!ok) {
            if (required) return false;
            builder = std::move(backup);
            continue;
        }
        exit_used[ia][a_east] = true;
        exit_used[ib][b_east] = true;
        if (params.passing_loops) add_passing_loops(builder, cities, route);
    }

    for (const auto& c : cities) {
        for (bool east : {false, true}) {
            const Position exit = east ? c.east_exit() : c.west_exit();
            if (!builder.at(exit).empty()) continue;
            builder.at(exit) = LinkSet().with_stub(east ? Direction::West : Direction::East);
        }
    }

    Grid grid = builder.build();
    if (!validate_consistency(grid).empty()) return false;
    for (CellTransitions cell : grid.cells()) {
        if (!is_valid_cell(cell)) return false;
    }

    out.cities.clear();
    const LinkSet plain = LinkSet().with_pair(Direction::West, Direction::East);
    for (const auto& c : cities) {
        City city{c.center, {}};
        for (int y = c.center.y - 1; y <= c.center.y + 1; ++y) {
            for (int x = c.x0(); x <= c.x1(); ++x) {
                if (builder.at({x, y}) == plain) city.station_tracks.push_back({x, y});
            }
        }
        out.cities.push_back(std::move(city));
    }
    out.grid = std::move(grid);
    return true;
}

}  // namespace detail

inline void check_params(const GeneratorParams& p) {
    if (p.width < 12 || p.height < 12) throw GenerationFailed("width and height must be at least 12");
    if (p.n_cities < 2) throw GenerationFailed("at least 2 cities are required");
    if (p.n_agents < 1) throw GenerationFailed("at least 1 agent is required");
}

/// Deterministic in params.seed; throws GenerationFailed after 10 failed attempts.
inline GeneratedRail generate_sparse(const GeneratorParams& params) {
    check_params(params);
    for (int attempt = 0; attempt < detail::kMaxGenerationAttempts; ++attempt) {
        Rng rng(params.seed, "rail", static_cast<std::uint64_t>(attempt));
        GeneratedRail out;
        if (detail::generate_attempt(params, rng, out)) return out;
    }
    throw GenerationFailed("could not place and connect " + std::to_string(params.n_cities) + " cities on a " +
                           std::to_string(params.width) + "x" + std::to_string(params.height) + " grid in " +
                           std::to_string(detail::kMaxGenerationAttempts) + " attempts");
}

/// Distinct start cells drawn from station tracks; each target lies in a
/// different city from its start and is reachable from the start facing.
inline std::vector<AgentTask> assign_tasks(const Grid& grid, const std::vector<City>& cities, int n_agents,
                                           std::uint64_t seed) {
    std::vector<AgentTask> tasks;
    if (n_agents <= 0) return tasks;
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < cities.size(); ++i) {
        if (!cities[i].station_tracks.empty()) usable.push_back(i);
    }
    if (usable.size() < 2) throw TaskAssignmentFailed("need at least two cities with station tracks");

    std::vector<std::pair<std::size_t, Position>> pool;
    for (std::size_t c : usable) {
        for (Position p : cities[c].station_tracks) pool.emplace_back(c, p);
    }
    Rng rng(seed, "tasks");
    rng.shuffle(pool);

    std::size_t next = 0;
    while (static_cast<int>(tasks.size()) < n_agents) {
        if (next >= pool.size()) {
            throw TaskAssignmentFailed("station capacity exhausted after " + std::to_string(tasks.size()) + " of " +
                                       std::to_string(n_agents) + " agents");
        }
        const auto [start_city, start] = pool[next++];
        std::vector<std::size_t> others;
        for (std::size_t c : usable) {
            if (c != start_city) others.push_back(c);
        }
        rng.shuffle(others);
        bool assigned = false;
        for (std::size_t c : others) {
            std::vector<Position> targets = cities[c].station_tracks;
            rng.shuffle(targets);
            for (Position t : targets) {
                // face the way with the shorter trip; ties go East
                const int east = travel_distance(grid, start, Direction::East, t);
                const int west = travel_distance(grid, start, Direction::West, t);
                if (east < 0 && west < 0) continue;
                const bool go_east = west < 0 || (east >= 0 && east <= west);
                tasks.push_back({start, go_east ? Direction::East : Direction::West, t});
                assigned = true;
                break;
            }
            if (assigned) break;
        }
    }
    return tasks;
}

}  // namespace flatland
