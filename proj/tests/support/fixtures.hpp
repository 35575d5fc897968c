#pragma once

// Hand-built grids. Codes are written out bit by bit from the layout rule
// bit(15 - (4*in + out)) = "facing `in`, may leave facing `out`", N=0 E=1 S=2 W=3.

#include <cstdint>
#include <vector>

#include "flatland/rail_grid.hpp"
#include "flatland/sim_core.hpp"

namespace fixtures {

using namespace flatland;

constexpr std::uint16_t bit(int in, int out) { return static_cast<std::uint16_t>(1U << (15 - (4 * in + out))); }

// straights
constexpr std::uint16_t kVertical = bit(0, 0) | bit(2, 2);    // 0x8020
constexpr std::uint16_t kHorizontal = bit(1, 1) | bit(3, 3);  // 0x0401
// dead ends, named by their open side
constexpr std::uint16_t kDeadEndOpenSouth = bit(0, 2);  // 0x2000
constexpr std::uint16_t kDeadEndOpenEast = bit(3, 1);   // 0x0004
constexpr std::uint16_t kDeadEndOpenWest = bit(1, 3);   // 0x0100
// curve joining the west and south sides
constexpr std::uint16_t kCurveWestSouth = bit(1, 2) | bit(0, 3);
// switch on a west-east line: arriving from the west may also turn south
constexpr std::uint16_t kSwitchEastOrSouth = bit(1, 1) | bit(1, 2) | bit(3, 3) | bit(0, 3);
// curve joining the north and east sides
constexpr std::uint16_t kCurveNorthEast = bit(2, 1) | bit(3, 0);
// curve joining the north and west sides
constexpr std::uint16_t kCurveNorthWest = bit(2, 3) | bit(1, 0);
// curve joining the east and south sides
constexpr std::uint16_t kCurveEastSouth = bit(3, 2) | bit(0, 1);
// merge on a west-east line where the south branch joins from below
constexpr std::uint16_t kSwitchWestOrNorthMerge = bit(1, 1) | bit(3, 3) | bit(3, 2) | bit(0, 1);

inline Grid row(const std::vector<std::uint16_t>& codes) {
    std::vector<CellTransitions> cells;
    for (auto c : codes) cells.emplace_back(c);
    return Grid(static_cast<int>(codes.size()), 1, std::move(cells));
}

inline Grid grid(int w, int h, const std::vector<std::uint16_t>& codes) {
    std::vector<CellTransitions> cells;
    for (auto c : codes) cells.emplace_back(c);
    return Grid(w, h, std::move(cells));
}

/// 1x5 line: dead end, three straights, dead end.
inline Grid line5() {
    return row({kDeadEndOpenEast, kHorizontal, kHorizontal, kHorizontal, kDeadEndOpenWest});
}

/// Agent starting at x=1 facing east with the target at x=4.
inline EnvState line5_env(const RewardConfig& r = {}) {
    const std::vector<AgentTask> tasks{{{1, 0}, Direction::East, {4, 0}}};
    return reset(line5(), tasks, {}, r, 7);
}

/// 1x6 line with two agents facing each other, each targeting the other's far end.
inline EnvState head_on_env() {
    const Grid g = row({kDeadEndOpenEast, kHorizontal, kHorizontal, kHorizontal, kHorizontal, kDeadEndOpenWest});
    const std::vector<AgentTask> tasks{{{1, 0}, Direction::East, {5, 0}}, {{4, 0}, Direction::West, {0, 0}}};
    return reset(g, tasks, {}, {}, 11);
}

// Two routes from S=(1,1) eastwards to T=(6,1):
//   short: straight along row 1, length 5
//   long:  down at (2,1), along row 2, back up at (5,1), length 7
// Row 1: DE  S  SW  H  H  M  DE(target side)  ... laid out below.
//
//   y=1: (0)DE_E (1)H (2)SWITCH (3)H (4)H (5)MERGE (6)H (7)DE_W
//   y=2:                (2)CurveNE (3)H (4)H (5)CurveNW
// The detour leaves the switch south and rejoins from the south.
inline Grid switch_grid() {
    const int w = 8, h = 4;
    std::vector<std::uint16_t> c(static_cast<std::size_t>(w * h), 0);
    auto at = [&](int x, int y) -> std::uint16_t& { return c[static_cast<std::size_t>(y * w + x)]; };
    at(0, 1) = kDeadEndOpenEast;
    at(1, 1) = kHorizontal;
    at(2, 1) = kSwitchEastOrSouth;
    at(3, 1) = kHorizontal;
    at(4, 1) = kHorizontal;
    at(5, 1) = kSwitchWestOrNorthMerge;
    at(6, 1) = kHorizontal;
    at(7, 1) = kDeadEndOpenWest;
    at(2, 2) = kCurveNorthEast;
    at(3, 2) = kHorizontal;
    at(4, 2) = kHorizontal;
    at(5, 2) = kCurveNorthWest;
    return grid(w, h, c);
}

}  // namespace fixtures
