#pragma once

// Cells, directional transition maps and grid consistency.
//
// A cell stores 16 transition bits. Bit 15 - (4*d + d') is set when an agent
// facing d may leave the cell facing d'. Rows (incoming facing) and columns
// (outgoing facing) are both ordered N, E, S, W.

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flatland {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Direction : std::uint8_t { North = 0, East = 1, South = 2, West = 3 };

inline constexpr std::array<Direction, 4> kAllDirections{
    Direction::North, Direction::East, Direction::South, Direction::West};

constexpr int to_int(Direction d) noexcept { return static_cast<int>(d); }
constexpr Direction direction_from_int(int v) noexcept {
    return static_cast<Direction>(((v % 4) + 4) % 4);
}
constexpr Direction opposite(Direction d) noexcept { return direction_from_int(to_int(d) + 2); }
constexpr Direction turn_left(Direction d) noexcept { return direction_from_int(to_int(d) + 3); }
constexpr Direction turn_right(Direction d) noexcept { return direction_from_int(to_int(d) + 1); }
constexpr Direction rotate_clockwise(Direction d, int k) noexcept { return direction_from_int(to_int(d) + k); }

constexpr char direction_letter(Direction d) noexcept { return "NESW"[to_int(d)]; }

struct Position {
    int x = 0;  // column
    int y = 0;  // row, origin top-left

    friend constexpr bool operator==(Position, Position) = default;
    friend constexpr auto operator<=>(Position, Position) = default;
};

constexpr Position step_towards(Position p, Direction d) noexcept {
    switch (d) {
        case Direction::North: return {p.x, p.y - 1};
        case Direction::East: return {p.x + 1, p.y};
        case Direction::South: return {p.x, p.y + 1};
        case Direction::West: return {p.x - 1, p.y};
    }
    return p;
}

/// Four-bit set of outgoing directions; bit d' set when d' is allowed.
class DirectionMask {
public:
    constexpr DirectionMask() = default;
    constexpr explicit DirectionMask(std::uint8_t bits) : bits_(bits & 0xF) {}

    constexpr bool contains(Direction d) const noexcept { return (bits_ >> to_int(d)) & 1U; }
    constexpr int count() const noexcept { return std::popcount(static_cast<unsigned>(bits_)); }
    constexpr bool empty() const noexcept { return bits_ == 0; }
    constexpr std::uint8_t bits() const noexcept { return bits_; }
    constexpr DirectionMask with(Direction d) const noexcept {
        return DirectionMask(static_cast<std::uint8_t>(bits_ | (1U << to_int(d))));
    }

    /// The single allowed direction, if exactly one is set.
    constexpr std::optional<Direction> only() const noexcept {
        if (count() != 1) return std::nullopt;
        return direction_from_int(std::countr_zero(static_cast<unsigned>(bits_)));
    }

    friend constexpr bool operator==(DirectionMask, DirectionMask) = default;

private:
    std::uint8_t bits_ = 0;
};

constexpr int transition_bit(Direction in, Direction out) noexcept {
    return 15 - (4 * to_int(in) + to_int(out));
}

class CellTransitions {
public:
    constexpr CellTransitions() = default;
    constexpr explicit CellTransitions(std::uint16_t code) : code_(code) {}

    constexpr std::uint16_t code() const noexcept { return code_; }
    constexpr bool empty() const noexcept { return code_ == 0; }

    constexpr bool allows(Direction in, Direction out) const noexcept {
        return (code_ >> transition_bit(in, out)) & 1U;
    }
    constexpr CellTransitions with(Direction in, Direction out) const noexcept {
        return CellTransitions(static_cast<std::uint16_t>(code_ | (1U << transition_bit(in, out))));
    }

    friend constexpr bool operator==(CellTransitions, CellTransitions) = default;

private:
    std::uint16_t code_ = 0;
};

static_assert(sizeof(CellTransitions) == 2);

constexpr DirectionMask transition_mask(CellTransitions cell, Direction in) noexcept {
    // Row for `in` occupies bits [15-4*in-3, 15-4*in]; N is its most significant bit.
    const unsigned row = (cell.code() >> (12 - 4 * to_int(in))) & 0xFU;
    std::uint8_t out = 0;
    for (int d = 0; d < 4; ++d) {
        if ((row >> (3 - d)) & 1U) out |= static_cast<std::uint8_t>(1U << d);
    }
    return DirectionMask(out);
}

constexpr int count_choices(CellTransitions cell, Direction in) noexcept {
    return transition_mask(cell, in).count();
}

/// Rotates a cell by k quarter turns clockwise.
constexpr CellTransitions rotate_cell(CellTransitions cell, int k) noexcept {
    k = ((k % 4) + 4) % 4;
    CellTransitions out;
    for (Direction in : kAllDirections) {
        for (Direction o : kAllDirections) {
            if (cell.allows(in, o)) out = out.with(rotate_clockwise(in, k), rotate_clockwise(o, k));
        }
    }
    return out;
}

/// True when any incoming facing has two or more exits.
constexpr bool is_switch(CellTransitions cell) noexcept {
    for (Direction d : kAllDirections) {
        if (count_choices(cell, d) >= 2) return true;
    }
    return false;
}

constexpr bool is_dead_end(CellTransitions cell, Direction in) noexcept {
    return transition_mask(cell, in) == DirectionMask().with(opposite(in));
}

// Base patterns at rotation 0.
// Variant 1 of case 1 is the curve; variant 1 of case 2 is the mirrored
// simple switch. Neither is a rotation of its variant 0.
struct BasePattern {
    int case_id;
    int variant;
    std::uint16_t code;
    const char* name;
};

inline constexpr std::array<BasePattern, 10> kBasePatterns{{
    {0, 0, 0x0000, "empty"},
    {1, 0, 0x8020, "straight"},
    {1, 1, 0x4002, "curve"},
    {2, 0, 0x9220, "simple switch"},
    {2, 1, 0xC022, "simple switch (mirrored)"},
    {3, 0, 0x8421, "crossing"},
    {4, 0, 0x9621, "single slip switch"},
    {5, 0, 0xCC33, "double slip switch"},
    {6, 0, 0x5202, "symmetric switch"},
    {7, 0, 0x2000, "dead end"},
}};

constexpr CellTransitions base_code(int case_id, int variant = 0) {
    for (const auto& p : kBasePatterns) {
        if (p.case_id == case_id && p.variant == variant) return CellTransitions(p.code);
    }
    throw Error("unknown base case " + std::to_string(case_id) + "/" + std::to_string(variant));
}

struct CaseType {
    int case_id = 0;
    int rotation = 0;  // smallest clockwise quarter-turn count producing the code
    int variant = 0;

    friend constexpr bool operator==(const CaseType&, const CaseType&) = default;
};

constexpr std::optional<CaseType> classify_cell(CellTransitions cell) noexcept {
    for (const auto& p : kBasePatterns) {
        for (int k = 0; k < 4; ++k) {
            if (rotate_cell(CellTransitions(p.code), k) == cell) return CaseType{p.case_id, k, p.variant};
        }
    }
    return std::nullopt;
}

constexpr bool is_valid_cell(CellTransitions cell) noexcept { return classify_cell(cell).has_value(); }

class Grid {
public:
    Grid() = default;
    Grid(int width, int height)
        : width_(width), height_(height),
          cells_(static_cast<std::size_t>(check_dims(width, height)), CellTransitions{}) {}
    Grid(int width, int height, std::vector<CellTransitions> cells)
        : width_(width), height_(height), cells_(std::move(cells)) {
        if (cells_.size() != static_cast<std::size_t>(check_dims(width, height))) {
            throw Error("grid cell count does not match dimensions");
        }
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return cells_.size(); }

    bool contains(Position p) const noexcept { return p.x >= 0 && p.y >= 0 && p.x < width_ && p.y < height_; }
    std::size_t index(Position p) const noexcept {
        return static_cast<std::size_t>(p.y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(p.x);
    }
    Position position(std::size_t index) const noexcept {
        return {static_cast<int>(index % static_cast<std::size_t>(width_)),
                static_cast<int>(index / static_cast<std::size_t>(width_))};
    }

    CellTransitions at(Position p) const { return cells_.at(index(p)); }
    CellTransitions operator[](Position p) const noexcept { return cells_[index(p)]; }
    void set(Position p, CellTransitions c) { cells_.at(index(p)) = c; }

    /// Outgoing directions for an agent at p facing d; empty outside the grid.
    DirectionMask mask(Position p, Direction d) const noexcept {
        if (!contains(p)) return {};
        return transition_mask(cells_[index(p)], d);
    }

    std::span<const CellTransitions> cells() const noexcept { return cells_; }

    /// Bytes used by the transition array (two per cell).
    std::size_t storage_bytes() const noexcept { return cells_.size() * sizeof(CellTransitions); }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    static long check_dims(int w, int h) {
        if (w <= 0 || h <= 0) throw Error("grid dimensions must be positive");
        return static_cast<long>(w) * static_cast<long>(h);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<CellTransitions> cells_;
};

struct ConsistencyViolation {
    Position cell;
    Direction direction;  // outgoing facing that has no matching continuation
    Position neighbor;

    friend bool operator==(const ConsistencyViolation&, const ConsistencyViolation&) = default;
};

/// Every exit of every cell must lead into a grid cell that accepts an agent
/// arriving with that facing. Each (cell, exit) pair is reported once.
inline std::vector<ConsistencyViolation> validate_consistency(const Grid& grid) {
    std::vector<ConsistencyViolation> out;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const Position p = grid.position(i);
        const CellTransitions cell = grid[p];
        if (cell.empty()) continue;
        DirectionMask exits;
        for (Direction in : kAllDirections) exits = DirectionMask(exits.bits() | transition_mask(cell, in).bits());
        for (Direction d : kAllDirections) {
            if (!exits.contains(d)) continue;
            const Position n = step_towards(p, d);
            if (!grid.contains(n) || grid.mask(n, d).empty()) out.push_back({p, d, n});
        }
    }
    return out;
}

}  // namespace flatland
