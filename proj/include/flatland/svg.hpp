#pragma once

#include <array>
#include <sstream>
#include <string>

#include "flatland/rail_gen.hpp"
#include "flatland/rail_grid.hpp"
#include "flatland/sim_core.hpp"

namespace flatland {

namespace detail {

inline constexpr int kTile = 20;

inline std::array<int, 2> side_midpoint(Direction d) {
    switch (d) {
        case Direction::North: return {kTile / 2, 0};
        case Direction::East: return {kTile, kTile / 2};
        case Direction::South: return {kTile / 2, kTile};
        case Direction::West: return {0, kTile / 2};
    }
    return {0, 0};
}

// Path data for the unrotated base pattern of a case.
inline std::string glyph_path(CellTransitions base) {
    const LinkSet links = LinkSet::from_cell(base);
    std::ostringstream d;
    const int c = kTile / 2;
    for (Direction a : kAllDirections) {
        for (Direction b : kAllDirections) {
            if (to_int(a) >= to_int(b) || !links.has_pair(a, b)) continue;
            const auto pa = side_midpoint(a);
            const auto pb = side_midpoint(b);
            d << "M" << pa[0] << ' ' << pa[1];
            if (b == opposite(a)) {
                d << "L" << pb[0] << ' ' << pb[1];
            } else {
                d << "Q" << c << ' ' << c << ' ' << pb[0] << ' ' << pb[1];
            }
        }
        if (links.has_stub(a)) {
            const auto pa = side_midpoint(a);
            d << "M" << pa[0] << ' ' << pa[1] << "L" << c << ' ' << c;
            if (a == Direction::North || a == Direction::South) {
                d << "M" << c - 5 << ' ' << c << "L" << c + 5 << ' ' << c;
            } else {
                d << "M" << c << ' ' << c - 5 << "L" << c << ' ' << c + 5;
            }
        }
    }
    return d.str();
}

inline constexpr std::array<const char*, 8> kAgentColors{"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e",
                                                         "#9467bd", "#8c564b", "#e377c2", "#17becf"};

}  // namespace detail

/// Deterministic SVG: a background, one glyph per non-empty cell (base
/// pattern rotated into place), target squares and agent arrows.
inline std::string render_svg(const EnvState& state) {
    using detail::kTile;
    const Grid& g = state.grid;
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << g.width() * kTile << "\" height=\""
        << g.height() * kTile << "\" viewBox=\"0 0 " << g.width() * kTile << ' ' << g.height() * kTile << "\">\n";
    out << "<rect class=\"background\" width=\"100%\" height=\"100%\" fill=\"#f4f1e8\"/>\n";
    for (std::size_t i = 0; i < g.size(); ++i) {
        const CellTransitions cell = g.cells()[i];
        if (cell.empty()) continue;
        const Position p = g.position(i);
        const auto type = classify_cell(cell);
        if (!type) {
            out << "<rect class=\"invalid\" x=\"" << p.x * kTile << "\" y=\"" << p.y * kTile << "\" width=\""
                << kTile << "\" height=\"" << kTile << "\" fill=\"#ff00ff\"/>\n";
            continue;
        }
        out << "<g class=\"track\" data-case=\"" << type->case_id << "\" data-variant=\"" << type->variant
            << "\" data-rot=\"" << type->rotation << "\" transform=\"translate(" << p.x * kTile << ' ' << p.y * kTile
            << ") rotate(" << 90 * type->rotation << ' ' << kTile / 2 << ' ' << kTile / 2 << ")\">"
            << "<path d=\"" << detail::glyph_path(base_code(type->case_id, type->variant))
            << "\" fill=\"none\" stroke=\"#444\" stroke-width=\"3\"/></g>\n";
    }
    for (const Agent& a : state.agents) {
        if (a.status == AgentStatus::Done) continue;
        const char* color = detail::kAgentColors[a.id % detail::kAgentColors.size()];
        out << "<rect class=\"target\" data-id=\"" << a.id << "\" x=\"" << a.target.x * kTile + 6 << "\" y=\""
            << a.target.y * kTile + 6 << "\" width=\"8\" height=\"8\" fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"2\"/>\n";
    }
    for (const Agent& a : state.agents) {
        if (!a.active()) continue;
        const char* color = detail::kAgentColors[a.id % detail::kAgentColors.size()];
        out << "<g class=\"agent\" data-id=\"" << a.id << "\" data-dir=\"" << "NESW"[to_int(a.direction)]
            << "\" transform=\"translate(" << a.position.x * kTile << ' ' << a.position.y * kTile << ") rotate("
            << 90 * to_int(a.direction) << ' ' << kTile / 2 << ' ' << kTile / 2 << ")\">"
            << "<polygon points=\"10 3 16 16 4 16\" fill=\"" << color << "\"/></g>\n";
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace flatland
