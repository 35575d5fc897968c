#include <gtest/gtest.h>

#include <set>

#include "flatland/harness.hpp"
#include "flatland/rail_gen.hpp"
#include "support/oracles.hpp"

using namespace flatland;

namespace {

GeneratorParams params(std::uint64_t seed) { return benchmark_generator(seed); }

std::size_t city_of(const std::vector<City>& cities, Position p) {
    for (std::size_t i = 0; i < cities.size(); ++i) {
        for (Position s : cities[i].station_tracks) {
            if (s == p) return i;
        }
    }
    return cities.size();
}

}  // namespace

TEST(Generator, SameSeedSameRail) {
    const auto a = generate_sparse(params(3));
    const auto b = generate_sparse(params(3));
    EXPECT_EQ(a.grid, b.grid);
    EXPECT_EQ(a.cities, b.cities);
}

TEST(Generator, DifferentSeedsDiffer) {
    EXPECT_NE(generate_sparse(params(1)).grid, generate_sparse(params(2)).grid);
}

TEST(Generator, RailIsValidAndConsistent) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const auto rail = generate_sparse(params(seed));
        for (CellTransitions c : rail.grid.cells()) ASSERT_TRUE(is_valid_cell(c)) << "seed " << seed;
        EXPECT_TRUE(validate_consistency(rail.grid).empty()) << "seed " << seed;
        EXPECT_EQ(rail.cities.size(), 4U);
    }
}

TEST(Generator, StationTracksAreStraightEastWest) {
    const auto rail = generate_sparse(params(5));
    for (const auto& city : rail.cities) {
        EXPECT_FALSE(city.station_tracks.empty());
        for (Position p : city.station_tracks) {
            const auto code = rail.grid[p].code();
            EXPECT_TRUE(oracle::allowed(code, 1, 1));
            EXPECT_TRUE(oracle::allowed(code, 3, 3));
        }
    }
}

TEST(Generator, CitiesAreMutuallyReachable) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto rail = generate_sparse(params(seed));
        const Position a = rail.cities.front().station_tracks.front();
        for (const auto& c : rail.cities) {
            const Position b = c.station_tracks.front();
            if (a == b) continue;
            const bool east = oracle::bfs_distance(rail.grid, a.x, a.y, 1, b.x, b.y) != oracle::kNone;
            const bool west = oracle::bfs_distance(rail.grid, a.x, a.y, 3, b.x, b.y) != oracle::kNone;
            EXPECT_TRUE(east || west) << "seed " << seed;
        }
    }
}

TEST(Generator, WithoutLoopsOrRingStillValid) {
    auto p = params(9);
    p.passing_loops = false;
    p.close_ring = false;
    p.max_parallel_tracks = 1;
    const auto rail = generate_sparse(p);
    EXPECT_TRUE(validate_consistency(rail.grid).empty());
    for (CellTransitions c : rail.grid.cells()) EXPECT_TRUE(is_valid_cell(c));
}

TEST(Generator, LargerGridsGenerate) {
    for (int side : {40, 60}) {
        auto p = params(4);
        p.width = p.height = side;
        p.n_cities = cities_for(side, side);
        const auto rail = generate_sparse(p);
        EXPECT_EQ(static_cast<int>(rail.cities.size()), p.n_cities);
        EXPECT_TRUE(validate_consistency(rail.grid).empty());
    }
}

TEST(Generator, RejectsTinyGrid) {
    auto p = params(0);
    p.width = 8;
    EXPECT_THROW(generate_sparse(p), GenerationFailed);
}

TEST(Generator, RejectsSingleCity) {
    auto p = params(0);
    p.n_cities = 1;
    EXPECT_THROW(generate_sparse(p), GenerationFailed);
}

TEST(Generator, FailsWhenCitiesCannotFit) {
    auto p = params(0);
    p.width = p.height = 12;
    p.n_cities = 30;
    EXPECT_THROW(generate_sparse(p), GenerationFailed);
}

TEST(Tasks, DistinctStartsTargetsInOtherCitiesAndReachable) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto rail = generate_sparse(params(seed));
        const auto tasks = assign_tasks(rail.grid, rail.cities, 5, seed);
        ASSERT_EQ(tasks.size(), 5U);
        std::set<std::pair<int, int>> starts;
        for (const auto& t : tasks) {
            EXPECT_TRUE(starts.insert({t.start.x, t.start.y}).second);
            EXPECT_NE(city_of(rail.cities, t.start), city_of(rail.cities, t.target));
            EXPECT_NE(oracle::bfs_distance(rail.grid, t.start.x, t.start.y, to_int(t.direction), t.target.x,
                                           t.target.y),
                      oracle::kNone);
            EXPECT_TRUE(t.direction == Direction::East || t.direction == Direction::West);
        }
    }
}

TEST(Tasks, FacingPicksShorterTrip) {
    const auto rail = generate_sparse(params(12));
    for (const auto& t : assign_tasks(rail.grid, rail.cities, 5, 12)) {
        const int chosen = oracle::bfs_distance(rail.grid, t.start.x, t.start.y, to_int(t.direction), t.target.x, t.target.y);
        const int other = oracle::bfs_distance(rail.grid, t.start.x, t.start.y, to_int(opposite(t.direction)),
                                               t.target.x, t.target.y);
        EXPECT_LE(chosen, other);
    }
}

TEST(Tasks, Deterministic) {
    const auto rail = generate_sparse(params(8));
    EXPECT_EQ(assign_tasks(rail.grid, rail.cities, 5, 8), assign_tasks(rail.grid, rail.cities, 5, 8));
}

TEST(Tasks, CapacityExhausted) {
    const auto rail = generate_sparse(params(8));
    EXPECT_THROW(assign_tasks(rail.grid, rail.cities, 500, 8), TaskAssignmentFailed);
}

TEST(Tasks, NeedTwoCities) {
    const auto rail = generate_sparse(params(8));
    std::vector<City> one{rail.cities.front()};
    EXPECT_THROW(assign_tasks(rail.grid, one, 2, 8), TaskAssignmentFailed);
}

TEST(Tasks, TravelDistanceAgreesWithOracle) {
    const auto rail = generate_sparse(params(17));
    const Position target = rail.cities[1].station_tracks.front();
    for (std::size_t i = 0; i < rail.grid.size(); ++i) {
        const Position p = rail.grid.position(i);
        if (rail.grid[p].empty() || p == target) continue;
        for (Direction d : kAllDirections) {
            const int lib = travel_distance(rail.grid, p, d, target);
            const int ref = oracle::bfs_distance(rail.grid, p.x, p.y, to_int(d), target.x, target.y);
            EXPECT_EQ(lib, ref == oracle::kNone ? -1 : ref);
        }
    }
}
