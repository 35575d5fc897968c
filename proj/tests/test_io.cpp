#include <gtest/gtest.h>

#include <sstream>

#include "flatland/env_file.hpp"
#include "flatland/harness.hpp"
#include "flatland/svg.hpp"
#include "flatland/trace.hpp"
#include "support/fixtures.hpp"

using namespace flatland;

namespace {

EnvState benchmark_env(std::uint64_t seed) {
    EpisodeSpec spec;
    spec.generator = benchmark_generator(seed);
    spec.malfunction = {0.05, 1, 4};
    return make_env(spec);
}

std::size_t count(const std::string& haystack, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
    return n;
}

std::string location_of(const std::string& text) {
    try {
        parse_env_file(text);
    } catch (const ParseError& e) {
        return e.location();
    }
    return "";
}

}  // namespace

// --- base64 -------------------------------------------------------------------

TEST(Base64, KnownVectors) {
    auto bytes = [](std::string_view s) { return std::vector<std::uint8_t>(s.begin(), s.end()); };
    EXPECT_EQ(base64::encode(bytes("")), "");
    EXPECT_EQ(base64::encode(bytes("f")), "Zg==");
    EXPECT_EQ(base64::encode(bytes("fo")), "Zm8=");
    EXPECT_EQ(base64::encode(bytes("foo")), "Zm9v");
    EXPECT_EQ(base64::encode(bytes("foobar")), "Zm9vYmFy");
    EXPECT_EQ(base64::decode("Zm9vYg=="), bytes("foob"));
}

TEST(Base64, RoundTripAllLengths) {
    std::vector<std::uint8_t> data;
    for (int n = 0; n < 40; ++n) {
        EXPECT_EQ(base64::decode(base64::encode(data)), data);
        data.push_back(static_cast<std::uint8_t>(n * 37 + 11));
    }
}

TEST(Base64, RejectsMalformed) {
    EXPECT_THROW(base64::decode("Zm9"), Error);
    EXPECT_THROW(base64::decode("Zm=v"), Error);
    EXPECT_THROW(base64::decode("Z!9v"), Error);
    EXPECT_THROW(base64::decode("Zg==Zg=="), Error);
}

TEST(CellPayload, LittleEndianRowMajor) {
    const Grid g = fixtures::row({fixtures::kHorizontal, fixtures::kVertical});
    EXPECT_EQ(cell_payload(g), (std::vector<std::uint8_t>{0x01, 0x04, 0x20, 0x80}));
}

// --- environment files ----------------------------------------------------------

TEST(EnvFile, RoundTripIsByteIdentical) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const EnvState s = benchmark_env(seed);
        const std::string a = serialize_env(s);
        const EnvState back = deserialize_env(a);
        EXPECT_EQ(back, s);
        EXPECT_EQ(serialize_env(back), a);
    }
}

TEST(EnvFile, HoldsVersionAndFields) {
    const auto j = nlohmann::json::parse(serialize_env(fixtures::line5_env()));
    EXPECT_EQ(j["version"], "flatland-env/1");
    EXPECT_EQ(j["width"], 5);
    EXPECT_EQ(j["agents"][0]["direction"], "E");
    EXPECT_EQ(j["agents"][0]["start"], nlohmann::json::array({1, 0}));
    EXPECT_EQ(j["max_steps"], 48);
}

TEST(EnvFile, CapturesInitialTasksNotLivePositions) {
    EnvState s = fixtures::line5_env();
    const std::string before = serialize_env(s);
    step(s, {Action::Forward});
    EXPECT_EQ(to_env_file(s).tasks, to_env_file(fixtures::line5_env()).tasks);
    EXPECT_EQ(before.size(), serialize_env(s).size());
}

TEST(EnvFile, TruncatedInputIsParseError) {
    const std::string text = serialize_env(benchmark_env(1));
    for (std::size_t cut : {std::size_t{0}, std::size_t{1}, text.size() / 3, text.size() / 2, text.size() - 3}) {
        EXPECT_THROW(deserialize_env(text.substr(0, cut)), ParseError) << cut;
    }
    EXPECT_EQ(location_of(text.substr(0, 10)).rfind("byte ", 0), 0U);
}

TEST(EnvFile, FieldErrorsCarryJsonPointer) {
    auto j = nlohmann::json::parse(serialize_env(fixtures::line5_env()));
    auto with = [&](auto edit) {
        auto c = j;
        edit(c);
        return location_of(c.dump());
    };
    EXPECT_EQ(with([](auto& c) { c["version"] = "flatland-env/9"; }), "/version");
    EXPECT_EQ(with([](auto& c) { c.erase("width"); }), "/width");
    EXPECT_EQ(with([](auto& c) { c["width"] = 2.5; }), "/width");
    EXPECT_EQ(with([](auto& c) { c["cells"] = "AAAA"; }), "/cells");
    EXPECT_EQ(with([](auto& c) { c["cells"] = "@@@@"; }), "/cells");
    EXPECT_EQ(with([](auto& c) { c["agents"][0]["direction"] = "Q"; }), "/agents/0/direction");
    EXPECT_EQ(with([](auto& c) { c["agents"][0]["start"] = {1}; }), "/agents/0/start");
    EXPECT_EQ(with([](auto& c) { c["malfunction"].erase("probability"); }), "/malfunction/probability");
    EXPECT_EQ(with([](auto& c) { c["seed"] = -3; }), "/seed");
    EXPECT_EQ(with([](auto& c) { c = nlohmann::json::array(); }), "/");
}

TEST(EnvFile, InvalidTaskIsParseError) {
    auto j = nlohmann::json::parse(serialize_env(fixtures::line5_env()));
    j["agents"][0]["target"] = {40, 0};
    EXPECT_THROW(deserialize_env(j.dump()), ParseError);
}

TEST(DirectionLetters, RoundTrip) {
    for (Direction d : kAllDirections) EXPECT_EQ(direction_from_letter(std::string(1, direction_letter(d))), d);
    EXPECT_FALSE(direction_from_letter("NE"));
    EXPECT_FALSE(direction_from_letter("n"));
}

// --- traces ---------------------------------------------------------------------

TEST(Trace, RecordsStepsAndRebuildsReturns) {
    std::stringstream buf;
    ShortestPathPolicy p;
    EpisodeOptions opt;
    opt.trace_out = &buf;
    opt.tree_depth = 1;
    const auto outcome = run_episode(fixtures::line5_env(), p, opt);
    const ParsedTrace parsed = read_trace(buf);
    EXPECT_EQ(parsed.header["policy"], "shortest-path");
    EXPECT_EQ(parsed.steps.size(), 4U);
    ASSERT_TRUE(parsed.summary);
    EXPECT_EQ((*parsed.summary)["returns"][0], -2.0);
    EXPECT_EQ(parsed.steps[0]["trees"][0].size(), 45U);
    EXPECT_EQ(parsed.steps[0]["trees"][0][0], "-inf");
    const EpisodeTrace rebuilt = episode_from_trace(parsed);
    EXPECT_EQ(rebuilt.rewards, outcome.trace.rewards);
    EXPECT_EQ(rebuilt.completed, outcome.trace.completed);
    EXPECT_EQ(rebuilt.steps, 4);
}

TEST(Trace, InfinityEncoding) {
    EXPECT_EQ(finite_or_string(kInfinity), "inf");
    EXPECT_EQ(finite_or_string(kAbsent), "-inf");
    EXPECT_EQ(finite_or_string(2.5), 2.5);
    EXPECT_EQ(number_or_infinity("inf"), kInfinity);
    EXPECT_EQ(number_or_infinity(3), 3.0);
    EXPECT_THROW(number_or_infinity("nan"), Error);
}

TEST(Trace, RejectsGarbage) {
    std::stringstream bad("{\"type\":\"header\"}\nnot json\n");
    EXPECT_THROW(read_trace(bad), ParseError);
    std::stringstream unknown("{\"type\":\"header\"}\n{\"type\":\"other\"}\n");
    EXPECT_THROW(read_trace(unknown), ParseError);
    std::stringstream headless("{\"type\":\"step\"}\n");
    EXPECT_THROW(read_trace(headless), ParseError);
}

// --- svg ------------------------------------------------------------------------

TEST(Svg, EmptyGridHasOnlyBackground) {
    const EnvState s = reset(Grid(3, 2), {}, {}, {}, 0);
    const std::string svg = render_svg(s);
    EXPECT_EQ(count(svg, "<rect"), 1U);
    EXPECT_EQ(count(svg, "class=\"track\""), 0U);
    EXPECT_NE(svg.find("width=\"60\" height=\"40\""), std::string::npos);
}

TEST(Svg, OneGlyphPerRailCell) {
    const Grid g = fixtures::row({fixtures::kDeadEndOpenEast, fixtures::kHorizontal, fixtures::kDeadEndOpenWest});
    const std::string svg = render_svg(reset(g, {}, {}, {}, 0));
    EXPECT_EQ(count(svg, "class=\"track\""), 3U);
    EXPECT_EQ(count(svg, "data-case=\"7\""), 2U);
    EXPECT_EQ(count(svg, "data-case=\"1\" data-variant=\"0\" data-rot=\"1\""), 1U);
}

TEST(Svg, AgentsTargetsAndInvalidCells) {
    EnvState s = fixtures::head_on_env();
    step(s, {Action::Forward, Action::NoOp});
    const std::string svg = render_svg(s);
    EXPECT_EQ(count(svg, "class=\"agent\""), 1U);
    EXPECT_EQ(count(svg, "class=\"target\""), 2U);
    EXPECT_EQ(render_svg(s), svg);
    const Grid bad = fixtures::row({0xFFFF});
    EXPECT_EQ(count(render_svg(reset(bad, {}, {}, {}, 0)), "class=\"invalid\""), 1U);
}
