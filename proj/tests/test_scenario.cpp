#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <json.hpp>

#include "roughmetric/error.hpp"
#include "roughmetric/plot.hpp"
#include "roughmetric/scenario.hpp"

using namespace roughmetric;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "roughmetric_tests" / name;
  fs::remove_all(p);
  return p;
}

// Counts opening and closing tags; enough to catch truncated or unbalanced output.
bool balanced_tags(const std::string& svg) {
  int depth = 0;
  for (std::size_t i = 0; i < svg.size(); ++i) {
    if (svg[i] != '<') continue;
    const std::size_t end = svg.find('>', i);
    if (end == std::string::npos) return false;
    if (svg[i + 1] == '?' || svg[i + 1] == '!') continue;
    if (svg[i + 1] == '/') {
      --depth;
    } else if (svg[end - 1] != '/') {
      ++depth;
    }
    if (depth < 0) return false;
    i = end;
  }
  return depth == 0;
}

}  // namespace

TEST_SUITE("scenarios") {
  TEST_CASE("list and describe") {
    const auto& all = list_scenarios();
    REQUIRE(all.size() == 5);
    CHECK(all.front().id == "S1");
    CHECK(all.back().id == "S5");
    const std::string s2 = describe_scenario("S2");
    CHECK(s2.find("atom") != std::string::npos);
    CHECK(s2.find("S2") != std::string::npos);
    CHECK_THROWS_AS(describe_scenario("S9"), ConfigError);
    CHECK_THROWS_AS(default_config("S9"), ConfigError);
  }

  TEST_CASE("config parsing") {
    const nlohmann::json j = {{"scenario", "S4"},
                              {"domain", {{"resolution", 256}}},
                              {"tolerances", {{"oscillation", 0.2}}},
                              {"seed", 9}};
    const ScenarioConfig c = config_from_json(j);
    CHECK(c.scenario == "S4");
    CHECK(c.domain.resolution == 256);
    CHECK(c.domain.extent == default_config("S4").domain.extent);
    CHECK(c.tolerances.oscillation == 0.2);
    CHECK(c.seed == 9);

    CHECK_THROWS_AS(config_from_json({{"scenario", "S1"}, {"sequence_lenght", 3}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"scenario", "S1"}, {"domain", {{"extent", -1.0}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"scenario", "S1"}, {"stencil", {{"reach", "three"}}}}), ConfigError);

    // Echo round trip; output_dir and workers are excluded.
    ScenarioConfig d = default_config("S2");
    d.output_dir = "elsewhere";
    d.workers = 3;
    const nlohmann::ordered_json echo = config_echo(d);
    CHECK_FALSE(echo.contains("output_dir"));
    CHECK_FALSE(echo.contains("workers"));
    const ScenarioConfig back = config_from_json(nlohmann::json::parse(echo.dump()));
    CHECK(config_echo(back) == echo);
  }

  TEST_CASE("record_to_json") {
    const auto j = record_to_json("record=cover t=2 detected=84 ok=true label=pole bad=nan big=inf");
    CHECK(j["record"] == "cover");
    CHECK(j["t"].get<double>() == 2.0);
    CHECK(j["detected"].get<double>() == 84.0);
    CHECK(j["ok"] == true);
    CHECK(j["label"] == "pole");
    CHECK(j["bad"] == "nan");
    CHECK(j["big"] == "inf");
    CHECK(j.begin().key() == "record");
  }

  TEST_CASE("SeededRng is reproducible and in [0, 1)") {
    SeededRng a(5), b(5), c(6);
    bool differs = false;
    for (int i = 0; i < 1000; ++i) {
      const double x = a.uniform();
      CHECK(x == b.uniform());
      CHECK(x >= 0.0);
      CHECK(x < 1.0);
      differs = differs || x != c.uniform();
    }
    CHECK(differs);
    for (int i = 0; i < 100; ++i) CHECK(a.below(7) < 7);
  }

  TEST_CASE("emit_plot") {
    const std::vector<Series> one{{"line", {{0.0, 1.0}, {1.0, 2.0}}}};
    const std::string svg = render_svg(one, {"title & more", "x", "y", false});
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find("title &amp; more") != std::string::npos);
    CHECK(balanced_tags(svg));
    CHECK(render_svg(one, {"title & more", "x", "y", false}) == svg);

    const fs::path dir = fresh_dir("plot");
    emit_plot(one, dir / "a.svg");
    emit_plot(one, dir / "b.svg");
    CHECK(slurp(dir / "a.svg") == slurp(dir / "b.svg"));

    CHECK_THROWS_AS(render_svg({}), ConfigError);
    CHECK_THROWS_AS(render_svg({{"empty", {}}}), ConfigError);
    // Log axis drops non-positive values; nothing left is an error.
    CHECK_THROWS_AS(render_svg({{"neg", {{0.0, -1.0}, {1.0, 0.0}}}}, {"", "", "", true}), ConfigError);
    CHECK(balanced_tags(render_svg({{"mixed", {{0.0, -1.0}, {1.0, 0.5}, {2.0, 0.25}}}}, {"", "", "", true})));
  }

  TEST_CASE("S4 run: verdicts, files and determinism across workers") {
    ScenarioConfig c = default_config("S4");
    const fs::path one = fresh_dir("s4_w1"), two = fresh_dir("s4_w2");
    c.output_dir = one.string();
    const RunSummary s1 = run_scenario(c);
    INFO(s1.error);
    REQUIRE(s1.complete);
    CHECK(s1.verdicts.size() == 4);
    CHECK(s1.verdict_sources.size() == 4);
    CHECK(s1.verdict("disjointness"));
    CHECK(s1.verdict("coverage"));
    CHECK(s1.verdict("content_bound"));
    CHECK_THROWS_AS(s1.verdict("no_such_verdict"), ConfigError);
    CHECK_FALSE(s1.records("cover", "cover").empty());

    c.workers = 2;
    c.output_dir = two.string();
    REQUIRE(run_scenario(c).complete);
    std::size_t compared = 0;
    for (const auto& e : fs::recursive_directory_iterator(two)) {
      if (!e.is_regular_file() || e.path().filename() == "timings.json") continue;
      CHECK(slurp(e.path()) == slurp(one / fs::relative(e.path(), two)));
      ++compared;
    }
    CHECK(compared >= 3);

    const nlohmann::json parsed = nlohmann::json::parse(slurp(one / "summary.json"));
    CHECK(parsed.contains("config"));
    CHECK(parsed.contains("verdicts"));
    CHECK_FALSE(parsed["config"].contains("workers"));
    CHECK(fs::exists(one / "timings.json"));
  }

  TEST_CASE("validation and an empty detection sweep") {
    ScenarioConfig c = default_config("S4");
    c.family.t0 = 1e6;
    const RunSummary s = run_scenario(c, false);
    INFO(s.error);
    REQUIRE(s.complete);
    CHECK(s.verdict("disjointness"));
    CHECK(s.verdict("coverage"));

    ScenarioConfig bad = default_config("S1");
    bad.sequence_length = 1;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    CHECK_THROWS_AS(run_scenario(bad, false), ConfigError);
    ScenarioConfig coarse = default_config("S4");
    coarse.domain.resolution = 64;
    CHECK_THROWS_AS(validate(coarse), ConfigError);
  }
}
