#pragma once

// Config-driven experiment runner. Each scenario binds the library modules
// into one reproducible pipeline and writes summary.json, tables/*.csv and
// plots/*.svg under the output directory.

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "roughmetric/distance.hpp"
#include "roughmetric/grid.hpp"

namespace roughmetric {

struct DomainSpec {
  DomainKind kind = DomainKind::torus;
  int dim = 2;
  double extent = 1.0;
  int resolution = 64;

  Domain make() const { return Domain::make(kind, dim, extent, resolution); }
};

struct FamilySpec {
  std::vector<double> k_schedule;       // S1; empty means 1..sequence_length
  std::vector<double> lambda_schedule;  // S3 bubble scales
  double a = 0.3;                       // pole exponent
  double eps_mollify = 0.0;             // first mollification radius
  double t0 = 1.0;                      // S4 superlevel threshold
  double p = 2.0;                       // Sobolev exponent
  double s = 1.0;                       // content dimension
};

struct Tolerances {
  double limit = 0.02;           // relative, convergence verdicts
  double ratio = 0.02;           // distance ratio allowed above 1
  double atom_threshold = 1e-2;  // S2: upper bound; S3: lower bound
  double metrication = 0.02;     // relative lattice error against |x - y|
  double euclidean = 0.02;       // euclidean_limit_check tolerance
  double oscillation = 0.1;      // S4: tail-spread tolerance as a fraction of the smallest t
};

struct ScenarioConfig {
  std::string scenario = "S1";
  DomainSpec domain;
  StencilSpec stencil;
  int sequence_length = 4;
  FamilySpec family;
  Tolerances tolerances;
  int landmark_count = 16;
  std::string output_dir = "out";
  std::uint64_t seed = 1;
  int workers = 1;
};

ScenarioConfig default_config(const std::string& id);
// Keys missing from `json` keep the scenario defaults; unknown keys are a
// ConfigError.
ScenarioConfig config_from_json(const nlohmann::json& json);
ScenarioConfig load_config(const std::string& path);
// Every field except output_dir and workers, which must not change outputs.
nlohmann::ordered_json config_echo(const ScenarioConfig& config);
void validate(const ScenarioConfig& config);

struct RunSummary {
  ScenarioConfig config;
  nlohmann::ordered_json stages = nlohmann::ordered_json::object();
  std::vector<std::pair<std::string, bool>> verdicts;
  // Verdict name -> "stage/kind.field" it was read from.
  std::vector<std::pair<std::string, std::string>> verdict_sources;
  std::vector<std::pair<std::string, double>> timings;  // seconds per stage
  bool complete = false;
  std::string error;

  bool all_verdicts() const;
  bool verdict(const std::string& name) const;
  // Stage records as parsed JSON objects; `kind` selects one record type.
  std::vector<nlohmann::ordered_json> records(const std::string& stage, const std::string& kind) const;
  nlohmann::ordered_json to_json() const;
};

// Runs the pipeline. Stage failures are caught: the summary comes back
// incomplete with the error message, and files written so far are kept.
RunSummary run_scenario(const ScenarioConfig& config, bool write_files = true);

struct ScenarioInfo {
  std::string id;
  std::string title;
  std::string claim;
};

const std::vector<ScenarioInfo>& list_scenarios();
std::string describe_scenario(const std::string& id);

// Parses a `record=<kind> key=value ...` line into a JSON object; numeric
// values become numbers, nan and inf stay strings.
nlohmann::ordered_json record_to_json(const std::string& line);

// mt19937_64 with uniform doubles taken as (x >> 11) * 2^-53, so streams do
// not depend on the standard library's distribution implementations.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1p-53; }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace roughmetric
