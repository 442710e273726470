// roughmetric: scenario runner and direct access to the analysis operations.
// Exit codes: 0 success (all verdicts true for `run`), 2 a verdict failed,
// 1 an error occurred.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <numbers>
#include <string>

#include "roughmetric/conformal.hpp"
#include "roughmetric/distance.hpp"
#include "roughmetric/error.hpp"
#include "roughmetric/field_io.hpp"
#include "roughmetric/record.hpp"
#include "roughmetric/scenario.hpp"
#include "roughmetric/trace.hpp"

using namespace roughmetric;

namespace {

void print(const std::vector<std::string>& lines) {
  for (const std::string& l : lines) std::cout << l << "\n";
}

struct GenerateArgs {
  std::string family = "identity";
  std::string kind = "torus";
  int dim = 2;
  double extent = 1.0;
  int resolution = 64;
  double param = 1.0;  // k, lambda or a
  double eps = 0.0;
  std::string out;
};

void generate(const GenerateArgs& g) {
  const Domain d = Domain::make(domain_kind_from_string(g.kind), g.dim, g.extent, g.resolution);
  Index3 mid{0, 0, 0};
  for (int a = 0; a < d.dim(); ++a) mid[a] = d.resolution(a) / 2;
  const Point c = d.coord(d.ijk_to_index(mid));
  if (g.family == "identity") {
    write_field(identity_metric(d), g.out);
  } else if (g.family == "oscillation") {
    const double k = g.param;
    write_field(sample_metric(d, {[&](const Point& x) {
                                    return SymMatrix::identity(d.dim()).scaled(1.0 + std::sin(k * std::numbers::pi * x[0]) / (k * k));
                                  },
                                  {}}),
                g.out);
  } else if (g.family == "pole") {
    ScalarGenerator gen{[&](const Point& x) {
                          const double r = d.distance(x, c);
                          return std::pow(r * r + g.eps * g.eps, -0.5 * g.param);
                        },
                        {}};
    if (g.eps == 0.0) gen.singular_points.push_back(c);
    write_field(sample_scalar(d, gen), g.out);
  } else if (g.family == "conformal-pole") {
    write_field(mollified_pole_factor(d, g.param, g.eps, c).u(), g.out);
  } else if (g.family == "bubble") {
    write_field(bubble_factor(d, g.param, c).u(), g.out);
  } else if (g.family == "sphere") {
    write_field(stereographic_factor(d, c).u(), g.out);
  } else {
    throw ConfigError("unknown family '" + g.family +
                      "' (identity, oscillation, pole, conformal-pole, bubble, sphere)");
  }
  std::cout << Record("generated").add("family", g.family).add("path", g.out).add("nodes", d.node_count()).line()
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distances, traces and curvature diagnostics for rough metrics"};
  app.require_subcommand(1);

  auto* list = app.add_subcommand("list", "List the scenarios");

  std::string describe_id;
  auto* describe = app.add_subcommand("describe", "Describe one scenario");
  describe->add_option("id", describe_id, "Scenario id (S1..S5)")->required();

  std::string config_path, scenario_id, output_dir;
  int run_workers = 0;
  auto* run = app.add_subcommand("run", "Run a scenario");
  auto* config_opt = run->add_option("--config", config_path, "JSON scenario config");
  run->add_option("--scenario", scenario_id, "Run a scenario with its default config")->excludes(config_opt);
  run->add_option("--output-dir", output_dir, "Override the output directory");
  run->add_option("--workers", run_workers, "Override the worker count");

  std::string metric_path, csv_out;
  int landmarks = 16, reach = 3, samples = 4, dist_workers = 1;
  auto* dist = app.add_subcommand("dist", "Landmark distance matrix of a metric field");
  dist->add_option("--metric", metric_path, "Metric field file")->required();
  dist->add_option("--landmarks", landmarks, "Number of Halton landmarks");
  dist->add_option("--reach", reach, "Stencil reach K");
  dist->add_option("--samples", samples, "Quadrature samples per edge");
  dist->add_option("--workers", dist_workers, "Worker threads");
  dist->add_option("--out", csv_out, "CSV output path")->required();

  std::string field_path;
  double p = 2.0;
  auto* sob = app.add_subcommand("sobolev", "Sobolev norms of a scalar field");
  sob->add_option("--field", field_path, "Scalar field file")->required();
  sob->add_option("--p", p, "Exponent p >= 1");

  double t = 1.0, s = 1.0, lambda_prime = kDefaultLambdaPrime;
  bool no_enforce = false;
  int cover_workers = 1;
  auto* cover = app.add_subcommand("cover", "Superlevel cover certificate of a scalar field");
  cover->add_option("--field", field_path, "Scalar field file")->required();
  cover->add_option("--t", t, "Threshold t")->required();
  cover->add_option("--p", p, "Exponent p");
  cover->add_option("--s", s, "Content dimension s");
  cover->add_option("--lambda-prime", lambda_prime, "Constant in t1 = (t / lambda')^p");
  cover->add_flag("--no-enforce", no_enforce, "Report a violated L1 hypothesis instead of failing");
  cover->add_option("--workers", cover_workers, "Worker threads");

  std::string curvature_out;
  auto* curv = app.add_subcommand("curvature", "Scalar curvature of a conformal factor (dimension 3)");
  curv->add_option("--factor", field_path, "Conformal factor field file")->required();
  curv->add_option("--out", curvature_out, "Write the curvature field here");

  GenerateArgs gen;
  auto* generate_cmd = app.add_subcommand("generate", "Write a test field");
  generate_cmd->add_option("--family", gen.family,
                           "identity, oscillation, pole, conformal-pole, bubble or sphere");
  generate_cmd->add_option("--kind", gen.kind, "torus or box");
  generate_cmd->add_option("--dim", gen.dim, "Dimension");
  generate_cmd->add_option("--extent", gen.extent, "Edge length");
  generate_cmd->add_option("--resolution", gen.resolution, "Nodes per axis");
  generate_cmd->add_option("--param", gen.param, "k, lambda or a");
  generate_cmd->add_option("--eps", gen.eps, "Mollification radius");
  generate_cmd->add_option("--out", gen.out, "Output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (list->parsed()) {
      for (const ScenarioInfo& si : list_scenarios()) std::cout << si.id << "  " << si.title << "\n";
      return 0;
    }
    if (describe->parsed()) {
      std::cout << describe_scenario(describe_id);
      return 0;
    }
    if (run->parsed()) {
      if (config_path.empty() && scenario_id.empty()) throw ConfigError("run needs --config or --scenario");
      ScenarioConfig cfg = config_path.empty() ? default_config(scenario_id) : load_config(config_path);
      if (!output_dir.empty()) cfg.output_dir = output_dir;
      if (run_workers > 0) cfg.workers = run_workers;
      const RunSummary summary = run_scenario(cfg);
      for (const auto& [name, secs] : summary.timings) {
        std::printf("stage %-16s %.2f s\n", name.c_str(), secs);
      }
      for (const auto& [name, ok] : summary.verdicts) {
        std::printf("verdict %-24s %s\n", name.c_str(), ok ? "true" : "false");
      }
      std::printf("summary written to %s/summary.json\n", cfg.output_dir.c_str());
      if (!summary.complete) {
        std::fprintf(stderr, "error: scenario incomplete: %s\n", summary.error.c_str());
        return 1;
      }
      return summary.all_verdicts() ? 0 : 2;
    }
    if (dist->parsed()) {
      const MetricField g = read_metric_field(metric_path);
      const auto lm = halton_landmarks(g.domain(), landmarks);
      const DistanceMatrix d = distance_matrix(g, lm, {reach, samples}, metric_path, dist_workers);
      write_csv(d, csv_out);
      std::cout << Record("distance_matrix").add("landmarks", lm.size()).add("max_entry", d.max_entry()).line()
                << "\n";
      return 0;
    }
    if (sob->parsed()) {
      std::cout << sobolev_norms(read_scalar_field(field_path), p).to_record() << "\n";
      return 0;
    }
    if (cover->parsed()) {
      CoverOptions opt;
      opt.lambda_prime = lambda_prime;
      opt.enforce_hypothesis = !no_enforce;
      opt.workers = cover_workers;
      const ScalarField u = read_scalar_field(field_path);
      const CoverReport rep = superlevel_cover(u, t, p, s, opt);
      print(rep.to_records());
      std::cout << Record("cover_checks")
                       .add("disjointness", rep.disjointness_holds(u.domain()))
                       .add("coverage", rep.coverage_holds(u.domain()))
                       .add("content_bound", rep.bound_holds())
                       .line()
                << "\n";
      return 0;
    }
    if (curv->parsed()) {
      const CurvatureReport rep = scalar_curvature(ConformalFactor(read_scalar_field(field_path)));
      print(rep.to_records());
      if (!curvature_out.empty()) write_field(rep.curvature, curvature_out);
      return 0;
    }
    if (generate_cmd->parsed()) {
      generate(gen);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
