#include "roughmetric/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "roughmetric/conformal.hpp"
#include "roughmetric/error.hpp"
#include "roughmetric/plot.hpp"
#include "roughmetric/record.hpp"
#include "roughmetric/trace.hpp"

namespace roughmetric {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using std::numbers::pi;

namespace {

const std::vector<ScenarioInfo> kScenarios = {
    {"S1", "smooth oscillating limit",
     "A uniformly bounded metric family converging to a continuous metric in W^{1,p} induces distances "
     "converging uniformly to the distance of the limit: g_k = (1 + sin(k pi x1) / k^2) id on a 2D torus, "
     "checked through the Cauchy (A), inequality (B) and equality (C) verdicts against the identity."},
    {"S2", "conformal equality check",
     "For conformal metrics in dimension 3 whose curvature measure has no atom above eps0, the distances "
     "converge to the distance of the limit metric: a mollified pole 1 + (|x-c|^2 + eps^2)^{-a/2} with eps "
     "halving, atom estimate at the pole and distance ratios against the unmollified limit."},
    {"S3", "bubble negative control",
     "Concentrating bubbles (lambda / (lambda^2 + |x-c|^2))^{1/2} carry a curvature atom, and the distance "
     "equality fails: atom estimate above threshold for every lambda, equality verdict against the flat "
     "volume-normalized reference false."},
    {"S4", "superlevel cover certificate",
     "Points where the centered averages of a Sobolev function exceed t are covered by balls with "
     "concentrated gradient energy, whose enlargements bound the Hausdorff content by the energy: "
     "disjointness, coverage and the content bound on a mollified pole, with nested detected sets as t halves."},
    {"S5", "Euclidean limit",
     "Metrics converging to the identity in W^{1,p} induce distances converging to |x - y|: lattice "
     "metrication error, stencil monotonicity, and a shrinking conformal perturbation."},
};

const ScenarioInfo& info(const std::string& id) {
  for (const ScenarioInfo& s : kScenarios) {
    if (s.id == id) return s;
  }
  throw ConfigError("unknown scenario '" + id + "' (expected one of S1..S5)");
}

// Reject keys outside `allowed` so typos fail loudly.
void check_keys(const nlohmann::json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const nlohmann::json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

std::vector<std::size_t> seeded_nodes(const Domain& d, std::size_t count, SeededRng& rng,
                                      const std::function<bool(std::size_t)>& accept) {
  std::vector<std::size_t> out;
  std::set<std::size_t> seen;
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (++attempts > 1000 * (count + 10)) throw ConfigError("could not place the requested landmarks");
    const std::size_t n = rng.below(d.node_count());
    if (seen.count(n) || !accept(n)) continue;
    seen.insert(n);
    out.push_back(n);
  }
  return out;
}

std::size_t centre_node(const Domain& d) {
  Index3 ijk{0, 0, 0};
  for (int a = 0; a < d.dim(); ++a) ijk[a] = d.resolution(a) / 2;
  return d.ijk_to_index(ijk);
}

class Runner {
 public:
  Runner(const ScenarioConfig& config, bool write) : write_(write), out_(config.output_dir) {
    summary.config = config;
    if (write_) {
      fs::create_directories(out_ / "tables");
      fs::create_directories(out_ / "plots");
    }
  }

  RunSummary summary;

  const ScenarioConfig& config() const { return summary.config; }

  void stage(const std::string& name, const std::function<void()>& body) {
    const auto start = std::chrono::steady_clock::now();
    body();
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
    summary.timings.emplace_back(name, took.count());
  }

  void add(const std::string& stage, const std::vector<std::string>& lines) {
    ojson& arr = summary.stages[stage];
    if (arr.is_null()) arr = ojson::array();
    for (const std::string& l : lines) arr.push_back(record_to_json(l));
  }
  void add(const std::string& stage, const Record& record) { add(stage, std::vector<std::string>{record.line()}); }

  // Verdicts are read back from a serialized check record.
  void verdicts_from(const std::string& stage, const Record& checks, const std::vector<std::string>& names) {
    add(stage, checks);
    const ojson obj = record_to_json(checks.line());
    for (const std::string& n : names) {
      summary.verdicts.emplace_back(n, obj.at(n).get<bool>());
      summary.verdict_sources.emplace_back(n, stage + "/" + obj.at("record").get<std::string>() + "." + n);
    }
  }

  void table(const std::string& name, const std::vector<std::string>& header,
             const std::vector<std::vector<double>>& rows) {
    if (!write_) return;
    std::ofstream f(out_ / "tables" / (name + ".csv"), std::ios::binary);
    for (std::size_t i = 0; i < header.size(); ++i) f << (i ? "," : "") << header[i];
    f << "\n";
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << format_real(row[i]);
      f << "\n";
    }
  }

  void matrix(const std::string& name, const DistanceMatrix& m) {
    if (write_) write_csv(m, out_ / "tables" / (name + ".csv"));
  }

  void plot(const std::string& name, const std::vector<Series>& series, const PlotOptions& options) {
    if (write_) emit_plot(series, out_ / "plots" / (name + ".svg"), options);
  }

  void finish() {
    if (!write_) return;
    std::ofstream s(out_ / "summary.json", std::ios::binary);
    s << summary.to_json().dump(2) << "\n";
    ojson t = ojson::object();
    t["scenario"] = summary.config.scenario;
    t["workers"] = summary.config.workers;
    ojson stages = ojson::object();
    for (const auto& [name, secs] : summary.timings) stages[name] = secs;
    t["stages_seconds"] = stages;
    std::ofstream tf(out_ / "timings.json", std::ios::binary);
    tf << t.dump(2) << "\n";
  }

 private:
  bool write_;
  fs::path out_;
};

// ---- S1 ----------------------------------------------------------------

std::vector<double> k_schedule(const ScenarioConfig& c) {
  if (!c.family.k_schedule.empty()) return c.family.k_schedule;
  std::vector<double> ks;
  for (int k = 1; k <= c.sequence_length; ++k) ks.push_back(k);
  return ks;
}

MetricField oscillation_metric(const Domain& d, double k) {
  return sample_metric(d, {[&d, k](const Point& x) {
                             return SymMatrix::identity(d.dim()).scaled(1.0 + std::sin(k * pi * x[0]) / (k * k));
                           },
                           {}});
}

void run_s1(Runner& r) {
  const ScenarioConfig& c = r.config();
  const Domain d = c.domain.make();
  const std::vector<double> ks = k_schedule(c);
  const MetricField id = identity_metric(d);
  SeededRng rng(c.seed);
  const auto landmarks = seeded_nodes(d, c.landmark_count, rng, [](std::size_t) { return true; });

  std::vector<MetricField> metrics;
  for (double k : ks) metrics.push_back(oscillation_metric(d, k));

  std::vector<double> w1p;
  r.stage("sobolev", [&] {
    for (std::size_t i = 0; i < ks.size(); ++i) {
      w1p.push_back(metric_w1p_distance(metrics[i], id, c.family.p));
      r.add("sobolev", Record("metric_w1p").add("k", ks[i]).add("p", c.family.p).add("distance", w1p.back()));
    }
  });

  DistanceMatrix reference;
  std::vector<DistanceMatrix> seq;
  r.stage("distance", [&] {
    reference = distance_matrix(id, landmarks, c.stencil, "identity", c.workers);
    r.matrix("distance_reference", reference);
    r.add("distance", Record("distance_matrix").add("label", "identity").add("max_entry", reference.max_entry()));
    for (std::size_t i = 0; i < ks.size(); ++i) {
      seq.push_back(distance_matrix(metrics[i], landmarks, c.stencil, "k=" + format_real(ks[i]), c.workers));
      r.matrix("distance_k" + std::to_string(i + 1), seq.back());
      r.add("distance", Record("distance_matrix").add("k", ks[i]).add("max_entry", seq.back().max_entry()));
    }
  });

  r.stage("limit", [&] {
    const ConvergenceReport rep = limit_inequality_report(seq, reference, c.tolerances.limit);
    r.add("limit", rep.to_records());
    bool decreasing = true;
    for (std::size_t k = 1; k < rep.per_k.size(); ++k) decreasing = decreasing && rep.per_k[k] < rep.per_k[k - 1];
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < ks.size(); ++k) {
      rows.push_back({ks[k], w1p[k], rep.per_k[k], k < rep.successive.size() ? rep.successive[k] : NAN});
    }
    r.table("convergence", {"k", "w1p_to_identity", "sup_to_reference", "sup_to_next"}, rows);
    Series dev{"sup |D_k - D_id|", {}}, succ{"sup |D_k+1 - D_k|", {}}, tol{"tolerance", {}};
    Series wser{"W1p(g_k, id)", {}};
    for (std::size_t k = 0; k < ks.size(); ++k) {
      dev.points.emplace_back(ks[k], rep.per_k[k]);
      if (k < rep.successive.size()) succ.points.emplace_back(ks[k], rep.successive[k]);
      tol.points.emplace_back(ks[k], rep.tol_abs);
      wser.points.emplace_back(ks[k], w1p[k]);
    }
    r.plot("deviation", {dev, succ, tol}, {"S1 distance deviation", "k", "sup over landmark pairs", true});
    r.plot("w1p", {wser}, {"S1 metric W1p distance to identity", "k", "W1p", true});
    r.verdicts_from("checks",
                    Record("checks")
                        .add("verdict_a", rep.cauchy)
                        .add("verdict_b", rep.below_reference)
                        .add("verdict_c", rep.equals_reference)
                        .add("deviation_decreasing", decreasing)
                        .add("final_deviation", rep.per_k.back())
                        .add("tol_abs", rep.tol_abs)
                        .add("final_within_tol", rep.per_k.back() <= rep.tol_abs),
                    {"verdict_a", "verdict_b", "verdict_c", "deviation_decreasing", "final_within_tol"});
  });
}

// ---- S2 / S3 shared pieces ------------------------------------------------

std::vector<double> mass_radii(const Domain& d) {
  const double h = d.max_spacing();
  return {0.5, 0.25, 4 * h, 2 * h};
}

struct FactorSummary {
  double energy = 0.0;
  double volume = 0.0;
  double atom = 0.0;
  double harnack = 0.0;
  double harnack_energy = 0.0;
  double log_energy_sup = 0.0;
};

FactorSummary summarize_factor(const ConformalFactor& f, const Point& centre, int workers) {
  const CurvatureReport cur = scalar_curvature(f, workers);
  const std::vector<Point> centres{centre};
  const MassReport mass = atom_masses(cur, centres, mass_radii(f.domain()));
  const HarnackReport har = harnack_ratio(f, cur, Ball{centre, 0.75}, Ball{centre, 0.375});
  const std::vector<double> radii{0.5, 0.25, 0.125};
  const std::vector<double> le = log_gradient_energy(f, centre, radii);
  return {cur.energy, cur.volume, mass.atom_estimate[0], har.ratio, har.energy,
          *std::max_element(le.begin(), le.end())};
}

Record factor_record(const std::string& kind, const FactorSummary& s) {
  return Record(kind)
      .add("energy", s.energy)
      .add("volume", s.volume)
      .add("atom_estimate", s.atom)
      .add("harnack_ratio", s.harnack)
      .add("harnack_energy", s.harnack_energy)
      .add("log_energy_sup", s.log_energy_sup);
}

std::vector<std::pair<std::size_t, std::size_t>> ball_pairs(const Domain& d, const Point& centre, double radius,
                                                            std::size_t count, SeededRng& rng) {
  const auto nodes = seeded_nodes(d, count, rng, [&](std::size_t n) {
    return d.distance(d.coord(n), centre) <= radius;
  });
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < nodes.size(); ++i) pairs.emplace_back(nodes[i], nodes[(i + 1) % nodes.size()]);
  // One pair straddling the centre along the first axis.
  const double h = d.spacing(0);
  const int off = static_cast<int>(std::floor(0.5 / h));
  const std::size_t c = d.nearest_node(centre);
  const auto a = d.shifted(c, {-off, 0, 0}), b = d.shifted(c, {off, 0, 0});
  if (a && b) pairs.emplace_back(*a, *b);
  return pairs;
}

void ratio_outputs(Runner& r, const DistanceRatioReport& rep, const std::vector<double>& xs,
                   const std::string& x_label) {
  r.add("distance", rep.to_records());
  std::vector<std::vector<double>> rows;
  for (std::size_t p = 0; p < rep.pairs.size(); ++p) {
    std::vector<double> row{double(rep.pairs[p].first), double(rep.pairs[p].second), rep.limit_distance[p]};
    for (const auto& step : rep.step_distance) row.push_back(step[p]);
    rows.push_back(row);
  }
  std::vector<std::string> header{"a", "b", "limit"};
  for (std::size_t k = 0; k < rep.step_distance.size(); ++k) header.push_back("step_" + std::to_string(k + 1));
  r.table("distance_pairs", header, rows);
  Series s{"max ratio", {}};
  for (std::size_t k = 0; k < rep.max_ratio.size(); ++k) s.points.emplace_back(xs[k], rep.max_ratio[k]);
  r.plot("distance_ratio", {s}, {"distance ratio against the limit", x_label, "max(q, 1/q)", false});
}

// ---- S2 ----------------------------------------------------------------

void run_s2(Runner& r) {
  const ScenarioConfig& c = r.config();
  const Domain d = c.domain.make();
  if (d.dim() != 3) throw ConfigError("S2 runs in dimension 3");
  const Point pole = d.coord(centre_node(d));
  std::vector<double> eps;
  for (int k = 0; k < c.sequence_length; ++k) eps.push_back(c.family.eps_mollify * std::pow(0.5, k));
  std::vector<ConformalFactor> seq;
  for (double e : eps) seq.push_back(mollified_pole_factor(d, c.family.a, e, pole));
  const ConformalFactor limit = mollified_pole_factor(d, c.family.a, 0.0, pole);

  std::vector<FactorSummary> sums;
  r.stage("curvature", [&] {
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < seq.size(); ++k) {
      sums.push_back(summarize_factor(seq[k], pole, c.workers));
      r.add("curvature", factor_record("pole_step", sums.back()).add("k", k + 1).add("eps", eps[k]));
      const FactorSummary& s = sums.back();
      rows.push_back({double(k + 1), eps[k], s.energy, s.volume, s.atom, s.harnack, s.harnack_energy, s.log_energy_sup});
    }
    const FactorSummary ls = summarize_factor(limit, pole, c.workers);
    r.add("curvature", factor_record("pole_limit", ls));
    rows.push_back({0.0, 0.0, ls.energy, ls.volume, ls.atom, ls.harnack, ls.harnack_energy, ls.log_energy_sup});
    r.table("curvature", {"k", "eps", "energy", "volume", "atom_estimate", "harnack_ratio", "harnack_energy",
                          "log_energy_sup"}, rows);
    Series atoms{"atom estimate", {}}, thr{"eps0", {}};
    for (std::size_t k = 0; k < seq.size(); ++k) {
      atoms.points.emplace_back(k + 1, sums[k].atom);
      thr.points.emplace_back(k + 1, c.tolerances.atom_threshold);
    }
    r.plot("atom_estimate", {atoms, thr}, {"curvature mass in B(pole, 2h)", "k", "mass", true});
  });

  DistanceRatioReport rep;
  r.stage("distance", [&] {
    SeededRng rng(c.seed);
    const auto pairs = ball_pairs(d, pole, 0.75, c.landmark_count, rng);
    rep = distance_ratio_probe(seq, limit, Ball{pole, 0.75}, pairs, c.stencil, c.workers);
    std::vector<double> ks;
    for (std::size_t k = 0; k < seq.size(); ++k) ks.push_back(k + 1);
    ratio_outputs(r, rep, ks, "k");
  });

  const double atom = sums.back().atom;
  r.verdicts_from("checks",
                  Record("checks")
                      .add("atom_estimate", atom)
                      .add("atom_threshold", c.tolerances.atom_threshold)
                      .add("atom_below_threshold", atom <= c.tolerances.atom_threshold)
                      .add("final_max_ratio", rep.final_max_ratio)
                      .add("ratio_limit", 1.0 + c.tolerances.ratio)
                      .add("ratio_within_tol", rep.final_max_ratio <= 1.0 + c.tolerances.ratio),
                  {"atom_below_threshold", "ratio_within_tol"});
}

// ---- S3 ----------------------------------------------------------------

void run_s3(Runner& r) {
  const ScenarioConfig& c = r.config();
  const Domain d = c.domain.make();
  if (d.dim() != 3) throw ConfigError("S3 runs in dimension 3");
  const Point centre = d.coord(centre_node(d));
  const std::vector<double>& lambdas = c.family.lambda_schedule;
  std::vector<ConformalFactor> seq;
  std::vector<double> scale;
  for (double l : lambdas) {
    NormalizedFactor n = volume_normalize(bubble_factor(d, l, centre));
    scale.push_back(n.c);
    seq.push_back(std::move(n.factor));
  }
  const ConformalFactor flat = volume_normalize(ConformalFactor(sample_scalar(d, {[](const Point&) { return 1.0; }, {}}))).factor;

  std::vector<FactorSummary> sums;
  r.stage("curvature", [&] {
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < seq.size(); ++k) {
      sums.push_back(summarize_factor(seq[k], centre, c.workers));
      r.add("curvature", factor_record("bubble", sums.back()).add("lambda", lambdas[k]).add("c", scale[k]));
      const FactorSummary& s = sums.back();
      rows.push_back({lambdas[k], scale[k], s.energy, s.volume, s.atom, s.harnack, s.harnack_energy, s.log_energy_sup});
    }
    r.table("curvature", {"lambda", "c", "energy", "volume", "atom_estimate", "harnack_ratio", "harnack_energy",
                          "log_energy_sup"}, rows);
    Series atoms{"atom estimate", {}}, har{"harnack ratio", {}};
    for (std::size_t k = 0; k < seq.size(); ++k) {
      atoms.points.emplace_back(lambdas[k], sums[k].atom);
      har.points.emplace_back(lambdas[k], sums[k].harnack);
    }
    r.plot("atom_estimate", {atoms, har}, {"bubble concentration", "lambda", "value", true});
  });

  ConvergenceReport conv;
  DistanceRatioReport rep;
  r.stage("distance", [&] {
    SeededRng rng(c.seed);
    const auto landmarks = seeded_nodes(d, c.landmark_count, rng, [](std::size_t) { return true; });
    std::vector<DistanceMatrix> mats;
    const DistanceMatrix ref = distance_matrix(conformal_metric(flat), landmarks, c.stencil, "flat", c.workers);
    r.matrix("distance_reference", ref);
    for (std::size_t k = 0; k < seq.size(); ++k) {
      mats.push_back(distance_matrix(conformal_metric(seq[k]), landmarks, c.stencil,
                                     "lambda=" + format_real(lambdas[k]), c.workers));
      r.matrix("distance_k" + std::to_string(k + 1), mats.back());
    }
    conv = limit_inequality_report(mats, ref, c.tolerances.limit);
    r.add("distance", conv.to_records());
    const auto pairs = ball_pairs(d, centre, 0.75, std::min<int>(c.landmark_count, 4), rng);
    rep = distance_ratio_probe(seq, flat, Ball{centre, 0.75}, pairs, c.stencil, c.workers);
    ratio_outputs(r, rep, lambdas, "lambda");
  });

  double min_atom = sums.front().atom;
  for (const auto& s : sums) min_atom = std::min(min_atom, s.atom);
  r.verdicts_from("checks",
                  Record("checks")
                      .add("min_atom_estimate", min_atom)
                      .add("atom_threshold", c.tolerances.atom_threshold)
                      .add("atom_above_threshold", min_atom >= c.tolerances.atom_threshold)
                      .add("verdict_c", conv.equals_reference)
                      .add("equality_fails", !conv.equals_reference)
                      .add("final_max_ratio", rep.final_max_ratio),
                  {"atom_above_threshold", "equality_fails"});
}

// ---- S4 ----------------------------------------------------------------

void run_s4(Runner& r) {
  const ScenarioConfig& c = r.config();
  const Domain d = c.domain.make();
  const Point pole = d.coord(centre_node(d));
  const double a = c.family.a, eps = c.family.eps_mollify;
  ScalarGenerator gen{[&d, pole, a, eps](const Point& x) {
                        const double rr = d.distance(x, pole);
                        return std::pow(rr * rr + eps * eps, -0.5 * a);
                      },
                      {}};
  if (eps == 0.0) gen.singular_points.push_back(pole);
  const ScalarField u = sample_scalar(d, gen);

  r.stage("sobolev", [&] { r.add("sobolev", std::vector<std::string>{sobolev_norms(u, c.family.p).to_record()}); });

  std::vector<CoverReport> covers;
  std::vector<double> ts;
  r.stage("cover", [&] {
    CoverOptions opt;
    // Halve down to the smallest radius the grid resolves (2h).
    const double r0 = 0.5 * std::min(d.extent(0), d.extent(1));
    opt.radii = geometric_radii(r0, 1 + static_cast<int>(std::floor(std::log2(r0 / (2.0 * d.max_spacing())) + 1e-9)));
    opt.enforce_hypothesis = false;
    opt.workers = c.workers;
    // One tolerance for the whole sweep, so the singular proxy is shared.
    opt.osc_tol = c.tolerances.oscillation * c.family.t0 * std::pow(0.5, c.sequence_length - 1);
    for (int j = 0; j < c.sequence_length; ++j) {
      ts.push_back(c.family.t0 * std::pow(0.5, j));
      covers.push_back(superlevel_cover(u, ts.back(), c.family.p, c.family.s, opt));
      r.add("cover", covers.back().to_records());
    }
    std::vector<std::vector<double>> rows;
    for (std::size_t j = 0; j < covers.size(); ++j) {
      const CoverReport& cr = covers[j];
      rows.push_back({ts[j], double(cr.detected.size()), double(cr.unresolved.size()), double(cr.disjoint_balls.size()),
                      cr.content_bound, cr.certified_bound});
    }
    r.table("cover_sweep", {"t", "detected", "unresolved", "balls", "content_bound", "certified_bound"}, rows);
    std::vector<std::vector<double>> balls;
    for (const Ball& b : covers.front().disjoint_balls) balls.push_back({b.center[0], b.center[1], b.radius});
    r.table("cover_balls_t0", {"x", "y", "radius"}, balls);
    Series content{"content bound", {}}, cert{"certified bound", {}};
    for (std::size_t j = 0; j < covers.size(); ++j) {
      content.points.emplace_back(ts[j], covers[j].content_bound);
      cert.points.emplace_back(ts[j], covers[j].certified_bound);
    }
    r.plot("cover_bounds", {content, cert}, {"cover content against energy bound", "t", "bound", true});
  });

  bool disjoint = true, coverage = true, bound = true;
  for (const CoverReport& cr : covers) {
    disjoint = disjoint && cr.disjointness_holds(d);
    coverage = coverage && cr.coverage_holds(d);
    bound = bound && cr.bound_holds();
  }
  const auto detected_set = [](const CoverReport& cr) {
    std::set<std::size_t> s(cr.unresolved.begin(), cr.unresolved.end());
    for (const Concentration& hit : cr.detected) s.insert(hit.node);
    return s;
  };
  bool nested = covers.size() >= 2;
  for (std::size_t j = 1; j < covers.size(); ++j) {
    const auto big = detected_set(covers[j]), small = detected_set(covers[j - 1]);
    nested = nested && std::includes(big.begin(), big.end(), small.begin(), small.end()) && big.size() >= small.size();
  }
  r.verdicts_from("checks",
                  Record("checks")
                      .add("disjointness", disjoint)
                      .add("coverage", coverage)
                      .add("content_bound", bound)
                      .add("detected_t0", detected_set(covers.front()).size())
                      .add("detected_t0_half", covers.size() > 1 ? detected_set(covers[1]).size() : std::size_t{0})
                      .add("nested_detection", nested),
                  {"disjointness", "coverage", "content_bound", "nested_detection"});
}

// ---- S5 ----------------------------------------------------------------

void run_s5(Runner& r) {
  const ScenarioConfig& c = r.config();
  const Domain d = c.domain.make();
  const MetricField id = identity_metric(d);
  SeededRng rng(c.seed);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  while (pairs.size() < static_cast<std::size_t>(c.landmark_count)) {
    const std::size_t a = rng.below(d.node_count()), b = rng.below(d.node_count());
    if (d.distance(d.coord(a), d.coord(b)) >= 0.25 * d.extent(0)) pairs.emplace_back(a, b);
  }

  double worst3 = 0.0, worst4 = 0.0;
  bool monotone = true;
  r.stage("metrication", [&] {
    const LatticeGraph g3(id, c.stencil, c.workers);
    const LatticeGraph g4(id, {c.stencil.reach + 1, c.stencil.quad_samples}, c.workers);
    std::vector<std::vector<double>> rows;
    for (const auto& [a, b] : pairs) {
      const double e = d.distance(d.coord(a), d.coord(b));
      const double d3 = sweep(g3, a).distance[b], d4 = sweep(g4, a).distance[b];
      const double r3 = std::abs(d3 - e) / e, r4 = std::abs(d4 - e) / e;
      worst3 = std::max(worst3, r3);
      worst4 = std::max(worst4, r4);
      monotone = monotone && d4 <= d3;
      rows.push_back({double(a), double(b), e, d3, d4, r3, r4});
    }
    r.table("metrication", {"a", "b", "euclidean", "d_K", "d_K_plus_1", "rel_error_K", "rel_error_K_plus_1"}, rows);
    r.add("metrication", Record("metrication")
                             .add("pairs", pairs.size())
                             .add("reach", c.stencil.reach)
                             .add("max_rel_error", worst3)
                             .add("max_rel_error_next_reach", worst4));
  });

  EuclideanLimitReport lim;
  r.stage("euclidean_limit", [&] {
    const Point centre = d.coord(centre_node(d));
    const double h = d.max_spacing();
    std::vector<MetricField> seq;
    for (int k = 1; k <= c.sequence_length; ++k) {
      const double amp = std::pow(0.5, k);
      seq.push_back(sample_metric(d, {[&, amp](const Point& x) {
                                        const double rr = d.distance(x, centre);
                                        return SymMatrix::identity(d.dim()).scaled(
                                            1.0 + amp * std::pow(rr * rr + 4 * h * h, -0.25));
                                      },
                                      {}}));
    }
    lim = euclidean_limit_check(seq, pairs, c.tolerances.euclidean, c.stencil, c.family.p, c.workers);
    r.add("euclidean_limit", lim.to_records());
    Series ex{"sup excess", {}}, w{"W1p to identity", {}};
    for (std::size_t k = 0; k < lim.sup_excess.size(); ++k) {
      ex.points.emplace_back(k + 1, lim.sup_excess[k]);
      w.points.emplace_back(k + 1, lim.w1p_to_identity[k]);
    }
    r.plot("euclidean_limit", {ex, w}, {"convergence to the Euclidean distance", "k", "value", false});
  });

  r.verdicts_from("checks",
                  Record("checks")
                      .add("max_rel_error", worst3)
                      .add("metrication_within_tol", worst3 <= c.tolerances.metrication)
                      .add("stencil_monotone", monotone && worst4 <= worst3)
                      .add("euclidean_limit", lim.pass)
                      .add("w1p_decreasing", lim.w1p_decreasing),
                  {"metrication_within_tol", "stencil_monotone", "euclidean_limit", "w1p_decreasing"});
}

}  // namespace

// ---- config ---------------------------------------------------------------

ScenarioConfig default_config(const std::string& id) {
  info(id);
  ScenarioConfig c;
  c.scenario = id;
  c.output_dir = "out/" + id;
  if (id == "S1") {
    c.domain = {DomainKind::torus, 2, 2.0, 128};
    c.stencil = {3, 4};
    c.sequence_length = 8;
    c.family.p = 2.0;
    c.landmark_count = 16;
  } else if (id == "S2") {
    c.domain = {DomainKind::box, 3, 2.0, 48};
    c.stencil = {2, 2};
    c.sequence_length = 4;
    c.family.a = 0.3;
    c.family.eps_mollify = 16.0 * 2.0 / 48.0;  // 16h, so the last step sits at 2h
    c.landmark_count = 8;
  } else if (id == "S3") {
    c.domain = {DomainKind::box, 3, 2.0, 48};
    c.stencil = {2, 2};
    c.sequence_length = 3;
    c.family.lambda_schedule = {0.25, 0.125, 0.0625};
    c.tolerances.atom_threshold = 5e-2;
    c.landmark_count = 8;
  } else if (id == "S4") {
    c.domain = {DomainKind::torus, 2, 1.0, 128};
    c.sequence_length = 3;
    c.family.a = 0.25;
    c.family.eps_mollify = 2.0 / 128.0;
    c.family.p = 1.5;
    c.family.s = 1.0;
    c.family.t0 = 2.0;
    c.landmark_count = 0;
  } else {
    c.domain = {DomainKind::box, 2, 1.0, 128};
    c.stencil = {3, 4};
    c.sequence_length = 10;
    c.family.p = 1.2;
    c.landmark_count = 50;
  }
  return c;
}

void validate(const ScenarioConfig& c) {
  info(c.scenario);
  c.domain.make();
  check_stencil(c.domain.make(), c.stencil);
  if (c.sequence_length < 1) throw ConfigError("sequence_length must be positive");
  if (c.landmark_count < 0) throw ConfigError("landmark_count must be non-negative");
  if (c.workers < 1) throw ConfigError("workers must be at least 1");
  const Tolerances& t = c.tolerances;
  for (double v : {t.limit, t.ratio, t.atom_threshold, t.metrication, t.euclidean, t.oscillation}) {
    if (!(v > 0.0)) throw ConfigError("tolerances must be positive");
  }
  const FamilySpec& f = c.family;
  if (c.scenario == "S1") {
    if (!f.k_schedule.empty() && static_cast<int>(f.k_schedule.size()) != c.sequence_length) {
      throw ConfigError("k_schedule length must equal sequence_length");
    }
    if (c.sequence_length < 3) throw ConfigError("S1 needs at least 3 iterates");
    if (c.landmark_count < 2) throw ConfigError("S1 needs at least 2 landmarks");
  }
  if (c.scenario == "S2") {
    if (!(f.eps_mollify > 0.0)) throw ConfigError("S2 needs eps_mollify > 0");
    if (!(f.a > 0.0)) throw ConfigError("S2 needs a > 0");
    if (c.landmark_count < 1) throw ConfigError("S2 needs at least 1 landmark");
  }
  if (c.scenario == "S3") {
    if (f.lambda_schedule.empty()) throw ConfigError("lambda_schedule must be non-empty");
    if (static_cast<int>(f.lambda_schedule.size()) != c.sequence_length) {
      throw ConfigError("lambda_schedule length must equal sequence_length");
    }
    if (c.sequence_length < 3) throw ConfigError("S3 needs at least 3 iterates");
    if (c.landmark_count < 2) throw ConfigError("S3 needs at least 2 landmarks");
  }
  if (c.scenario == "S4") {
    if (c.sequence_length < 2) throw ConfigError("S4 needs at least 2 thresholds");
    if (!(f.t0 > 0.0) || !(f.p >= 1.0) || !(f.s >= 0.0)) throw ConfigError("S4 needs t0 > 0, p >= 1, s >= 0");
    if (!(f.eps_mollify >= 0.0)) throw ConfigError("eps_mollify must be non-negative");
    // The cover needs six radii from half the edge down to 2h.
    if (c.domain.resolution < 128) {
      throw ConfigError("S4 needs resolution >= 128 to resolve six radii");
    }
  }
  if (c.scenario == "S5" && c.landmark_count < 1) throw ConfigError("S5 needs at least 1 pair");
}

ScenarioConfig config_from_json(const nlohmann::json& j) {
  check_keys(j, {"scenario", "domain", "stencil", "sequence_length", "family", "tolerances", "landmark_count",
                 "output_dir", "seed", "workers"},
             "config");
  if (!j.contains("scenario")) throw ConfigError("config needs a 'scenario' key");
  ScenarioConfig c = default_config(j.at("scenario").get<std::string>());
  if (j.contains("domain")) {
    const auto& o = j.at("domain");
    check_keys(o, {"kind", "dim", "extent", "resolution"}, "domain");
    if (o.contains("kind")) c.domain.kind = domain_kind_from_string(o.at("kind").get<std::string>());
    read(o, "dim", c.domain.dim);
    read(o, "extent", c.domain.extent);
    read(o, "resolution", c.domain.resolution);
  }
  if (j.contains("stencil")) {
    const auto& o = j.at("stencil");
    check_keys(o, {"reach", "quad_samples"}, "stencil");
    read(o, "reach", c.stencil.reach);
    read(o, "quad_samples", c.stencil.quad_samples);
  }
  if (j.contains("family")) {
    const auto& o = j.at("family");
    check_keys(o, {"k_schedule", "lambda_schedule", "a", "eps_mollify", "t0", "p", "s"}, "family");
    read(o, "k_schedule", c.family.k_schedule);
    read(o, "lambda_schedule", c.family.lambda_schedule);
    read(o, "a", c.family.a);
    read(o, "eps_mollify", c.family.eps_mollify);
    read(o, "t0", c.family.t0);
    read(o, "p", c.family.p);
    read(o, "s", c.family.s);
  }
  if (j.contains("tolerances")) {
    const auto& o = j.at("tolerances");
    check_keys(o, {"limit", "ratio", "atom_threshold", "metrication", "euclidean", "oscillation"}, "tolerances");
    read(o, "limit", c.tolerances.limit);
    read(o, "ratio", c.tolerances.ratio);
    read(o, "atom_threshold", c.tolerances.atom_threshold);
    read(o, "metrication", c.tolerances.metrication);
    read(o, "euclidean", c.tolerances.euclidean);
    read(o, "oscillation", c.tolerances.oscillation);
  }
  read(j, "sequence_length", c.sequence_length);
  read(j, "landmark_count", c.landmark_count);
  read(j, "output_dir", c.output_dir);
  read(j, "seed", c.seed);
  read(j, "workers", c.workers);
  validate(c);
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

ojson config_echo(const ScenarioConfig& c) {
  ojson j;
  j["scenario"] = c.scenario;
  j["domain"] = {{"kind", to_string(c.domain.kind)},
                 {"dim", c.domain.dim},
                 {"extent", c.domain.extent},
                 {"resolution", c.domain.resolution}};
  j["stencil"] = {{"reach", c.stencil.reach}, {"quad_samples", c.stencil.quad_samples}};
  j["sequence_length"] = c.sequence_length;
  j["family"] = {{"k_schedule", c.family.k_schedule},
                 {"lambda_schedule", c.family.lambda_schedule},
                 {"a", c.family.a},
                 {"eps_mollify", c.family.eps_mollify},
                 {"t0", c.family.t0},
                 {"p", c.family.p},
                 {"s", c.family.s}};
  j["tolerances"] = {{"limit", c.tolerances.limit},
                     {"ratio", c.tolerances.ratio},
                     {"atom_threshold", c.tolerances.atom_threshold},
                     {"metrication", c.tolerances.metrication},
                     {"euclidean", c.tolerances.euclidean},
                     {"oscillation", c.tolerances.oscillation}};
  j["landmark_count"] = c.landmark_count;
  j["seed"] = c.seed;
  return j;
}

// ---- summary ----------------------------------------------------------------

bool RunSummary::all_verdicts() const {
  if (!complete) return false;
  return std::all_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.second; });
}

bool RunSummary::verdict(const std::string& name) const {
  for (const auto& [n, v] : verdicts) {
    if (n == name) return v;
  }
  throw ConfigError("no verdict named " + name);
}

std::vector<ojson> RunSummary::records(const std::string& stage, const std::string& kind) const {
  std::vector<ojson> out;
  if (!stages.contains(stage)) return out;
  for (const ojson& rec : stages.at(stage)) {
    if (rec.at("record") == kind) out.push_back(rec);
  }
  return out;
}

ojson RunSummary::to_json() const {
  ojson j;
  const ScenarioInfo& si = info(config.scenario);
  j["scenario"] = si.id;
  j["title"] = si.title;
  j["claim"] = si.claim;
  j["config"] = config_echo(config);
  j["complete"] = complete;
  if (!error.empty()) j["error"] = error;
  j["stages"] = stages;
  ojson v = ojson::object(), src = ojson::object();
  for (const auto& [n, b] : verdicts) v[n] = b;
  for (const auto& [n, s] : verdict_sources) src[n] = s;
  j["verdicts"] = v;
  j["verdict_sources"] = src;
  j["all_verdicts_true"] = all_verdicts();
  return j;
}

ojson record_to_json(const std::string& line) {
  ojson obj = ojson::object();
  std::istringstream in(line);
  std::string token;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw FormatError("record token without '=': " + token);
    const std::string key = token.substr(0, eq), value = token.substr(eq + 1);
    if (key == "record") {
      obj[key] = value;
      continue;
    }
    if (value == "true" || value == "false") {
      obj[key] = value == "true";
      continue;
    }
    char* end = nullptr;
    const double x = std::strtod(value.c_str(), &end);
    if (!value.empty() && end == value.c_str() + value.size() && std::isfinite(x)) {
      const bool integral = value.find_first_of(".eE") == std::string::npos;
      if (integral) {
        obj[key] = static_cast<long long>(std::llround(x));
      } else {
        obj[key] = x;
      }
    } else {
      obj[key] = value;
    }
  }
  return obj;
}

const std::vector<ScenarioInfo>& list_scenarios() { return kScenarios; }

std::string describe_scenario(const std::string& id) {
  const ScenarioInfo& s = info(id);
  const ScenarioConfig c = default_config(id);
  std::ostringstream out;
  out << s.id << ": " << s.title << "\n" << s.claim << "\n";
  out << "default domain: " << to_string(c.domain.kind) << " dim " << c.domain.dim << " extent "
      << c.domain.extent << " resolution " << c.domain.resolution << "\n";
  return out.str();
}

RunSummary run_scenario(const ScenarioConfig& config, bool write_files) {
  validate(config);
  Runner runner(config, write_files);
  try {
    if (config.scenario == "S1") run_s1(runner);
    else if (config.scenario == "S2") run_s2(runner);
    else if (config.scenario == "S3") run_s3(runner);
    else if (config.scenario == "S4") run_s4(runner);
    else run_s5(runner);
    runner.summary.complete = true;
  } catch (const Error& e) {
    runner.summary.complete = false;
    runner.summary.error = e.what();
  }
  runner.finish();
  return runner.summary;
}

}  // namespace roughmetric
