#include "roughmetric/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "roughmetric/error.hpp"
#include "roughmetric/parallel.hpp"
#include "roughmetric/record.hpp"
#include "roughmetric/trace.hpp"

namespace roughmetric {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::size_t> flagged_from(const std::vector<double>& values) {
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n < values.size(); ++n) {
    if (!std::isfinite(values[n])) out.push_back(n);
  }
  return out;
}

void check_background(const SymMatrix& g0, int dim) {
  if (g0.n != dim) throw ConfigError("background metric dimension does not match the factor");
  if (!is_positive_definite(g0)) throw ConfigError("background metric is not positive definite");
}

ScalarField map_nodes(const ScalarField& u, int workers, auto&& fn) {
  std::vector<double> out(u.size(), kNaN);
  parallel_for(u.size(), workers, [&](std::size_t n) {
    if (!u.flagged(n)) out[n] = fn(n);
  });
  return ScalarField(u.domain(), out, flagged_from(out));
}

ConformalFactor sample_factor(const Domain& domain, auto&& value, std::vector<Point> poles = {}) {
  return ConformalFactor(sample_scalar(domain, {value, std::move(poles)}));
}

}  // namespace

ConformalFactor::ConformalFactor(ScalarField u, std::optional<SymMatrix> background,
                                 std::optional<ScalarField> background_curvature)
    : u_(std::move(u)),
      background_(background.value_or(SymMatrix::identity(std::max(u_.domain().dim(), 2)))),
      background_curvature_(std::move(background_curvature)) {
  const int n = u_.domain().dim();
  if (n < 3) throw ConfigError("conformal factors need dimension >= 3 (4/(n-2) is undefined for n = 2)");
  check_background(background_, n);
  for (std::size_t i = 0; i < u_.size(); ++i) {
    if (!u_.flagged(i) && !(u_[i] > 0.0)) {
      throw SamplingError("conformal factor is not positive at node " + std::to_string(i));
    }
  }
  if (background_curvature_ && background_curvature_->domain() != u_.domain()) {
    throw DomainError("background curvature lives on a different domain");
  }
}

ConformalFactor ConformalFactor::scaled(double c) const {
  if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("conformal scale must be positive and finite");
  ConformalFactor out = *this;
  out.u_ = u_.scaled(c);
  out.normalization_ = normalization_ * c;
  return out;
}

MetricField conformal_metric(const ConformalFactor& factor) {
  const Domain& d = factor.domain();
  const int nc = SymMatrix::packed_size(d.dim());
  const double e = factor.metric_exponent();
  std::vector<double> comps(d.node_count() * nc, kNaN);
  for (std::size_t n = 0; n < d.node_count(); ++n) {
    if (factor.u().flagged(n)) continue;
    const double w = std::pow(factor.u()[n], e);
    for (int c = 0; c < nc; ++c) comps[n * nc + c] = w * factor.background().packed[c];
  }
  return MetricField::from_components(d, std::move(comps), factor.u().flagged_nodes());
}

ScalarField laplacian(const ScalarField& u, const SymMatrix& background) {
  const Domain& d = u.domain();
  const int n = d.dim();
  check_background(background, n);
  const SymMatrix inv = inverse(background);
  std::vector<double> out(u.size(), kNaN);
  for (std::size_t node = 0; node < u.size(); ++node) {
    if (u.flagged(node)) continue;
    const double centre = u[node];
    bool ok = true;
    const auto value = [&](const Index3& off) {
      const auto s = d.shifted(node, off);
      if (!s || u.flagged(*s)) {
        ok = false;
        return 0.0;
      }
      return u[*s];
    };
    CompensatedSum sum;
    for (int i = 0; i < n && ok; ++i) {
      Index3 e{0, 0, 0};
      e[i] = 1;
      const Index3 me{-e[0], -e[1], -e[2]};
      const double h = d.spacing(i);
      sum.add(inv(i, i) * (value(e) - 2.0 * centre + value(me)) / (h * h));
      for (int j = i + 1; j < n && ok; ++j) {
        if (inv(i, j) == 0.0) continue;
        Index3 pp{0, 0, 0}, pm{0, 0, 0};
        pp[i] = 1;
        pp[j] = 1;
        pm[i] = 1;
        pm[j] = -1;
        const Index3 mm{-pp[0], -pp[1], -pp[2]}, mp{-pm[0], -pm[1], -pm[2]};
        const double mixed = (value(pp) - value(pm) - value(mp) + value(mm)) / (4.0 * h * d.spacing(j));
        sum.add(2.0 * inv(i, j) * mixed);
      }
    }
    if (ok) out[node] = sum.value();
  }
  return ScalarField(d, out, flagged_from(out));
}

CurvatureReport scalar_curvature(const ConformalFactor& factor, int workers) {
  const ScalarField& u = factor.u();
  const ScalarField lap = laplacian(u, factor.background());
  const int n = factor.dim();
  const double coeff = 4.0 * (n - 1) / (n - 2);
  const double vol_elem = std::sqrt(determinant(factor.background()));
  const auto& r0 = factor.background_curvature();
  const ScalarField curvature = map_nodes(lap, workers, [&](std::size_t i) {
    double rhs = -coeff * lap[i];
    if (r0) {
      if ((*r0).flagged(i)) return kNaN;
      rhs += (*r0)[i] * u[i];
    }
    return std::pow(u[i], -factor.curvature_exponent()) * rhs;
  });
  const ScalarField density = map_nodes(curvature, workers, [&](std::size_t i) {
    return std::pow(std::abs(curvature[i]), 0.5 * n) * std::pow(u[i], factor.volume_exponent()) *
           vol_elem;
  });
  const ScalarField volume_density = map_nodes(u, workers, [&](std::size_t i) {
    return std::pow(u[i], factor.volume_exponent()) * vol_elem;
  });
  CurvatureReport report{curvature, density, integrate(density).value, integrate(volume_density).value,
                         factor.normalization()};
  return report;
}

std::vector<std::string> CurvatureReport::to_records() const {
  return {Record("curvature").add("energy", energy).add("volume", volume).add("c", c).line()};
}

NormalizedFactor volume_normalize(const ConformalFactor& factor) {
  const ScalarField& u = factor.u();
  const double vol_elem = std::sqrt(determinant(factor.background()));
  std::vector<double> dens(u.size(), kNaN);
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!u.flagged(i)) dens[i] = std::pow(u[i], factor.volume_exponent()) * vol_elem;
  }
  const Integral vol = integrate(ScalarField(u.domain(), dens, u.flagged_nodes()));
  if (!(vol.value > 0.0) || !std::isfinite(vol.value)) {
    throw DomainError("volume is not finite and positive; cannot normalize");
  }
  if (vol.excluded_volume > vol.volume) {
    throw DomainError("flagged nodes cover most of the domain; cannot normalize");
  }
  const int n = factor.dim();
  const double c = std::pow(vol.value, -(n - 2.0) / (2.0 * n));
  return {factor.scaled(c), c};
}

std::vector<std::string> InvarianceReport::to_records() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    out.push_back(Record("energy_invariance")
                      .add("c", scales[i])
                      .add("energy", energies[i])
                      .add("base_energy", base_energy)
                      .add("relative_deviation", relative_deviation[i])
                      .line());
  }
  return out;
}

InvarianceReport curvature_energy_invariance_check(const ConformalFactor& factor,
                                                   std::span<const double> scales, int workers) {
  InvarianceReport report;
  report.base_energy = scalar_curvature(factor, workers).energy;
  for (double c : scales) {
    const double e = scalar_curvature(factor.scaled(c), workers).energy;
    const double dev = report.base_energy > 0.0 ? std::abs(e - report.base_energy) / report.base_energy
                                                : std::abs(e);
    report.scales.push_back(c);
    report.energies.push_back(e);
    report.relative_deviation.push_back(dev);
    report.max_deviation = std::max(report.max_deviation, dev);
  }
  return report;
}

std::vector<std::string> MassReport::to_records() const {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    for (std::size_t r = 0; r < radii.size(); ++r) {
      out.push_back(Record("atom_mass")
                        .add("center", c)
                        .add("x", centers[c][0])
                        .add("y", centers[c][1])
                        .add("z", centers[c][2])
                        .add("radius", radii[r])
                        .add("mass", masses[c][r])
                        .line());
    }
    out.push_back(Record("atom_estimate")
                      .add("center", c)
                      .add("radius", radii.back())
                      .add("mass", atom_estimate[c])
                      .add("total_energy", total_energy)
                      .line());
  }
  return out;
}

MassReport atom_masses(const CurvatureReport& curvature, std::span<const Point> centers,
                       std::span<const double> radii) {
  const Domain& d = curvature.density.domain();
  check_radii(d, radii, 1);
  MassReport report;
  report.radii.assign(radii.begin(), radii.end());
  report.total_energy = curvature.energy;
  for (const Point& x : centers) {
    std::vector<double> row;
    for (double r : radii) {
      check_ball(d, {x, r});
      row.push_back(integrate(curvature.density, Ball{x, r}).value);
    }
    report.centers.push_back(x);
    report.atom_estimate.push_back(row.back());
    report.masses.push_back(std::move(row));
  }
  return report;
}

MassReport atom_masses(const ConformalFactor& factor, std::span<const Point> centers,
                       std::span<const double> radii, int workers) {
  return atom_masses(scalar_curvature(factor, workers), centers, radii);
}

namespace {

ScalarField log_field(const ScalarField& u) {
  std::vector<double> logs(u.size(), kNaN);
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!u.flagged(i)) logs[i] = std::log(u[i]);
  }
  return ScalarField(u.domain(), logs, u.flagged_nodes());
}

Integral log_integral(const ConformalFactor& factor, const Ball& region) {
  check_ball(factor.domain(), region);
  const Integral in = integrate(log_field(factor.u()), region);
  if (!(in.volume > 0.0)) throw DomainError("region holds no unflagged node");
  return in;
}

}  // namespace

double mean_log(const ConformalFactor& factor, const Ball& region) {
  const Integral in = log_integral(factor, region);
  return in.value / in.volume;
}

MeanLogNormalized mean_log_normalize(const ConformalFactor& factor, const Ball& region) {
  const Integral in = log_integral(factor, region);
  const double c = std::exp(-in.value / in.volume);
  return {factor.scaled(c), c, in.volume, in.excluded_volume};
}

std::vector<double> log_gradient_energy(const ConformalFactor& factor, const Point& center,
                                        std::span<const double> radii) {
  const ScalarField& u = factor.u();
  const Domain& d = u.domain();
  const GradientField grad = gradient(log_field(u));
  std::vector<double> sq(u.size(), kNaN);
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!grad.flagged(i)) sq[i] = grad.norm(i) * grad.norm(i);
  }
  const ScalarField energy(d, sq, flagged_from(sq));
  std::vector<double> out;
  for (double r : radii) {
    if (!(r > 0.0)) throw ConfigError("radii must be positive");
    check_ball(d, {center, r});
    out.push_back(std::pow(r, 2.0 - d.dim()) * integrate(energy, Ball{center, r}).value);
  }
  return out;
}

std::vector<std::string> HarnackReport::to_records() const {
  return {Record("harnack").add("ratio", ratio).add("energy", energy).add("c", c).line()};
}

HarnackReport harnack_ratio(const ConformalFactor& factor, const CurvatureReport& curvature,
                            const Ball& outer, const Ball& inner) {
  const Domain& d = factor.domain();
  if (d.distance(outer.center, inner.center) + inner.radius > outer.radius * (1.0 + 1e-12)) {
    throw ConfigError("inner ball is not contained in the outer ball");
  }
  const MeanLogNormalized norm = mean_log_normalize(factor, outer);
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t node : nodes_in_ball(d, inner)) {
    if (norm.factor.u().flagged(node)) continue;
    lo = std::min(lo, norm.factor.u()[node]);
    hi = std::max(hi, norm.factor.u()[node]);
  }
  if (hi == 0.0) throw DomainError("inner ball holds no unflagged node");
  return {hi / lo, integrate(curvature.density, outer).value, norm.c};
}

HarnackReport harnack_ratio(const ConformalFactor& factor, const Ball& outer, const Ball& inner,
                            int workers) {
  return harnack_ratio(factor, scalar_curvature(factor, workers), outer, inner);
}

ConformalFactor bubble_factor(const Domain& domain, double lambda, const Point& center) {
  if (!(lambda > 0.0)) throw ConfigError("bubble scale must be positive");
  const double e = (domain.dim() - 2) / 2.0;
  return sample_factor(domain, [=, &domain](const Point& x) {
    const double r = domain.distance(x, center);
    return std::pow(lambda / (lambda * lambda + r * r), e);
  });
}

ConformalFactor mollified_pole_factor(const Domain& domain, double a, double eps, const Point& center) {
  if (!(a > 0.0)) throw ConfigError("pole exponent must be positive");
  if (!(eps >= 0.0)) throw ConfigError("mollification must be non-negative");
  std::vector<Point> poles;
  if (eps == 0.0) poles.push_back(center);
  return sample_factor(
      domain,
      [=, &domain](const Point& x) {
        const double r = domain.distance(x, center);
        return 1.0 + std::pow(r * r + eps * eps, -0.5 * a);
      },
      poles);
}

ConformalFactor stereographic_factor(const Domain& domain, const Point& center) {
  const double e = (domain.dim() - 2) / 2.0;
  return sample_factor(domain, [=, &domain](const Point& x) {
    const double r = domain.distance(x, center);
    return std::pow(2.0 / (1.0 + r * r), e);
  });
}

std::vector<std::string> DistanceRatioReport::to_records() const {
  std::vector<std::string> out;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    Record r("distance_ratio_pair");
    r.add("a", pairs[p].first).add("b", pairs[p].second).add("limit", limit_distance[p]);
    for (std::size_t k = 0; k < step_distance.size(); ++k) {
      r.add("d_" + std::to_string(k), step_distance[k][p]);
    }
    out.push_back(r.line());
  }
  for (std::size_t k = 0; k < max_ratio.size(); ++k) {
    out.push_back(Record("distance_ratio_step").add("k", k).add("max_ratio", max_ratio[k]).line());
  }
  out.push_back(Record("distance_ratio")
                    .add("final_max_ratio", final_max_ratio)
                    .add("ball_mass", ball_mass)
                    .line());
  return out;
}

DistanceRatioReport distance_ratio_probe(std::span<const ConformalFactor> sequence,
                                         const ConformalFactor& limit, const Ball& ball,
                                         std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                         const StencilSpec& stencil, int workers) {
  if (sequence.empty()) throw ConfigError("distance_ratio_probe needs a non-empty sequence");
  if (pairs.empty()) throw ConfigError("distance_ratio_probe needs at least one pair");
  const Domain& d = limit.domain();
  check_ball(d, ball);
  for (const auto& [a, b] : pairs) {
    for (std::size_t node : {a, b}) {
      if (node >= d.node_count() || d.distance(d.coord(node), ball.center) > ball.radius) {
        throw DomainError("pair endpoint " + std::to_string(node) + " is outside the probe ball");
      }
    }
  }
  const auto pair_distances = [&](const ConformalFactor& f) {
    if (f.domain() != d) throw DomainError("sequence factors live on different domains");
    const LatticeGraph graph(conformal_metric(f), stencil, workers);
    std::map<std::size_t, std::vector<double>> sweeps;
    std::vector<double> out;
    for (const auto& [a, b] : pairs) {
      auto it = sweeps.find(a);
      if (it == sweeps.end()) it = sweeps.emplace(a, sweep(graph, a).distance).first;
      out.push_back(it->second[b]);
    }
    return out;
  };
  DistanceRatioReport report;
  report.pairs.assign(pairs.begin(), pairs.end());
  report.limit_distance = pair_distances(limit);
  for (const ConformalFactor& f : sequence) {
    std::vector<double> dk = pair_distances(f);
    double worst = 1.0;
    for (std::size_t p = 0; p < dk.size(); ++p) {
      if (dk[p] == 0.0 && report.limit_distance[p] == 0.0) continue;
      const double q = report.limit_distance[p] / dk[p];
      worst = std::max(worst, std::max(q, 1.0 / q));
    }
    report.max_ratio.push_back(worst);
    report.step_distance.push_back(std::move(dk));
  }
  report.final_max_ratio = report.max_ratio.back();
  report.ball_mass = integrate(scalar_curvature(limit, workers).density, ball).value;
  return report;
}

}  // namespace roughmetric
