#pragma once

// Conformal metrics g = u^{4/(n-2)} g0 over a constant (flat) background, the
// scalar curvature operator, curvature energy and small-ball masses, and the
// regularity diagnostics built on them.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "roughmetric/distance.hpp"
#include "roughmetric/grid.hpp"

namespace roughmetric {

class ConformalFactor {
 public:
  // `background` is a constant matrix; `background_curvature` is R(g0) at
  // each node, taken as zero when absent. Requires n >= 3 and u > 0 at every
  // non-flagged node.
  explicit ConformalFactor(ScalarField u, std::optional<SymMatrix> background = std::nullopt,
                           std::optional<ScalarField> background_curvature = std::nullopt);

  const ScalarField& u() const { return u_; }
  const Domain& domain() const { return u_.domain(); }
  int dim() const { return u_.domain().dim(); }
  const SymMatrix& background() const { return background_; }
  const std::optional<ScalarField>& background_curvature() const { return background_curvature_; }
  // Product of every constant applied through scaled().
  double normalization() const { return normalization_; }

  double metric_exponent() const { return 4.0 / (dim() - 2); }   // 4/(n-2)
  double volume_exponent() const { return 2.0 * dim() / (dim() - 2); }  // 2n/(n-2)
  double curvature_exponent() const { return (dim() + 2.0) / (dim() - 2); }  // (n+2)/(n-2)

  ConformalFactor scaled(double c) const;

 private:
  ScalarField u_;
  SymMatrix background_;
  std::optional<ScalarField> background_curvature_;
  double normalization_ = 1.0;
};

MetricField conformal_metric(const ConformalFactor& factor);

// Seven-point (constant-coefficient) Laplacian g0^{ij} d_i d_j u. Box faces
// and nodes whose stencil touches a flagged node are flagged.
ScalarField laplacian(const ScalarField& u, const SymMatrix& background);

struct CurvatureReport {
  ScalarField curvature;  // R(g)
  ScalarField density;    // |R|^{n/2} u^{2n/(n-2)} sqrt(det g0)
  double energy = 0.0;    // integral of density
  double volume = 0.0;    // integral of u^{2n/(n-2)} sqrt(det g0) over non-flagged nodes
  double c = 1.0;         // normalization carried by the factor

  std::vector<std::string> to_records() const;
};

CurvatureReport scalar_curvature(const ConformalFactor& factor, int workers = 1);

struct NormalizedFactor {
  ConformalFactor factor;
  double c = 1.0;
};

// c = volume^{-(n-2)/(2n)}, so the returned factor has volume 1.
NormalizedFactor volume_normalize(const ConformalFactor& factor);

struct InvarianceReport {
  double base_energy = 0.0;
  std::vector<double> scales;
  std::vector<double> energies;
  std::vector<double> relative_deviation;
  double max_deviation = 0.0;

  std::vector<std::string> to_records() const;
};

InvarianceReport curvature_energy_invariance_check(const ConformalFactor& factor,
                                                   std::span<const double> scales, int workers = 1);

struct MassReport {
  std::vector<Point> centers;
  std::vector<double> radii;
  std::vector<std::vector<double>> masses;  // [center][radius]
  std::vector<double> atom_estimate;        // mass at the smallest radius
  double total_energy = 0.0;

  std::vector<std::string> to_records() const;
};

// Radii must decrease strictly with the smallest at least 2h.
MassReport atom_masses(const CurvatureReport& curvature, std::span<const Point> centers,
                       std::span<const double> radii);
MassReport atom_masses(const ConformalFactor& factor, std::span<const Point> centers,
                       std::span<const double> radii, int workers = 1);

struct MeanLogNormalized {
  ConformalFactor factor;
  double c = 1.0;
  double volume = 0.0;
  double excluded_volume = 0.0;
};

// c = exp(-mean of log u over the region), flagged nodes excluded.
MeanLogNormalized mean_log_normalize(const ConformalFactor& factor, const Ball& region);
double mean_log(const ConformalFactor& factor, const Ball& region);

// r^{2-n} times the integral of |grad log u|^2 over B_r(center), per radius.
std::vector<double> log_gradient_energy(const ConformalFactor& factor, const Point& center,
                                        std::span<const double> radii);

struct HarnackReport {
  double ratio = 0.0;   // max/min of c u on the inner ball
  double energy = 0.0;  // curvature energy in the outer ball
  double c = 1.0;       // mean-log normalization over the outer ball

  std::vector<std::string> to_records() const;
};

HarnackReport harnack_ratio(const ConformalFactor& factor, const CurvatureReport& curvature,
                            const Ball& outer, const Ball& inner);
HarnackReport harnack_ratio(const ConformalFactor& factor, const Ball& outer, const Ball& inner,
                            int workers = 1);

// u = (lambda / (lambda^2 + |x - c|^2))^{(n-2)/2}.
ConformalFactor bubble_factor(const Domain& domain, double lambda, const Point& center);
// u = 1 + (|x - c|^2 + eps^2)^{-a/2}; eps = 0 declares c as a pole.
ConformalFactor mollified_pole_factor(const Domain& domain, double a, double eps,
                                      const Point& center);
// u = (2 / (1 + |x - c|^2))^{(n-2)/2}: the unit round sphere, R = n(n-1).
ConformalFactor stereographic_factor(const Domain& domain, const Point& center);

struct DistanceRatioReport {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<double> limit_distance;               // d_g per pair
  std::vector<std::vector<double>> step_distance;   // d_{g_k} per step, per pair
  std::vector<double> max_ratio;                    // per step: max over pairs of max(q, 1/q)
  double final_max_ratio = 0.0;
  double ball_mass = 0.0;                           // curvature mass of the limit in the ball

  std::vector<std::string> to_records() const;
};

// q = d_g / d_{g_k}. Pair endpoints are nodes inside `ball`.
DistanceRatioReport distance_ratio_probe(std::span<const ConformalFactor> sequence,
                                         const ConformalFactor& limit, const Ball& ball,
                                         std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                         const StencilSpec& stencil, int workers = 1);

}  // namespace roughmetric
