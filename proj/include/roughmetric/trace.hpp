#pragma once

// Ball averages and their limits, singular-set detection, the dyadic
// concentration scan and Vitali cover behind the Hausdorff-content bound for
// superlevel sets, Sobolev norms, and line integrals of centred-average
// representatives along polylines.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "roughmetric/grid.hpp"

namespace roughmetric {

inline constexpr double kDefaultOscTol = 1e-3;
inline constexpr double kDefaultLambdaPrime = 8.0;

// Volume of the unit ball in R^s, pi^{s/2} / Gamma(s/2 + 1), for real s.
double unit_ball_volume(double s);

// Mean of u over the non-singular nodes of B_r(x) (clipped to a box).
// Requires r >= 2h.
double r_average(const ScalarField& u, const Point& x, double r);

// r0 * 2^-i for i = 0 .. count-1.
std::vector<double> geometric_radii(double r0, int count);
// The longest r0 * 2^-i schedule whose smallest radius is still >= 2h.
std::vector<double> dyadic_radii(const Domain& domain, double r0);

// Throws ConfigError unless radii are strictly decreasing, have at least
// `min_count` entries and all lie at or above 2h.
void check_radii(const Domain& domain, std::span<const double> radii, std::size_t min_count = 6);

// Node-centred balls for a fixed decreasing radius schedule. Each ball is
// stored as runs along the last axis, so with per-row prefix sums of a field
// the sums over all scheduled radii cost one lookup per run.
class NestedBalls {
 public:
  NestedBalls(const Domain& domain, std::span<const double> radii);

  // Row-wise prefix sums of a field's non-flagged values and counts.
  struct Prefix {
    std::vector<double> value;
    std::vector<std::uint32_t> count;
  };
  Prefix prefix(const ScalarField& field) const;

  struct Sums {
    std::vector<double> sum;         // per radius, over non-flagged nodes
    std::vector<std::size_t> count;  // non-flagged nodes per radius
  };
  Sums sums(std::size_t node, const Prefix& prefix) const;

  std::size_t levels() const { return radii_.size(); }

 private:
  struct Run {
    Index3 row{};  // offset along the leading axes (last entry unused)
    int half_width = 0;
  };

  Domain domain_;
  std::vector<double> radii_;
  std::vector<std::vector<Run>> runs_;  // per level
  int last_ = 1;                        // index of the last axis
  std::size_t stride_ = 0;              // prefix entries per row
};

struct AverageProbe {
  Point x{};
  std::vector<double> radii;
  std::vector<double> averages;
  std::optional<double> limit;  // empty: oscillatory (proxy for x in A(u))
  double oscillation = 0.0;     // over the last ceil(m/2) radii

  bool oscillatory() const { return !limit.has_value(); }
};

// Tail window used for the oscillation test on a schedule of `count` radii.
std::size_t tail_window(std::size_t count);
double tail_oscillation(std::span<const double> averages);

AverageProbe centered_average_limit(const ScalarField& u, const Point& x,
                                    std::span<const double> radii,
                                    double osc_tol = kDefaultOscTol);

struct Concentration {
  std::size_t node = 0;
  double radius = 0.0;  // largest scheduled r0 meeting the threshold
};

// Every node with r0^{-s} * integral(|grad u|^p, B_r0) >= t1 for some
// scheduled r0, paired with the largest such r0. Requires n - p < s < n.
std::vector<Concentration> concentration_scan(const ScalarField& u, double p, double s, double t1,
                                              std::span<const double> radii, int workers = 1);

struct VitaliCover {
  std::vector<std::size_t> selected;  // candidate indices, in selection order
  std::vector<Ball> disjoint;
  std::vector<Ball> enlarged;  // same centres, radius * 5
};

// Greedy selection by (radius desc, index asc); balls are disjoint when
// their centre distance exceeds the sum of the radii.
VitaliCover vitali_cover(const Domain& domain, std::span<const Ball> candidates);

struct CoverOptions {
  double lambda_prime = kDefaultLambdaPrime;
  std::vector<double> radii;  // empty: dyadic_radii(domain, largest admissible r0)
  double osc_tol = kDefaultOscTol;
  // When false a violated L1 hypothesis is reported instead of thrown.
  bool enforce_hypothesis = true;
  int workers = 1;
};

struct CoverReport {
  double t = 0.0;
  double p = 0.0;
  double s = 0.0;
  double lambda_prime = kDefaultLambdaPrime;
  double t1 = 0.0;
  double l1_norm = 0.0;
  double hypothesis_bound = 0.0;  // t * omega_n / 4
  bool hypothesis_ok = true;
  std::vector<Concentration> detected;   // M(u,t) proxy with concentration radii
  std::vector<std::size_t> unresolved;   // detected nodes no scheduled radius certifies
  std::size_t singular_count = 0;        // oscillatory or flagged nodes (A(u) proxy)
  std::vector<Ball> disjoint_balls;
  std::vector<Ball> enlarged_cover;
  double content_bound = 0.0;    // omega_s * sum (5 r_i)^s
  double energy = 0.0;           // integral |grad u|^p
  double certified_bound = 0.0;  // 5^s omega_s energy / t1

  // The three report invariants, checked against the stored geometry.
  bool disjointness_holds(const Domain& domain) const;
  bool coverage_holds(const Domain& domain) const;
  bool bound_holds() const { return content_bound <= certified_bound; }

  std::vector<std::string> to_records() const;
};

CoverReport superlevel_cover(const ScalarField& u, double t, double p, double s,
                             const CoverOptions& options = {});

struct SobolevReport {
  double p = 1.0;
  double lp_norm = 0.0;
  double grad_lp_norm = 0.0;
  double w1p_norm = 0.0;

  std::string to_record() const;
};

SobolevReport sobolev_norms(const ScalarField& u, double p);

// Sum over the stored components of the W^{1,p} norm of g1 - g2, computed
// for the metrics and for their inverses; the larger of the two.
double metric_w1p_distance(const MetricField& g1, const MetricField& g2, double p);

struct CurveTrace {
  std::vector<Point> points;
  std::vector<double> values;
  double length = 0.0;
  double integral = 0.0;
  std::size_t averaged_samples = 0;  // samples next to flagged nodes
};

// Composite midpoint rule with `samples_per_segment` samples per segment.
// Values come from multilinear interpolation; samples whose stencil touches
// a flagged node use the radius-2h ball average instead.
CurveTrace curve_trace(const ScalarField& u, std::span<const Point> polyline,
                       int samples_per_segment);

struct AeOptions {
  double p = 1.5;
  double tol = 1e-2;  // probe convergence tolerance, also the cover threshold
  std::vector<double> radii;
  double osc_tol = kDefaultOscTol;
  double lambda_prime = kDefaultLambdaPrime;
};

struct AeStep {
  double w1p_power = 0.0;      // ||u_k - u||_{W^{1,p}}^p
  double content_bound = 0.0;  // certified H^s_inf bound for {|hat(u_k - u)| > tol}
  double sup_probe_error = 0.0;
};

struct AeProbe {
  Point x{};
  bool flagged = false;  // in the singular set of u or some u_k
  std::vector<double> errors;  // |hat u_k - hat u| per k
  bool converged = false;
};

struct AeReport {
  double s = 0.0;
  bool summable = true;  // ||u_k - u||^p < 2^-k for every k (k from 1)
  std::vector<AeStep> steps;
  std::vector<AeProbe> probes;
  double converged_fraction = 0.0;  // among non-flagged probes

  std::vector<std::string> to_records() const;
};

AeReport ae_convergence_check(std::span<const ScalarField> sequence, const ScalarField& limit,
                              double s, std::span<const Point> probes,
                              const AeOptions& options = {});

}  // namespace roughmetric
