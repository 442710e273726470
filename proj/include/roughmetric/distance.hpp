#pragma once

// Distances induced by metric fields, approximated by shortest paths on a
// lattice graph whose edges join each node to every primitive offset of
// max-norm at most K. Edge lengths integrate sqrt(g(v, v)) along the straight
// segment, so the graph distance is the infimum over stencil polylines.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "roughmetric/grid.hpp"
#include "roughmetric/trace.hpp"

namespace roughmetric {

struct StencilSpec {
  int reach = 3;         // K
  int quad_samples = 4;  // m, midpoint samples per edge

  bool operator==(const StencilSpec&) const = default;
};

void check_stencil(const Domain& domain, const StencilSpec& stencil);

// All integer offsets v != 0 with |v|_inf <= K and gcd of components 1.
std::vector<Index3> stencil_offsets(int dim, int reach);
// The lexicographically positive half of stencil_offsets; each undirected
// edge is stored once, from the node it leaves along one of these.
std::vector<Index3> half_offsets(int dim, int reach);

// Metric components prepared for interpolation along edges: singular nodes
// carry radius-2h ball averages of each component; nodes rejected as non-SPD
// keep their raw values so edges through them can be dropped.
class EdgeSampler {
 public:
  explicit EdgeSampler(const MetricField& metric);

  const Domain& domain() const { return domain_; }
  // Composite midpoint rule for the length of the straight segment a -> b.
  // Empty when an interpolated matrix is not positive definite.
  std::optional<double> edge_weight(const Point& a, const Point& b, int samples) const;

 private:
  Domain domain_;
  std::vector<double> components_;
};

std::optional<double> edge_weight(const MetricField& metric, const Point& a, const Point& b,
                                  int samples);

class LatticeGraph {
 public:
  LatticeGraph(const MetricField& metric, const StencilSpec& stencil, int workers = 1);

  const Domain& domain() const { return domain_; }
  const StencilSpec& stencil() const { return stencil_; }
  const std::vector<Index3>& offsets() const { return offsets_; }
  // Weight of the edge from `node` along offsets()[k]; NaN when the edge
  // leaves a box or was dropped.
  double weight(std::size_t node, std::size_t k) const {
    return weights_[node * offsets_.size() + k];
  }
  std::size_t dropped_edges() const { return dropped_; }

 private:
  Domain domain_;
  StencilSpec stencil_;
  std::vector<Index3> offsets_;
  std::vector<double> weights_;
  std::size_t dropped_ = 0;
};

struct Sweep {
  std::vector<double> distance;  // +inf where unreachable
  std::vector<std::size_t> predecessor;
};

// Label-setting shortest paths from one source; the heap orders entries by
// (distance, node index).
Sweep sweep(const LatticeGraph& graph, std::size_t source);

struct ShortestPath {
  double value = 0.0;
  std::vector<std::size_t> path;  // node sequence, source first
};

// x and y snap to their nearest nodes. Throws UnreachableError.
ShortestPath shortest_distance(const LatticeGraph& graph, const Point& x, const Point& y);
ShortestPath shortest_distance(const MetricField& metric, const Point& x, const Point& y,
                               const StencilSpec& stencil);

struct DistanceMatrix {
  Domain domain = Domain::make(DomainKind::torus, 2, 1.0, 8);
  std::vector<std::size_t> landmarks;
  std::vector<double> values;  // row-major; +inf marks unreachable pairs
  std::string metric;          // free-form provenance label
  StencilSpec stencil;

  std::size_t size() const { return landmarks.size(); }
  double operator()(std::size_t i, std::size_t j) const { return values[i * size() + j]; }
  double max_entry() const;
};

DistanceMatrix distance_matrix(const LatticeGraph& graph, std::span<const std::size_t> landmarks,
                               const std::string& label = "", int workers = 1);
DistanceMatrix distance_matrix(const MetricField& metric, std::span<const std::size_t> landmarks,
                               const StencilSpec& stencil, const std::string& label = "",
                               int workers = 1);

// CSV: header `index,node,x,y[,z],d_0,...,d_{m-1}`, one row per landmark.
void write_csv(const DistanceMatrix& matrix, const std::filesystem::path& path);
DistanceMatrix read_csv(const std::filesystem::path& path, const Domain& domain);

// Distance from one node to every node; unreachable nodes are flagged.
ScalarField distance_field(const LatticeGraph& graph, std::size_t source);

// Halton points (bases 2, 3, 5) snapped to distinct nodes, starting at
// sequence index `start`.
std::vector<std::size_t> halton_landmarks(const Domain& domain, std::size_t count,
                                          std::size_t start = 1);

double uniform_metric_distance(const DistanceMatrix& a, const DistanceMatrix& b);

struct ConvergenceReport {
  std::size_t pair_count = 0;       // unordered landmark pairs
  std::vector<double> per_k;        // sup |D_k - D_ref|
  std::vector<double> successive;   // sup |D_{k+1} - D_k|
  double inequality_margin = 0.0;   // min (D_ref - D_last)
  double tol = 0.0;                 // relative
  double tol_abs = 0.0;             // tol * max entry of D_ref
  bool cauchy = false;              // verdict A
  bool below_reference = false;     // verdict B: D_last <= D_ref + tol_abs
  bool equals_reference = false;    // verdict C: |D_last - D_ref| <= tol_abs

  std::vector<std::string> to_records() const;
};

// Verdict A asks the successive sup-differences to end below tol_abs without
// growing by more than 10% from one step to the next.
ConvergenceReport limit_inequality_report(std::span<const DistanceMatrix> sequence,
                                          const DistanceMatrix& reference, double tol);

struct EuclideanPair {
  std::size_t a = 0;
  std::size_t b = 0;
  double euclidean = 0.0;
  double allowance = 0.0;           // identity-metric deviation for this pair
  std::vector<double> deviation;    // |d_{g_k} - |x - y|| per k
  bool pass = false;
};

struct EuclideanLimitReport {
  std::vector<double> w1p_to_identity;  // metric_w1p_distance(g_k, id, p)
  bool w1p_decreasing = false;
  std::vector<EuclideanPair> pairs;
  std::vector<double> sup_excess;       // max over pairs of deviation - allowance
  bool pass = false;

  std::vector<std::string> to_records() const;
};

// Pass iff every pair's final deviation is at most tol * |x - y| plus the
// metrication allowance measured with the identity metric on the same graph.
EuclideanLimitReport euclidean_limit_check(std::span<const MetricField> sequence,
                                           std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                           double tol, const StencilSpec& stencil, double p,
                                           int workers = 1);

struct BadSetReport {
  double a = 0.0;
  std::vector<std::size_t> nodes;  // eig_min < a
  double volume = 0.0;
  std::vector<CoverReport> covers;  // one per stored component of g^{-1}
  double content_bound = 0.0;       // sum of the component content bounds
  double tau = 0.0;
  double delta = 0.0;
  double lower_bound = 0.0;  // (a / 4) * min(tau / 2, delta)

  std::vector<std::string> to_records() const;
};

struct BadSetOptions {
  double tau = 0.5;
  double delta = 0.25;
  double p = 0.0;  // 0: n - 1/2
  CoverOptions cover;
};

// Each component |g^{ij}| is covered at threshold 1 / (a n^2): a node with
// eig_min < a has |g^{-1}|_F > 1/a, so some entry exceeds that threshold.
BadSetReport bad_set_diagnostic(const MetricField& metric, double a,
                                const BadSetOptions& options = {});

struct GradientBoundReport {
  std::size_t checked = 0;
  std::size_t violations = 0;
  std::vector<std::size_t> violating_nodes;
  double max_ratio = 0.0;      // max |grad d| / (c(n) sum |g^{ij}|)
  double max_gradient = 0.0;
  double min_gradient = 0.0;
  double allowance = 0.0;
  // Against sqrt(eig_max(g)), which |grad d| = 1 in the metric does imply.
  double sharp_max_ratio = 0.0;
  std::size_t sharp_violations = 0;

  std::vector<std::string> to_records() const;
};

// Finite-difference |grad_x d(x, y0)| against c(n) sum_{ij} |g^{ij}(x)| with
// c(n) = 1, at interior nodes more than `exclusion` away from the source.
// A node violates when the ratio exceeds 1.05 + allowance. The sum bound
// fails for metrics with eig_min > 1 (c^2 id with c > 1, diag(1, 4)), so the
// report also carries the sharp bound.
GradientBoundReport gradient_bound_check(const ScalarField& distance, const MetricField& metric,
                                         std::size_t source, double allowance = 0.02,
                                         double exclusion = 0.0);

}  // namespace roughmetric
