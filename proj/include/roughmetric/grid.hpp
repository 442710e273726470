#pragma once

// Uniform cell-centred grids on flat tori and boxes, the scalar and metric
// fields sampled on them, and the finite-difference / quadrature primitives
// every other module is built from.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace roughmetric {

// Chart coordinates. Axes beyond the domain dimension are ignored and kept 0.
using Point = std::array<double, 3>;
using Index3 = std::array<int, 3>;

enum class DomainKind { torus, box };

std::string to_string(DomainKind kind);
DomainKind domain_kind_from_string(const std::string& name);

class Domain {
 public:
  static Domain make(DomainKind kind, int dim, double extent, int resolution);
  static Domain make(DomainKind kind, int dim, std::array<double, 3> extent,
                     std::array<int, 3> resolution);

  DomainKind kind() const { return kind_; }
  int dim() const { return dim_; }
  double extent(int axis) const { return extent_[axis]; }
  int resolution(int axis) const { return resolution_[axis]; }
  double spacing(int axis) const { return spacing_[axis]; }
  double max_spacing() const;
  double min_spacing() const;
  double cell_volume() const { return cell_volume_; }
  double total_volume() const;

  std::size_t node_count() const { return node_count_; }
  Index3 index_to_ijk(std::size_t node) const;
  std::size_t ijk_to_index(const Index3& ijk) const;

  // Node `i` sits at the centre of its cell: (i + 1/2) h along each axis.
  Point coord(std::size_t node) const;
  Point center() const;

  // Torus: minimum-image displacement. Box: plain difference.
  Point displacement(const Point& from, const Point& to) const;
  double distance(const Point& a, const Point& b) const;

  bool contains(const Point& x) const;
  // Maps a point into the fundamental cell (torus) or returns it unchanged.
  Point wrap(const Point& x) const;
  std::size_t nearest_node(const Point& x) const;

  // Neighbour at an integer offset; wraps on a torus, empty outside a box.
  std::optional<std::size_t> shifted(std::size_t node, const Index3& offset) const;

  bool operator==(const Domain& other) const;
  bool operator!=(const Domain& other) const { return !(*this == other); }

 private:
  Domain() = default;

  DomainKind kind_ = DomainKind::torus;
  int dim_ = 2;
  std::array<double, 3> extent_{1.0, 1.0, 1.0};
  std::array<int, 3> resolution_{1, 1, 1};
  std::array<double, 3> spacing_{1.0, 1.0, 1.0};
  std::size_t node_count_ = 0;
  double cell_volume_ = 1.0;
};

Domain make_domain(DomainKind kind, int dim, double extent, int resolution);

struct Ball {
  Point center{};
  double radius = 0.0;
};

// Nodes whose centres lie in the closed ball (a relative 1e-12 slack keeps
// lattice-aligned boundary nodes consistent between code paths).
std::vector<std::size_t> nodes_in_ball(const Domain& domain, const Ball& ball);

// Raises DomainError when the ball centre is outside a box, or when the ball
// would overlap its own periodic image on a torus.
void check_ball(const Domain& domain, const Ball& ball);

// Node-centred ball as a translation-invariant list of index offsets.
std::vector<Index3> ball_offsets(const Domain& domain, double radius);

class ScalarField {
 public:
  // Non-finite values are only accepted at flagged nodes.
  ScalarField(Domain domain, std::vector<double> values,
              std::vector<std::size_t> flagged = {});

  const Domain& domain() const { return domain_; }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t node) const { return values_[node]; }
  std::size_t size() const { return values_.size(); }

  bool flagged(std::size_t node) const { return mask_[node] != 0; }
  const std::vector<std::size_t>& flagged_nodes() const { return flagged_; }
  bool has_flags() const { return !flagged_.empty(); }

  ScalarField scaled(double c) const;

 private:
  Domain domain_;
  std::vector<double> values_;
  std::vector<std::uint8_t> mask_;
  std::vector<std::size_t> flagged_;
};

struct ScalarGenerator {
  std::function<double(const Point&)> value;
  // Declared poles; a node coinciding with one is flagged instead of sampled.
  std::vector<Point> singular_points;
};

ScalarField sample_scalar(const Domain& domain, const ScalarGenerator& generator);

// Symmetric n x n matrix, upper triangle packed row by row:
// n = 2: (00, 01, 11); n = 3: (00, 01, 02, 11, 12, 22).
struct SymMatrix {
  int n = 2;
  std::array<double, 6> packed{};

  static SymMatrix identity(int n);
  static SymMatrix diagonal(std::span<const double> entries);
  static int packed_size(int n) { return n * (n + 1) / 2; }
  static int packed_index(int n, int i, int j);

  double operator()(int i, int j) const { return packed[packed_index(n, i, j)]; }
  double quadratic(const Point& v) const;
  SymMatrix scaled(double c) const;
};

SymMatrix inverse(const SymMatrix& m);
double determinant(const SymMatrix& m);
// Closed-form extreme eigenvalues (quadratic formula in 2D, trigonometric
// solution of the characteristic cubic in 3D).
std::pair<double, double> eigen_extremes(const SymMatrix& m);
// Sylvester's criterion on the leading minors.
bool is_positive_definite(const SymMatrix& m);

class MetricField {
 public:
  // Derives inverse and eigenvalue caches. Nodes that fail positive
  // definiteness (or inverse consistency) are flagged, never repaired; more
  // than 1% of such nodes is a SamplingError listing them.
  static MetricField from_components(Domain domain, std::vector<double> components,
                                     std::vector<std::size_t> flagged = {});

  const Domain& domain() const { return domain_; }
  int components_per_node() const { return SymMatrix::packed_size(domain_.dim()); }
  std::span<const double> components() const { return components_; }
  std::span<const double> inverse_components() const { return inverse_; }
  SymMatrix at(std::size_t node) const;
  SymMatrix inverse_at(std::size_t node) const;
  double eig_min(std::size_t node) const { return eig_min_[node]; }
  double eig_max(std::size_t node) const { return eig_max_[node]; }

  bool flagged(std::size_t node) const { return mask_[node] != 0; }
  const std::vector<std::size_t>& flagged_nodes() const { return flagged_; }
  // Subset of flagged nodes rejected for failing positive definiteness.
  const std::vector<std::size_t>& non_spd_nodes() const { return non_spd_; }

  MetricField scaled(double c) const;
  // Component `c` of g (or of g^{-1}) as a scalar field.
  ScalarField component(int c) const;
  ScalarField inverse_component(int c) const;

 private:
  MetricField() = default;

  Domain domain_ = Domain::make(DomainKind::torus, 2, 1.0, 8);
  std::vector<double> components_;
  std::vector<double> inverse_;
  std::vector<double> eig_min_;
  std::vector<double> eig_max_;
  std::vector<std::uint8_t> mask_;
  std::vector<std::size_t> flagged_;
  std::vector<std::size_t> non_spd_;
};

struct MetricGenerator {
  std::function<SymMatrix(const Point&)> value;
  std::vector<Point> singular_points;
};

MetricField sample_metric(const Domain& domain, const MetricGenerator& generator);
MetricField identity_metric(const Domain& domain);
// g = phi(x) * identity.
MetricField scalar_metric(const ScalarField& phi);

class GradientField {
 public:
  GradientField(Domain domain, std::vector<double> vectors, std::vector<std::uint8_t> mask);

  const Domain& domain() const { return domain_; }
  std::span<const double> at(std::size_t node) const;
  double norm(std::size_t node) const;
  bool flagged(std::size_t node) const { return mask_[node] != 0; }

 private:
  Domain domain_;
  std::vector<double> vectors_;
  std::vector<std::uint8_t> mask_;
};

// Second-order central differences in the interior (and everywhere on a
// torus), first-order one-sided differences at box faces. Nodes whose stencil
// touches a flagged node are flagged in the result.
GradientField gradient(const ScalarField& field);

struct Integral {
  double value = 0.0;
  double volume = 0.0;           // non-singular volume of the region
  double excluded_volume = 0.0;  // cell volume of flagged nodes in the region
};

// Midpoint rule over node cells whose centres lie in the region (the whole
// domain when no ball is given). Flagged nodes are skipped and reported.
Integral integrate(const ScalarField& field, const std::optional<Ball>& region = std::nullopt);

std::pair<ScalarField, ScalarField> eigen_range(const MetricField& metric);

// Multilinear interpolation of node values. Wraps on a torus; extrapolates
// linearly from the outermost node layers inside the half-cell at box faces.
struct InterpolationStencil {
  std::array<std::size_t, 8> nodes{};
  std::array<double, 8> weights{};
  int count = 0;
};
InterpolationStencil interpolation_stencil(const Domain& domain, const Point& x);

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

}  // namespace roughmetric
