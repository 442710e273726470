#include "roughmetric/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

#include "roughmetric/error.hpp"

namespace roughmetric {

namespace {

constexpr double kBallSlack = 1e-12;
constexpr double kInverseTolerance = 1e-9;

std::string format_point(const Point& x, int dim) {
  std::ostringstream out;
  out << '(';
  for (int a = 0; a < dim; ++a) {
    if (a) out << ", ";
    out << x[a];
  }
  out << ')';
  return out.str();
}

std::vector<std::size_t> normalise_flags(std::vector<std::size_t> flagged, std::size_t n) {
  std::sort(flagged.begin(), flagged.end());
  flagged.erase(std::unique(flagged.begin(), flagged.end()), flagged.end());
  if (!flagged.empty() && flagged.back() >= n) {
    throw ConfigError("flagged node index " + std::to_string(flagged.back()) +
                      " out of range for " + std::to_string(n) + " nodes");
  }
  return flagged;
}

int positive_mod(int i, int n) {
  const int r = i % n;
  return r < 0 ? r + n : r;
}

}  // namespace

std::string to_string(DomainKind kind) { return kind == DomainKind::torus ? "torus" : "box"; }

DomainKind domain_kind_from_string(const std::string& name) {
  if (name == "torus") return DomainKind::torus;
  if (name == "box") return DomainKind::box;
  throw ConfigError("unknown domain kind '" + name + "' (expected torus or box)");
}

Domain Domain::make(DomainKind kind, int dim, double extent, int resolution) {
  return make(kind, dim, {extent, extent, extent}, {resolution, resolution, resolution});
}

Domain Domain::make(DomainKind kind, int dim, std::array<double, 3> extent,
                    std::array<int, 3> resolution) {
  if (dim != 2 && dim != 3) {
    throw ConfigError("domain dimension must be 2 or 3, got " + std::to_string(dim));
  }
  Domain d;
  d.kind_ = kind;
  d.dim_ = dim;
  d.node_count_ = 1;
  d.cell_volume_ = 1.0;
  for (int a = 0; a < 3; ++a) {
    if (a >= dim) {
      d.extent_[a] = 0.0;
      d.resolution_[a] = 1;
      d.spacing_[a] = 0.0;
      continue;
    }
    if (resolution[a] < 8) {
      throw ConfigError("resolution must be at least 8 per axis, got " +
                        std::to_string(resolution[a]) + " on axis " + std::to_string(a));
    }
    if (!(extent[a] > 0.0) || !std::isfinite(extent[a])) {
      throw ConfigError("extent must be positive and finite on axis " + std::to_string(a));
    }
    d.extent_[a] = extent[a];
    d.resolution_[a] = resolution[a];
    d.spacing_[a] = extent[a] / resolution[a];
    d.node_count_ *= static_cast<std::size_t>(resolution[a]);
    d.cell_volume_ *= d.spacing_[a];
  }
  return d;
}

Domain make_domain(DomainKind kind, int dim, double extent, int resolution) {
  return Domain::make(kind, dim, extent, resolution);
}

double Domain::max_spacing() const {
  double h = 0.0;
  for (int a = 0; a < dim_; ++a) h = std::max(h, spacing_[a]);
  return h;
}

double Domain::min_spacing() const {
  double h = spacing_[0];
  for (int a = 1; a < dim_; ++a) h = std::min(h, spacing_[a]);
  return h;
}

double Domain::total_volume() const {
  double v = 1.0;
  for (int a = 0; a < dim_; ++a) v *= extent_[a];
  return v;
}

Index3 Domain::index_to_ijk(std::size_t node) const {
  Index3 ijk{0, 0, 0};
  for (int a = dim_ - 1; a >= 0; --a) {
    ijk[a] = static_cast<int>(node % static_cast<std::size_t>(resolution_[a]));
    node /= static_cast<std::size_t>(resolution_[a]);
  }
  return ijk;
}

std::size_t Domain::ijk_to_index(const Index3& ijk) const {
  std::size_t index = 0;
  for (int a = 0; a < dim_; ++a) {
    index = index * static_cast<std::size_t>(resolution_[a]) + static_cast<std::size_t>(ijk[a]);
  }
  return index;
}

Point Domain::coord(std::size_t node) const {
  const Index3 ijk = index_to_ijk(node);
  Point x{0.0, 0.0, 0.0};
  for (int a = 0; a < dim_; ++a) x[a] = (ijk[a] + 0.5) * spacing_[a];
  return x;
}

Point Domain::center() const {
  Point x{0.0, 0.0, 0.0};
  for (int a = 0; a < dim_; ++a) x[a] = 0.5 * extent_[a];
  return x;
}

Point Domain::displacement(const Point& from, const Point& to) const {
  Point d{0.0, 0.0, 0.0};
  for (int a = 0; a < dim_; ++a) {
    d[a] = to[a] - from[a];
    if (kind_ == DomainKind::torus) d[a] -= extent_[a] * std::round(d[a] / extent_[a]);
  }
  return d;
}

double Domain::distance(const Point& a, const Point& b) const {
  const Point d = displacement(a, b);
  return std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
}

bool Domain::contains(const Point& x) const {
  if (kind_ == DomainKind::torus) {
    for (int a = 0; a < dim_; ++a) {
      if (!std::isfinite(x[a])) return false;
    }
    return true;
  }
  for (int a = 0; a < dim_; ++a) {
    const double slack = 1e-12 * extent_[a];
    if (!(x[a] >= -slack && x[a] <= extent_[a] + slack)) return false;
  }
  return true;
}

Point Domain::wrap(const Point& x) const {
  if (kind_ == DomainKind::box) return x;
  Point w = x;
  for (int a = 0; a < dim_; ++a) {
    w[a] = x[a] - extent_[a] * std::floor(x[a] / extent_[a]);
    if (w[a] >= extent_[a]) w[a] -= extent_[a];
  }
  return w;
}

std::size_t Domain::nearest_node(const Point& x) const {
  const Point w = wrap(x);
  Index3 ijk{0, 0, 0};
  for (int a = 0; a < dim_; ++a) {
    int i = static_cast<int>(std::floor(w[a] / spacing_[a]));
    ijk[a] = std::clamp(i, 0, resolution_[a] - 1);
  }
  return ijk_to_index(ijk);
}

std::optional<std::size_t> Domain::shifted(std::size_t node, const Index3& offset) const {
  Index3 ijk = index_to_ijk(node);
  for (int a = 0; a < dim_; ++a) {
    int i = ijk[a] + offset[a];
    if (kind_ == DomainKind::torus) {
      i = positive_mod(i, resolution_[a]);
    } else if (i < 0 || i >= resolution_[a]) {
      return std::nullopt;
    }
    ijk[a] = i;
  }
  return ijk_to_index(ijk);
}

bool Domain::operator==(const Domain& other) const {
  return kind_ == other.kind_ && dim_ == other.dim_ && extent_ == other.extent_ &&
         resolution_ == other.resolution_;
}

void check_ball(const Domain& domain, const Ball& ball) {
  if (!(ball.radius > 0.0) || !std::isfinite(ball.radius)) {
    throw DomainError("ball radius must be positive and finite");
  }
  if (!domain.contains(ball.center)) {
    throw DomainError("ball centre " + format_point(ball.center, domain.dim()) +
                      " lies outside the domain");
  }
  if (domain.kind() == DomainKind::torus) {
    for (int a = 0; a < domain.dim(); ++a) {
      if (ball.radius > 0.5 * domain.extent(a)) {
        throw DomainError("ball radius exceeds half the torus extent on axis " +
                          std::to_string(a));
      }
    }
  }
}

std::vector<std::size_t> nodes_in_ball(const Domain& domain, const Ball& ball) {
  check_ball(domain, ball);
  const int dim = domain.dim();
  const Point c = domain.wrap(ball.center);
  const double r2 = ball.radius * ball.radius * (1.0 + kBallSlack);
  std::array<int, 3> lo{0, 0, 0};
  std::array<int, 3> hi{0, 0, 0};
  for (int a = 0; a < dim; ++a) {
    const double h = domain.spacing(a);
    lo[a] = static_cast<int>(std::floor((c[a] - ball.radius) / h - 0.5)) - 1;
    hi[a] = static_cast<int>(std::ceil((c[a] + ball.radius) / h - 0.5)) + 1;
  }
  std::vector<std::size_t> nodes;
  Index3 ijk{0, 0, 0};
  Index3 wrapped{0, 0, 0};
  const auto visit = [&]() {
    double d2 = 0.0;
    for (int a = 0; a < dim; ++a) {
      const double dx = (ijk[a] + 0.5) * domain.spacing(a) - c[a];
      d2 += dx * dx;
    }
    if (d2 > r2) return;
    for (int a = 0; a < dim; ++a) {
      int i = ijk[a];
      if (domain.kind() == DomainKind::torus) {
        i = positive_mod(i, domain.resolution(a));
      } else if (i < 0 || i >= domain.resolution(a)) {
        return;
      }
      wrapped[a] = i;
    }
    nodes.push_back(domain.ijk_to_index(wrapped));
  };
  for (ijk[0] = lo[0]; ijk[0] <= hi[0]; ++ijk[0]) {
    for (ijk[1] = lo[1]; ijk[1] <= hi[1]; ++ijk[1]) {
      if (dim == 2) {
        visit();
        continue;
      }
      for (ijk[2] = lo[2]; ijk[2] <= hi[2]; ++ijk[2]) visit();
    }
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return nodes;
}

std::vector<Index3> ball_offsets(const Domain& domain, double radius) {
  const int dim = domain.dim();
  const double r2 = radius * radius * (1.0 + kBallSlack);
  std::array<int, 3> reach{0, 0, 0};
  for (int a = 0; a < dim; ++a) {
    reach[a] = static_cast<int>(std::ceil(radius / domain.spacing(a)));
  }
  std::vector<Index3> offsets;
  for (int i = -reach[0]; i <= reach[0]; ++i) {
    for (int j = -reach[1]; j <= reach[1]; ++j) {
      for (int k = -reach[2]; k <= reach[2]; ++k) {
        const Index3 o{i, j, k};
        double d2 = 0.0;
        for (int a = 0; a < dim; ++a) {
          const double dx = o[a] * domain.spacing(a);
          d2 += dx * dx;
        }
        if (d2 <= r2) offsets.push_back(o);
      }
    }
  }
  return offsets;
}

ScalarField::ScalarField(Domain domain, std::vector<double> values,
                         std::vector<std::size_t> flagged)
    : domain_(std::move(domain)), values_(std::move(values)) {
  if (values_.size() != domain_.node_count()) {
    throw ConfigError("scalar field has " + std::to_string(values_.size()) +
                      " values for a domain of " + std::to_string(domain_.node_count()) +
                      " nodes");
  }
  flagged_ = normalise_flags(std::move(flagged), values_.size());
  mask_.assign(values_.size(), 0);
  for (std::size_t n : flagged_) mask_[n] = 1;
  for (std::size_t n = 0; n < values_.size(); ++n) {
    if (!mask_[n] && !std::isfinite(values_[n])) {
      throw SamplingError("non-finite value at unflagged node " + std::to_string(n) + " " +
                          format_point(domain_.coord(n), domain_.dim()));
    }
  }
}

ScalarField ScalarField::scaled(double c) const {
  std::vector<double> v(values_.size());
  for (std::size_t n = 0; n < v.size(); ++n) v[n] = c * values_[n];
  return ScalarField(domain_, std::move(v), flagged_);
}

ScalarField sample_scalar(const Domain& domain, const ScalarGenerator& generator) {
  if (!generator.value) throw ConfigError("scalar generator has no value function");
  const double coincide = 1e-9 * domain.min_spacing();
  std::vector<double> values(domain.node_count());
  std::vector<std::size_t> flagged;
  for (std::size_t n = 0; n < values.size(); ++n) {
    const Point x = domain.coord(n);
    const bool singular =
        std::any_of(generator.singular_points.begin(), generator.singular_points.end(),
                    [&](const Point& p) { return domain.distance(x, p) <= coincide; });
    if (singular) {
      values[n] = std::numeric_limits<double>::quiet_NaN();
      flagged.push_back(n);
      continue;
    }
    const double v = generator.value(x);
    if (!std::isfinite(v)) {
      throw SamplingError("generator returned a non-finite value at undeclared node " +
                          std::to_string(n) + " " + format_point(x, domain.dim()));
    }
    values[n] = v;
  }
  return ScalarField(domain, std::move(values), std::move(flagged));
}

// ---------------------------------------------------------------------------
// Small symmetric matrices

int SymMatrix::packed_index(int n, int i, int j) {
  if (i > j) std::swap(i, j);
  // Row i of the upper triangle starts after i*n - i*(i-1)/2 entries.
  return i * n - i * (i - 1) / 2 + (j - i);
}

SymMatrix SymMatrix::identity(int n) {
  SymMatrix m;
  m.n = n;
  for (int i = 0; i < n; ++i) m.packed[packed_index(n, i, i)] = 1.0;
  return m;
}

SymMatrix SymMatrix::diagonal(std::span<const double> entries) {
  SymMatrix m;
  m.n = static_cast<int>(entries.size());
  for (int i = 0; i < m.n; ++i) m.packed[packed_index(m.n, i, i)] = entries[i];
  return m;
}

double SymMatrix::quadratic(const Point& v) const {
  double q = 0.0;
  for (int i = 0; i < n; ++i) {
    q += (*this)(i, i) * v[i] * v[i];
    for (int j = i + 1; j < n; ++j) q += 2.0 * (*this)(i, j) * v[i] * v[j];
  }
  return q;
}

SymMatrix SymMatrix::scaled(double c) const {
  SymMatrix m = *this;
  for (auto& x : m.packed) x *= c;
  return m;
}

double determinant(const SymMatrix& m) {
  if (m.n == 2) return m(0, 0) * m(1, 1) - m(0, 1) * m(0, 1);
  const double a = m(0, 0), b = m(0, 1), c = m(0, 2), d = m(1, 1), e = m(1, 2), f = m(2, 2);
  return a * (d * f - e * e) - b * (b * f - c * e) + c * (b * e - c * d);
}

SymMatrix inverse(const SymMatrix& m) {
  SymMatrix inv;
  inv.n = m.n;
  const double det = determinant(m);
  if (m.n == 2) {
    inv.packed[0] = m(1, 1) / det;
    inv.packed[1] = -m(0, 1) / det;
    inv.packed[2] = m(0, 0) / det;
    return inv;
  }
  const double a = m(0, 0), b = m(0, 1), c = m(0, 2), d = m(1, 1), e = m(1, 2), f = m(2, 2);
  inv.packed[0] = (d * f - e * e) / det;
  inv.packed[1] = (c * e - b * f) / det;
  inv.packed[2] = (b * e - c * d) / det;
  inv.packed[3] = (a * f - c * c) / det;
  inv.packed[4] = (b * c - a * e) / det;
  inv.packed[5] = (a * d - b * b) / det;
  return inv;
}

std::pair<double, double> eigen_extremes(const SymMatrix& m) {
  if (m.n == 2) {
    const double mean = 0.5 * (m(0, 0) + m(1, 1));
    const double half = 0.5 * (m(0, 0) - m(1, 1));
    const double radius = std::hypot(half, m(0, 1));
    return {mean - radius, mean + radius};
  }
  const double off = m(0, 1) * m(0, 1) + m(0, 2) * m(0, 2) + m(1, 2) * m(1, 2);
  if (off == 0.0) {
    const double lo = std::min({m(0, 0), m(1, 1), m(2, 2)});
    const double hi = std::max({m(0, 0), m(1, 1), m(2, 2)});
    return {lo, hi};
  }
  const double q = (m(0, 0) + m(1, 1) + m(2, 2)) / 3.0;
  const double d0 = m(0, 0) - q, d1 = m(1, 1) - q, d2 = m(2, 2) - q;
  const double p = std::sqrt((d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * off) / 6.0);
  SymMatrix b = m;
  b.packed[0] = d0;
  b.packed[3] = d1;
  b.packed[5] = d2;
  b = b.scaled(1.0 / p);
  const double r = std::clamp(0.5 * determinant(b), -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  const double hi = q + 2.0 * p * std::cos(phi);
  const double lo = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
  return {lo, hi};
}

bool is_positive_definite(const SymMatrix& m) {
  if (!(m(0, 0) > 0.0)) return false;
  const double minor2 = m(0, 0) * m(1, 1) - m(0, 1) * m(0, 1);
  if (!(minor2 > 0.0)) return false;
  if (m.n == 2) return true;
  return determinant(m) > 0.0;
}

// ---------------------------------------------------------------------------
// Metric fields

MetricField MetricField::from_components(Domain domain, std::vector<double> components,
                                         std::vector<std::size_t> flagged) {
  MetricField g;
  g.domain_ = std::move(domain);
  const int dim = g.domain_.dim();
  const int nc = SymMatrix::packed_size(dim);
  const std::size_t count = g.domain_.node_count();
  if (components.size() != count * static_cast<std::size_t>(nc)) {
    throw ConfigError("metric field needs " + std::to_string(count * nc) +
                      " components, got " + std::to_string(components.size()));
  }
  g.components_ = std::move(components);
  std::vector<std::size_t> singular = normalise_flags(std::move(flagged), count);
  g.mask_.assign(count, 0);
  for (std::size_t n : singular) g.mask_[n] = 1;

  const double nan = std::numeric_limits<double>::quiet_NaN();
  g.inverse_.assign(g.components_.size(), nan);
  g.eig_min_.assign(count, nan);
  g.eig_max_.assign(count, nan);
  for (std::size_t n = 0; n < count; ++n) {
    if (g.mask_[n]) continue;
    const SymMatrix m = g.at(n);
    bool finite = true;
    for (int c = 0; c < nc; ++c) finite = finite && std::isfinite(m.packed[c]);
    bool ok = finite && is_positive_definite(m);
    std::pair<double, double> eig{nan, nan};
    SymMatrix inv;
    if (ok) {
      eig = eigen_extremes(m);
      ok = eig.first > 0.0;
    }
    if (ok) {
      inv = inverse(m);
      // Inverse consistency: max-norm of g^{-1} g - I.
      double worst = 0.0;
      for (int i = 0; i < dim; ++i) {
        for (int k = 0; k < dim; ++k) {
          double s = 0.0;
          for (int j = 0; j < dim; ++j) s += inv(i, j) * m(j, k);
          worst = std::max(worst, std::abs(s - (i == k ? 1.0 : 0.0)));
        }
      }
      ok = worst <= kInverseTolerance;
    }
    if (!ok) {
      g.non_spd_.push_back(n);
      g.mask_[n] = 1;
      continue;
    }
    g.eig_min_[n] = eig.first;
    g.eig_max_[n] = eig.second;
    std::copy(inv.packed.begin(), inv.packed.begin() + nc,
              g.inverse_.begin() + static_cast<std::ptrdiff_t>(n * nc));
  }
  if (g.non_spd_.size() * 100 > count) {
    std::ostringstream msg;
    msg << g.non_spd_.size() << " of " << count
        << " nodes are not positive definite (limit 1%); first nodes:";
    for (std::size_t i = 0; i < std::min<std::size_t>(g.non_spd_.size(), 20); ++i) {
      msg << ' ' << g.non_spd_[i];
    }
    throw SamplingError(msg.str());
  }
  for (std::size_t n = 0; n < count; ++n) {
    if (g.mask_[n]) g.flagged_.push_back(n);
  }
  return g;
}

SymMatrix MetricField::at(std::size_t node) const {
  SymMatrix m;
  m.n = domain_.dim();
  const int nc = components_per_node();
  std::copy_n(components_.begin() + static_cast<std::ptrdiff_t>(node * nc), nc, m.packed.begin());
  return m;
}

SymMatrix MetricField::inverse_at(std::size_t node) const {
  SymMatrix m;
  m.n = domain_.dim();
  const int nc = components_per_node();
  std::copy_n(inverse_.begin() + static_cast<std::ptrdiff_t>(node * nc), nc, m.packed.begin());
  return m;
}

MetricField MetricField::scaled(double c) const {
  std::vector<double> comps(components_.size());
  for (std::size_t i = 0; i < comps.size(); ++i) comps[i] = c * components_[i];
  std::vector<std::size_t> singular;
  for (std::size_t n : flagged_) {
    if (!std::binary_search(non_spd_.begin(), non_spd_.end(), n)) singular.push_back(n);
  }
  return from_components(domain_, std::move(comps), std::move(singular));
}

ScalarField MetricField::component(int c) const {
  const int nc = components_per_node();
  std::vector<double> v(domain_.node_count());
  for (std::size_t n = 0; n < v.size(); ++n) {
    v[n] = mask_[n] ? std::numeric_limits<double>::quiet_NaN() : components_[n * nc + c];
  }
  return ScalarField(domain_, std::move(v), flagged_);
}

ScalarField MetricField::inverse_component(int c) const {
  const int nc = components_per_node();
  std::vector<double> v(domain_.node_count());
  for (std::size_t n = 0; n < v.size(); ++n) v[n] = inverse_[n * nc + c];
  return ScalarField(domain_, std::move(v), flagged_);
}

MetricField sample_metric(const Domain& domain, const MetricGenerator& generator) {
  if (!generator.value) throw ConfigError("metric generator has no value function");
  const int nc = SymMatrix::packed_size(domain.dim());
  const double coincide = 1e-9 * domain.min_spacing();
  std::vector<double> comps(domain.node_count() * nc);
  std::vector<std::size_t> flagged;
  for (std::size_t n = 0; n < domain.node_count(); ++n) {
    const Point x = domain.coord(n);
    const bool singular =
        std::any_of(generator.singular_points.begin(), generator.singular_points.end(),
                    [&](const Point& p) { return domain.distance(x, p) <= coincide; });
    if (singular) {
      std::fill_n(comps.begin() + static_cast<std::ptrdiff_t>(n * nc), nc,
                  std::numeric_limits<double>::quiet_NaN());
      flagged.push_back(n);
      continue;
    }
    const SymMatrix m = generator.value(x);
    if (m.n != domain.dim()) {
      throw ConfigError("metric generator returned a " + std::to_string(m.n) + "x" +
                        std::to_string(m.n) + " matrix on a " + std::to_string(domain.dim()) +
                        "-dimensional domain");
    }
    for (int c = 0; c < nc; ++c) {
      if (!std::isfinite(m.packed[c])) {
        throw SamplingError("metric generator returned a non-finite component at undeclared node " +
                            std::to_string(n) + " " + format_point(x, domain.dim()));
      }
      comps[n * nc + c] = m.packed[c];
    }
  }
  return MetricField::from_components(domain, std::move(comps), std::move(flagged));
}

MetricField identity_metric(const Domain& domain) {
  const int dim = domain.dim();
  return sample_metric(domain, {[dim](const Point&) { return SymMatrix::identity(dim); }, {}});
}

MetricField scalar_metric(const ScalarField& phi) {
  const Domain& domain = phi.domain();
  const int dim = domain.dim();
  const int nc = SymMatrix::packed_size(dim);
  std::vector<double> comps(domain.node_count() * nc, 0.0);
  for (std::size_t n = 0; n < domain.node_count(); ++n) {
    for (int i = 0; i < dim; ++i) comps[n * nc + SymMatrix::packed_index(dim, i, i)] = phi[n];
    if (phi.flagged(n)) {
      std::fill_n(comps.begin() + static_cast<std::ptrdiff_t>(n * nc), nc,
                  std::numeric_limits<double>::quiet_NaN());
    }
  }
  return MetricField::from_components(domain, std::move(comps), phi.flagged_nodes());
}

// ---------------------------------------------------------------------------
// Calculus

GradientField::GradientField(Domain domain, std::vector<double> vectors,
                             std::vector<std::uint8_t> mask)
    : domain_(std::move(domain)), vectors_(std::move(vectors)), mask_(std::move(mask)) {}

std::span<const double> GradientField::at(std::size_t node) const {
  const auto dim = static_cast<std::size_t>(domain_.dim());
  return std::span<const double>(vectors_).subspan(node * dim, dim);
}

double GradientField::norm(std::size_t node) const {
  double s = 0.0;
  for (double v : at(node)) s += v * v;
  return std::sqrt(s);
}

GradientField gradient(const ScalarField& field) {
  const Domain& domain = field.domain();
  const int dim = domain.dim();
  const std::size_t count = domain.node_count();
  std::vector<double> vectors(count * dim, 0.0);
  std::vector<std::uint8_t> mask(count, 0);
  const bool torus = domain.kind() == DomainKind::torus;
  for (std::size_t n = 0; n < count; ++n) {
    bool bad = field.flagged(n);
    const Index3 ijk = domain.index_to_ijk(n);
    for (int a = 0; a < dim && !bad; ++a) {
      const int res = domain.resolution(a);
      const double h = domain.spacing(a);
      Index3 lo = ijk, hi = ijk;
      double span = 2.0 * h;
      if (torus) {
        lo[a] = positive_mod(ijk[a] - 1, res);
        hi[a] = positive_mod(ijk[a] + 1, res);
      } else if (ijk[a] == 0) {
        hi[a] = 1;
        span = h;
      } else if (ijk[a] == res - 1) {
        lo[a] = res - 2;
        span = h;
      } else {
        lo[a] = ijk[a] - 1;
        hi[a] = ijk[a] + 1;
      }
      const std::size_t nl = domain.ijk_to_index(lo);
      const std::size_t nh = domain.ijk_to_index(hi);
      if (field.flagged(nl) || field.flagged(nh)) {
        bad = true;
        break;
      }
      vectors[n * dim + a] = (field[nh] - field[nl]) / span;
    }
    if (bad) {
      mask[n] = 1;
      std::fill_n(vectors.begin() + static_cast<std::ptrdiff_t>(n * dim), dim,
                  std::numeric_limits<double>::quiet_NaN());
    }
  }
  return GradientField(domain, std::move(vectors), std::move(mask));
}

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    compensation_ += (sum_ - t) + x;
  } else {
    compensation_ += (x - t) + sum_;
  }
  sum_ = t;
}

Integral integrate(const ScalarField& field, const std::optional<Ball>& region) {
  const Domain& domain = field.domain();
  const double cell = domain.cell_volume();
  CompensatedSum sum;
  std::size_t used = 0;
  std::size_t excluded = 0;
  const auto accumulate = [&](std::size_t n) {
    if (field.flagged(n)) {
      ++excluded;
      return;
    }
    sum.add(field[n]);
    ++used;
  };
  if (region) {
    for (std::size_t n : nodes_in_ball(domain, *region)) accumulate(n);
  } else {
    for (std::size_t n = 0; n < domain.node_count(); ++n) accumulate(n);
  }
  return {sum.value() * cell, static_cast<double>(used) * cell,
          static_cast<double>(excluded) * cell};
}

std::pair<ScalarField, ScalarField> eigen_range(const MetricField& metric) {
  const std::size_t count = metric.domain().node_count();
  std::vector<double> lo(count), hi(count);
  for (std::size_t n = 0; n < count; ++n) {
    lo[n] = metric.eig_min(n);
    hi[n] = metric.eig_max(n);
  }
  return {ScalarField(metric.domain(), std::move(lo), metric.flagged_nodes()),
          ScalarField(metric.domain(), std::move(hi), metric.flagged_nodes())};
}

InterpolationStencil interpolation_stencil(const Domain& domain, const Point& x) {
  const int dim = domain.dim();
  const Point w = domain.wrap(x);
  std::array<std::array<int, 2>, 3> index{};
  std::array<std::array<double, 2>, 3> weight{};
  for (int a = 0; a < 3; ++a) {
    if (a >= dim) {
      index[a] = {0, 0};
      weight[a] = {1.0, 0.0};
      continue;
    }
    const int res = domain.resolution(a);
    const double s = w[a] / domain.spacing(a) - 0.5;
    int i0 = static_cast<int>(std::floor(s));
    double f = s - i0;
    if (domain.kind() == DomainKind::torus) {
      index[a] = {positive_mod(i0, res), positive_mod(i0 + 1, res)};
    } else {
      const int clamped = std::clamp(i0, 0, res - 2);
      f = s - clamped;
      index[a] = {clamped, clamped + 1};
    }
    weight[a] = {1.0 - f, f};
  }
  InterpolationStencil st;
  const int corners = 1 << dim;
  for (int c = 0; c < corners; ++c) {
    Index3 ijk{0, 0, 0};
    double wgt = 1.0;
    for (int a = 0; a < dim; ++a) {
      const int bit = (c >> (dim - 1 - a)) & 1;
      ijk[a] = index[a][bit];
      wgt *= weight[a][bit];
    }
    st.nodes[c] = domain.ijk_to_index(ijk);
    st.weights[c] = wgt;
  }
  st.count = corners;
  return st;
}

}  // namespace roughmetric
