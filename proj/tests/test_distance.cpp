#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "roughmetric/distance.hpp"
#include "roughmetric/error.hpp"

using namespace roughmetric;
using std::numbers::pi;

namespace {

// Smooth random SPD field: a fixed random matrix per Fourier mode.
MetricField random_smooth_metric(const Domain& d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  double coef[3][3];
  for (auto& row : coef) {
    for (double& c : row) c = unif(rng);
  }
  const double phase = pi * unif(rng);
  return sample_metric(d, {[=](const Point& x) {
                             const double s = std::sin(2 * pi * x[0] + phase);
                             const double c = std::cos(2 * pi * x[1] - phase);
                             const double a = 1.0 + 0.5 * coef[0][0] * s + 0.3 * coef[0][1] * c;
                             const double b = 1.0 + 0.5 * coef[1][0] * c + 0.3 * coef[1][1] * s;
                             const double off = 0.3 * coef[2][0] * s * c;
                             SymMatrix m;
                             m.n = 2;
                             m.packed = {a * a + off * off, off * (a + b), b * b + off * off};
                             return m;
                           },
                           {}});
}

}  // namespace

TEST_SUITE("rough_distance") {
  TEST_CASE("stencil offsets") {
    CHECK(stencil_offsets(2, 1).size() == 8);
    CHECK(stencil_offsets(2, 2).size() == 16);
    CHECK(stencil_offsets(2, 3).size() == 32);
    CHECK(stencil_offsets(3, 1).size() == 26);
    CHECK(stencil_offsets(3, 2).size() == 98);
    for (int dim : {2, 3}) {
      for (int k : {1, 2, 3}) {
        const auto all = stencil_offsets(dim, k);
        for (const Index3& v : all) {
          const Index3 neg{-v[0], -v[1], -v[2]};
          CHECK(std::find(all.begin(), all.end(), neg) != all.end());
        }
        CHECK(half_offsets(dim, k).size() * 2 == all.size());
      }
    }
    const Domain t = make_domain(DomainKind::torus, 2, 1.0, 8);
    CHECK_THROWS_AS(check_stencil(t, {4, 4}), ConfigError);
    CHECK_THROWS_AS(check_stencil(t, {1, 1}), ConfigError);
  }

  TEST_CASE("edge_weight closed forms") {
    const Domain b = make_domain(DomainKind::box, 2, 1.0, 32);
    const Point a{0.2, 0.3, 0}, e{0.5, 0.7, 0};
    const double len = 0.5;
    CHECK(std::abs(*edge_weight(identity_metric(b), a, e, 4) - len) <= 1e-12);
    const double c = 3.0;
    CHECK(std::abs(*edge_weight(identity_metric(b).scaled(c * c), a, e, 4) - c * len) <= 1e-12);
    const double diag[2] = {1.0, 4.0};
    const MetricField g = sample_metric(b, {[&](const Point&) { return SymMatrix::diagonal(diag); }, {}});
    CHECK(std::abs(*edge_weight(g, {0.3, 0.2, 0}, {0.3, 0.6, 0}, 4) - 0.8) <= 1e-12);
  }

  TEST_CASE("edges through a non-SPD node are dropped") {
    const Domain b = make_domain(DomainKind::box, 2, 1.0, 32);
    const MetricField g = sample_metric(b, {[](const Point& x) {
                                              const double v = x[0] < 0.03 && x[1] < 0.03 ? -100.0 : 1.0;
                                              const double d[2] = {v, v};
                                              return SymMatrix::diagonal(d);
                                            },
                                            {}});
    REQUIRE(g.non_spd_nodes().size() == 1);
    const LatticeGraph graph(g, {3, 4});
    CHECK(graph.dropped_edges() > 0);
    CHECK_THROWS_AS(shortest_distance(graph, {0.5, 0.5, 0}, {0.0, 0.0, 0}), UnreachableError);
    const std::vector<std::size_t> lm{0, b.ijk_to_index({16, 16, 0})};
    const DistanceMatrix d = distance_matrix(graph, lm);
    CHECK(std::isinf(d(0, 1)));
    CHECK(d(0, 0) == 0.0);
  }

  TEST_CASE("shortest_distance: Euclidean, scaled, radial conformal") {
    const Domain b = make_domain(DomainKind::box, 2, 1.0, 128);
    const StencilSpec k3{3, 4};
    const ShortestPath p = shortest_distance(identity_metric(b), {0, 0, 0}, {1, 0, 0}, k3);
    CHECK(std::abs(p.value - 1.0) <= 0.02);
    CHECK(p.path.front() == b.nearest_node({0, 0, 0}));
    CHECK(p.path.back() == b.nearest_node({1, 0, 0}));
    const ShortestPath p4 =
        shortest_distance(identity_metric(b).scaled(4.0), {0, 0, 0}, {1, 0, 0}, k3);
    CHECK(std::abs(p4.value - 2 * p.value) <= 1e-12 * p4.value);

    // Radial conformal factor in 3D: the radial segment is optimal, so the
    // 1D integral of u(r)^2 along it is the oracle.
    const Domain c = make_domain(DomainKind::box, 3, 1.0, 32);
    const Point o = c.coord(c.ijk_to_index({16, 16, 16}));
    const auto u = [&](double r) { return 1.0 + 0.5 * std::exp(-r * r / 0.05); };
    const MetricField g = sample_metric(c, {[&](const Point& x) {
                                              const double f = u(c.distance(x, o));
                                              return SymMatrix::identity(3).scaled(std::pow(f, 4));
                                            },
                                            {}});
    const Point end{o[0] + 12 * c.spacing(0), o[1], o[2]};
    const ShortestPath pr = shortest_distance(g, o, end, {2, 4});
    double oracle = 0.0;
    const int steps = 100000;
    const double length = 12 * c.spacing(0);
    for (int i = 0; i < steps; ++i) oracle += std::pow(u((i + 0.5) * length / steps), 2) * length / steps;
    CHECK(std::abs(pr.value - oracle) <= 0.02 * oracle);
  }

  TEST_CASE("distance_matrix basics") {
    const Domain b = make_domain(DomainKind::box, 2, 1.0, 64);
    const MetricField id = identity_metric(b);
    const StencilSpec k3{3, 4};
    const std::vector<std::size_t> one{100};
    const DistanceMatrix d1 = distance_matrix(id, one, k3);
    REQUIRE(d1.values.size() == 1);
    CHECK(d1(0, 0) == 0.0);

    const std::vector<std::size_t> corners{b.ijk_to_index({0, 0, 0}), b.ijk_to_index({63, 0, 0}),
                                           b.ijk_to_index({0, 63, 0}), b.ijk_to_index({63, 63, 0})};
    const DistanceMatrix dc = distance_matrix(id, corners, k3);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        const double e = b.distance(b.coord(corners[i]), b.coord(corners[j]));
        CHECK(std::abs(dc(i, j) - e) <= 0.02 * e);
      }
    }
    const std::vector<std::size_t> dup{3, 3};
    CHECK_THROWS_AS(distance_matrix(id, dup, k3), DomainError);
  }

  TEST_CASE("metric axioms on random SPD fields (property)") {
    const Domain t = make_domain(DomainKind::torus, 2, 1.0, 48);
    std::mt19937_64 rng(17);
    const auto landmarks = halton_landmarks(t, 12);
    for (int trial = 0; trial < 5; ++trial) {
      const MetricField g = random_smooth_metric(t, rng);
      const DistanceMatrix d = distance_matrix(g, landmarks, {3, 4});
      const std::size_t m = d.size();
      for (std::size_t i = 0; i < m; ++i) {
        CHECK(d(i, i) == 0.0);
        for (std::size_t j = 0; j < m; ++j) {
          CHECK(std::isfinite(d(i, j)));
          CHECK(std::abs(d(i, j) - d(j, i)) <= 1e-12);
          for (std::size_t k = 0; k < m; ++k) CHECK(d(i, k) <= d(i, j) + d(j, k) + 1e-9);
        }
      }
    }
  }

  TEST_CASE("scaling equivariance and domination monotonicity") {
    const Domain t = make_domain(DomainKind::torus, 2, 1.0, 48);
    std::mt19937_64 rng(5);
    const MetricField g = random_smooth_metric(t, rng);
    const auto landmarks = halton_landmarks(t, 8);
    const DistanceMatrix d = distance_matrix(g, landmarks, {3, 4});
    for (double c : {0.1, 2.0, 37.0}) {
      const DistanceMatrix dc = distance_matrix(g.scaled(c * c), landmarks, {3, 4});
      for (std::size_t i = 0; i < d.values.size(); ++i) {
        CHECK(std::abs(dc.values[i] - c * d.values[i]) <= 1e-12 * c * d.values[i]);
      }
    }
    // g + 0.5 * id dominates g.
    std::vector<double> comps(g.components().begin(), g.components().end());
    for (std::size_t n = 0; n < t.node_count(); ++n) {
      comps[3 * n] += 0.5;
      comps[3 * n + 2] += 0.5;
    }
    const DistanceMatrix big =
        distance_matrix(MetricField::from_components(t, comps), landmarks, {3, 4});
    for (std::size_t i = 0; i < d.values.size(); ++i) CHECK(d.values[i] <= big.values[i] + 1e-9);
  }

  TEST_CASE("stencil refinement never increases distances") {
    const Domain t = make_domain(DomainKind::torus, 2, 1.0, 48);
    std::mt19937_64 rng(6);
    const MetricField g = random_smooth_metric(t, rng);
    const auto landmarks = halton_landmarks(t, 8);
    const DistanceMatrix d2 = distance_matrix(g, landmarks, {2, 4});
    const DistanceMatrix d3 = distance_matrix(g, landmarks, {3, 4});
    for (std::size_t i = 0; i < d2.values.size(); ++i) CHECK(d3.values[i] <= d2.values[i] + 1e-12);
  }

  TEST_CASE("Euclidean error under grid refinement at fixed K") {
    // Fixed physical endpoints on nodes of both grids.
    double prev = 1e300;
    for (int res : {32, 64, 128}) {
      const Domain b = make_domain(DomainKind::box, 2, 1.0, res);
      const LatticeGraph graph(identity_metric(b), {3, 4});
      double worst = 0.0;
      std::mt19937_64 rng(2);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      for (int i = 0; i < 10; ++i) {
        const Point x{unif(rng), unif(rng), 0}, y{unif(rng), unif(rng), 0};
        const std::size_t nx = b.nearest_node(x), ny = b.nearest_node(y);
        const double e = b.distance(b.coord(nx), b.coord(ny));
        if (e < 0.25) continue;
        const double dv = shortest_distance(graph, b.coord(nx), b.coord(ny)).value;
        worst = std::max(worst, std::abs(dv - e) / e);
      }
      CHECK(worst <= 0.02);
      CHECK(worst <= 1.1 * prev);
      prev = worst;
    }
  }

  TEST_CASE("uniform_metric_distance") {
    const Domain t = make_domain(DomainKind::torus, 2, 1.0, 32);
    const auto lm = halton_landmarks(t, 6);
    const DistanceMatrix d = distance_matrix(identity_metric(t), lm, {3, 4});
    CHECK(uniform_metric_distance(d, d) == 0.0);
    const double c = 1.7;
    const DistanceMatrix dc = distance_matrix(identity_metric(t).scaled(c * c), lm, {3, 4});
    CHECK(std::abs(uniform_metric_distance(d, dc) - (c - 1) * d.max_entry()) <= 1e-10);

    std::mt19937_64 rng(1);
    const DistanceMatrix a = distance_matrix(random_smooth_metric(t, rng), lm, {3, 4});
    const DistanceMatrix b = distance_matrix(random_smooth_metric(t, rng), lm, {3, 4});
    double brute = 0.0;
    for (std::size_t i = 0; i < lm.size(); ++i) {
      for (std::size_t j = 0; j < lm.size(); ++j) brute = std::max(brute, std::abs(a(i, j) - b(i, j)));
    }
    CHECK(uniform_metric_distance(a, b) == brute);
    const auto other = halton_landmarks(t, 6, 50);
    CHECK_THROWS_AS(uniform_metric_distance(d, distance_matrix(identity_metric(t), other, {3, 4})),
                    DomainError);
  }

  TEST_CASE("halton landmarks are distinct and reproducible") {
    const Domain t = make_domain(DomainKind::torus, 3, 1.0, 16);
    const auto a = halton_landmarks(t, 40);
    const auto b = halton_landmarks(t, 40);
    CHECK(a == b);
    auto s = a;
    std::sort(s.begin(), s.end());
    CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
  }

  TEST_CASE("distance matrix CSV round trip") {
    const Domain t = make_domain(DomainKind::torus, 2, 1.0, 32);
    std::mt19937_64 rng(12);
    const DistanceMatrix d = distance_matrix(random_smooth_metric(t, rng), halton_landmarks(t, 5), {3, 4});
    const auto path = std::filesystem::temp_directory_path() / "roughmetric_dm.csv";
    write_csv(d, path);
    const DistanceMatrix back = read_csv(path, t);
    CHECK(back.landmarks == d.landmarks);
    CHECK(back.values == d.values);
  }

  TEST_CASE("limit_inequality_report") {
    const Domain t = make_domain(DomainKind::torus, 2, 1.0, 32);
    const auto lm = halton_landmarks(t, 6);
    const DistanceMatrix d = distance_matrix(identity_metric(t), lm, {3, 4});
    const std::vector<DistanceMatrix> same(3, d);
    const ConvergenceReport r = limit_inequality_report(same, d, 1e-300);
    CHECK(r.cauchy);
    CHECK(r.below_reference);
    CHECK(r.equals_reference);
    CHECK(r.pair_count == 15);
    CHECK_THROWS_AS(limit_inequality_report(std::vector<DistanceMatrix>(2, d), d, 0.1), ConfigError);

    // A shrinking sequence below the reference: B holds, C fails.
    std::vector<DistanceMatrix> shrink;
    for (double c : {0.8, 0.7, 0.65, 0.625}) {
      shrink.push_back(distance_matrix(identity_metric(t).scaled(c * c), lm, {3, 4}));
    }
    const ConvergenceReport s = limit_inequality_report(shrink, d, 0.05);
    CHECK(s.cauchy);
    CHECK(s.below_reference);
    CHECK_FALSE(s.equals_reference);
    CHECK(s.inequality_margin > 0.0);
  }

  TEST_CASE("euclidean_limit_check") {
    const Domain t = make_domain(DomainKind::torus, 2, 2.0, 64);
    const auto lm = halton_landmarks(t, 6);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 1; i < lm.size(); ++i) pairs.emplace_back(lm[0], lm[i]);
    const std::vector<MetricField> ids(3, identity_metric(t));
    const EuclideanLimitReport r = euclidean_limit_check(ids, pairs, 0.0, {3, 4}, 2.0);
    CHECK(r.pass);
    for (const auto& pr : r.pairs) CHECK(pr.deviation.back() == pr.allowance);

    std::vector<MetricField> osc;
    for (int k : {1, 2, 4, 8}) {
      osc.push_back(sample_metric(t, {[k](const Point& x) {
                                        return SymMatrix::identity(2).scaled(1.0 + std::sin(k * pi * x[0]) / (k * k));
                                      },
                                      {}}));
    }
    const EuclideanLimitReport ro = euclidean_limit_check(osc, pairs, 0.02, {3, 4}, 2.0);
    CHECK(ro.w1p_decreasing);
    CHECK(ro.sup_excess.back() < ro.sup_excess.front());
    CHECK(ro.pass);
  }

  TEST_CASE("bad_set_diagnostic") {
    const Domain t = make_domain(DomainKind::torus, 2, 1.0, 128);
    BadSetOptions opt;
    opt.cover.radii = geometric_radii(0.5, 6);
    opt.cover.osc_tol = 1e9;
    const BadSetReport none = bad_set_diagnostic(identity_metric(t), 0.5, opt);
    CHECK(none.nodes.empty());
    CHECK(none.lower_bound == doctest::Approx(0.5 / 4 * std::min(opt.tau / 2, opt.delta)));

    const Point c = t.coord(t.ijk_to_index({64, 64, 0}));
    const double rho = 0.1;
    const MetricField dip = sample_metric(t, {[&](const Point& x) {
                                                const double v = t.distance(x, c) < rho ? 0.1 : 1.0;
                                                return SymMatrix::identity(2).scaled(v);
                                              },
                                              {}});
    const BadSetReport r = bad_set_diagnostic(dip, 0.2, opt);
    std::size_t in_disk = 0;
    for (std::size_t n = 0; n < t.node_count(); ++n) in_disk += t.distance(t.coord(n), c) < rho;
    CHECK(r.nodes.size() == in_disk);
    CHECK(r.content_bound >= rho);

    const BadSetReport all = bad_set_diagnostic(dip, 2.0, opt);
    CHECK(all.nodes.size() == t.node_count());
  }

  TEST_CASE("gradient_bound_check") {
    const Domain b = make_domain(DomainKind::box, 2, 1.0, 96);
    const std::size_t src = b.ijk_to_index({48, 48, 0});
    const double excl = 4 * b.spacing(0);
    const LatticeGraph gi(identity_metric(b), {3, 4});
    const GradientBoundReport ri = gradient_bound_check(distance_field(gi, src), identity_metric(b), src, 0.03, excl);
    CHECK(ri.violations == 0);
    CHECK(ri.sharp_violations == 0);
    // Dual-norm anisotropy of the K = 3 stencil polygon.
    CHECK(ri.max_gradient <= 1.03);
    CHECK(ri.min_gradient >= 0.97);

    const double c = 3.0;
    const MetricField gc = identity_metric(b).scaled(c * c);
    const GradientBoundReport rc =
        gradient_bound_check(distance_field(LatticeGraph(gc, {3, 4}), src), gc, src, 0.03, excl);
    CHECK(rc.max_gradient == doctest::Approx(c * ri.max_gradient).epsilon(1e-9));
    CHECK(rc.min_gradient == doctest::Approx(c * ri.min_gradient).epsilon(1e-9));
    CHECK(rc.sharp_violations == 0);
    CHECK(rc.violations == rc.checked);  // c / (2 / c^2) > 1

    const double diag[2] = {1.0, 4.0};
    const MetricField an = sample_metric(b, {[&](const Point&) { return SymMatrix::diagonal(diag); }, {}});
    const GradientBoundReport ra =
        gradient_bound_check(distance_field(LatticeGraph(an, {3, 4}), src), an, src, 0.03, excl);
    CHECK(ra.checked > 0);
    CHECK(ra.sharp_violations == 0);
    CHECK(ra.max_gradient == doctest::Approx(2.0).epsilon(0.03));
    CHECK(ra.violations > 0);  // 2 > 1 + 1/4 along the second axis
  }
}
