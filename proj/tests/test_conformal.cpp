#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "roughmetric/conformal.hpp"
#include "roughmetric/error.hpp"

using namespace roughmetric;
using std::numbers::pi;

namespace {

ConformalFactor constant_factor(const Domain& d, double c) {
  return ConformalFactor(sample_scalar(d, {[c](const Point&) { return c; }, {}}));
}

// Scalar curvature of the stereographic factor from its closed-form radial
// derivatives: u = sqrt(2) (1 + r^2)^{-1/2}, Laplacian f'' + 2 f' / r.
double sphere_curvature_oracle(double r) {
  const double s = 1.0 + r * r;
  const double f = std::sqrt(2.0) * std::pow(s, -0.5);
  const double f1 = -std::sqrt(2.0) * r * std::pow(s, -1.5);
  const double f2 = -std::sqrt(2.0) * (std::pow(s, -1.5) - 3.0 * r * r * std::pow(s, -2.5));
  const double lap = f2 + 2.0 * f1 / r;
  return -8.0 * lap / std::pow(f, 5);
}

// Max relative deviation of R from 6 over unflagged nodes within `half` of c
// in max-norm, and the fraction of them within 2%.
std::pair<double, double> sphere_error(const CurvatureReport& rep, const Point& c, double half) {
  const Domain& d = rep.curvature.domain();
  double worst = 0.0;
  std::size_t total = 0, good = 0;
  for (std::size_t n = 0; n < d.node_count(); ++n) {
    if (rep.curvature.flagged(n)) continue;
    const Point x = d.coord(n);
    bool in = true;
    for (int a = 0; a < 3; ++a) in = in && std::abs(x[a] - c[a]) <= half;
    if (!in) continue;
    const double e = std::abs(rep.curvature[n] - 6.0) / 6.0;
    worst = std::max(worst, e);
    ++total;
    good += e <= 0.02;
  }
  return {worst, double(good) / double(total)};
}

}  // namespace

TEST_SUITE("conformal") {
  TEST_CASE("conformal_metric") {
    const Domain d = make_domain(DomainKind::torus, 3, 1.0, 8);
    const MetricField g1 = conformal_metric(constant_factor(d, 1.0));
    for (std::size_t n = 0; n < d.node_count(); ++n) {
      for (int c = 0; c < 6; ++c) CHECK(g1.components()[6 * n + c] == identity_metric(d).components()[6 * n + c]);
    }
    const MetricField g3 = conformal_metric(constant_factor(d, 3.0));
    CHECK(g3.eig_min(5) == doctest::Approx(81.0).epsilon(1e-14));
    CHECK(g3.eig_max(5) == doctest::Approx(81.0).epsilon(1e-14));
    const std::size_t node = 17;
    const ConformalFactor two(sample_scalar(d, {[&](const Point& x) { return x == d.coord(node) ? 2.0 : 1.0; }, {}}));
    CHECK(conformal_metric(two).at(node)(1, 1) == 16.0);
    CHECK(conformal_metric(two).at(node)(0, 1) == 0.0);

    CHECK_THROWS_AS(constant_factor(d, 0.0), SamplingError);
    CHECK_THROWS_AS(constant_factor(d, -1.0), SamplingError);
    CHECK_THROWS_AS(constant_factor(make_domain(DomainKind::torus, 2, 1.0, 8), 1.0), ConfigError);

    const Point c = d.coord(node);
    const ConformalFactor pole = mollified_pole_factor(d, 0.3, 0.0, c);
    CHECK(pole.u().flagged(node));
    CHECK(conformal_metric(pole).flagged(node));
  }

  TEST_CASE("factor closed forms") {
    const Domain d = make_domain(DomainKind::box, 3, 2.0, 64);
    const std::size_t cn = d.ijk_to_index({32, 32, 32});
    const Point c = d.coord(cn);
    CHECK(bubble_factor(d, 1.0, c).u()[cn] == doctest::Approx(1.0).epsilon(1e-15));
    const double lambda = 0.25;  // 8 cells
    const std::size_t off = d.ijk_to_index({40, 32, 32});
    CHECK(bubble_factor(d, lambda, c).u()[off] == doctest::Approx(1.0 / std::sqrt(2 * lambda)).epsilon(1e-14));
    const double a = 0.3, eps = 1e-3;
    const ConformalFactor p = mollified_pole_factor(d, a, eps, c);
    for (std::size_t n = 0; n < d.node_count(); n += 97) {
      const double r = d.distance(d.coord(n), c);
      if (r < 0.2) continue;
      CHECK(std::abs(p.u()[n] - (1.0 + std::pow(r, -a))) <= 0.01 * p.u()[n]);
    }
    CHECK(stereographic_factor(d, c).u()[cn] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(bubble_factor(d, 0.0, c), ConfigError);
  }

  TEST_CASE("laplacian and curvature of constants") {
    const Domain b = make_domain(DomainKind::box, 3, 1.0, 16);
    for (double c : {1.0, 3.5}) {
      const CurvatureReport r = scalar_curvature(constant_factor(b, c));
      std::size_t interior = 0;
      for (std::size_t n = 0; n < b.node_count(); ++n) {
        const Index3 ijk = b.index_to_ijk(n);
        bool face = false;
        for (int a = 0; a < 3; ++a) face = face || ijk[a] == 0 || ijk[a] == 15;
        CHECK(r.curvature.flagged(n) == face);
        if (!face) {
          ++interior;
          CHECK(std::abs(r.curvature[n]) <= 1e-10);
        }
      }
      CHECK(interior == 14 * 14 * 14);
      CHECK(r.energy <= 1e-10);
      CHECK(r.volume == doctest::Approx(std::pow(c, 6)).epsilon(1e-12));
    }
  }

  TEST_CASE("laplacian of quadratics under a constant background") {
    // The central stencil is exact on quadratics: Delta_{g0} x^T A x = 2 tr(g0^{-1} A).
    const Domain b = make_domain(DomainKind::box, 3, 1.0, 12);
    const double A[3][3] = {{1.0, 0.3, -0.2}, {0.3, -2.0, 0.5}, {-0.2, 0.5, 0.7}};
    const ScalarField q = sample_scalar(b, {[&](const Point& x) {
                                             double s = 0.0;
                                             for (int i = 0; i < 3; ++i) {
                                               for (int j = 0; j < 3; ++j) s += A[i][j] * x[i] * x[j];
                                             }
                                             return s;
                                           },
                                           {}});
    SymMatrix g0;
    g0.n = 3;
    g0.packed = {2.0, 0.4, 0.1, 1.5, -0.3, 1.2};
    const SymMatrix inv = inverse(g0);
    double expected = 0.0;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) expected += 2.0 * inv(i, j) * A[j][i];
    }
    const ScalarField lap = laplacian(q, g0);
    for (std::size_t n = 0; n < b.node_count(); ++n) {
      if (!lap.flagged(n)) CHECK(lap[n] == doctest::Approx(expected).epsilon(1e-9));
    }
  }

  TEST_CASE("background scaling and background curvature") {
    const Domain b = make_domain(DomainKind::box, 3, 2.0, 32);
    const Point c = b.center();
    const ConformalFactor f = stereographic_factor(b, c);
    const double k = 4.0;
    const ConformalFactor fk(f.u(), SymMatrix::identity(3).scaled(k));
    const CurvatureReport r1 = scalar_curvature(f), rk = scalar_curvature(fk);
    for (std::size_t n = 0; n < b.node_count(); n += 31) {
      if (!r1.curvature.flagged(n)) CHECK(rk.curvature[n] == doctest::Approx(r1.curvature[n] / k).epsilon(1e-12));
    }
    CHECK(rk.energy == doctest::Approx(r1.energy).epsilon(1e-12));
    CHECK(rk.volume == doctest::Approx(r1.volume * std::pow(k, 1.5)).epsilon(1e-12));

    const ScalarField r0 = sample_scalar(b, {[](const Point&) { return 2.0; }, {}});
    const ConformalFactor one(sample_scalar(b, {[](const Point&) { return 1.0; }, {}}), std::nullopt, r0);
    const CurvatureReport rr = scalar_curvature(one);
    for (std::size_t n = 0; n < b.node_count(); n += 17) {
      if (!rr.curvature.flagged(n)) CHECK(rr.curvature[n] == doctest::Approx(2.0).epsilon(1e-12));
    }
  }

  TEST_CASE("sphere curvature: closed form, accuracy and refinement") {
    for (double r : {0.1, 0.5, 1.0, 1.7}) CHECK(sphere_curvature_oracle(r) == doctest::Approx(6.0).epsilon(1e-12));

    const Domain coarse = make_domain(DomainKind::box, 3, 2.0, 64);
    const Point c = coarse.center();
    const CurvatureReport rc = scalar_curvature(stereographic_factor(coarse, c));
    const auto [worst_all, frac_all] = sphere_error(rc, c, 10.0);
    CHECK(frac_all >= 0.99);
    CHECK(worst_all <= 0.02);

    // Same physical cube |x - c|_inf <= 1/2 at h/2.
    const Domain fine = make_domain(DomainKind::box, 3, 1.0, 64);
    const CurvatureReport rf = scalar_curvature(stereographic_factor(fine, fine.center()));
    const double coarse_err = sphere_error(rc, c, 0.5).first;
    const double fine_err = sphere_error(rf, fine.center(), 0.5).first;
    CHECK(fine_err * 3.0 <= coarse_err);
  }

  TEST_CASE("energy rescaling invariance") {
    const Domain b = make_domain(DomainKind::box, 3, 2.0, 32);
    const ConformalFactor f = stereographic_factor(b, b.center());
    const std::vector<double> scales{1e-3, 1.0, 1e3};
    const InvarianceReport r = curvature_energy_invariance_check(f, scales);
    CHECK(r.relative_deviation[1] == 0.0);
    CHECK(r.max_deviation <= 1e-10);
    CHECK(r.base_energy > 0.0);
    CHECK(r.to_records().size() == 3);
  }

  TEST_CASE("volume_normalize") {
    const Domain t = make_domain(DomainKind::torus, 3, 2.0, 16);
    const NormalizedFactor n1 = volume_normalize(constant_factor(t, 1.0));
    CHECK(n1.c == doctest::Approx(std::pow(8.0, -1.0 / 6.0)).epsilon(1e-14));
    CHECK(scalar_curvature(n1.factor).volume == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(n1.factor.normalization() == n1.c);

    const Domain unit = make_domain(DomainKind::torus, 3, 1.0, 16);
    CHECK(volume_normalize(constant_factor(unit, 1.0)).c == doctest::Approx(1.0).epsilon(1e-14));

    const ConformalFactor bub = bubble_factor(t, 0.3, t.center());
    const NormalizedFactor nb = volume_normalize(bub);
    CHECK(std::abs(scalar_curvature(nb.factor).volume - 1.0) <= 1e-10);
    const NormalizedFactor twice = volume_normalize(nb.factor);
    CHECK(std::abs(twice.c - 1.0) <= 1e-10);
  }

  TEST_CASE("atom_masses") {
    const Domain b = make_domain(DomainKind::box, 3, 2.0, 48);
    const double h = b.spacing(0);
    const Point c = b.coord(b.ijk_to_index({24, 24, 24}));
    const std::vector<double> radii{0.5, 0.25, 4 * h, 2 * h};
    const std::vector<Point> centers{c};

    const MassReport smooth = atom_masses(stereographic_factor(b, c), centers, radii);
    for (std::size_t r = 1; r < radii.size(); ++r) CHECK(smooth.masses[0][r] <= smooth.masses[0][r - 1]);
    // Absolutely continuous: the mass at radius 2h scales like the volume.
    CHECK(smooth.atom_estimate[0] <= smooth.masses[0][0] * std::pow(2 * h / 0.5, 3) * 1.5);
    for (double m : smooth.masses[0]) CHECK(m <= smooth.total_energy + 1e-10);

    double smallest = 1e300;
    for (double lambda : {0.25, 0.125, 0.0625}) {
      const MassReport bub = atom_masses(bubble_factor(b, lambda, c), centers, radii);
      smallest = std::min(smallest, bub.atom_estimate[0]);
      for (double m : bub.masses[0]) CHECK(m <= bub.total_energy + 1e-10);
      const Point far{c[0] + 0.7, c[1], c[2]};
      const std::vector<Point> far_centers{far};
      CHECK(atom_masses(bubble_factor(b, lambda, c), far_centers, radii).atom_estimate[0] <= 1e-2 * bub.atom_estimate[0]);
    }
    CHECK(smallest >= 10.0);

    // Additivity over a partition of the ball's nodes.
    const CurvatureReport cur = scalar_curvature(bubble_factor(b, 0.125, c));
    const Ball ball{c, 0.3};
    double left = 0.0, right = 0.0;
    for (std::size_t n : nodes_in_ball(b, ball)) {
      if (cur.density.flagged(n)) continue;
      (b.coord(n)[0] < c[0] ? left : right) += cur.density[n] * b.cell_volume();
    }
    CHECK(std::abs(left + right - integrate(cur.density, ball).value) <= 1e-12 * (left + right));

    const std::vector<double> bad{2 * h, 4 * h};
    CHECK_THROWS_AS(atom_masses(cur, centers, bad), ConfigError);
  }

  TEST_CASE("mean_log_normalize") {
    const Domain t = make_domain(DomainKind::torus, 3, 1.0, 16);
    const Ball ball{t.center(), 0.3};
    const MeanLogNormalized e = mean_log_normalize(constant_factor(t, std::exp(1.0)), ball);
    CHECK(e.c == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(std::abs(mean_log_normalize(e.factor, ball).c - 1.0) <= 1e-10);

    const ConformalFactor bub = bubble_factor(t, 0.1, t.center());
    const Ball off{{0.7, 0.3, 0.5}, 0.2};
    CHECK(std::abs(mean_log(mean_log_normalize(bub, off).factor, off)) <= 1e-10);

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
      const double a = unif(rng), b = unif(rng), s = 3.0 * std::abs(unif(rng));
      const ConformalFactor f(sample_scalar(t, {[=](const Point& x) {
                                                 return std::exp(s * std::sin(2 * pi * x[0] + a) * std::cos(2 * pi * x[1] + b));
                                               },
                                               {}}));
      CHECK(std::abs(mean_log(mean_log_normalize(f, ball).factor, ball)) <= 1e-10);
    }

    const ConformalFactor pole = mollified_pole_factor(t, 0.3, 0.0, t.coord(t.ijk_to_index({8, 8, 8})));
    const MeanLogNormalized pn = mean_log_normalize(pole, ball);
    CHECK(pn.excluded_volume == doctest::Approx(t.cell_volume()).epsilon(1e-12));
  }

  TEST_CASE("log_gradient_energy") {
    const Domain b = make_domain(DomainKind::box, 3, 1.0, 32);
    const Point c = b.center();
    const std::vector<double> radii{0.4, 0.2, 0.1};
    for (double v : log_gradient_energy(constant_factor(b, 2.0), c, radii)) CHECK(v == 0.0);

    const ConformalFactor ex(sample_scalar(b, {[](const Point& x) { return std::exp(x[0]); }, {}}));
    const std::vector<double> vals = log_gradient_energy(ex, c, radii);
    for (std::size_t i = 0; i < radii.size(); ++i) {
      const double r = radii[i];
      const double node_volume = double(nodes_in_ball(b, {c, r}).size()) * b.cell_volume();
      CHECK(vals[i] == doctest::Approx(node_volume / r).epsilon(1e-10));
      CHECK(vals[i] == doctest::Approx(4.0 / 3.0 * pi * r * r).epsilon(0.06));
    }

    // Weak poles: Morrey-type sup over radii stays stable across the family.
    const Domain w = make_domain(DomainKind::box, 3, 1.0, 64);
    double lo = 1e300, hi = 0.0;
    for (double eps : {0.125, 0.0625, 0.03125}) {
      const ConformalFactor f = mollified_pole_factor(w, 0.05, eps, w.center());
      const std::vector<double> v = log_gradient_energy(f, w.center(), radii);
      const double sup = *std::max_element(v.begin(), v.end());
      lo = std::min(lo, sup);
      hi = std::max(hi, sup);
    }
    CHECK(hi <= 2.0 * lo);
  }

  TEST_CASE("harnack_ratio") {
    const Domain t = make_domain(DomainKind::torus, 3, 1.0, 32);
    const Point c = t.center();
    const Ball outer{c, 0.4}, inner{c, 0.2};
    const HarnackReport k = harnack_ratio(constant_factor(t, 5.0), outer, inner);
    CHECK(k.ratio == 1.0);
    CHECK(k.c == doctest::Approx(0.2).epsilon(1e-14));
    CHECK_THROWS_AS(harnack_ratio(constant_factor(t, 5.0), inner, outer), ConfigError);

    double prev = 0.0;
    for (double lambda : {0.2, 0.1, 0.05}) {
      const HarnackReport r = harnack_ratio(bubble_factor(t, lambda, c), outer, inner);
      CHECK(r.ratio > prev);
      CHECK(r.energy >= 10.0);
      prev = r.ratio;
    }
  }

  TEST_CASE("distance_ratio_probe") {
    const Domain b = make_domain(DomainKind::box, 3, 1.0, 16);
    const Ball ball{b.center(), 0.45};
    const std::vector<std::pair<std::size_t, std::size_t>> pairs{
        {b.ijk_to_index({3, 8, 8}), b.ijk_to_index({12, 8, 8})},
        {b.ijk_to_index({8, 3, 8}), b.ijk_to_index({8, 12, 9})}};
    const std::vector<ConformalFactor> ones(2, constant_factor(b, 1.0));
    const DistanceRatioReport same = distance_ratio_probe(ones, constant_factor(b, 1.0), ball, pairs, {2, 2});
    CHECK(same.final_max_ratio == 1.0);
    CHECK(same.ball_mass == 0.0);

    std::vector<ConformalFactor> seq;
    for (double eps : {0.4, 0.2, 0.1}) seq.push_back(mollified_pole_factor(b, 0.2, eps, b.center()));
    const DistanceRatioReport r =
        distance_ratio_probe(seq, mollified_pole_factor(b, 0.2, 0.0, b.center()), ball, pairs, {2, 2});
    CHECK(r.max_ratio.back() < r.max_ratio.front());
    CHECK(r.final_max_ratio >= 1.0);
    CHECK(r.ball_mass > 0.0);

    const std::vector<std::pair<std::size_t, std::size_t>> outside{{0, 5}};
    CHECK_THROWS_AS(distance_ratio_probe(ones, constant_factor(b, 1.0), ball, outside, {2, 2}), DomainError);
  }
}
