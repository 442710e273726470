#include "roughmetric/trace.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "roughmetric/error.hpp"
#include "roughmetric/parallel.hpp"
#include "roughmetric/record.hpp"

namespace roughmetric {

namespace {

constexpr double kBallSlack = 1e-12;

double min_radius(const Domain& domain) { return 2.0 * domain.max_spacing(); }

void check_radius(const Domain& domain, double r) {
  if (!(r >= min_radius(domain) * (1.0 - 1e-12))) {
    throw ConfigError("radius " + format_real(r) + " is below twice the grid spacing (" +
                      format_real(min_radius(domain)) + ")");
  }
}

void check_exponents(int n, double p, double s) {
  if (!(p >= 1.0)) throw ConfigError("exponent p must be >= 1, got " + format_real(p));
  if (!(n - p < s && s < n)) {
    throw ConfigError("exponents must satisfy n - p < s < n (n=" + std::to_string(n) +
                      ", p=" + format_real(p) + ", s=" + format_real(s) + ")");
  }
}

// |grad u|^p with gradient-flagged nodes carried over as flags.
ScalarField gradient_power(const ScalarField& u, double p) {
  const GradientField g = gradient(u);
  const Domain& domain = u.domain();
  std::vector<double> values(domain.node_count());
  std::vector<std::size_t> flagged;
  for (std::size_t n = 0; n < values.size(); ++n) {
    if (g.flagged(n)) {
      values[n] = 0.0;
      flagged.push_back(n);
    } else {
      values[n] = std::pow(g.norm(n), p);
    }
  }
  return ScalarField(domain, std::move(values), std::move(flagged));
}

ScalarField absolute_power(const ScalarField& u, double p) {
  std::vector<double> values(u.size());
  for (std::size_t n = 0; n < values.size(); ++n) {
    values[n] = u.flagged(n) ? 0.0 : std::pow(std::abs(u[n]), p);
  }
  return ScalarField(u.domain(), std::move(values), u.flagged_nodes());
}

ScalarField difference(const ScalarField& a, const ScalarField& b) {
  if (a.domain() != b.domain()) throw DomainError("fields live on different domains");
  std::vector<double> values(a.size());
  std::vector<std::size_t> flagged;
  for (std::size_t n = 0; n < values.size(); ++n) {
    if (a.flagged(n) || b.flagged(n)) {
      values[n] = 0.0;
      flagged.push_back(n);
    } else {
      values[n] = a[n] - b[n];
    }
  }
  return ScalarField(a.domain(), std::move(values), std::move(flagged));
}

double w1p_norm(const ScalarField& u, double p) {
  const double a = integrate(absolute_power(u, p)).value;
  const double b = integrate(gradient_power(u, p)).value;
  return std::pow(a + b, 1.0 / p);
}

double largest_admissible_radius(const Domain& domain) {
  double r = domain.extent(0);
  for (int a = 1; a < domain.dim(); ++a) r = std::min(r, domain.extent(a));
  return 0.5 * r;
}

}  // namespace

double unit_ball_volume(double s) {
  return std::pow(std::numbers::pi, 0.5 * s) / std::tgamma(0.5 * s + 1.0);
}

double r_average(const ScalarField& u, const Point& x, double r) {
  const Domain& domain = u.domain();
  check_radius(domain, r);
  const Integral in = integrate(u, Ball{x, r});
  if (!(in.volume > 0.0)) {
    throw DomainError("ball of radius " + format_real(r) + " holds no non-singular node");
  }
  return in.value / in.volume;
}

std::vector<double> geometric_radii(double r0, int count) {
  if (!(r0 > 0.0) || count < 1) throw ConfigError("geometric radii need r0 > 0 and count >= 1");
  std::vector<double> radii(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) radii[i] = std::ldexp(r0, -i);
  return radii;
}

std::vector<double> dyadic_radii(const Domain& domain, double r0) {
  std::vector<double> radii;
  const double floor = min_radius(domain) * (1.0 - 1e-12);
  for (double r = r0; r >= floor; r *= 0.5) radii.push_back(r);
  return radii;
}

void check_radii(const Domain& domain, std::span<const double> radii, std::size_t min_count) {
  if (radii.size() < min_count) {
    throw ConfigError("radius schedule has " + std::to_string(radii.size()) +
                      " entries, at least " + std::to_string(min_count) + " required");
  }
  for (std::size_t i = 1; i < radii.size(); ++i) {
    if (!(radii[i] < radii[i - 1])) throw ConfigError("radius schedule must strictly decrease");
  }
  if (!radii.empty()) check_radius(domain, radii.back());
}

NestedBalls::NestedBalls(const Domain& domain, std::span<const double> radii)
    : domain_(domain), radii_(radii.begin(), radii.end()) {
  check_radii(domain, radii, 1);
  const bool torus = domain.kind() == DomainKind::torus;
  if (torus) {
    for (int a = 0; a < domain.dim(); ++a) {
      if (radii[0] > 0.5 * domain.extent(a)) {
        throw DomainError("ball radius exceeds half the torus extent on axis " +
                          std::to_string(a));
      }
    }
  }
  last_ = domain.dim() - 1;
  const int res_last = domain.resolution(last_);
  stride_ = torus ? 2 * static_cast<std::size_t>(res_last) + 1
                  : static_cast<std::size_t>(res_last) + 1;
  const double h_last = domain.spacing(last_);
  // On a torus an offset of exactly half the resolution reaches the same
  // node from both sides; keep only the positive one, as nodes_in_ball does.
  const auto reach = [&](int axis, double r) {
    int k = static_cast<int>(std::ceil(r / domain.spacing(axis)));
    if (torus) k = std::min(k, domain.resolution(axis) / 2);
    return k;
  };
  const auto lower = [&](int axis, int k) {
    return torus && 2 * k >= domain.resolution(axis) ? -k + 1 : -k;
  };
  runs_.resize(radii_.size());
  for (std::size_t level = 0; level < radii_.size(); ++level) {
    const double r = radii_[level];
    const double r2 = r * r * (1.0 + kBallSlack);
    const int k0 = reach(0, r);
    const int k1 = last_ == 2 ? reach(1, r) : 0;
    const int kl = reach(last_, r);
    for (int i = lower(0, k0); i <= k0; ++i) {
      for (int j = last_ == 2 ? lower(1, k1) : 0; j <= k1; ++j) {
        double lead = 0.0;
        const double di = i * domain.spacing(0);
        lead += di * di;
        if (last_ == 2) {
          const double dj = j * domain.spacing(1);
          lead += dj * dj;
        }
        if (lead > r2) continue;
        // Widest run with (w h)^2 passing the same inequality as ball_offsets.
        int w = 0;
        while (w < kl) {
          const double dx = (w + 1) * h_last;
          if (lead + dx * dx > r2) break;
          ++w;
        }
        Run run;
        run.row = {i, j, 0};
        run.half_width = w;
        runs_[level].push_back(run);
      }
    }
  }
}

NestedBalls::Prefix NestedBalls::prefix(const ScalarField& field) const {
  if (field.domain() != domain_) throw DomainError("field lives on a different domain");
  const bool torus = domain_.kind() == DomainKind::torus;
  const std::size_t res = static_cast<std::size_t>(domain_.resolution(last_));
  const std::size_t rows = domain_.node_count() / res;
  Prefix out;
  out.value.assign(rows * stride_, 0.0);
  out.count.assign(rows * stride_, 0);
  for (std::size_t row = 0; row < rows; ++row) {
    double* pv = out.value.data() + row * stride_;
    std::uint32_t* pc = out.count.data() + row * stride_;
    const std::size_t span = torus ? 2 * res : res;
    for (std::size_t k = 0; k < span; ++k) {
      const std::size_t n = row * res + (k % res);
      const bool skip = field.flagged(n);
      pv[k + 1] = pv[k] + (skip ? 0.0 : field[n]);
      pc[k + 1] = pc[k] + (skip ? 0u : 1u);
    }
  }
  return out;
}

NestedBalls::Sums NestedBalls::sums(std::size_t node, const Prefix& prefix) const {
  const bool torus = domain_.kind() == DomainKind::torus;
  const Index3 base = domain_.index_to_ijk(node);
  const int res_last = domain_.resolution(last_);
  const std::size_t levels = radii_.size();
  Sums out{std::vector<double>(levels, 0.0), std::vector<std::size_t>(levels, 0)};
  for (std::size_t level = 0; level < levels; ++level) {
    CompensatedSum sum;
    std::size_t count = 0;
    for (const Run& run : runs_[level]) {
      std::size_t row = 0;
      bool inside = true;
      for (int a = 0; a < last_; ++a) {
        int i = base[a] + run.row[a];
        const int res = domain_.resolution(a);
        if (i < 0 || i >= res) {
          if (!torus) {
            inside = false;
            break;
          }
          i = i < 0 ? i + res : i - res;
        }
        row = row * static_cast<std::size_t>(res) + static_cast<std::size_t>(i);
      }
      if (!inside) continue;
      int lo = base[last_] - run.half_width;
      int hi = base[last_] + run.half_width + 1;  // exclusive
      if (torus) {
        if (hi - lo > res_last) hi = lo + res_last;
        if (lo < 0) {
          lo += res_last;
          hi += res_last;
        }
      } else {
        lo = std::max(lo, 0);
        hi = std::min(hi, res_last);
      }
      const double* pv = prefix.value.data() + row * stride_;
      const std::uint32_t* pc = prefix.count.data() + row * stride_;
      sum.add(pv[hi] - pv[lo]);
      count += pc[hi] - pc[lo];
    }
    out.sum[level] = sum.value();
    out.count[level] = count;
  }
  return out;
}

std::size_t tail_window(std::size_t count) {
  const std::size_t m = count > 0 ? count - 1 : 0;
  return std::min(count, std::max<std::size_t>(2, (m + 1) / 2));
}

double tail_oscillation(std::span<const double> averages) {
  const std::size_t w = tail_window(averages.size());
  const auto tail = averages.subspan(averages.size() - w);
  const auto [lo, hi] = std::minmax_element(tail.begin(), tail.end());
  return *hi - *lo;
}

AverageProbe centered_average_limit(const ScalarField& u, const Point& x,
                                    std::span<const double> radii, double osc_tol) {
  check_radii(u.domain(), radii);
  AverageProbe probe;
  probe.x = x;
  probe.radii.assign(radii.begin(), radii.end());
  for (double r : radii) probe.averages.push_back(r_average(u, x, r));
  probe.oscillation = tail_oscillation(probe.averages);
  if (probe.oscillation <= osc_tol) probe.limit = probe.averages.back();
  return probe;
}

std::vector<Concentration> concentration_scan(const ScalarField& u, double p, double s, double t1,
                                              std::span<const double> radii, int workers) {
  const Domain& domain = u.domain();
  check_exponents(domain.dim(), p, s);
  if (!(t1 > 0.0)) throw ConfigError("concentration threshold t1 must be positive");
  check_radii(domain, radii, 1);
  const NestedBalls balls(domain, radii);
  const auto density = balls.prefix(gradient_power(u, p));
  const double cell = domain.cell_volume();
  std::vector<double> found(domain.node_count(), 0.0);
  parallel_for(domain.node_count(), workers, [&](std::size_t n) {
    const auto sums = balls.sums(n, density);
    for (std::size_t i = 0; i < radii.size(); ++i) {
      if (sums.sum[i] * cell / std::pow(radii[i], s) >= t1) {
        found[n] = radii[i];
        return;
      }
    }
  });
  std::vector<Concentration> out;
  for (std::size_t n = 0; n < found.size(); ++n) {
    if (found[n] > 0.0) out.push_back({n, found[n]});
  }
  return out;
}

VitaliCover vitali_cover(const Domain& domain, std::span<const Ball> candidates) {
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return candidates[a].radius > candidates[b].radius;
  });
  VitaliCover cover;
  for (std::size_t i : order) {
    const Ball& c = candidates[i];
    const bool clear = std::all_of(cover.disjoint.begin(), cover.disjoint.end(), [&](const Ball& b) {
      return domain.distance(b.center, c.center) > b.radius + c.radius;
    });
    if (!clear) continue;
    cover.selected.push_back(i);
    cover.disjoint.push_back(c);
    cover.enlarged.push_back(Ball{c.center, 5.0 * c.radius});
  }
  return cover;
}

bool CoverReport::disjointness_holds(const Domain& domain) const {
  for (std::size_t i = 0; i < disjoint_balls.size(); ++i) {
    for (std::size_t j = i + 1; j < disjoint_balls.size(); ++j) {
      const Ball& a = disjoint_balls[i];
      const Ball& b = disjoint_balls[j];
      if (!(domain.distance(a.center, b.center) > a.radius + b.radius)) return false;
    }
  }
  return true;
}

bool CoverReport::coverage_holds(const Domain& domain) const {
  if (!unresolved.empty()) return false;
  for (const Concentration& c : detected) {
    const Point x = domain.coord(c.node);
    const bool inside = std::any_of(enlarged_cover.begin(), enlarged_cover.end(), [&](const Ball& b) {
      return domain.distance(b.center, x) <= b.radius;
    });
    if (!inside) return false;
  }
  return true;
}

std::vector<std::string> CoverReport::to_records() const {
  std::vector<std::string> lines;
  lines.push_back(Record("cover")
                      .add("t", t)
                      .add("p", p)
                      .add("s", s)
                      .add("lambda_prime", lambda_prime)
                      .add("t1", t1)
                      .add("l1_norm", l1_norm)
                      .add("hypothesis_bound", hypothesis_bound)
                      .add("hypothesis_ok", hypothesis_ok)
                      .add("detected", detected.size() + unresolved.size())
                      .add("unresolved", unresolved.size())
                      .add("singular", singular_count)
                      .add("balls", disjoint_balls.size())
                      .add("content_bound", content_bound)
                      .add("energy", energy)
                      .add("certified_bound", certified_bound)
                      .line());
  for (std::size_t i = 0; i < disjoint_balls.size(); ++i) {
    const Ball& b = disjoint_balls[i];
    lines.push_back(Record("cover_ball")
                        .add("index", i)
                        .add("x", b.center[0])
                        .add("y", b.center[1])
                        .add("z", b.center[2])
                        .add("radius", b.radius)
                        .line());
  }
  return lines;
}

CoverReport superlevel_cover(const ScalarField& u, double t, double p, double s,
                             const CoverOptions& options) {
  const Domain& domain = u.domain();
  const int n = domain.dim();
  check_exponents(n, p, s);
  if (!(t > 0.0)) throw ConfigError("threshold t must be positive");
  if (!(options.lambda_prime > 0.0)) throw ConfigError("lambda_prime must be positive");
  const std::vector<double> radii = options.radii.empty()
                                        ? dyadic_radii(domain, largest_admissible_radius(domain))
                                        : options.radii;
  check_radii(domain, radii);

  CoverReport report;
  report.t = t;
  report.p = p;
  report.s = s;
  report.lambda_prime = options.lambda_prime;
  report.t1 = std::pow(t / options.lambda_prime, p);
  report.l1_norm = integrate(absolute_power(u, 1.0)).value;
  report.hypothesis_bound = t * unit_ball_volume(n) / 4.0;
  report.hypothesis_ok = report.l1_norm <= report.hypothesis_bound;
  if (!report.hypothesis_ok && options.enforce_hypothesis) {
    throw ConfigError("L1 hypothesis violated: ||u||_L1 = " + format_real(report.l1_norm) +
                      " exceeds t * omega_n / 4 = " + format_real(report.hypothesis_bound));
  }

  const ScalarField density = gradient_power(u, p);
  report.energy = integrate(density).value;

  // Per node: 0 = ordinary, 1 = singular, 2 = detected; plus the radius.
  const NestedBalls balls(domain, radii);
  const auto u_rows = balls.prefix(u);
  const auto density_rows = balls.prefix(density);
  const double cell = domain.cell_volume();
  std::vector<std::uint8_t> state(domain.node_count(), 0);
  std::vector<double> radius(domain.node_count(), 0.0);
  parallel_for(domain.node_count(), options.workers, [&](std::size_t node) {
    if (u.flagged(node)) {
      state[node] = 1;
      return;
    }
    const auto sums = balls.sums(node, u_rows);
    std::vector<double> averages(radii.size());
    for (std::size_t i = 0; i < radii.size(); ++i) {
      if (sums.count[i] == 0) {
        throw DomainError("ball of radius " + format_real(radii[i]) + " at node " +
                          std::to_string(node) + " holds no non-singular node");
      }
      averages[i] = sums.sum[i] / static_cast<double>(sums.count[i]);
    }
    if (tail_oscillation(averages) > options.osc_tol) {
      state[node] = 1;
      return;
    }
    if (!(std::abs(averages.back()) > t)) return;
    state[node] = 2;
    const auto energy = balls.sums(node, density_rows);
    for (std::size_t i = 0; i < radii.size(); ++i) {
      if (energy.sum[i] * cell / std::pow(radii[i], s) >= report.t1) {
        radius[node] = radii[i];
        break;
      }
    }
  });

  std::vector<Ball> candidates;
  for (std::size_t node = 0; node < state.size(); ++node) {
    if (state[node] == 1) ++report.singular_count;
    if (state[node] != 2) continue;
    if (radius[node] > 0.0) {
      report.detected.push_back({node, radius[node]});
      candidates.push_back(Ball{domain.coord(node), radius[node]});
    } else {
      report.unresolved.push_back(node);
    }
  }
  const VitaliCover cover = vitali_cover(domain, candidates);
  report.disjoint_balls = cover.disjoint;
  report.enlarged_cover = cover.enlarged;
  CompensatedSum content;
  for (const Ball& b : cover.enlarged) content.add(std::pow(b.radius, s));
  const double omega_s = unit_ball_volume(s);
  report.content_bound = omega_s * content.value();
  report.certified_bound = std::pow(5.0, s) * omega_s * report.energy / report.t1;
  return report;
}

std::string SobolevReport::to_record() const {
  return Record("sobolev")
      .add("p", p)
      .add("lp_norm", lp_norm)
      .add("grad_lp_norm", grad_lp_norm)
      .add("w1p_norm", w1p_norm)
      .line();
}

SobolevReport sobolev_norms(const ScalarField& u, double p) {
  if (!(p >= 1.0)) throw ConfigError("Sobolev exponent must be >= 1, got " + format_real(p));
  SobolevReport r;
  r.p = p;
  const double a = integrate(absolute_power(u, p)).value;
  const double b = integrate(gradient_power(u, p)).value;
  r.lp_norm = std::pow(a, 1.0 / p);
  r.grad_lp_norm = std::pow(b, 1.0 / p);
  r.w1p_norm = std::pow(a + b, 1.0 / p);
  return r;
}

double metric_w1p_distance(const MetricField& g1, const MetricField& g2, double p) {
  if (g1.domain() != g2.domain()) throw DomainError("metrics live on different domains");
  if (!(p >= 1.0)) throw ConfigError("Sobolev exponent must be >= 1, got " + format_real(p));
  const int comps = g1.components_per_node();
  double direct = 0.0, inverse = 0.0;
  for (int c = 0; c < comps; ++c) {
    direct += w1p_norm(difference(g1.component(c), g2.component(c)), p);
    inverse += w1p_norm(difference(g1.inverse_component(c), g2.inverse_component(c)), p);
  }
  return std::max(direct, inverse);
}

CurveTrace curve_trace(const ScalarField& u, std::span<const Point> polyline,
                       int samples_per_segment) {
  const Domain& domain = u.domain();
  if (polyline.size() < 2) throw ConfigError("polyline needs at least two vertices");
  if (samples_per_segment < 4) throw ConfigError("samples_per_segment must be >= 4");
  // A box is convex, so vertices inside keep every segment inside.
  for (const Point& v : polyline) {
    if (!domain.contains(v)) throw DomainError("polyline vertex lies outside the domain");
  }
  const double fallback_radius = min_radius(domain);
  CurveTrace trace;
  CompensatedSum total, length;
  for (std::size_t seg = 0; seg + 1 < polyline.size(); ++seg) {
    const Point& a = polyline[seg];
    Point d{0.0, 0.0, 0.0};
    double len2 = 0.0;
    for (int k = 0; k < domain.dim(); ++k) {
      d[k] = polyline[seg + 1][k] - a[k];
      len2 += d[k] * d[k];
    }
    const double len = std::sqrt(len2);
    length.add(len);
    const double dl = len / samples_per_segment;
    for (int j = 0; j < samples_per_segment; ++j) {
      const double f = (j + 0.5) / samples_per_segment;
      Point x{0.0, 0.0, 0.0};
      for (int k = 0; k < domain.dim(); ++k) x[k] = a[k] + f * d[k];
      const InterpolationStencil st = interpolation_stencil(domain, x);
      bool touches = false;
      double v = 0.0;
      for (int c = 0; c < st.count; ++c) {
        if (st.weights[c] == 0.0) continue;
        if (u.flagged(st.nodes[c])) {
          touches = true;
          break;
        }
        v += st.weights[c] * u[st.nodes[c]];
      }
      if (touches) {
        v = r_average(u, x, fallback_radius);
        ++trace.averaged_samples;
      }
      trace.points.push_back(x);
      trace.values.push_back(v);
      total.add(v * dl);
    }
  }
  trace.length = length.value();
  trace.integral = total.value();
  return trace;
}

std::vector<std::string> AeReport::to_records() const {
  std::vector<std::string> lines;
  lines.push_back(Record("ae_convergence")
                      .add("s", s)
                      .add("summable", summable)
                      .add("steps", steps.size())
                      .add("probes", probes.size())
                      .add("converged_fraction", converged_fraction)
                      .line());
  for (std::size_t k = 0; k < steps.size(); ++k) {
    lines.push_back(Record("ae_step")
                        .add("k", k + 1)
                        .add("w1p_power", steps[k].w1p_power)
                        .add("content_bound", steps[k].content_bound)
                        .add("sup_probe_error", steps[k].sup_probe_error)
                        .line());
  }
  return lines;
}

AeReport ae_convergence_check(std::span<const ScalarField> sequence, const ScalarField& limit,
                              double s, std::span<const Point> probes,
                              const AeOptions& options) {
  const Domain& domain = limit.domain();
  check_exponents(domain.dim(), options.p, s);
  for (const ScalarField& uk : sequence) {
    if (uk.domain() != domain) throw DomainError("sequence and limit live on different domains");
  }
  const std::vector<double> radii = options.radii.empty()
                                        ? dyadic_radii(domain, largest_admissible_radius(domain))
                                        : options.radii;
  check_radii(domain, radii);

  AeReport report;
  report.s = s;
  const double t1 = std::pow(options.tol / options.lambda_prime, options.p);
  const double prefactor = std::pow(5.0, s) * unit_ball_volume(s) / t1;
  for (std::size_t k = 0; k < sequence.size(); ++k) {
    const ScalarField diff = difference(sequence[k], limit);
    AeStep step;
    const double a = integrate(absolute_power(diff, options.p)).value;
    const double b = integrate(gradient_power(diff, options.p)).value;
    step.w1p_power = a + b;
    step.content_bound = prefactor * b;
    if (!(step.w1p_power < std::ldexp(1.0, -static_cast<int>(k + 1)))) report.summable = false;
    report.steps.push_back(step);
  }

  std::size_t eligible = 0, converged = 0;
  for (const Point& x : probes) {
    AeProbe probe;
    probe.x = x;
    const std::size_t node = domain.nearest_node(x);
    const auto value = [&](const ScalarField& f) -> std::optional<double> {
      if (f.flagged(node) && domain.distance(domain.coord(node), x) < 1e-9 * domain.min_spacing()) {
        return std::nullopt;
      }
      return centered_average_limit(f, x, radii, options.osc_tol).limit;
    };
    const auto base = value(limit);
    probe.flagged = !base.has_value();
    for (std::size_t k = 0; k < sequence.size() && !probe.flagged; ++k) {
      const auto vk = value(sequence[k]);
      if (!vk) {
        probe.flagged = true;
        break;
      }
      probe.errors.push_back(std::abs(*vk - *base));
    }
    if (probe.flagged) {
      probe.errors.clear();
    } else {
      ++eligible;
      for (std::size_t k = 0; k < probe.errors.size(); ++k) {
        report.steps[k].sup_probe_error = std::max(report.steps[k].sup_probe_error, probe.errors[k]);
      }
      probe.converged = probe.errors.empty() || probe.errors.back() <= options.tol;
      if (probe.converged) ++converged;
    }
    report.probes.push_back(std::move(probe));
  }
  report.converged_fraction =
      eligible == 0 ? 0.0 : static_cast<double>(converged) / static_cast<double>(eligible);
  return report;
}

}  // namespace roughmetric
