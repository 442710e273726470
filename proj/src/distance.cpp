#include "roughmetric/distance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>

#include "roughmetric/error.hpp"
#include "roughmetric/parallel.hpp"
#include "roughmetric/record.hpp"

namespace roughmetric {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kNoNode = std::numeric_limits<std::size_t>::max();

int gcd3(const Index3& v) { return std::gcd(std::gcd(std::abs(v[0]), std::abs(v[1])), std::abs(v[2])); }

bool lexicographically_positive(const Index3& v) {
  for (int a = 0; a < 3; ++a) {
    if (v[a] != 0) return v[a] > 0;
  }
  return false;
}

// Neighbour lookup with the node's coordinates already split out.
class Neighbours {
 public:
  explicit Neighbours(const Domain& domain)
      : torus_(domain.kind() == DomainKind::torus), dim_(domain.dim()) {
    for (int a = 0; a < 3; ++a) res_[a] = a < dim_ ? domain.resolution(a) : 1;
  }

  std::size_t at(const Index3& base, const Index3& offset, int sign) const {
    std::size_t n = 0;
    for (int a = 0; a < dim_; ++a) {
      int i = base[a] + sign * offset[a];
      if (i < 0 || i >= res_[a]) {
        if (!torus_) return kNoNode;
        i = i < 0 ? i + res_[a] : i - res_[a];
      }
      n = n * static_cast<std::size_t>(res_[a]) + static_cast<std::size_t>(i);
    }
    return n;
  }

 private:
  bool torus_;
  int dim_;
  std::array<int, 3> res_{};
};

bool same_landmarks(const DistanceMatrix& a, const DistanceMatrix& b) {
  return a.domain == b.domain && a.landmarks == b.landmarks;
}

double entry_gap(double a, double b) {
  if (std::isinf(a) && std::isinf(b)) return 0.0;
  return std::abs(a - b);
}

}  // namespace

void check_stencil(const Domain& domain, const StencilSpec& stencil) {
  if (stencil.reach < 1) throw ConfigError("stencil reach must be >= 1");
  if (stencil.quad_samples < 2) throw ConfigError("stencil quad_samples must be >= 2");
  if (domain.kind() == DomainKind::torus) {
    for (int a = 0; a < domain.dim(); ++a) {
      if (domain.resolution(a) <= 2 * stencil.reach) {
        throw ConfigError("torus resolution must exceed twice the stencil reach");
      }
    }
  }
}

std::vector<Index3> stencil_offsets(int dim, int reach) {
  if (dim < 2 || dim > 3) throw ConfigError("dimension must be 2 or 3");
  if (reach < 1) throw ConfigError("stencil reach must be >= 1");
  std::vector<Index3> out;
  const int kz = dim == 3 ? reach : 0;
  for (int i = -reach; i <= reach; ++i) {
    for (int j = -reach; j <= reach; ++j) {
      for (int k = -kz; k <= kz; ++k) {
        const Index3 v{i, j, k};
        if (gcd3(v) == 1) out.push_back(v);
      }
    }
  }
  return out;
}

std::vector<Index3> half_offsets(int dim, int reach) {
  std::vector<Index3> out;
  for (const Index3& v : stencil_offsets(dim, reach)) {
    if (lexicographically_positive(v)) out.push_back(v);
  }
  return out;
}

EdgeSampler::EdgeSampler(const MetricField& metric)
    : domain_(metric.domain()), components_(metric.components().begin(), metric.components().end()) {
  const int comps = metric.components_per_node();
  const auto& bad = metric.non_spd_nodes();
  const double radius = 2.0 * domain_.max_spacing();
  for (std::size_t n : metric.flagged_nodes()) {
    if (std::binary_search(bad.begin(), bad.end(), n)) continue;
    std::vector<CompensatedSum> sums(static_cast<std::size_t>(comps));
    std::size_t used = 0;
    for (std::size_t m : nodes_in_ball(domain_, Ball{domain_.coord(n), radius})) {
      if (metric.flagged(m)) continue;
      for (int c = 0; c < comps; ++c) sums[c].add(components_[m * comps + c]);
      ++used;
    }
    if (used == 0) {
      throw DomainError("singular metric node " + std::to_string(n) +
                        " has no regular node within 2h to average from");
    }
    for (int c = 0; c < comps; ++c) {
      components_[n * comps + c] = sums[c].value() / static_cast<double>(used);
    }
  }
}

std::optional<double> EdgeSampler::edge_weight(const Point& a, const Point& b, int samples) const {
  const int dim = domain_.dim();
  const int comps = SymMatrix::packed_size(dim);
  Point delta{0.0, 0.0, 0.0};
  for (int k = 0; k < dim; ++k) delta[k] = b[k] - a[k];
  double sum = 0.0;
  for (int j = 0; j < samples; ++j) {
    const double t = (j + 0.5) / samples;
    Point x{0.0, 0.0, 0.0};
    for (int k = 0; k < dim; ++k) x[k] = a[k] + t * delta[k];
    const InterpolationStencil st = interpolation_stencil(domain_, x);
    SymMatrix g;
    g.n = dim;
    for (int c = 0; c < st.count; ++c) {
      const double w = st.weights[c];
      if (w == 0.0) continue;
      const double* src = components_.data() + st.nodes[c] * comps;
      for (int q = 0; q < comps; ++q) g.packed[q] += w * src[q];
    }
    if (!is_positive_definite(g)) return std::nullopt;
    const double q = g.quadratic(delta);
    if (!(q > 0.0) || !std::isfinite(q)) return std::nullopt;
    sum += std::sqrt(q);
  }
  return sum / samples;
}

std::optional<double> edge_weight(const MetricField& metric, const Point& a, const Point& b,
                                  int samples) {
  if (samples < 2) throw ConfigError("edge quadrature needs at least 2 samples");
  return EdgeSampler(metric).edge_weight(a, b, samples);
}

LatticeGraph::LatticeGraph(const MetricField& metric, const StencilSpec& stencil, int workers)
    : domain_(metric.domain()), stencil_(stencil), offsets_(half_offsets(metric.domain().dim(), stencil.reach)) {
  check_stencil(domain_, stencil_);
  const EdgeSampler sampler(metric);
  const std::size_t count = domain_.node_count();
  const std::size_t degree = offsets_.size();
  weights_.assign(count * degree, kNaN);
  std::vector<std::uint32_t> dropped(count, 0);
  const Neighbours neighbours(domain_);
  const int dim = domain_.dim();
  parallel_for(count, workers, [&](std::size_t node) {
    const Index3 base = domain_.index_to_ijk(node);
    const Point a = domain_.coord(node);
    for (std::size_t k = 0; k < degree; ++k) {
      if (neighbours.at(base, offsets_[k], 1) == kNoNode) continue;
      Point b = a;
      for (int d = 0; d < dim; ++d) b[d] += offsets_[k][d] * domain_.spacing(d);
      const auto w = sampler.edge_weight(a, b, stencil_.quad_samples);
      if (w) {
        weights_[node * degree + k] = *w;
      } else {
        ++dropped[node];
      }
    }
  });
  dropped_ = std::accumulate(dropped.begin(), dropped.end(), std::size_t{0});
}

Sweep sweep(const LatticeGraph& graph, std::size_t source) {
  const Domain& domain = graph.domain();
  const std::size_t count = domain.node_count();
  if (source >= count) throw DomainError("source node out of range");
  Sweep out{std::vector<double>(count, kInf), std::vector<std::size_t>(count, kNoNode)};
  std::vector<std::uint8_t> settled(count, 0);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  out.distance[source] = 0.0;
  heap.emplace(0.0, source);
  const Neighbours neighbours(domain);
  const auto& offsets = graph.offsets();
  while (!heap.empty()) {
    const auto [d, node] = heap.top();
    heap.pop();
    if (settled[node]) continue;
    settled[node] = 1;
    const Index3 base = domain.index_to_ijk(node);
    const auto relax = [&](std::size_t nb, double w) {
      if (nb == kNoNode || std::isnan(w) || settled[nb]) return;
      const double nd = d + w;
      if (nd < out.distance[nb]) {
        out.distance[nb] = nd;
        out.predecessor[nb] = node;
        heap.emplace(nd, nb);
      }
    };
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      const std::size_t fwd = neighbours.at(base, offsets[k], 1);
      if (fwd != kNoNode) relax(fwd, graph.weight(node, k));
      const std::size_t back = neighbours.at(base, offsets[k], -1);
      if (back != kNoNode) relax(back, graph.weight(back, k));
    }
  }
  return out;
}

ShortestPath shortest_distance(const LatticeGraph& graph, const Point& x, const Point& y) {
  const Domain& domain = graph.domain();
  if (!domain.contains(x) || !domain.contains(y)) throw DomainError("endpoint outside the domain");
  const std::size_t from = domain.nearest_node(x);
  const std::size_t to = domain.nearest_node(y);
  const Sweep s = sweep(graph, from);
  if (std::isinf(s.distance[to])) {
    throw UnreachableError("node " + std::to_string(to) + " is unreachable from node " +
                           std::to_string(from) + " (all connecting edges dropped)");
  }
  ShortestPath out;
  out.value = s.distance[to];
  for (std::size_t n = to; n != kNoNode; n = s.predecessor[n]) out.path.push_back(n);
  std::reverse(out.path.begin(), out.path.end());
  return out;
}

ShortestPath shortest_distance(const MetricField& metric, const Point& x, const Point& y,
                               const StencilSpec& stencil) {
  return shortest_distance(LatticeGraph(metric, stencil), x, y);
}

double DistanceMatrix::max_entry() const {
  double m = 0.0;
  for (double v : values) {
    if (std::isfinite(v)) m = std::max(m, v);
  }
  return m;
}

DistanceMatrix distance_matrix(const LatticeGraph& graph, std::span<const std::size_t> landmarks,
                               const std::string& label, int workers) {
  std::vector<std::size_t> sorted(landmarks.begin(), landmarks.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw DomainError("landmarks must be distinct nodes");
  }
  if (!sorted.empty() && sorted.back() >= graph.domain().node_count()) {
    throw DomainError("landmark node out of range");
  }
  DistanceMatrix out;
  out.domain = graph.domain();
  out.landmarks.assign(landmarks.begin(), landmarks.end());
  out.metric = label;
  out.stencil = graph.stencil();
  const std::size_t m = landmarks.size();
  out.values.assign(m * m, kInf);
  parallel_for(m, workers, [&](std::size_t i) {
    const Sweep s = sweep(graph, landmarks[i]);
    for (std::size_t j = 0; j < m; ++j) out.values[i * m + j] = s.distance[landmarks[j]];
  });
  return out;
}

DistanceMatrix distance_matrix(const MetricField& metric, std::span<const std::size_t> landmarks,
                               const StencilSpec& stencil, const std::string& label, int workers) {
  return distance_matrix(LatticeGraph(metric, stencil, workers), landmarks, label, workers);
}

void write_csv(const DistanceMatrix& matrix, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  const int dim = matrix.domain.dim();
  static const char* axes[] = {"x", "y", "z"};
  out << "index,node";
  for (int a = 0; a < dim; ++a) out << ',' << axes[a];
  for (std::size_t j = 0; j < matrix.size(); ++j) out << ",d_" << j;
  out << '\n';
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    const Point x = matrix.domain.coord(matrix.landmarks[i]);
    out << i << ',' << matrix.landmarks[i];
    for (int a = 0; a < dim; ++a) out << ',' << format_real(x[a]);
    for (std::size_t j = 0; j < matrix.size(); ++j) out << ',' << format_real(matrix(i, j));
    out << '\n';
  }
  if (!out) throw FormatError("failed writing " + path.string());
}

DistanceMatrix read_csv(const std::filesystem::path& path, const Domain& domain) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  const auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  const auto header = split(line);
  const int dim = domain.dim();
  const std::size_t lead = 2 + static_cast<std::size_t>(dim);
  if (header.size() < lead || header[0] != "index" || header[1] != "node") {
    throw FormatError(path.string() + ": unexpected header");
  }
  const std::size_t m = header.size() - lead;
  DistanceMatrix out;
  out.domain = domain;
  out.values.assign(m * m, kInf);
  const auto parse_real = [&](const std::string& s) {
    if (s == "inf") return kInf;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": bad number '" + s + "'");
    }
    if (used != s.size()) throw FormatError(path.string() + ": bad number '" + s + "'");
    return v;
  };
  for (std::size_t i = 0; i < m; ++i) {
    if (!std::getline(in, line)) throw FormatError(path.string() + ": missing rows");
    const auto cells = split(line);
    if (cells.size() != lead + m) throw FormatError(path.string() + ": row has wrong arity");
    if (cells[0] != std::to_string(i)) throw FormatError(path.string() + ": rows out of order");
    const std::size_t node = std::stoull(cells[1]);
    if (node >= domain.node_count()) throw FormatError(path.string() + ": node out of range");
    out.landmarks.push_back(node);
    for (std::size_t j = 0; j < m; ++j) out.values[i * m + j] = parse_real(cells[lead + j]);
  }
  return out;
}

ScalarField distance_field(const LatticeGraph& graph, std::size_t source) {
  Sweep s = sweep(graph, source);
  std::vector<std::size_t> unreachable;
  for (std::size_t n = 0; n < s.distance.size(); ++n) {
    if (std::isinf(s.distance[n])) {
      unreachable.push_back(n);
      s.distance[n] = kNaN;
    }
  }
  return ScalarField(graph.domain(), std::move(s.distance), std::move(unreachable));
}

std::vector<std::size_t> halton_landmarks(const Domain& domain, std::size_t count,
                                          std::size_t start) {
  if (count > domain.node_count()) throw ConfigError("more landmarks than nodes requested");
  const auto radical_inverse = [](std::size_t i, std::size_t base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
      f /= static_cast<double>(base);
      r += f * static_cast<double>(i % base);
      i /= base;
    }
    return r;
  };
  static const std::size_t bases[] = {2, 3, 5};
  std::vector<std::size_t> out;
  std::vector<std::uint8_t> used(domain.node_count(), 0);
  for (std::size_t i = start; out.size() < count; ++i) {
    Point x{0.0, 0.0, 0.0};
    for (int a = 0; a < domain.dim(); ++a) x[a] = domain.extent(a) * radical_inverse(i, bases[a]);
    const std::size_t n = domain.nearest_node(x);
    if (used[n]) continue;
    used[n] = 1;
    out.push_back(n);
  }
  return out;
}

double uniform_metric_distance(const DistanceMatrix& a, const DistanceMatrix& b) {
  if (!same_landmarks(a, b)) throw DomainError("distance matrices use different landmark sets");
  double m = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) m = std::max(m, entry_gap(a.values[i], b.values[i]));
  return m;
}

std::vector<std::string> ConvergenceReport::to_records() const {
  std::vector<std::string> lines;
  lines.push_back(Record("convergence")
                      .add("pairs", pair_count)
                      .add("tol", tol)
                      .add("tol_abs", tol_abs)
                      .add("inequality_margin", inequality_margin)
                      .add("verdict_a", cauchy)
                      .add("verdict_b", below_reference)
                      .add("verdict_c", equals_reference)
                      .line());
  for (std::size_t k = 0; k < per_k.size(); ++k) {
    Record r("convergence_step");
    r.add("k", k + 1).add("sup_to_reference", per_k[k]);
    if (k < successive.size()) r.add("sup_to_next", successive[k]);
    lines.push_back(r.line());
  }
  return lines;
}

ConvergenceReport limit_inequality_report(std::span<const DistanceMatrix> sequence,
                                          const DistanceMatrix& reference, double tol) {
  if (sequence.size() < 3) throw ConfigError("convergence report needs at least 3 iterates");
  if (!(tol > 0.0)) throw ConfigError("convergence tolerance must be positive");
  for (const DistanceMatrix& d : sequence) {
    if (!same_landmarks(d, reference)) throw DomainError("sequence uses different landmarks");
  }
  ConvergenceReport r;
  const std::size_t m = reference.size();
  r.pair_count = m * (m - 1) / 2;
  r.tol = tol;
  r.tol_abs = tol * reference.max_entry();
  for (std::size_t k = 0; k < sequence.size(); ++k) {
    r.per_k.push_back(uniform_metric_distance(sequence[k], reference));
    if (k + 1 < sequence.size()) r.successive.push_back(uniform_metric_distance(sequence[k], sequence[k + 1]));
  }
  const DistanceMatrix& last = sequence.back();
  r.inequality_margin = kInf;
  double sup_gap = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      r.inequality_margin = std::min(r.inequality_margin, reference(i, j) - last(i, j));
      sup_gap = std::max(sup_gap, entry_gap(reference(i, j), last(i, j)));
    }
  }
  if (r.pair_count == 0) r.inequality_margin = 0.0;
  bool steady = true;
  for (std::size_t k = 1; k < r.successive.size(); ++k) {
    if (r.successive[k] > 1.1 * r.successive[k - 1]) steady = false;
  }
  r.cauchy = steady && r.successive.back() <= r.tol_abs;
  r.below_reference = -r.inequality_margin <= r.tol_abs;
  r.equals_reference = sup_gap <= r.tol_abs;
  return r;
}

std::vector<std::string> EuclideanLimitReport::to_records() const {
  std::vector<std::string> lines;
  lines.push_back(Record("euclidean_limit")
                      .add("pairs", pairs.size())
                      .add("steps", sup_excess.size())
                      .add("w1p_decreasing", w1p_decreasing)
                      .add("pass", pass)
                      .line());
  for (std::size_t k = 0; k < sup_excess.size(); ++k) {
    lines.push_back(Record("euclidean_limit_step")
                        .add("k", k + 1)
                        .add("w1p_to_identity", w1p_to_identity[k])
                        .add("sup_excess", sup_excess[k])
                        .line());
  }
  return lines;
}

EuclideanLimitReport euclidean_limit_check(std::span<const MetricField> sequence,
                                           std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                           double tol, const StencilSpec& stencil, double p,
                                           int workers) {
  if (sequence.empty()) throw ConfigError("euclidean limit check needs a non-empty sequence");
  const Domain& domain = sequence.front().domain();
  std::vector<std::size_t> sources;
  for (const auto& [a, b] : pairs) sources.push_back(a);
  std::sort(sources.begin(), sources.end());
  sources.erase(std::unique(sources.begin(), sources.end()), sources.end());
  const auto source_slot = [&](std::size_t a) {
    return static_cast<std::size_t>(std::lower_bound(sources.begin(), sources.end(), a) - sources.begin());
  };
  const auto pair_distances = [&](const MetricField& g) {
    const LatticeGraph graph(g, stencil, workers);
    std::vector<std::vector<double>> rows(sources.size());
    parallel_for(sources.size(), workers, [&](std::size_t i) { rows[i] = sweep(graph, sources[i]).distance; });
    std::vector<double> out;
    for (const auto& [a, b] : pairs) out.push_back(rows[source_slot(a)][b]);
    return out;
  };

  const MetricField id = identity_metric(domain);
  const std::vector<double> base = pair_distances(id);
  EuclideanLimitReport report;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EuclideanPair pr;
    pr.a = pairs[i].first;
    pr.b = pairs[i].second;
    pr.euclidean = domain.distance(domain.coord(pr.a), domain.coord(pr.b));
    pr.allowance = std::abs(base[i] - pr.euclidean);
    report.pairs.push_back(pr);
  }
  for (const MetricField& g : sequence) {
    if (g.domain() != domain) throw DomainError("sequence metrics live on different domains");
    report.w1p_to_identity.push_back(metric_w1p_distance(g, id, p));
    const std::vector<double> d = pair_distances(g);
    double excess = -kInf;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      EuclideanPair& pr = report.pairs[i];
      pr.deviation.push_back(std::abs(d[i] - pr.euclidean));
      excess = std::max(excess, pr.deviation.back() - pr.allowance);
    }
    report.sup_excess.push_back(pairs.empty() ? 0.0 : excess);
  }
  report.w1p_decreasing = true;
  for (std::size_t k = 1; k < report.w1p_to_identity.size(); ++k) {
    if (report.w1p_to_identity[k] > 1.05 * report.w1p_to_identity[k - 1]) report.w1p_decreasing = false;
  }
  report.pass = true;
  for (EuclideanPair& pr : report.pairs) {
    pr.pass = pr.deviation.back() <= tol * pr.euclidean + pr.allowance;
    report.pass = report.pass && pr.pass;
  }
  return report;
}

std::vector<std::string> BadSetReport::to_records() const {
  std::vector<std::string> lines;
  lines.push_back(Record("bad_set")
                      .add("a", a)
                      .add("nodes", nodes.size())
                      .add("volume", volume)
                      .add("content_bound", content_bound)
                      .add("tau", tau)
                      .add("delta", delta)
                      .add("lower_bound", lower_bound)
                      .line());
  for (const CoverReport& c : covers) {
    for (const std::string& l : c.to_records()) lines.push_back(l);
  }
  return lines;
}

BadSetReport bad_set_diagnostic(const MetricField& metric, double a, const BadSetOptions& options) {
  if (!(a > 0.0)) throw ConfigError("bad-set threshold a must be positive");
  const Domain& domain = metric.domain();
  const int n = domain.dim();
  BadSetReport report;
  report.a = a;
  report.tau = options.tau;
  report.delta = options.delta;
  report.lower_bound = 0.25 * a * std::min(0.5 * options.tau, options.delta);
  for (std::size_t node = 0; node < domain.node_count(); ++node) {
    if (!metric.flagged(node) && metric.eig_min(node) < a) report.nodes.push_back(node);
  }
  report.volume = static_cast<double>(report.nodes.size()) * domain.cell_volume();
  const double p = options.p > 0.0 ? options.p : n - 0.5;
  const double threshold = 1.0 / (a * n * n);
  CoverOptions cover = options.cover;
  cover.enforce_hypothesis = false;
  for (int c = 0; c < metric.components_per_node(); ++c) {
    report.covers.push_back(superlevel_cover(metric.inverse_component(c), threshold, p, 1.0, cover));
    report.content_bound += report.covers.back().content_bound;
  }
  return report;
}

std::vector<std::string> GradientBoundReport::to_records() const {
  return {Record("gradient_bound")
              .add("checked", checked)
              .add("violations", violations)
              .add("max_ratio", max_ratio)
              .add("max_gradient", max_gradient)
              .add("min_gradient", min_gradient)
              .add("allowance", allowance)
              .add("sharp_max_ratio", sharp_max_ratio)
              .add("sharp_violations", sharp_violations)
              .line()};
}

GradientBoundReport gradient_bound_check(const ScalarField& distance, const MetricField& metric,
                                         std::size_t source, double allowance, double exclusion) {
  const Domain& domain = distance.domain();
  if (metric.domain() != domain) throw DomainError("distance field and metric live on different domains");
  const GradientField grad = gradient(distance);
  const int n = domain.dim();
  const Point src = domain.coord(source);
  GradientBoundReport report;
  report.allowance = allowance;
  report.min_gradient = kInf;
  for (std::size_t node = 0; node < domain.node_count(); ++node) {
    if (grad.flagged(node) || metric.flagged(node)) continue;
    if (domain.kind() == DomainKind::box) {
      const Index3 ijk = domain.index_to_ijk(node);
      bool face = false;
      for (int a = 0; a < n; ++a) face = face || ijk[a] == 0 || ijk[a] == domain.resolution(a) - 1;
      if (face) continue;
    }
    if (domain.distance(domain.coord(node), src) <= exclusion) continue;
    const SymMatrix inv = metric.inverse_at(node);
    double bound = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) bound += std::abs(inv(i, j));
    }
    const double g = grad.norm(node);
    const double ratio = g / bound;
    const double sharp = g / std::sqrt(eigen_extremes(metric.at(node)).second);
    ++report.checked;
    report.sharp_max_ratio = std::max(report.sharp_max_ratio, sharp);
    if (sharp > 1.05 + allowance) ++report.sharp_violations;
    report.max_ratio = std::max(report.max_ratio, ratio);
    report.max_gradient = std::max(report.max_gradient, g);
    report.min_gradient = std::min(report.min_gradient, g);
    if (ratio > 1.05 + allowance) {
      ++report.violations;
      report.violating_nodes.push_back(node);
    }
  }
  if (report.checked == 0) report.min_gradient = 0.0;
  return report;
}

}  // namespace roughmetric
