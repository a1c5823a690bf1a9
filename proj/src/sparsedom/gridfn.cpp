#include "sparsedom/gridfn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>

#include "sparsedom/errors.hpp"

namespace sparsedom {

namespace {

int levels_below(std::size_t cells, int dim) {
  int h = 0;
  while ((std::size_t{1} << (dim * h)) < cells) ++h;
  if ((std::size_t{1} << (dim * h)) != cells)
    throw PreconditionError("field length is not a power of 2^n");
  return h;
}

}  // namespace

GridFunction::GridFunction(const RootGeometry& g) : geometry(g), values(g.leaf_count(), 0.0) {
  g.validate();
}

GridFunction::GridFunction(const RootGeometry& g, std::vector<double> row_major)
    : geometry(g), values(std::move(row_major)) {
  g.validate();
  if (values.size() != g.leaf_count())
    throw InvalidArgument("expected " + std::to_string(g.leaf_count()) + " values, got " +
                          std::to_string(values.size()));
  for (double v : values)
    if (!std::isfinite(v)) throw InvalidArgument("grid values must be finite");
}

const std::vector<std::uint64_t>& morton_to_rowmajor(const RootGeometry& g) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::unique_ptr<std::vector<std::uint64_t>>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[{g.dim, g.depth}];
  if (!slot) {
    auto table = std::make_unique<std::vector<std::uint64_t>>(g.leaf_count());
    for (std::uint64_t z = 0; z < g.leaf_count(); ++z)
      (*table)[z] = rowmajor_index(g, morton_decode(z, g.dim, g.depth));
    slot = std::move(table);
  }
  return *slot;
}

Field GridFunction::morton() const {
  const auto& perm = morton_to_rowmajor(geometry);
  Field out(values.size());
  for (std::size_t z = 0; z < out.size(); ++z) out[z] = values[perm[z]];
  return out;
}

GridFunction GridFunction::from_morton(const RootGeometry& g, const Field& z_order) {
  const auto& perm = morton_to_rowmajor(g);
  if (z_order.size() != perm.size()) throw InvalidArgument("field length does not match geometry");
  std::vector<double> rm(z_order.size());
  for (std::size_t z = 0; z < z_order.size(); ++z) rm[perm[z]] = z_order[z];
  return GridFunction(g, std::move(rm));
}

Field GridFunction::on_cube(const DyadicCube& q) const {
  require_in_tree(geometry, q);
  const auto& perm = morton_to_rowmajor(geometry);
  const std::uint64_t b = morton_offset(geometry, q);
  Field out(geometry.cell_count(q));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = values[perm[b + i]];
  return out;
}

DiscreteMeasure::DiscreteMeasure(GridFunction m) : masses(std::move(m)) {
  for (double v : masses.values)
    if (v < 0.0) throw InvalidArgument("measure masses must be nonnegative");
}

double DiscreteMeasure::mass(const DyadicCube& q) const {
  double s = 0.0;
  for (double v : masses.on_cube(q)) s += v;
  return s;
}

Weight::Weight(GridFunction values) : w(std::move(values)) {
  for (double v : w.values)
    if (!(v > 0.0)) throw InvalidArgument("weight values must be strictly positive");
}

double Weight::integral(const DyadicCube& q) const {
  double s = 0.0;
  for (double v : w.on_cube(q)) s += v;
  return s * w.geometry.cell_measure();
}

std::span<const double> cube_span(const RootGeometry& g, const Field& root_field,
                                  const DyadicCube& q) {
  return std::span<const double>(root_field).subspan(morton_offset(g, q), g.cell_count(q));
}

std::pair<std::uint64_t, std::uint64_t> local_range(const RootGeometry& g, const DyadicCube& q,
                                                    const DyadicCube& sub) {
  if (!contains(q, sub, g.dim)) throw PreconditionError("subcube not contained in cube");
  return {morton_offset(g, sub) - morton_offset(g, q), g.cell_count(sub)};
}

double p_average(std::span<const double> v, double p) {
  if (!(p > 0.0)) throw InvalidArgument("p must be positive");
  if (v.empty()) return 0.0;
  double s = 0.0;
  if (p == 1.0) {
    for (double x : v) s += std::fabs(x);
    return s / static_cast<double>(v.size());
  }
  if (p == 2.0) {
    for (double x : v) s += x * x;
    return std::sqrt(s / static_cast<double>(v.size()));
  }
  for (double x : v) s += std::pow(std::fabs(x), p);
  return std::pow(s / static_cast<double>(v.size()), 1.0 / p);
}

double p_average(const GridFunction& f, const DyadicCube& q, double p) {
  return p_average(f.on_cube(q), p);
}

double Rearrangement::query(double t) const {
  if (t < 0.0 || std::isnan(t)) throw InvalidArgument("rearrangement queried at negative t");
  if (t >= total || breakpoints.empty()) return 0.0;
  auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t,
                             [](double x, const auto& b) { return x < b.first; });
  return std::prev(it)->second;
}

Rearrangement rearrangement(std::span<const double> v, double cell_measure) {
  std::vector<double> a(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) a[i] = std::fabs(v[i]);
  std::sort(a.begin(), a.end(), std::greater<>());
  Rearrangement r;
  r.total = static_cast<double>(a.size()) * cell_measure;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (i == 0 || a[i] != a[i - 1])
      r.breakpoints.emplace_back(static_cast<double>(i) * cell_measure, a[i]);
  return r;
}

Rearrangement rearrangement(const GridFunction& f) {
  return rearrangement(f.values, f.geometry.cell_measure());
}

double rearrangement_at(std::span<const double> v, double cell_measure, double t) {
  if (t < 0.0 || std::isnan(t)) throw InvalidArgument("rearrangement queried at negative t");
  const double pos = std::floor(t / cell_measure);
  if (pos >= static_cast<double>(v.size())) return 0.0;
  const auto k = static_cast<std::size_t>(pos);
  std::vector<double> a(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) a[i] = std::fabs(v[i]);
  std::nth_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(k), a.end(), std::greater<>());
  return a[k];
}

LocalOscillation local_oscillation(std::span<const double> v, double lambda) {
  if (!(lambda > 0.0 && lambda < 0.5)) throw InvalidArgument("lambda must lie in (0, 1/2)");
  if (v.empty()) return {};
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  // A center c works for radius r iff at most floor(lambda n) cells satisfy
  // |f - c| > r, i.e. some window of K sorted values fits in [c - r, c + r].
  const std::size_t excluded = static_cast<std::size_t>(std::floor(lambda * static_cast<double>(n)));
  const std::size_t k = n - excluded;
  LocalOscillation best{std::numeric_limits<double>::infinity(), 0.0};
  for (std::size_t i = 0; i + k <= n; ++i) {
    const double half = 0.5 * (s[i + k - 1] - s[i]);
    if (half < best.omega) best = {half, 0.5 * (s[i + k - 1] + s[i])};
  }
  return best;
}

LocalOscillation local_oscillation(const GridFunction& f, const DyadicCube& q, double lambda) {
  return local_oscillation(f.on_cube(q), lambda);
}

double oscillation(std::span<const double> v, OscillationMode mode) {
  if (v.empty()) return 0.0;
  if (mode.sup) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
  }
  if (!(mode.q > 0.0)) throw InvalidArgument("q must be positive");
  const double n = static_cast<double>(v.size());
  if (mode.q == 2.0) {
    double s = 0.0, s2 = 0.0;
    for (double x : v) {
      s += x;
      s2 += x * x;
    }
    const double mean = s / n;
    return std::sqrt(std::max(0.0, 2.0 * (s2 / n - mean * mean)));
  }
  if (mode.q == 1.0) {
    std::vector<double> s(v.begin(), v.end());
    std::sort(s.begin(), s.end());
    double total = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
      total += s[i] * (2.0 * static_cast<double>(i) - n + 1.0);
    return 2.0 * total / (n * n);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i + 1; j < v.size(); ++j) total += std::pow(std::fabs(v[i] - v[j]), mode.q);
  return std::pow(2.0 * total / (n * n), 1.0 / mode.q);
}

double oscillation(const GridFunction& f, const DyadicCube& q, OscillationMode mode) {
  return oscillation(f.on_cube(q), mode);
}

std::vector<std::vector<double>> subcube_means(std::span<const double> v, int dim) {
  const int h = levels_below(v.size(), dim);
  std::vector<std::vector<double>> means(static_cast<std::size_t>(h) + 1);
  means[h].assign(v.begin(), v.end());
  const std::size_t fan = std::size_t{1} << dim;
  for (int j = h - 1; j >= 0; --j) {
    const auto& below = means[j + 1];
    auto& cur = means[j];
    cur.assign(below.size() / fan, 0.0);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < fan; ++c) s += below[i * fan + c];
      cur[i] = s / static_cast<double>(fan);
    }
  }
  return means;
}

Field dyadic_maximal(std::span<const double> v, int dim) {
  std::vector<double> a(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) a[i] = std::fabs(v[i]);
  auto means = subcube_means(a, dim);
  for (std::size_t j = 1; j < means.size(); ++j)
    for (std::size_t i = 0; i < means[j].size(); ++i)
      means[j][i] = std::max(means[j][i], means[j - 1][i >> dim]);
  return means.back();
}

Field dyadic_maximal(const GridFunction& f, const DyadicCube& q) {
  return dyadic_maximal(f.on_cube(q), f.geometry.dim);
}

}  // namespace sparsedom
