#include "sparsedom/family.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

#include "sparsedom/errors.hpp"
#include "sparsedom/random.hpp"

namespace sparsedom {

namespace {

double ratio_of(double num, double den) {
  if (num == 0.0) return 0.0;
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  return num / den;
}

}  // namespace

CubeFamily::CubeFamily(const RootGeometry& g, double r, double declared_cr)
    : geometry_(g), r_(r), cr_(declared_cr) {
  g.validate();
  if (!(r > 0.0) || !std::isfinite(r)) throw InvalidArgument("r must be positive");
  if (!(declared_cr >= 1.0) || !std::isfinite(declared_cr))
    throw InvalidArgument("declared l^r constant must be finite and at least 1");
}

const Field& CubeFamily::f(const DyadicCube& q) const {
  {
    std::shared_lock lock(mutex_);
    if (auto it = cache_.find(q); it != cache_.end()) return *it->second;
  }
  require_in_tree(geometry_, q);
  auto value = std::make_unique<const Field>(compute_f(q));
  if (value->size() != geometry_.cell_count(q))
    throw PreconditionError("family returned a field of the wrong size");
  for (double v : *value)
    if (!std::isfinite(v)) throw PreconditionError("family returned a non-finite value");
  std::unique_lock lock(mutex_);
  auto [it, inserted] = cache_.try_emplace(q, std::move(value));
  return *it->second;
}

Field CubeFamily::diff(const DyadicCube& p, const DyadicCube& q) const {
  if (!contains(q, p, geometry_.dim)) throw PreconditionError("diff(P, Q) needs P inside Q");
  if (p == q) return Field(geometry_.cell_count(p), 0.0);
  Field out = compute_diff(p, q);
  if (out.size() != geometry_.cell_count(p))
    throw PreconditionError("family returned a field of the wrong size");
  for (double v : out)
    if (!std::isfinite(v)) throw PreconditionError("family returned a non-finite value");
  return out;
}

Field CubeFamily::restrict(const Field& outer_field, const DyadicCube& outer,
                           const DyadicCube& inner) const {
  const auto [off, len] = local_range(geometry_, outer, inner);
  return Field(outer_field.begin() + static_cast<std::ptrdiff_t>(off),
               outer_field.begin() + static_cast<std::ptrdiff_t>(off + len));
}

CanonicalFamily::CanonicalFamily(const RootGeometry& g, Map f_map, double r)
    : CubeFamily(g, r, r <= 1.0 ? 1.0 : std::pow(g.depth + 1.0, 1.0 - 1.0 / r)),
      map_(std::move(f_map)) {}

Field CanonicalFamily::compute_f(const DyadicCube& q) const { return map_(q); }

Field CanonicalFamily::compute_diff(const DyadicCube& p, const DyadicCube& q) const {
  Field out = restrict(f(q), q, p);
  const Field& fp = f(p);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= fp[i];
  return out;
}

Operator identity_operator() {
  return [](const Field& v) { return v; };
}

Operator dyadic_average_operator(const RootGeometry& g, int level) {
  if (level < 0 || level > g.depth) throw InvalidArgument("averaging level out of range");
  const std::size_t block = g.cell_count(level);
  return [block](const Field& v) {
    Field out(v.size());
    for (std::size_t b = 0; b < v.size(); b += block) {
      double s = 0.0;
      for (std::size_t i = b; i < b + block; ++i) s += v[i];
      std::fill(out.begin() + static_cast<std::ptrdiff_t>(b),
                out.begin() + static_cast<std::ptrdiff_t>(b + block), s / static_cast<double>(block));
    }
    return out;
  };
}

Operator box_convolution_operator(const RootGeometry& g, int radius) {
  if (radius < 0) throw InvalidArgument("box radius must be nonnegative");
  return [g, radius](const Field& v) {
    const auto& perm = morton_to_rowmajor(g);
    const std::int64_t side = g.axis_cells();
    std::vector<double> rm(v.size());
    for (std::size_t z = 0; z < v.size(); ++z) rm[perm[z]] = v[z];
    // Separable running sums, one axis at a time.
    std::int64_t stride = 1;
    for (int d = g.dim - 1; d >= 0; --d) {
      std::vector<double> next(rm.size(), 0.0);
      for (std::size_t flat = 0; flat < rm.size(); ++flat) {
        const std::int64_t coord = (static_cast<std::int64_t>(flat) / stride) % side;
        double s = 0.0;
        for (std::int64_t o = -radius; o <= radius; ++o) {
          const std::int64_t c = coord + o;
          if (c >= 0 && c < side) s += rm[static_cast<std::size_t>(static_cast<std::int64_t>(flat) + o * stride)];
        }
        next[flat] = s / (2.0 * radius + 1.0);
      }
      rm.swap(next);
      stride *= side;
    }
    Field out(v.size());
    for (std::size_t z = 0; z < v.size(); ++z) out[z] = rm[perm[z]];
    return out;
  };
}

Operator maximal_operator(const RootGeometry& g) {
  return [dim = g.dim](const Field& v) { return dyadic_maximal(v, dim); };
}

std::vector<std::uint64_t> dilate_cells(const RootGeometry& g, const DyadicCube& q, double alpha) {
  if (!(alpha >= 1.0)) throw InvalidArgument("alpha must be at least 1");
  // In cell units Q spans [lo, lo + s) per axis; a cell is inside the dilate
  // when its center is strictly within alpha s / 2 of Q's center.
  const std::int64_t s = std::int64_t{1} << (g.depth - q.generation);
  const double half = alpha * static_cast<double>(s) / 2.0;
  std::array<std::int64_t, kMaxDim> lo{}, hi{};
  for (int d = 0; d < g.dim; ++d) {
    const double center = (static_cast<double>(q.index[d]) + 0.5) * static_cast<double>(s);
    lo[d] = static_cast<std::int64_t>(g.axis_cells());
    hi[d] = -1;
    for (std::int64_t c = 0; c < static_cast<std::int64_t>(g.axis_cells()); ++c)
      if (std::fabs(static_cast<double>(c) + 0.5 - center) < half) {
        lo[d] = std::min(lo[d], c);
        hi[d] = std::max(hi[d], c);
      }
  }
  std::vector<std::uint64_t> out;
  CellIndex c{};
  std::function<void(int)> rec = [&](int d) {
    if (d == g.dim) {
      out.push_back(morton_encode(c, g.dim, g.depth));
      return;
    }
    for (std::int64_t i = lo[d]; i <= hi[d]; ++i) {
      c[d] = static_cast<std::uint32_t>(i);
      rec(d + 1);
    }
  };
  rec(0);
  std::sort(out.begin(), out.end());
  return out;
}

OperatorLocalizationFamily::OperatorLocalizationFamily(const GridFunction& f, Operator t,
                                                       double alpha, double r)
    : CubeFamily(f.geometry, r,
                 r <= 1.0 ? 1.0 : std::pow(f.geometry.depth + 1.0, 1.0 - 1.0 / r)),
      f_morton_(f.morton()),
      t_(std::move(t)),
      alpha_(alpha) {
  if (!(alpha >= 1.0)) throw InvalidArgument("alpha must be at least 1");
}

const Field& OperatorLocalizationFamily::localized(const DyadicCube& q) const {
  {
    std::shared_lock lock(mutex_);
    if (auto it = localized_.find(q); it != localized_.end()) return *it->second;
  }
  Field masked(f_morton_.size(), 0.0);
  for (std::uint64_t z : dilate_cells(geometry(), q, alpha_)) masked[z] = f_morton_[z];
  const Field image = t_(masked);
  if (image.size() != masked.size()) throw PreconditionError("operator changed the grid size");
  auto span = cube_span(geometry(), image, q);
  auto value = std::make_unique<const Field>(span.begin(), span.end());
  std::unique_lock lock(mutex_);
  auto [it, inserted] = localized_.try_emplace(q, std::move(value));
  return *it->second;
}

Field OperatorLocalizationFamily::compute_f(const DyadicCube& q) const {
  Field out = localized(q);
  for (double& v : out) v = std::fabs(v);
  return out;
}

Field OperatorLocalizationFamily::compute_diff(const DyadicCube& p, const DyadicCube& q) const {
  Field out = restrict(localized(q), q, p);
  const Field& tp = localized(p);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(out[i] - tp[i]);
  return out;
}

Field OperatorLocalizationFamily::operator_sharp(const DyadicCube& q) const {
  const RootGeometry& g = geometry();
  const int h = g.depth - q.generation;
  std::vector<std::vector<double>> per_level(static_cast<std::size_t>(h) + 1);
  for (int j = 0; j <= h; ++j) {
    per_level[j].resize(std::size_t{1} << (g.dim * j));
    for (std::size_t i = 0; i < per_level[j].size(); ++i) {
      const DyadicCube p = descendant(g, q, j, i);
      Field d = restrict(localized(q), q, p);
      const Field& tp = localized(p);
      for (std::size_t c = 0; c < d.size(); ++c) d[c] -= tp[c];
      per_level[j][i] = oscillation(d, OscillationMode::supremum());
    }
  }
  return chain_max(per_level, g.dim);
}

BandFamily::BandFamily(const RootGeometry& g, std::vector<std::vector<double>> energy, double r,
                       std::string kind)
    : CubeFamily(g, r, 1.0), energy_(std::move(energy)), kind_(std::move(kind)) {
  if (energy_.size() != g.leaf_count()) throw InvalidArgument("band energy has wrong cell count");
  for (const auto& row : energy_) {
    if (row.size() != static_cast<std::size_t>(g.depth))
      throw InvalidArgument("band energy needs one entry per band");
    for (double e : row)
      if (!(e >= 0.0) || !std::isfinite(e)) throw InvalidArgument("band energies must be nonnegative");
  }
}

Field BandFamily::compute_f(const DyadicCube& q) const {
  const RootGeometry& g = geometry();
  const std::uint64_t b = morton_offset(g, q);
  Field out(g.cell_count(q));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& row = energy_[b + i];
    double s = 0.0;
    for (int j = q.generation + 1; j <= g.depth; ++j) s += row[j - 1];
    out[i] = std::pow(s, 1.0 / r());
  }
  return out;
}

Field BandFamily::compute_diff(const DyadicCube& p, const DyadicCube& q) const {
  const RootGeometry& g = geometry();
  const std::uint64_t b = morton_offset(g, p);
  Field out(g.cell_count(p));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& row = energy_[b + i];
    double s = 0.0;
    for (int j = q.generation + 1; j <= p.generation; ++j) s += row[j - 1];
    out[i] = std::pow(s, 1.0 / r());
  }
  return out;
}

LocalMeanOscillationFamily::LocalMeanOscillationFamily(const GridFunction& f, double lambda)
    : CubeFamily(f.geometry, 1.0, 1.0), f_morton_(f.morton()), lambda_(lambda) {
  if (!(lambda > 0.0 && lambda < 0.5)) throw InvalidArgument("lambda must lie in (0, 1/2)");
}

double LocalMeanOscillationFamily::center(const DyadicCube& q) const {
  return local_oscillation(cube_span(geometry(), f_morton_, q), lambda_).center;
}

Field LocalMeanOscillationFamily::compute_f(const DyadicCube& q) const {
  const double c = center(q);
  auto span = cube_span(geometry(), f_morton_, q);
  Field out(span.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(span[i] - c);
  return out;
}

Field LocalMeanOscillationFamily::compute_diff(const DyadicCube& p, const DyadicCube& q) const {
  return Field(geometry().cell_count(p), std::fabs(center(p) - center(q)));
}

Field chain_max(const std::vector<std::vector<double>>& per_level, int dim) {
  std::vector<double> cur = per_level.front();
  for (std::size_t j = 1; j < per_level.size(); ++j) {
    std::vector<double> next(per_level[j].size());
    for (std::size_t i = 0; i < next.size(); ++i) next[i] = std::max(per_level[j][i], cur[i >> dim]);
    cur.swap(next);
  }
  return cur;
}

Field sharp_maximal(const CubeFamily& fam, const DyadicCube& q, OscillationMode mode) {
  const RootGeometry& g = fam.geometry();
  const int h = g.depth - q.generation;
  std::vector<std::vector<double>> per_level(static_cast<std::size_t>(h) + 1);
  per_level[0] = {0.0};
  for (int j = 1; j <= h; ++j) {
    per_level[j].resize(std::size_t{1} << (g.dim * j));
    for (std::size_t i = 0; i < per_level[j].size(); ++i)
      per_level[j][i] = oscillation(fam.diff(descendant(g, q, j, i), q), mode);
  }
  return chain_max(per_level, g.dim);
}

namespace {

// |f_{P_1}(x)| / (sum |f_{P_{k+1},P_k}(x)|^r + |f_{P_m}(x)|^r)^{1/r}, where the
// chain levels index `f_at` (value of f(C_j) at x) and `d_at(a, b)` (value of
// diff(C_b, C_a) at x, a < b).
template <class DiffAt>
double chain_ratio(const std::vector<int>& levels, const std::vector<double>& f_at, DiffAt&& d_at,
                   double r) {
  const double num = std::fabs(f_at[levels.front()]);
  double den = std::pow(std::fabs(f_at[levels.back()]), r);
  for (std::size_t k = 0; k + 1 < levels.size(); ++k)
    den += std::pow(std::fabs(d_at(levels[k], levels[k + 1])), r);
  return ratio_of(num, std::pow(den, 1.0 / r));
}

}  // namespace

EllrResult check_ellr(const CubeFamily& fam, const DyadicCube& q, double r, bool exhaustive,
                      std::uint64_t samples, std::uint64_t seed) {
  const RootGeometry& g = fam.geometry();
  require_in_tree(g, q);
  if (!(r > 0.0)) throw InvalidArgument("r must be positive");
  const int h = g.depth - q.generation;
  if (exhaustive && (g.dim != 1 || h > 6))
    throw PreconditionError("exhaustive chain enumeration needs n = 1 and depth <= 6");
  EllrResult res;
  res.exhaustive = exhaustive;
  const std::uint64_t leaves = g.cell_count(q);

  std::map<std::pair<DyadicCube, DyadicCube>, Field> diff_cache;
  auto diff_field = [&](const DyadicCube& p, const DyadicCube& outer) -> const Field& {
    auto key = std::make_pair(outer, p);
    auto it = diff_cache.find(key);
    if (it == diff_cache.end()) it = diff_cache.emplace(key, fam.diff(p, outer)).first;
    return it->second;
  };

  auto evaluate = [&](std::uint64_t leaf, const std::vector<int>& levels) {
    std::vector<DyadicCube> chain(static_cast<std::size_t>(h) + 1);
    std::vector<double> f_at(chain.size(), 0.0);
    for (int j = 0; j <= h; ++j) {
      chain[j] = descendant(g, q, j, leaf >> (g.dim * (h - j)));
    }
    auto local = [&](int j) { return leaf - ((leaf >> (g.dim * (h - j))) << (g.dim * (h - j))); };
    for (int j : levels) f_at[j] = fam.f(chain[j])[local(j)];
    auto d_at = [&](int a, int b) { return diff_field(chain[b], chain[a])[local(b)]; };
    const double ratio = chain_ratio(levels, f_at, d_at, r);
    ++res.chains;
    if (ratio > res.constant) {
      res.constant = ratio;
      res.witness_leaf = morton_offset(g, q) + leaf;
      res.witness_chain.clear();
      for (int j : levels) res.witness_chain.push_back(chain[j]);
    }
  };

  if (exhaustive) {
    std::vector<int> levels;
    for (std::uint64_t leaf = 0; leaf < leaves; ++leaf) {
      for (std::uint32_t mask = 1; mask < (1u << (h + 1)); ++mask) {
        levels.clear();
        for (int j = 0; j <= h; ++j)
          if (mask & (1u << j)) levels.push_back(j);
        evaluate(leaf, levels);
      }
    }
    return res;
  }
  SplitMix64 rng(seed);
  std::vector<int> levels;
  for (std::uint64_t s = 0; s < samples; ++s) {
    const std::uint64_t leaf = rng.below(leaves);
    levels.clear();
    while (levels.empty())
      for (int j = 0; j <= h; ++j)
        if (rng.next() & 1u) levels.push_back(j);
    evaluate(leaf, levels);
    if (diff_cache.size() > 4096) diff_cache.clear();
  }
  return res;
}

MajorizationResult check_majorization(const CubeFamily& fam, const DyadicCube& q,
                                      std::uint64_t max_pairs, std::uint64_t seed) {
  const RootGeometry& g = fam.geometry();
  require_in_tree(g, q);
  const int h = g.depth - q.generation;
  MajorizationResult res;
  auto test_pair = [&](const DyadicCube& outer, const DyadicCube& p) {
    const Field d = fam.diff(p, outer);
    const Field& fp = fam.f(p);
    const auto [off, len] = local_range(g, outer, p);
    const Field& fo = fam.f(outer);
    for (std::size_t i = 0; i < len; ++i) {
      const double ratio = ratio_of(std::fabs(d[i]), std::fabs(fp[i]) + std::fabs(fo[off + i]));
      res.worst_ratio = std::max(res.worst_ratio, ratio);
    }
    ++res.pairs;
  };
  // Number of (outer, inner) pairs: sum over levels a <= b of 2^{n b}.
  double total = 0.0;
  for (int a = 0; a <= h; ++a)
    for (int b = a; b <= h; ++b) total += std::ldexp(1.0, g.dim * b);
  if (total <= static_cast<double>(max_pairs)) {
    for (int a = 0; a <= h; ++a)
      for (std::uint64_t i = 0; i < (std::uint64_t{1} << (g.dim * a)); ++i) {
        const DyadicCube outer = descendant(g, q, a, i);
        for (int b = 0; b <= h - a; ++b)
          for (std::uint64_t k = 0; k < (std::uint64_t{1} << (g.dim * b)); ++k)
            test_pair(outer, descendant(g, outer, b, k));
      }
  } else {
    SplitMix64 rng(seed);
    for (std::uint64_t s = 0; s < max_pairs; ++s) {
      const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(h) + 1));
      const int b = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - a) + 1));
      const DyadicCube outer = descendant(g, q, a, rng.below(std::uint64_t{1} << (g.dim * a)));
      test_pair(outer, descendant(g, outer, b, rng.below(std::uint64_t{1} << (g.dim * b))));
    }
  }
  res.ok = res.worst_ratio <= 1.0 + 1e-12;
  return res;
}

}  // namespace sparsedom
