#include "sparsedom/dyadic_sums.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sparsedom/errors.hpp"

namespace sparsedom {

namespace {

constexpr double kRelTol = 1e-9;

double ratio_of(double num, double den) {
  if (num == 0.0) return 0.0;
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  return num / den;
}

std::uint64_t z_code(const DyadicCube& q, int dim) { return morton_encode(q.index, dim, q.generation); }

}  // namespace

CubeCoefficients::CubeCoefficients(const RootGeometry& g) : geometry_(g) { g.validate(); }

double CubeCoefficients::get(const DyadicCube& r) const {
  auto it = values_.find(r);
  return it == values_.end() ? 0.0 : it->second;
}

void CubeCoefficients::set(const DyadicCube& r, double value) {
  require_in_tree(geometry_, r);
  if (!(value >= 0.0) || !std::isfinite(value))
    throw InvalidArgument("coefficients must be finite and nonnegative");
  if (value == 0.0)
    values_.erase(r);
  else
    values_[r] = value;
}

std::vector<std::vector<double>> CubeCoefficients::dense() const {
  std::vector<std::vector<double>> levels(static_cast<std::size_t>(geometry_.depth) + 1);
  for (int k = 0; k <= geometry_.depth; ++k) levels[k].assign(std::size_t{1} << (geometry_.dim * k), 0.0);
  for (const auto& [cube, v] : values_) levels[cube.generation][z_code(cube, geometry_.dim)] = v;
  return levels;
}

CubeCoefficients CubeCoefficients::pow(double exponent) const {
  CubeCoefficients out(geometry_);
  for (const auto& [cube, v] : values_) out.values_[cube] = std::pow(v, exponent);
  return out;
}

CubeCoefficients CubeCoefficients::scaled(double c) const {
  if (!(c > 0.0)) throw InvalidArgument("scale must be positive");
  CubeCoefficients out(geometry_);
  for (const auto& [cube, v] : values_) out.values_[cube] = c * v;
  return out;
}

double smallness_constant(const CubeCoefficients& alpha, double delta, std::optional<DyadicCube> q) {
  if (!(delta > 0.0 && delta <= 1.0)) throw InvalidArgument("delta must lie in (0, 1]");
  const RootGeometry& g = alpha.geometry();
  const DyadicCube root = q.value_or(g.root());
  require_in_tree(g, root);
  const auto levels = alpha.dense();
  const double cell = g.cell_measure();
  const std::size_t fan = std::size_t{1} << g.dim;
  // sub[z] for the current generation: sum over the subtree of alpha^delta |R|.
  std::vector<double> below;
  double worst = 0.0;
  for (int k = g.depth; k >= root.generation; --k) {
    const int rel = k - root.generation;
    const std::uint64_t count = std::uint64_t{1} << (g.dim * rel);
    const std::uint64_t first = z_code(root, g.dim) << (g.dim * rel);
    const double measure = static_cast<double>(g.cell_count(k)) * cell;
    std::vector<double> cur(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      const double a = levels[k][first + i];
      const double own = a > 0.0 ? std::pow(a, delta) * measure : 0.0;
      double s = own;
      if (!below.empty())
        for (std::size_t c = 0; c < fan; ++c) s += below[i * fan + c];
      cur[i] = s;
      worst = std::max(worst, ratio_of(s, own));
    }
    below.swap(cur);
  }
  return worst;
}

DyadicSumsFamily::DyadicSumsFamily(const CubeCoefficients& alpha)
    : CubeFamily(alpha.geometry(), 1.0, 1.0), levels_(alpha.dense()) {}

Field DyadicSumsFamily::compute_f(const DyadicCube& q) const {
  const RootGeometry& g = geometry();
  const int h = g.depth - q.generation;
  Field out(g.cell_count(q), 0.0);
  const std::uint64_t zq = z_code(q, g.dim);
  for (int j = 0; j <= h; ++j) {
    const int shift = g.dim * (h - j);
    const auto& level = levels_[q.generation + j];
    const std::uint64_t first = zq << (g.dim * j);
    for (std::uint64_t x = 0; x < out.size(); ++x) out[x] += level[first + (x >> shift)];
  }
  return out;
}

Field DyadicSumsFamily::compute_diff(const DyadicCube& p, const DyadicCube& q) const {
  const RootGeometry& g = geometry();
  double s = 0.0;
  for (int k = q.generation; k < p.generation; ++k)
    s += levels_[k][z_code(ancestor(p, k, g.dim), g.dim)];
  return Field(g.cell_count(p), s);
}

SumSparseReport sum_sparse(const CubeCoefficients& alpha, double delta, double eta,
                           std::optional<DyadicCube> q) {
  const RootGeometry& g = alpha.geometry();
  const DyadicCube root = q.value_or(g.root());
  SumSparseReport rep;
  rep.delta = delta;
  rep.smallness = smallness_constant(alpha, delta, root);
  if (!std::isfinite(rep.smallness))
    throw PreconditionError("smallness constant is infinite for these coefficients");
  DyadicSumsFamily fam(alpha);
  SparseParams params;
  params.eta = eta;
  rep.engine = build_sparse_pointwise(fam, root, params);
  rep.failures = rep.engine.failures;

  const double C = std::max(rep.smallness, 1.0);
  const double cheb = std::ldexp(1.0, g.dim + 2) / (1.0 - eta);
  rep.reference_bound = 6.0 * std::pow(cheb * C, 1.0 / delta);
  rep.chebyshev_factor = std::pow(std::ldexp(1.0, g.dim + 3) * rep.smallness / (1.0 - eta), 1.0 / delta);

  const auto& gens = rep.engine.construction.family.base.generations;
  std::vector<std::vector<double>> alpha_p;
  for (std::size_t k = 0; k < gens.size(); ++k) {
    alpha_p.emplace_back();
    for (std::size_t i = 0; i < gens[k].size(); ++i) {
      const DyadicCube& p = gens[k][i];
      const double a_p = alpha.get(p);
      alpha_p.back().push_back(a_p);
      // Chebyshev at t_P followed by the smallness condition.
      const double gamma = rep.engine.construction.stats[k][i].coefficient();
      const double cheb_bound = std::pow(cheb * std::pow(p_average(fam.f(p), delta), delta), 1.0 / delta);
      if (gamma > cheb_bound * (1.0 + kRelTol))
        rep.failures.push_back("gamma_P exceeds the Chebyshev bound at " + to_address(p, g.dim));
      if (gamma > std::pow(cheb * rep.smallness, 1.0 / delta) * a_p * (1.0 + kRelTol))
        rep.failures.push_back("gamma_P exceeds (2^{n+2} C/(1-eta))^{1/delta} alpha_P at " +
                               to_address(p, g.dim));
    }
  }
  const Field rhs = weighted_overlap(g, rep.engine.construction.family, alpha_p);
  const Field& lhs = fam.f(root);
  for (std::size_t x = 0; x < lhs.size(); ++x)
    rep.constant = std::max(rep.constant, ratio_of(lhs[x], rhs[x]));
  if (!(rep.constant <= rep.reference_bound * (1.0 + kRelTol)))
    rep.failures.push_back("dyadic sum constant exceeds 6 (2^{n+2} C/(1-eta))^{1/delta}");
  rep.passed = rep.failures.empty();
  return rep;
}

SAndM s_and_m(const CubeCoefficients& alpha, double q) {
  if (!(q > 0.0)) throw InvalidArgument("q must be positive");
  const RootGeometry& g = alpha.geometry();
  const auto levels = alpha.dense();
  Field s(g.leaf_count(), 0.0), m(g.leaf_count(), 0.0);
  for (std::uint64_t x = 0; x < g.leaf_count(); ++x) {
    double sum = 0.0, mx = 0.0;
    for (int k = 0; k <= g.depth; ++k) {
      const double a = levels[k][x >> (g.dim * (g.depth - k))];
      if (a > 0.0) sum += std::pow(a, q);
      mx = std::max(mx, a);
    }
    s[x] = std::pow(sum, 1.0 / q);
    m[x] = mx;
  }
  return {GridFunction::from_morton(g, s), GridFunction::from_morton(g, m)};
}

Potential potential(const DiscreteMeasure& mu, double q, double gamma) {
  const RootGeometry& g = mu.masses.geometry;
  if (!(gamma > 0.0 && gamma < g.dim)) throw InvalidArgument("gamma must lie in (0, n)");
  if (!(q > 0.0)) throw InvalidArgument("q must be positive");
  const auto sums = subcube_means(mu.masses.morton(), g.dim);
  CubeCoefficients alpha(g);
  for (int k = 0; k <= g.depth; ++k) {
    const double cells = static_cast<double>(g.cell_count(k));
    const double measure = cells * g.cell_measure();
    for (std::uint64_t z = 0; z < sums[k].size(); ++z) {
      const double mass = sums[k][z] * cells;
      if (mass > 0.0)
        alpha.set(DyadicCube{k, morton_decode(z, g.dim, k)}, mass / std::pow(measure, 1.0 - gamma / g.dim));
    }
  }
  auto sm = s_and_m(alpha, q);
  return {std::move(sm.s), std::move(sm.m), std::move(alpha)};
}

GoodLambdaCurve good_lambda_sums(const CubeCoefficients& alpha, double q, double delta,
                                 const std::vector<double>& lambdas,
                                 const std::vector<double>& eps_grid) {
  if (!(q > 0.0)) throw InvalidArgument("q must be positive");
  if (!(delta > 0.0 && delta <= q)) throw InvalidArgument("delta must lie in (0, q]");
  const RootGeometry& g = alpha.geometry();
  const CubeCoefficients alpha_q = alpha.pow(q);
  const auto levels_q = alpha_q.dense();
  const auto sm = s_and_m(alpha, q);
  const Field s = sm.s.morton();
  const Field m = sm.m.morton();
  const double cell = g.cell_measure();
  const double c_q = std::pow(2.0, q) - 1.0;
  const DyadicSumsFamily local_sums(alpha_q);
  GoodLambdaCurve curve;
  std::map<DyadicCube, SumSparseReport> runs;

  for (double lambda : lambdas) {
    if (!(lambda > 0.0)) throw InvalidArgument("lambda must be positive");
    const double lq = std::pow(lambda, q);
    // Maximal cubes where the top-down chain sum of alpha^q first exceeds lambda^q.
    std::vector<DyadicCube> tops;
    struct Item {
      DyadicCube cube;
      double above;
    };
    std::vector<Item> stack{{g.root(), 0.0}};
    while (!stack.empty()) {
      const Item it = stack.back();
      stack.pop_back();
      const double partial = it.above + levels_q[it.cube.generation][z_code(it.cube, g.dim)];
      if (partial > lq) {
        tops.push_back(it.cube);
        continue;
      }
      if (it.cube.generation == g.depth) continue;
      auto kids = children(g, it.cube);
      for (auto k = kids.rbegin(); k != kids.rend(); ++k) stack.push_back({*k, partial});
    }
    double super = 0.0;
    for (const auto& t : tops) super += g.measure(t);
    // Compare chain sums against lambda^q, exactly as the traversal does; s > lambda
    // can disagree through rounding in the q-th root when lambda is a value of s.
    std::uint64_t super_cells = 0;
    for (std::uint64_t x = 0; x < s.size(); ++x) {
      double sum = 0.0;
      for (int k = 0; k <= g.depth; ++k) sum += levels_q[k][x >> (g.dim * (g.depth - k))];
      super_cells += sum > lq ? 1 : 0;
    }
    if (std::fabs(super - static_cast<double>(super_cells) * cell) > 1e-12 * std::max(super, 1e-300))
      curve.failures.push_back("maximal cubes do not tile the superlevel set at lambda " +
                               std::to_string(lambda));

    for (const auto& t : tops) {
      if (runs.count(t)) continue;
      const auto& run = runs.emplace(t, sum_sparse(alpha_q, delta / q, 0.5, t)).first->second;
      curve.failures.insert(curve.failures.end(), run.failures.begin(), run.failures.end());
    }

    for (double eps : eps_grid) {
      if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("epsilon must lie in (0, 1)");
      GoodLambdaRow row;
      row.lambda = lambda;
      row.gamma_or_eps = eps;
      row.superlevel_measure = super;
      double overlap_min = std::numeric_limits<double>::infinity();
      double cert_min = std::numeric_limits<double>::infinity();
      std::uint64_t bad = 0;
      for (const auto& t : tops) {
        const auto& run = runs.at(t);
        const std::uint64_t b = morton_offset(g, t);
        const std::uint64_t len = g.cell_count(t);
        const auto& ov = run.engine.overlap.overlap;
        const Field& local_sum = local_sums.f(t);
        for (std::uint64_t x = 0; x < len; ++x) {
          if (!(s[b + x] > 2.0 * lambda && m[b + x] <= eps * lambda)) continue;
          ++bad;
          if (!(local_sum[x] > c_q * lq * (1.0 - kRelTol)))
            curve.failures.push_back("bad-set chain sum below (2^q-1) lambda^q");
          const double o = ov[x];
          overlap_min = std::min(overlap_min, o);
          cert_min = std::min(cert_min, o * std::pow(eps, q) * run.constant);
        }
      }
      row.bad_measure = static_cast<double>(bad) * cell;
      row.ratio = super > 0.0 ? row.bad_measure / super : 0.0;
      row.overlap_min = bad ? overlap_min : std::numeric_limits<double>::quiet_NaN();
      if (bad && !(cert_min >= c_q * (1.0 - kRelTol)))
        curve.failures.push_back("overlap certificate fails at lambda " + std::to_string(lambda) +
                                 ", eps " + std::to_string(eps));
      curve.rows.push_back(row);
      curve.certificate_min.push_back(bad ? cert_min : std::numeric_limits<double>::quiet_NaN());
    }
  }
  curve.passed = curve.failures.empty();
  return curve;
}

}  // namespace sparsedom
