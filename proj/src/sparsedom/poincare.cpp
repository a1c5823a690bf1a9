#include "sparsedom/poincare.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sparsedom/errors.hpp"
#include "sparsedom/random.hpp"

namespace sparsedom {

namespace {

constexpr double kRelTol = 1e-9;

double ratio_of(double num, double den) {
  if (num == 0.0) return 0.0;
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  return num / den;
}

double mean_dot(const Field& a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s / static_cast<double>(a.size());
}

// Average of u^a over [u0, u1].
double monomial_average(int a, double u0, double u1) {
  return (std::pow(u1, a + 1) - std::pow(u0, a + 1)) / ((a + 1) * (u1 - u0));
}

std::uint64_t z_code(const DyadicCube& q, int dim) { return morton_encode(q.index, dim, q.generation); }

}  // namespace

std::vector<std::array<int, kMaxDim>> monomials(int dim, int degree) {
  std::vector<std::array<int, kMaxDim>> out;
  for (int total = 0; total <= degree; ++total) {
    std::array<int, kMaxDim> a{};
    // Enumerate compositions of `total` into dim parts, first axis largest first.
    std::function<void(int, int)> rec = [&](int d, int left) {
      if (d == dim - 1) {
        a[d] = left;
        out.push_back(a);
        return;
      }
      for (int v = left; v >= 0; --v) {
        a[d] = v;
        rec(d + 1, left - v);
      }
    };
    rec(0, total);
  }
  return out;
}

PolynomialProjector::PolynomialProjector(int dim, int degree) : dim_(dim), degree_(degree) {
  if (dim < 1 || dim > kMaxDim) throw InvalidArgument("dimension out of range");
  if (degree < 0) throw InvalidArgument("degree must be nonnegative");
}

std::size_t PolynomialProjector::space_dimension() const { return monomials(dim_, degree_).size(); }

const std::vector<Field>& PolynomialProjector::basis(int levels, bool strict) const {
  if (strict && (std::int64_t{1} << levels) < degree_ + 1)
    throw PreconditionError("cube has fewer than m+1 cells per axis; projection is degenerate");
  std::lock_guard lock(mutex_);
  auto& slot = cache_[levels];
  if (slot) return *slot;
  const std::uint64_t n = std::uint64_t{1} << (dim_ * levels);
  const double side = std::ldexp(1.0, levels);
  auto out = std::make_unique<std::vector<Field>>();
  for (const auto& a : monomials(dim_, degree_)) {
    Field v(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      const CellIndex c = morton_decode(i, dim_, levels);
      double prod = 1.0;
      for (int d = 0; d < dim_; ++d) {
        const double u0 = -1.0 + 2.0 * c[d] / side;
        prod *= monomial_average(a[d], u0, u0 + 2.0 / side);
      }
      v[i] = prod;
    }
    const double original = std::sqrt(mean_dot(v, v));
    // Modified Gram-Schmidt, applied twice for stability.
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& e : *out) {
        const double c = mean_dot(e, v);
        for (std::uint64_t i = 0; i < n; ++i) v[i] -= c * e[i];
      }
    const double norm = std::sqrt(mean_dot(v, v));
    if (norm <= 1e-9 * original) continue;  // not representable on this many cells
    for (double& x : v) x /= norm;
    out->push_back(std::move(v));
  }
  slot = std::move(out);
  return *slot;
}

Field PolynomialProjector::project(std::span<const double> v, bool strict) const {
  int levels = 0;
  while ((std::size_t{1} << (dim_ * levels)) < v.size()) ++levels;
  if ((std::size_t{1} << (dim_ * levels)) != v.size())
    throw PreconditionError("field length is not a power of 2^n");
  const auto& b = basis(levels, strict);
  Field out(v.size(), 0.0);
  for (const auto& e : b) {
    const double c = mean_dot(e, v);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * e[i];
  }
  return out;
}

Field poly_project(const GridFunction& f, const DyadicCube& q, int m) {
  return PolynomialProjector(f.geometry.dim, m).project(f.on_cube(q), true);
}

PoincareFamily::PoincareFamily(const GridFunction& f, int m)
    : CubeFamily(f.geometry, 1.0, 1.0), f_morton_(f.morton()), projector_(f.geometry.dim, m) {}

Field PoincareFamily::compute_f(const DyadicCube& q) const {
  auto v = cube_span(geometry(), f_morton_, q);
  Field out = projector_.project(v, false);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] - out[i];
  return out;
}

Field PoincareFamily::compute_diff(const DyadicCube& p, const DyadicCube& q) const {
  Field out = restrict(f(q), q, p);
  const Field& fp = f(p);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= fp[i];
  return out;
}

double PoincareFamily::mean_residual(const DyadicCube& q) const { return p_average(f(q), 1.0); }

MaximalPoincareFamily::MaximalPoincareFamily(const GridFunction& f, int m)
    : CubeFamily(f.geometry, 1.0, 1.0), residuals_(f, m) {}

Field MaximalPoincareFamily::compute_f(const DyadicCube& q) const {
  return dyadic_maximal(residuals_.f(q), geometry().dim);
}

Field MaximalPoincareFamily::compute_diff(const DyadicCube& p, const DyadicCube& q) const {
  Field out(f(p));
  const Field outer = restrict(f(q), q, p);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= outer[i];
  return out;
}

PoincareReport poincare_sparse(const GridFunction& f, const DyadicCube& q, int m, double eta) {
  const RootGeometry& g = f.geometry;
  PoincareFamily fam(f, m);
  PoincareReport rep;
  rep.m = m;
  SparseParams params;
  params.eta = eta;
  rep.engine = build_sparse_pointwise(fam, q, params);
  rep.failures = rep.engine.failures;

  const auto& gens = rep.engine.construction.family.base.generations;
  std::vector<std::vector<double>> weights;
  for (const auto& gen : gens) {
    weights.emplace_back();
    for (const auto& r : gen) weights.back().push_back(fam.mean_residual(r));
  }
  const Field rhs = weighted_overlap(g, rep.engine.construction.family, weights);
  const Field& lhs = fam.f(q);
  for (std::size_t x = 0; x < lhs.size(); ++x)
    rep.constant = std::max(rep.constant, ratio_of(std::fabs(lhs[x]), rhs[x]));

  const Field fz = f.morton();
  const int h = g.depth - q.generation;
  for (int j = 0; j <= h; ++j)
    for (std::uint64_t i = 0; i < (std::uint64_t{1} << (g.dim * j)); ++i) {
      const DyadicCube r = descendant(g, q, j, i);
      const double gamma = cube_stats(fam, r, eta, OscillationMode::supremum()).coefficient();
      rep.coefficient_constant = std::max(rep.coefficient_constant, ratio_of(gamma, fam.mean_residual(r)));
      if ((std::int64_t{1} << (g.depth - r.generation)) >= m + 1) {
        const auto v = cube_span(g, fz, r);
        const Field pr = fam.projector().project(v, true);
        double sup = 0.0;
        for (double x : pr) sup = std::max(sup, std::fabs(x));
        rep.projection_sup_constant = std::max(rep.projection_sup_constant, ratio_of(sup, p_average(v, 1.0)));
      }
    }
  if (!std::isfinite(rep.constant)) rep.failures.push_back("Poincare domination constant is infinite");
  if (!(rep.constant <= rep.engine.empirical_constant * rep.coefficient_constant * (1.0 + kRelTol)))
    rep.failures.push_back("Poincare constant exceeds engine constant times coefficient constant");
  rep.passed = rep.failures.empty();
  return rep;
}

Functional oscillation_functional(const GridFunction& f, int m) {
  auto fam = std::make_shared<PoincareFamily>(f, m);
  return [fam](const DyadicCube& q) { return fam->mean_residual(q); };
}

Functional power_functional(const RootGeometry& g, double scale, double exponent) {
  if (!(scale >= 0.0)) throw InvalidArgument("scale must be nonnegative");
  return [g, scale, exponent](const DyadicCube& q) { return scale * std::pow(g.measure(q), exponent); };
}

Functional table_functional(std::map<DyadicCube, double> table) {
  for (const auto& [cube, v] : table)
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("functional values must be nonnegative");
  return [table = std::move(table)](const DyadicCube& q) {
    auto it = table.find(q);
    if (it == table.end()) throw PreconditionError("functional table has no entry for a requested cube");
    return it->second;
  };
}

Functional gradient_functional(const GridFunction& f) {
  const RootGeometry g = f.geometry;
  const double h = g.cell_side();
  const std::int64_t side = g.axis_cells();
  Field grad_rm(f.values.size());
  for (std::uint64_t flat = 0; flat < f.values.size(); ++flat) {
    const CellIndex c = rowmajor_leaf(g, flat);
    double sq = 0.0;
    for (int d = 0; d < g.dim; ++d) {
      CellIndex nb = c;
      double sign = 1.0;
      if (static_cast<std::int64_t>(c[d]) + 1 < side) {
        nb[d] = c[d] + 1;
      } else {
        nb[d] = c[d] - 1;
        sign = -1.0;
      }
      if (side == 1) continue;
      const double diff = sign * (f.values[rowmajor_index(g, nb)] - f.values[flat]) / h;
      sq += diff * diff;
    }
    grad_rm[flat] = std::sqrt(sq);
  }
  auto grad = std::make_shared<GridFunction>(g, std::move(grad_rm));
  return [grad](const DyadicCube& q) {
    return grad->geometry.side_at(q.generation) * p_average(*grad, q, 1.0);
  };
}

namespace {

struct TreeValues {
  // v[k][i]: a(R)^p w(R) for the i-th generation-k cube below the root (relative).
  std::vector<std::vector<double>> num;
  std::vector<std::vector<double>> a;
  std::vector<std::vector<double>> w;
};

TreeValues tree_values(const Functional& a, const Weight& w, double p, const DyadicCube& q) {
  const RootGeometry& g = w.w.geometry;
  const int h = g.depth - q.generation;
  TreeValues t;
  const auto means = subcube_means(w.w.on_cube(q), g.dim);
  for (int j = 0; j <= h; ++j) {
    const std::uint64_t count = std::uint64_t{1} << (g.dim * j);
    t.num.emplace_back(count);
    t.a.emplace_back(count);
    t.w.emplace_back(count);
    const double measure = static_cast<double>(g.cell_count(q.generation + j)) * g.cell_measure();
    for (std::uint64_t i = 0; i < count; ++i) {
      const double av = a(descendant(g, q, j, i));
      if (!(av >= 0.0) || !std::isfinite(av)) throw InvalidArgument("functional values must be nonnegative");
      t.a[j][i] = av;
      t.w[j][i] = means[j][i] * measure;
      t.num[j][i] = std::pow(av, p) * t.w[j][i];
    }
  }
  return t;
}

double sd_ratio(double num, double w_top, double a_top, double frac, double p, double s) {
  return ratio_of(std::pow(num / w_top, 1.0 / p), std::pow(frac, 1.0 / s) * a_top);
}

}  // namespace

SmallnessResult smallness_norm(const Functional& a, const Weight& w, double p, double s,
                               const DyadicCube& q, const SmallnessBudget& budget) {
  if (!(p >= 1.0) || !(s >= 1.0)) throw InvalidArgument("p and s must be at least 1");
  const RootGeometry& g = w.w.geometry;
  require_in_tree(g, q);
  const int h = g.depth - q.generation;
  const TreeValues t = tree_values(a, w, p, q);
  SmallnessResult res;
  res.witness_top = q;
  auto consider = [&](int j, std::uint64_t i, double num, double cells, const std::vector<DyadicCube>* fam) {
    ++res.candidates;
    const double top_cells = static_cast<double>(g.cell_count(q.generation + j));
    const double ratio = sd_ratio(num, t.w[j][i], t.a[j][i], cells / top_cells, p, s);
    if (ratio > res.norm) {
      res.norm = ratio;
      res.witness_top = descendant(g, q, j, i);
      res.witness_family = fam ? *fam : std::vector<DyadicCube>{};
    }
  };

  if (g.cell_count(q) <= budget.exact_cells) {
    // dp[i][c]: largest sum of a^p w over disjoint subfamilies of D(R) covering
    // exactly c cells, for the generation-j cubes R; -inf when impossible.
    res.exact = true;
    const double ninf = -std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> dp;
    for (int j = h; j >= 0; --j) {
      const std::uint64_t count = std::uint64_t{1} << (g.dim * j);
      const std::uint64_t cells = g.cell_count(q.generation + j);
      const std::uint64_t fan = std::uint64_t{1} << g.dim;
      std::vector<std::vector<double>> cur(count);
      for (std::uint64_t i = 0; i < count; ++i) {
        std::vector<double> acc{0.0};
        if (j < h) {
          for (std::uint64_t c = 0; c < fan; ++c) {
            const auto& child = dp[i * fan + c];
            std::vector<double> merged(acc.size() + child.size() - 1, ninf);
            for (std::size_t x = 0; x < acc.size(); ++x) {
              if (acc[x] == ninf) continue;
              for (std::size_t y = 0; y < child.size(); ++y)
                if (child[y] != ninf) merged[x + y] = std::max(merged[x + y], acc[x] + child[y]);
            }
            acc.swap(merged);
          }
        } else {
          acc.assign(cells + 1, ninf);
          acc[0] = 0.0;
        }
        acc[cells] = std::max(acc[cells], t.num[j][i]);
        for (std::uint64_t c = 1; c <= cells; ++c)
          if (acc[c] != ninf) consider(j, i, acc[c], static_cast<double>(c), nullptr);
        cur[i] = std::move(acc);
      }
      dp.swap(cur);
    }
    return res;
  }

  // Lower-bound search.
  const std::uint64_t fan = std::uint64_t{1} << g.dim;
  auto family_value = [&](int j, std::uint64_t i, const std::vector<std::pair<int, std::uint64_t>>& members,
                          std::vector<DyadicCube>& cubes) {
    double num = 0.0, cells = 0.0;
    cubes.clear();
    for (const auto& [lj, li] : members) {
      num += t.num[lj][li];
      cells += static_cast<double>(g.cell_count(q.generation + lj));
      cubes.push_back(descendant(g, q, lj, li));
    }
    if (!members.empty()) consider(j, i, num, cells, &cubes);
  };
  std::vector<DyadicCube> scratch;
  for (int j = 0; j <= h; ++j)
    for (std::uint64_t i = 0; i < (std::uint64_t{1} << (g.dim * j)); ++i) {
      // singletons and full generations below the top (j, i)
      for (int b = 0; b + j <= h; ++b) {
        std::vector<std::pair<int, std::uint64_t>> gen;
        const std::uint64_t n = std::uint64_t{1} << (g.dim * b);
        for (std::uint64_t k = 0; k < n; ++k) {
          family_value(j, i, {{j + b, (i << (g.dim * b)) + k}}, scratch);
          gen.push_back({j + b, (i << (g.dim * b)) + k});
        }
        family_value(j, i, gen, scratch);
      }
      // random antichains; candidate c always uses the same stream
      for (std::uint64_t c = 0; c < budget.random_antichains; ++c) {
        SplitMix64 rng(budget.seed ^ (0x9E3779B97F4A7C15ULL * (c + 1)) ^ (static_cast<std::uint64_t>(j) << 48) ^ i);
        std::vector<std::pair<int, std::uint64_t>> members;
        std::vector<std::pair<int, std::uint64_t>> stack{{j, i}};
        while (!stack.empty()) {
          auto [lj, li] = stack.back();
          stack.pop_back();
          const std::uint64_t choice = rng.below(3);
          if (choice == 0) members.push_back({lj, li});
          else if (choice == 1 && lj < h)
            for (std::uint64_t k = 0; k < fan; ++k) stack.push_back({lj + 1, li * fan + k});
        }
        family_value(j, i, members, scratch);
      }
      if (budget.greedy) {
        std::vector<std::pair<double, std::pair<int, std::uint64_t>>> order;
        for (int b = 0; b + j <= h; ++b)
          for (std::uint64_t k = 0; k < (std::uint64_t{1} << (g.dim * b)); ++k) {
            const std::uint64_t li = (i << (g.dim * b)) + k;
            order.push_back({t.num[j + b][li] / std::pow(static_cast<double>(g.cell_count(q.generation + j + b)), p / s),
                             {j + b, li}});
          }
        std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
        std::vector<std::pair<int, std::uint64_t>> members;
        double num = 0.0, cells = 0.0, best = -1.0;
        const double top_cells = static_cast<double>(g.cell_count(q.generation + j));
        for (const auto& [score, m] : order) {
          const auto [lj, li] = m;
          bool disjoint = true;
          for (const auto& [oj, oi] : members) {
            const int lo = std::min(oj, lj);
            if ((oi >> (g.dim * (oj - lo))) == (li >> (g.dim * (lj - lo)))) {
              disjoint = false;
              break;
            }
          }
          if (!disjoint) continue;
          const double c2 = cells + static_cast<double>(g.cell_count(q.generation + lj));
          const double n2 = num + t.num[lj][li];
          const double r2 = sd_ratio(n2, t.w[j][i], t.a[j][i], c2 / top_cells, p, s);
          if (r2 > best) {
            best = r2;
            num = n2;
            cells = c2;
            members.push_back(m);
          }
        }
        family_value(j, i, members, scratch);
      }
    }
  for (const auto& fam : budget.extra) {
    if (fam.empty()) continue;
    double num = 0.0, cells = 0.0;
    for (const auto& c : fam) {
      if (!contains(q, c, g.dim)) throw InvalidArgument("extra candidate outside the cube");
      const int lj = c.generation - q.generation;
      const std::uint64_t li = z_code(c, g.dim) - (z_code(q, g.dim) << (g.dim * lj));
      num += t.num[lj][li];
      cells += static_cast<double>(g.cell_count(c));
    }
    consider(0, 0, num, cells, &fam);
  }
  return res;
}

double smallness_norm_bruteforce(const Functional& a, const Weight& w, double p, double s,
                                 const DyadicCube& q) {
  const RootGeometry& g = w.w.geometry;
  const int h = g.depth - q.generation;
  if (g.cell_count(q) > 16) throw PreconditionError("brute force limited to 16 cells");
  const TreeValues t = tree_values(a, w, p, q);
  // All (num, cells) pairs of antichains of the subtree at (j, i).
  std::function<std::vector<std::pair<double, double>>(int, std::uint64_t)> pairs =
      [&](int j, std::uint64_t i) {
        std::vector<std::pair<double, double>> acc{{0.0, 0.0}};
        if (j < h) {
          for (std::uint64_t c = 0; c < (std::uint64_t{1} << g.dim); ++c) {
            const auto child = pairs(j + 1, (i << g.dim) + c);
            std::vector<std::pair<double, double>> merged;
            for (const auto& x : acc)
              for (const auto& y : child) merged.push_back({x.first + y.first, x.second + y.second});
            acc.swap(merged);
          }
        }
        acc.push_back({t.num[j][i], static_cast<double>(g.cell_count(q.generation + j))});
        return acc;
      };
  double best = 0.0;
  for (int j = 0; j <= h; ++j)
    for (std::uint64_t i = 0; i < (std::uint64_t{1} << (g.dim * j)); ++i) {
      const double top = static_cast<double>(g.cell_count(q.generation + j));
      for (const auto& [num, cells] : pairs(j, i))
        if (cells > 0.0) best = std::max(best, sd_ratio(num, t.w[j][i], t.a[j][i], cells / top, p, s));
    }
  return best;
}

SelfImproveReport verify_self_improve(const GridFunction& f, const Functional& a,
                                      const DyadicCube& q, int m, const NormSpec& norm,
                                      const Weight& w, SelfImproveMode mode,
                                      const SmallnessBudget& budget) {
  const RootGeometry& g = f.geometry;
  if (!(w.w.geometry == g)) throw InvalidArgument("weight lives on a different grid");
  if (!(norm.p >= 1.0)) throw InvalidArgument("p must be at least 1");
  if (norm.kind == NormSpec::Kind::WeightedLp && !(norm.s >= 1.0)) throw InvalidArgument("s must be at least 1");
  if (norm.kind == NormSpec::Kind::Ratio && !(norm.r > 1.0)) throw InvalidArgument("r must exceed 1");
  SelfImproveReport rep;
  rep.mode = mode;
  PoincareFamily pf(f, m);
  const int h = g.depth - q.generation;
  for (int j = 0; j <= h && !rep.vacuous; ++j)
    for (std::uint64_t i = 0; i < (std::uint64_t{1} << (g.dim * j)); ++i) {
      const DyadicCube r = descendant(g, q, j, i);
      const double lhs = pf.mean_residual(r), ar = a(r);
      if (lhs > ar * (1.0 + 1e-12)) {
        rep.vacuous = true;
        rep.vacuous_reason = "<|f - P_R f|> exceeds a(R) at " + to_address(r, g.dim);
        break;
      }
    }

  std::unique_ptr<MaximalPoincareFamily> mf;
  if (mode == SelfImproveMode::LocalMaximal) mf = std::make_unique<MaximalPoincareFamily>(f, m);
  const CubeFamily& fam = mf ? static_cast<const CubeFamily&>(*mf) : pf;
  SparseParams params;
  params.eta = 0.5;
  const DominationReport engine = build_sparse_pointwise(fam, q, params);
  rep.failures = engine.failures;
  const SparseFamily& sf = engine.construction.family;
  const auto& gens = sf.base.generations;

  const double cell = g.cell_measure();
  const Field wz = w.w.on_cube(q);
  const double w_q = w.integral(q);
  const double a_q = a(q);
  Field sharp;
  double w_r = 0.0;
  if (norm.kind == NormSpec::Kind::Ratio) {
    // M^#_m f over every dyadic cube of the whole tree containing the cell.
    std::vector<std::vector<double>> per_level;
    const RootGeometry& gg = g;
    for (int k = 0; k <= gg.depth; ++k) {
      per_level.emplace_back(std::size_t{1} << (gg.dim * k));
      for (std::uint64_t z = 0; z < per_level.back().size(); ++z)
        per_level.back()[z] = pf.mean_residual(DyadicCube{k, morton_decode(z, gg.dim, k)});
    }
    const Field all = chain_max(per_level, gg.dim);
    const std::uint64_t b = morton_offset(g, q);
    sharp.assign(all.begin() + static_cast<std::ptrdiff_t>(b),
                 all.begin() + static_cast<std::ptrdiff_t>(b + g.cell_count(q)));
    double wr = 0.0;
    for (double v : wz) wr += std::pow(v, norm.r) * cell;
    const double r_conj = norm.r / (norm.r - 1.0);
    w_r = std::pow(g.measure(q), 1.0 / r_conj) * std::pow(wr, 1.0 / norm.r);
  }
  auto x_norm = [&](const Field& field) {
    double s = 0.0;
    if (norm.kind == NormSpec::Kind::WeightedLp) {
      for (std::size_t x = 0; x < field.size(); ++x) s += std::pow(std::fabs(field[x]), norm.p) * wz[x] * cell;
      return std::pow(s / w_q, 1.0 / norm.p);
    }
    for (std::size_t x = 0; x < field.size(); ++x)
      s += std::pow(ratio_of(std::fabs(field[x]), sharp[x]), norm.p) * wz[x] * cell;
    return std::pow(s / w_r, 1.0 / norm.p) * a_q;
  };

  // a(R) on the family, and per-generation fields.
  std::vector<std::vector<double>> a_vals;
  for (const auto& gen : gens) {
    a_vals.emplace_back();
    for (const auto& r : gen) a_vals.back().push_back(a(r));
  }
  const Field total = weighted_overlap(g, sf, a_vals);
  Field lhs_field = fam.f(q);
  for (double& v : lhs_field) v = std::fabs(v);
  for (std::size_t x = 0; x < lhs_field.size(); ++x) rep.k = std::max(rep.k, ratio_of(lhs_field[x], total[x]));
  rep.lhs = x_norm(lhs_field);

  std::function<double(double)> phi;
  if (norm.kind == NormSpec::Kind::WeightedLp) {
    SmallnessBudget b = budget;
    for (const auto& gen : gens) b.extra.push_back(gen);
    const SmallnessResult sd = smallness_norm(a, w, norm.p, norm.s, q, b);
    rep.measured_norm = sd.norm;
    rep.norm_exact = sd.exact;
    phi = [n = sd.norm, s = norm.s](double t) { return n * std::pow(t, 1.0 / s); };
    rep.geometric_factor = sd.norm / (1.0 - std::pow(2.0, -1.0 / norm.s));
    rep.integral_factor = (norm.s + 1.0) * sd.norm;
  } else {
    const double pr = norm.p * norm.r / (norm.r - 1.0);
    phi = [pr](double t) { return std::pow(t, 1.0 / pr); };
    rep.geometric_factor = 1.0 / (1.0 - std::pow(2.0, -1.0 / pr));
    rep.integral_factor = pr + 1.0;
  }

  const std::uint64_t base = morton_offset(g, q);
  for (std::size_t k = 0; k < gens.size(); ++k) {
    Field layer(g.cell_count(q), 0.0);
    double occupied = 0.0;
    for (std::size_t i = 0; i < gens[k].size(); ++i) {
      const std::uint64_t b = morton_offset(g, gens[k][i]) - base;
      for (std::uint64_t x = b; x < b + g.cell_count(gens[k][i]); ++x) layer[x] = a_vals[k][i];
      occupied += g.measure(gens[k][i]);
    }
    const double layer_norm = x_norm(layer);
    rep.sparse_side += layer_norm;
    rep.a_side += a_q * phi(std::ldexp(1.0, -static_cast<int>(k)));
    const double frac = occupied / g.measure(q);
    if (frac > std::ldexp(1.0, -static_cast<int>(k)) * (1.0 + 1e-12))
      rep.failures.push_back("generation " + std::to_string(k) + " occupies more than 2^-k |Q|");
    if (!rep.vacuous && layer_norm > phi(frac) * a_q * (1.0 + kRelTol))
      rep.failures.push_back("smallness condition fails on generation " + std::to_string(k));
  }
  rep.rhs = rep.k * rep.a_side;
  rep.normalized = ratio_of(rep.lhs, rep.k * a_q * rep.integral_factor);
  if (!rep.vacuous) {
    if (rep.lhs > rep.k * rep.sparse_side * (1.0 + kRelTol))
      rep.failures.push_back("LHS exceeds K times the sparse side");
    if (rep.lhs > rep.rhs * (1.0 + kRelTol)) rep.failures.push_back("LHS exceeds the self-improved bound");
  }
  rep.passed = rep.failures.empty();
  return rep;
}

}  // namespace sparsedom
