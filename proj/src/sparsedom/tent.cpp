#include "sparsedom/tent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "sparsedom/errors.hpp"
#include "sparsedom/parallel.hpp"
#include "sparsedom/quadrature.hpp"

namespace sparsedom {

namespace {

constexpr double kRelTol = 1e-9;
constexpr double kSandwichTol = 1e-12;

double inv_pow(double t, int n) {
  double p = t;
  for (int i = 1; i < n; ++i) p *= t;
  return 1.0 / p;
}

// int_lo^hi dt / t^{n+1}
double t_weight(double lo, double hi, int n) {
  return lo < hi ? (inv_pow(lo, n) - inv_pow(hi, n)) / n : 0.0;
}

const GaussLegendre<16>& gl16() {
  static const GaussLegendre<16> rule;
  return rule;
}

}  // namespace

HalfSpaceFunction::HalfSpaceFunction(const RootGeometry& g) : geometry(g) {
  g.validate();
  values.assign(static_cast<std::size_t>(g.depth), std::vector<double>(ambient_cells(), 0.0));
}

HalfSpaceFunction::HalfSpaceFunction(const RootGeometry& g, std::vector<std::vector<double>> v)
    : geometry(g), values(std::move(v)) {
  g.validate();
  if (values.size() != static_cast<std::size_t>(g.depth))
    throw InvalidArgument("half-space data needs one array per band");
  for (const auto& band : values) {
    if (band.size() != ambient_cells()) throw InvalidArgument("half-space band has wrong length");
    for (double x : band)
      if (!std::isfinite(x)) throw InvalidArgument("half-space values must be finite");
  }
}

std::uint64_t HalfSpaceFunction::ambient_cells() const {
  std::uint64_t n = 1;
  for (int d = 0; d < geometry.dim; ++d) n *= ambient_axis();
  return n;
}

std::pair<double, double> HalfSpaceFunction::band(int j) const {
  return {std::ldexp(geometry.side, -j), std::ldexp(geometry.side, 1 - j)};
}

double HalfSpaceFunction::band_weight(int j) const {
  const auto [lo, hi] = band(j);
  return t_weight(lo, hi, geometry.dim);
}

std::uint64_t HalfSpaceFunction::ambient_index(const CellIndex& a) const {
  std::uint64_t flat = 0;
  for (int d = 0; d < geometry.dim; ++d) flat = flat * ambient_axis() + a[d];
  return flat;
}

double cutoff(double z) {
  z = std::fabs(z);
  if (z <= 1.0) return 1.0;
  if (z >= 2.0) return 0.0;
  const double c = std::cos(std::numbers::pi * (z - 1.0) / 2.0);
  return c * c;
}

std::vector<double> cone_energies(const HalfSpaceFunction& F, const CellIndex& x, double alpha,
                                  ConeKind kind, std::optional<double> h) {
  if (!(alpha > 0.0)) throw InvalidArgument("aperture must be positive");
  const RootGeometry& g = F.geometry;
  const int n = g.dim;
  const double hc = g.cell_side();
  const double vol = g.cell_measure();
  const std::int64_t axis = F.ambient_axis();
  const std::int64_t pad = g.axis_cells();
  const auto& rule = gl16();
  std::vector<double> out(static_cast<std::size_t>(F.bands()), 0.0);
  for (int j = 1; j <= F.bands(); ++j) {
    auto [a, b] = F.band(j);
    if (h) b = std::min(b, *h);
    if (b <= a) continue;
    const double reach = (kind == ConeKind::Sharp ? 1.0 : 2.0) * alpha * b;
    const std::int64_t span = static_cast<std::int64_t>(std::ceil(reach / hc));
    std::array<std::int64_t, kMaxDim> lo{}, hi{};
    for (int d = 0; d < n; ++d) {
      const std::int64_t c = static_cast<std::int64_t>(x[d]) + pad;
      lo[d] = std::max<std::int64_t>(0, c - span);
      hi[d] = std::min<std::int64_t>(axis - 1, c + span);
    }
    const auto& band = F.values[static_cast<std::size_t>(j - 1)];
    double e = 0.0;
    std::array<std::int64_t, kMaxDim> y = lo;
    while (true) {
      std::uint64_t flat = 0;
      double d2 = 0.0;
      for (int d = 0; d < n; ++d) {
        flat = flat * static_cast<std::uint64_t>(axis) + static_cast<std::uint64_t>(y[d]);
        const double off = static_cast<double>(y[d] - pad - static_cast<std::int64_t>(x[d])) * hc;
        d2 += off * off;
      }
      const double v = band[flat];
      if (v != 0.0) {
        const double dist = std::sqrt(d2);
        double w = t_weight(std::max(a, dist / alpha), b, n);
        if (kind == ConeKind::Smooth && dist > 0.0) {
          const double u0 = std::max(a, dist / (2.0 * alpha)), u1 = std::min(b, dist / alpha);
          if (u0 < u1) {
            const double exact = t_weight(u0, u1, n);
            const double q1 = rule.integrate(u0, u1, [&](double t) {
              const double phi = cutoff(dist / (alpha * t));
              return phi * phi * inv_pow(t, n + 1);
            });
            const double q0 = rule.integrate(u0, u1, [&](double t) { return inv_pow(t, n + 1); });
            w += exact * std::min(1.0, q1 / q0);
          }
        }
        e += v * v * vol * w;
      }
      int d = n - 1;
      while (d >= 0 && y[d] == hi[d]) {
        y[d] = lo[d];
        --d;
      }
      if (d < 0) break;
      ++y[d];
    }
    out[static_cast<std::size_t>(j - 1)] = e;
  }
  return out;
}

std::vector<std::vector<double>> band_energies(const HalfSpaceFunction& F, double alpha, ConeKind kind) {
  const RootGeometry& g = F.geometry;
  std::vector<std::vector<double>> out(g.leaf_count());
  parallel_for(out.size(), [&](std::size_t z) {
    out[z] = cone_energies(F, morton_decode(z, g.dim, g.depth), alpha, kind);
  });
  return out;
}

double cone_functional(const HalfSpaceFunction& F, const CellIndex& x, double alpha, std::optional<double> h) {
  double s = 0.0;
  for (double e : cone_energies(F, x, alpha, ConeKind::Sharp, h)) s += e;
  return std::sqrt(s);
}

Field carleson_field(const RootGeometry& g, const std::vector<std::vector<double>>& energy, double q) {
  if (!(q > 0.0)) throw InvalidArgument("q must be positive");
  if (energy.size() != g.leaf_count()) throw InvalidArgument("energy has wrong cell count");
  std::vector<std::vector<double>> per_level(static_cast<std::size_t>(g.depth) + 1);
  for (int k = 0; k <= g.depth; ++k) {
    const std::uint64_t block = g.cell_count(k);
    per_level[k].assign(std::size_t{1} << (g.dim * k), 0.0);
    for (std::uint64_t z = 0; z < energy.size(); ++z) {
      double s = 0.0;
      for (int j = k + 1; j <= g.depth; ++j) s += energy[z][j - 1];
      per_level[k][z / block] += std::pow(s, q / 2.0);
    }
    for (double& v : per_level[k]) v = std::pow(v / static_cast<double>(block), 1.0 / q);
  }
  return chain_max(per_level, g.dim);
}

double carleson_functional(const HalfSpaceFunction& F, const CellIndex& x, double alpha, double q) {
  const RootGeometry& g = F.geometry;
  const Field c = carleson_field(g, band_energies(F, alpha, ConeKind::Sharp), q);
  return c[morton_encode(x, g.dim, g.depth)];
}

TentEnergies tent_energies(const HalfSpaceFunction& F, double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgument("aperture must be positive");
  TentEnergies e;
  e.alpha = alpha;
  e.smooth = band_energies(F, alpha, ConeKind::Smooth);
  e.sharp = band_energies(F, alpha, ConeKind::Sharp);
  e.wide = band_energies(F, 2.0 * alpha, ConeKind::Sharp);
  e.big = band_energies(F, 4.0 * alpha + std::sqrt(static_cast<double>(F.geometry.dim)), ConeKind::Sharp);
  return e;
}

TentReport tent_sparse(const HalfSpaceFunction& F, const DyadicCube& q, double alpha, double eta) {
  return tent_sparse(F.geometry, tent_energies(F, alpha), q, eta);
}

TentReport tent_sparse(const RootGeometry& g, const TentEnergies& e, const DyadicCube& q, double eta) {
  require_in_tree(g, q);
  TentReport rep;
  const std::uint64_t base = morton_offset(g, q);
  const std::uint64_t len = g.cell_count(q);
  for (std::uint64_t x = base; x < base + len; ++x)
    for (int j = q.generation + 1; j <= g.depth; ++j) {
      const double lo = e.sharp[x][j - 1], mid = e.smooth[x][j - 1], hi = e.wide[x][j - 1];
      if (lo > mid) rep.sandwich_worst = std::max(rep.sandwich_worst, (lo - mid) / lo);
      if (mid > hi) rep.sandwich_worst = std::max(rep.sandwich_worst, (mid - hi) / mid);
    }
  rep.sandwich_ok = rep.sandwich_worst <= kSandwichTol;
  if (!rep.sandwich_ok) rep.failures.push_back("cone sandwich A^(alpha) <= f_Q <= A^(2 alpha) fails");

  BandFamily fam(g, e.smooth, 2.0, "tent");
  SparseParams params;
  params.eta = eta;
  rep.engine = build_sparse_pointwise(fam, q, params);
  rep.failures.insert(rep.failures.end(), rep.engine.failures.begin(), rep.engine.failures.end());

  std::vector<std::vector<double>> coef;
  for (const auto& gen : rep.engine.construction.family.base.generations) {
    coef.emplace_back();
    for (const auto& p : gen) {
      const std::uint64_t b = morton_offset(g, p);
      double s = 0.0;
      for (std::uint64_t x = b; x < b + g.cell_count(p); ++x)
        for (int j = p.generation + 1; j <= g.depth; ++j) s += e.big[x][j - 1];
      coef.back().push_back(s / static_cast<double>(g.cell_count(p)));
    }
  }
  const Field rhs = weighted_overlap(g, rep.engine.construction.family, coef);
  for (std::uint64_t x = 0; x < len; ++x) {
    double lhs = 0.0;
    for (int j = q.generation + 1; j <= g.depth; ++j) lhs += e.sharp[base + x][j - 1];
    double ratio = 0.0;
    if (lhs > 0.0) ratio = rhs[x] > 0.0 ? lhs / rhs[x] : std::numeric_limits<double>::infinity();
    if (ratio > rep.constant) {
      rep.constant = ratio;
      rep.witness_leaf = x;
    }
  }
  if (!std::isfinite(rep.constant)) rep.failures.push_back("tent domination constant is infinite");

  const bool exhaustive = g.dim == 1 && g.depth - q.generation <= 6;
  rep.ellr = check_ellr(fam, q, 2.0, exhaustive, exhaustive ? 0 : 4096, 0);
  if (rep.ellr.constant > 1.0 + kSandwichTol) rep.failures.push_back("tent band family exceeds C_2 = 1");
  rep.passed = rep.failures.empty();
  return rep;
}

GoodLambdaCurve tent_good_lambda(const HalfSpaceFunction& F, const std::vector<double>& lambdas,
                                 const std::vector<double>& gammas, double alpha) {
  const RootGeometry& g = F.geometry;
  const double root_n = std::sqrt(static_cast<double>(g.dim));
  const TentEnergies e = tent_energies(F, alpha);
  const auto big = band_energies(F, alpha + 5.0 * root_n, ConeKind::Sharp);
  const Field carleson = carleson_field(g, e.big, 2.0);
  const std::uint64_t n_cells = g.leaf_count();
  Field a(n_cells), a_big(n_cells);
  for (std::uint64_t z = 0; z < n_cells; ++z) {
    double s = 0.0, sb = 0.0;
    for (int j = 1; j <= g.depth; ++j) {
      s += e.sharp[z][j - 1];
      sb += big[z][j - 1];
    }
    a[z] = std::sqrt(s);
    a_big[z] = std::sqrt(sb);
  }
  const double cell = g.cell_measure();
  GoodLambdaCurve curve;
  std::map<DyadicCube, TentReport> runs;

  for (double lambda : lambdas) {
    if (!(lambda > 0.0)) throw InvalidArgument("lambda must be positive");
    // Maximal dyadic cubes inside {A^(alpha_big) > lambda}.
    std::vector<std::uint64_t> prefix(n_cells + 1, 0);
    for (std::uint64_t z = 0; z < n_cells; ++z) prefix[z + 1] = prefix[z] + (a_big[z] > lambda ? 1 : 0);
    std::vector<DyadicCube> tops;
    std::vector<DyadicCube> stack{g.root()};
    while (!stack.empty()) {
      const DyadicCube c = stack.back();
      stack.pop_back();
      const std::uint64_t b = morton_offset(g, c), len = g.cell_count(c);
      const std::uint64_t inside = prefix[b + len] - prefix[b];
      if (inside == 0) continue;
      if (inside == len) {
        tops.push_back(c);
        continue;
      }
      auto kids = children(g, c);
      for (auto k = kids.rbegin(); k != kids.rend(); ++k) stack.push_back(*k);
    }
    const double super = static_cast<double>(prefix[n_cells]) * cell;
    std::vector<std::int64_t> owner(n_cells, -1);
    for (std::size_t t = 0; t < tops.size(); ++t) {
      const std::uint64_t b = morton_offset(g, tops[t]);
      for (std::uint64_t x = b; x < b + g.cell_count(tops[t]); ++x) owner[x] = static_cast<std::int64_t>(t);
    }

    for (double gamma : gammas) {
      if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in (0, 1]");
      GoodLambdaRow row;
      row.lambda = lambda;
      row.gamma_or_eps = gamma;
      row.superlevel_measure = super;
      double overlap_min = std::numeric_limits<double>::infinity();
      double cert_min = std::numeric_limits<double>::infinity();
      std::uint64_t bad = 0;
      for (std::uint64_t z = 0; z < n_cells; ++z) {
        if (!(a[z] > 2.0 * lambda && carleson[z] <= gamma * lambda)) continue;
        ++bad;
        if (owner[z] < 0) {
          curve.failures.push_back("bad point outside the superlevel set");
          continue;
        }
        const DyadicCube& top = tops[static_cast<std::size_t>(owner[z])];
        auto it = runs.find(top);
        if (it == runs.end()) {
          it = runs.emplace(top, tent_sparse(g, e, top, 0.5)).first;
          curve.failures.insert(curve.failures.end(), it->second.failures.begin(), it->second.failures.end());
        }
        const TentReport& run = it->second;
        double local = 0.0;
        for (int j = top.generation + 1; j <= g.depth; ++j) local += e.sharp[z][j - 1];
        if (!(local > 3.0 * lambda * lambda * (1.0 - kRelTol)))
          curve.failures.push_back("bad-set truncated cone energy below 3 lambda^2");
        const double o = run.engine.overlap.overlap[z - morton_offset(g, top)];
        overlap_min = std::min(overlap_min, o);
        cert_min = std::min(cert_min, o * gamma * gamma * run.constant);
      }
      row.bad_measure = static_cast<double>(bad) * cell;
      row.ratio = super > 0.0 ? row.bad_measure / super : 0.0;
      row.overlap_min = bad ? overlap_min : std::numeric_limits<double>::quiet_NaN();
      if (bad && !(cert_min >= 3.0 * (1.0 - kRelTol)))
        curve.failures.push_back("overlap certificate fails at lambda " + std::to_string(lambda) +
                                 ", gamma " + std::to_string(gamma));
      curve.rows.push_back(row);
      curve.certificate_min.push_back(bad ? cert_min : std::numeric_limits<double>::quiet_NaN());
    }
  }
  curve.passed = curve.failures.empty();
  return curve;
}

}  // namespace sparsedom
