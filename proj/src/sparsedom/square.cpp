#include "sparsedom/square.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include "sparsedom/errors.hpp"
#include "sparsedom/parallel.hpp"
#include "sparsedom/quadrature.hpp"
#include "sparsedom/random.hpp"

namespace sparsedom {

namespace {

double norm_of(const Point& x, int dim) {
  double s = 0.0;
  for (int d = 0; d < dim; ++d) s += x[d] * x[d];
  return std::sqrt(s);
}

// int_lo^hi of the centered normal density with standard deviation s, with
// erfc on one-sided intervals to keep far tails accurate.
double normal_mass(double lo, double hi, double s) {
  const double k = 1.0 / (s * std::numbers::sqrt2);
  if (lo >= 0.0) return 0.5 * (std::erfc(lo * k) - std::erfc(hi * k));
  if (hi <= 0.0) return 0.5 * (std::erfc(-hi * k) - std::erfc(-lo * k));
  return 0.5 * (std::erf(hi * k) - std::erf(lo * k));
}

// Surface area of the unit sphere in R^n.
double sphere_area(int n) {
  switch (n) {
    case 1: return 2.0;
    case 2: return 2.0 * std::numbers::pi;
    default: return 4.0 * std::numbers::pi;
  }
}

}  // namespace

double HormanderKernel::box_integral(const Point& lo, const Point& hi, int dim, double t) const {
  static const GaussLegendre<8> rule;
  // Substitute u = z / t: the integral of phi over the box scaled by 1/t.
  double sum = 0.0;
  std::array<int, kMaxDim> idx{};
  while (true) {
    Point u{};
    double w = 1.0;
    for (int d = 0; d < dim; ++d) {
      const double a = lo[d] / t, b = hi[d] / t;
      u[d] = 0.5 * (a + b) + 0.5 * (b - a) * rule.x[idx[d]];
      w *= 0.5 * (b - a) * rule.w[idx[d]];
    }
    sum += w * value(u, dim);
    int d = dim - 1;
    while (d >= 0 && idx[d] == 7) idx[d--] = 0;
    if (d < 0) break;
    ++idx[d];
  }
  return sum;
}

GaussianDifferenceKernel::GaussianDifferenceKernel(double sigma1, double sigma2, double scale)
    : sigma1_(sigma1), sigma2_(sigma2), scale_(scale) {
  if (!(sigma1 > 0.0) || !(sigma2 > 0.0) || sigma1 == sigma2) throw InvalidArgument("bad Gaussian widths");
}

double GaussianDifferenceKernel::value(const Point& x, int dim) const {
  const double r2 = norm_of(x, dim) * norm_of(x, dim);
  auto density = [&](double s) {
    return std::pow(2.0 * std::numbers::pi * s * s, -0.5 * dim) * std::exp(-r2 / (2.0 * s * s));
  };
  return scale_ * (density(sigma1_) - density(sigma2_));
}

double GaussianDifferenceKernel::box_integral(const Point& lo, const Point& hi, int dim, double t) const {
  double m1 = 1.0, m2 = 1.0;
  for (int d = 0; d < dim; ++d) {
    m1 *= normal_mass(lo[d], hi[d], sigma1_ * t);
    m2 *= normal_mass(lo[d], hi[d], sigma2_ * t);
  }
  return scale_ * (m1 - m2);
}

double PowerDecayKernel::value(const Point& x, int dim) const {
  return std::pow(1.0 + norm_of(x, dim), -dim - eps_);
}

std::unique_ptr<HormanderKernel> make_kernel(const std::string& name) {
  if (name == "gaussian-difference") return std::make_unique<GaussianDifferenceKernel>();
  if (name == "zero") return std::make_unique<ZeroKernel>();
  if (name == "power-decay") return std::make_unique<PowerDecayKernel>();
  throw InvalidArgument("unknown kernel: " + name);
}

KernelValidation kernel_validate(const HormanderKernel& k, int dim, std::uint64_t seed) {
  if (dim < 1 || dim > kMaxDim) throw InvalidArgument("dimension out of range");
  KernelValidation v;
  const double R = k.radius(), eps = k.epsilon(), del = k.delta();
  const int steps = dim == 3 ? 8 : 32;
  const double h = 2.0 * R / steps;

  // Integral over [-R, R]^n as a sum of box integrals.
  std::array<int, kMaxDim> idx{};
  while (true) {
    Point lo{}, hi{};
    for (int d = 0; d < dim; ++d) {
      lo[d] = -R + idx[d] * h;
      hi[d] = lo[d] + h;
    }
    v.integral += k.box_integral(lo, hi, dim, 1.0);
    int d = dim - 1;
    while (d >= 0 && idx[d] == steps - 1) idx[d--] = 0;
    if (d < 0) break;
    ++idx[d];
  }
  if (!(std::fabs(v.integral) <= 1e-8)) v.violations.push_back("integral of phi is not zero");

  // Size bound on a grid twice as fine as the integration boxes.
  const int size_steps = 2 * steps;
  idx = {};
  while (true) {
    Point x{};
    for (int d = 0; d < dim; ++d) x[d] = -R + idx[d] * (2.0 * R / size_steps);
    const double r = std::fabs(k.value(x, dim)) * std::pow(1.0 + norm_of(x, dim), dim + eps);
    v.size_worst = std::max(v.size_worst, r);
    ++v.size_points;
    int d = dim - 1;
    while (d >= 0 && idx[d] == size_steps) idx[d--] = 0;
    if (d < 0) break;
    ++idx[d];
  }
  if (v.size_worst > 1.0) v.violations.push_back("size bound |phi(x)| <= (1+|x|)^{-n-eps} fails");

  SplitMix64 rng(seed);
  for (int i = 0; i < 20000; ++i) {
    Point x{}, y{}, dir{};
    double len = 0.0;
    for (int d = 0; d < dim; ++d) {
      x[d] = rng.uniform(-R, R);
      dir[d] = rng.uniform(-1.0, 1.0);
      len += dir[d] * dir[d];
    }
    len = std::sqrt(len);
    if (len == 0.0) continue;
    const double dist = std::pow(10.0, rng.uniform(-3.0, 0.5));
    for (int d = 0; d < dim; ++d) y[d] = x[d] + dist * dir[d] / len;
    const double m = std::min(norm_of(x, dim), norm_of(y, dim));
    const double r = std::fabs(k.value(x, dim) - k.value(y, dim)) * std::pow(1.0 + m, dim + eps + del) /
                     std::pow(dist, del);
    v.holder_worst = std::max(v.holder_worst, r);
    ++v.holder_pairs;
  }
  if (v.holder_worst > 1.0) v.violations.push_back("Hoelder bound fails on sampled pairs");
  v.ok = v.violations.empty();
  return v;
}

SquareEnergies square_energies(const GridFunction& f, const HormanderKernel& k, double q) {
  if (!(q >= 1.0)) throw InvalidArgument("q must be at least 1");
  const RootGeometry& g = f.geometry;
  const int n = g.dim;
  const std::int64_t S = g.axis_cells();
  const std::int64_t width = 2 * S - 1;
  const double hc = g.cell_side();
  const std::uint64_t N = g.leaf_count();
  std::uint64_t table_size = 1;
  for (int d = 0; d < n; ++d) table_size *= static_cast<std::uint64_t>(width);

  double f_sup = 0.0;
  std::vector<std::uint64_t> support;
  for (std::uint64_t i = 0; i < N; ++i) {
    f_sup = std::max(f_sup, std::fabs(f.values[i]));
    if (f.values[i] != 0.0) support.push_back(i);
  }

  SquareEnergies out;
  out.q = q;
  out.conv.assign(N, std::vector<double>(static_cast<std::size_t>(g.depth), 0.0));
  out.energy = out.conv;
  const auto& z_to_rm = morton_to_rowmajor(g);

  for (int j = 1; j <= g.depth; ++j) {
    const double t = std::ldexp(g.side, -j) * std::numbers::sqrt2;
    const double reach = k.radius() * t;
    // table[offset] = int over the cell at that offset of phi_t; offsets are
    // stored shifted by S - 1 per axis, row-major.
    std::vector<double> table(table_size, 0.0);
    for (std::uint64_t e = 0; e < table_size; ++e) {
      std::uint64_t rest = e;
      Point lo{}, hi{};
      double near2 = 0.0;
      for (int d = n - 1; d >= 0; --d) {
        const std::int64_t o = static_cast<std::int64_t>(rest % static_cast<std::uint64_t>(width)) - (S - 1);
        rest /= static_cast<std::uint64_t>(width);
        lo[d] = (static_cast<double>(o) - 0.5) * hc;
        hi[d] = lo[d] + hc;
        const double gap = std::max({0.0, lo[d], -hi[d]});
        near2 += gap * gap;
      }
      if (std::sqrt(near2) <= reach) table[e] = k.box_integral(lo, hi, n, t);
    }
    const double eps = k.epsilon();
    out.tail_bound.push_back(f_sup * sphere_area(n) * std::pow(1.0 + k.radius(), -eps) / eps);

    std::vector<double> conv_rm(N, 0.0);
    parallel_for(N, [&](std::size_t x) {
      const CellIndex cx = rowmajor_leaf(g, x);
      double s = 0.0;
      for (std::uint64_t y : support) {
        const CellIndex cy = rowmajor_leaf(g, y);
        std::uint64_t e = 0;
        for (int d = 0; d < n; ++d)
          e = e * static_cast<std::uint64_t>(width) +
              static_cast<std::uint64_t>(static_cast<std::int64_t>(cx[d]) - static_cast<std::int64_t>(cy[d]) + S - 1);
        s += f.values[y] * table[e];
      }
      conv_rm[x] = s;
    });
    for (std::uint64_t z = 0; z < N; ++z) {
      const double c = conv_rm[z_to_rm[z]];
      out.conv[z][j - 1] = c;
      out.energy[z][j - 1] = std::numbers::ln2 * std::pow(std::fabs(c), q);
    }
  }
  return out;
}

double vertical_square(const GridFunction& f, const CellIndex& x, double q, const HormanderKernel& k,
                       std::optional<double> h) {
  const RootGeometry& g = f.geometry;
  const SquareEnergies e = square_energies(f, k, q);
  const auto& row = e.energy[morton_encode(x, g.dim, g.depth)];
  double s = 0.0;
  for (int j = 1; j <= g.depth; ++j)
    if (!h || std::ldexp(g.side, 1 - j) <= *h) s += row[j - 1];
  return std::pow(s, 1.0 / q);
}

double dilation_tail(const GridFunction& f, const DyadicCube& p, double q, double eps) {
  const RootGeometry& g = f.geometry;
  require_in_tree(g, p);
  const int n = g.dim;
  const double hc = g.cell_side();
  const std::int64_t S = g.axis_cells();
  const double side = g.side_at(p.generation);
  const double vol_p = g.measure(p);
  std::array<double, kMaxDim> center{};
  for (int d = 0; d < n; ++d) center[d] = (p.index[d] + 0.5) * side;
  double l1 = 0.0;
  for (double v : f.values) l1 += std::fabs(v);
  l1 *= g.cell_measure();

  double total = 0.0;
  for (int m = 1;; ++m) {
    const double half = std::ldexp(side, m - 1);
    const double box_vol = std::pow(2.0 * half, n);
    bool covers = true;
    for (int d = 0; d < n; ++d) covers = covers && center[d] - half <= 0.0 && center[d] + half >= g.side;
    if (covers) {
      total += std::pow(2.0, -m * eps) * std::pow(l1 / box_vol, q);
      const double rate = eps + n * q;
      return total + std::pow(l1 / vol_p, q) * std::pow(2.0, -(m + 1) * rate) / (1.0 - std::pow(2.0, -rate));
    }
    // int of |f| over the box: per axis, cells met and the overlap lengths.
    std::array<std::int64_t, kMaxDim> lo{}, hi{};
    std::array<std::vector<double>, kMaxDim> overlap;
    for (int d = 0; d < n; ++d) {
      const double a = std::max(0.0, center[d] - half), b = std::min(g.side, center[d] + half);
      lo[d] = static_cast<std::int64_t>(std::floor(a / hc));
      hi[d] = std::min<std::int64_t>(S - 1, static_cast<std::int64_t>(std::ceil(b / hc)) - 1);
      for (std::int64_t i = lo[d]; i <= hi[d]; ++i)
        overlap[d].push_back(std::min(b, (i + 1) * hc) - std::max(a, i * hc));
    }
    double integral = 0.0;
    std::array<std::int64_t, kMaxDim> c = lo;
    while (true) {
      CellIndex leaf{};
      double w = 1.0;
      for (int d = 0; d < n; ++d) {
        leaf[d] = static_cast<std::uint32_t>(c[d]);
        w *= overlap[d][static_cast<std::size_t>(c[d] - lo[d])];
      }
      integral += std::fabs(f.values[rowmajor_index(g, leaf)]) * w;
      int d = n - 1;
      while (d >= 0 && c[d] == hi[d]) {
        c[d] = lo[d];
        --d;
      }
      if (d < 0) break;
      ++c[d];
    }
    total += std::pow(2.0, -m * eps) * std::pow(integral / box_vol, q);
  }
}

SquareReport square_sparse(const GridFunction& f, const DyadicCube& q, double qexp, const HormanderKernel& k,
                           double eta) {
  const RootGeometry& g = f.geometry;
  require_in_tree(g, q);
  SquareReport rep;
  rep.kernel = kernel_validate(k, g.dim);
  if (!rep.kernel.ok)
    for (const auto& v : rep.kernel.violations) rep.failures.push_back("kernel: " + v);
  const SquareEnergies e = square_energies(f, k, qexp);
  for (double t : e.tail_bound) rep.tail_bound = std::max(rep.tail_bound, t);

  BandFamily fam(g, e.energy, qexp, "square");
  SparseParams params;
  params.eta = eta;
  rep.engine = build_sparse_pointwise(fam, q, params);
  rep.failures.insert(rep.failures.end(), rep.engine.failures.begin(), rep.engine.failures.end());

  std::vector<std::vector<double>> coef;
  for (const auto& gen : rep.engine.construction.family.base.generations) {
    coef.emplace_back();
    for (const auto& p : gen) coef.back().push_back(dilation_tail(f, p, qexp, k.epsilon()));
  }
  const Field rhs = weighted_overlap(g, rep.engine.construction.family, coef);
  const std::uint64_t base = morton_offset(g, q);
  for (std::uint64_t x = 0; x < g.cell_count(q); ++x) {
    double lhs = 0.0;
    for (int j = q.generation + 1; j <= g.depth; ++j) lhs += e.energy[base + x][j - 1];
    double ratio = 0.0;
    if (lhs > 0.0) ratio = rhs[x] > 0.0 ? lhs / rhs[x] : std::numeric_limits<double>::infinity();
    if (ratio > rep.constant) {
      rep.constant = ratio;
      rep.witness_leaf = x;
    }
  }
  if (!std::isfinite(rep.constant)) rep.failures.push_back("square function domination constant is infinite");

  const bool exhaustive = g.dim == 1 && g.depth - q.generation <= 6;
  rep.ellr = check_ellr(fam, q, qexp, exhaustive, exhaustive ? 0 : 4096, 0);
  if (rep.ellr.constant > 1.0 + 1e-12)
    rep.failures.push_back("square band family exceeds C_q = 1");

  double l1 = 0.0;
  for (double v : f.values) l1 += std::fabs(v);
  l1 *= g.cell_measure();
  if (l1 > 0.0) {
    std::vector<double> gs;
    for (const auto& row : e.energy) {
      double s = 0.0;
      for (double v : row) s += v;
      gs.push_back(std::pow(s, 1.0 / qexp));
    }
    std::sort(gs.begin(), gs.end(), std::greater<>());
    for (std::size_t i = 0; i < gs.size(); ++i)
      rep.weak_l1 = std::max(rep.weak_l1, gs[i] * static_cast<double>(i + 1) * g.cell_measure() / l1);
  }
  rep.passed = rep.failures.empty();
  return rep;
}

}  // namespace sparsedom
