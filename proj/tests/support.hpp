// Generators and brute-force oracles shared by the unit tests. The oracles
// deliberately avoid the library's index helpers: leaf coordinates are
// decoded by hand and every sum runs over the whole grid.
#pragma once

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "sparsedom/dyadic.hpp"
#include "sparsedom/gridfn.hpp"
#include "sparsedom/random.hpp"

namespace support {

using namespace sparsedom;

inline RootGeometry geom(int n, int L, double side = 1.0) {
  RootGeometry g;
  g.dim = n;
  g.depth = L;
  g.side = side;
  return g;
}

inline GridFunction random_grid(const RootGeometry& g, SplitMix64& rng, double lo = 0.0, double hi = 1.0) {
  std::vector<double> v(g.leaf_count());
  for (double& x : v) x = rng.uniform(lo, hi);
  return GridFunction(g, std::move(v));
}

// Integer-valued, with many ties and zeros; exercises threshold edge cases.
inline GridFunction random_ties(const RootGeometry& g, SplitMix64& rng, int levels = 4) {
  std::vector<double> v(g.leaf_count());
  for (double& x : v) x = static_cast<double>(rng.below(levels));
  return GridFunction(g, std::move(v));
}

// Leaf coordinates of a row-major position (axis 0 slowest).
inline CellIndex leaf_coords(const RootGeometry& g, std::uint64_t flat) {
  CellIndex c{};
  for (int d = g.dim - 1; d >= 0; --d) {
    c[d] = static_cast<std::uint32_t>(flat % g.axis_cells());
    flat /= g.axis_cells();
  }
  return c;
}

inline std::uint64_t flat_of(const RootGeometry& g, const CellIndex& c) {
  std::uint64_t flat = 0;
  for (int d = 0; d < g.dim; ++d) flat = flat * g.axis_cells() + c[d];
  return flat;
}

inline bool leaf_in(const RootGeometry& g, const DyadicCube& q, const CellIndex& leaf) {
  const int shift = g.depth - q.generation;
  for (int d = 0; d < g.dim; ++d)
    if ((leaf[d] >> shift) != q.index[d]) return false;
  return true;
}

// Leaf of the i-th cell in q's local Z-order: each level contributes one
// child number whose bit (n-1-d) selects the half along axis d.
inline CellIndex local_leaf(const RootGeometry& g, const DyadicCube& q, std::uint64_t i) {
  const int h = g.depth - q.generation;
  CellIndex c{};
  for (int d = 0; d < g.dim; ++d) c[d] = q.index[d] << h;
  for (int level = 0; level < h; ++level) {
    const std::uint64_t child = (i >> (g.dim * (h - 1 - level))) & ((1u << g.dim) - 1);
    for (int d = 0; d < g.dim; ++d)
      if (child & (1u << (g.dim - 1 - d))) c[d] |= 1u << (h - 1 - level);
  }
  return c;
}

// Values of f inside q, in q's local Z-order.
inline std::vector<double> local_values(const GridFunction& f, const DyadicCube& q) {
  const RootGeometry& g = f.geometry;
  std::vector<double> v(g.cell_count(q));
  for (std::uint64_t i = 0; i < v.size(); ++i) v[i] = f.values[flat_of(g, local_leaf(g, q, i))];
  return v;
}

inline std::vector<DyadicCube> all_cubes(const RootGeometry& g, const DyadicCube& q) {
  std::vector<DyadicCube> out;
  for (int k = q.generation; k <= g.depth; ++k) {
    const int h = k - q.generation;
    const std::uint64_t per_axis = std::uint64_t{1} << h;
    std::uint64_t total = 1;
    for (int d = 0; d < g.dim; ++d) total *= per_axis;
    for (std::uint64_t t = 0; t < total; ++t) {
      DyadicCube c{k, {}};
      std::uint64_t rest = t;
      for (int d = 0; d < g.dim; ++d) {
        c.index[d] = static_cast<std::uint32_t>((q.index[d] << h) + rest % per_axis);
        rest /= per_axis;
      }
      out.push_back(c);
    }
  }
  return out;
}

inline double brute_average(const GridFunction& f, const DyadicCube& q, double p) {
  const RootGeometry& g = f.geometry;
  double s = 0.0;
  std::uint64_t count = 0;
  for (std::uint64_t x = 0; x < g.leaf_count(); ++x) {
    if (!leaf_in(g, q, leaf_coords(g, x))) continue;
    s += std::pow(std::fabs(f.values[x]), p);
    ++count;
  }
  return std::pow(s / static_cast<double>(count), 1.0 / p);
}

// f*(t) = inf{a : |{|f| > a}| <= t}; the infimum is attained at 0 or at one of
// the values, so those are the only candidates.
inline double brute_rearrangement(const std::vector<double>& v, double cell, double t) {
  std::vector<double> cand{0.0};
  for (double x : v) cand.push_back(std::fabs(x));
  double best = std::numeric_limits<double>::infinity();
  for (double a : cand) {
    std::uint64_t above = 0;
    for (double x : v) above += std::fabs(x) > a ? 1 : 0;
    if (static_cast<double>(above) * cell <= t) best = std::min(best, a);
  }
  return best;
}

// omega_lambda = inf_c (|f - c|)^*(lambda |Q|): the half-width of the shortest
// window [v_i, v_j] holding at least (1 - lambda) of the cells.
inline double brute_local_oscillation(std::vector<double> v, double lambda) {
  std::sort(v.begin(), v.end());
  const double need = (1.0 - lambda) * static_cast<double>(v.size());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i; j < v.size(); ++j) {
      std::size_t inside = 0;
      for (double x : v) inside += (x >= v[i] && x <= v[j]) ? 1 : 0;
      if (static_cast<double>(inside) >= need) best = std::min(best, (v[j] - v[i]) / 2.0);
    }
  return best;
}

// M_Q f over every leaf of q, in q's local Z-order.
inline std::vector<double> brute_maximal(const GridFunction& f, const DyadicCube& q) {
  const RootGeometry& g = f.geometry;
  const auto cubes = all_cubes(g, q);
  std::vector<double> avg;
  for (const auto& c : cubes) avg.push_back(brute_average(f, c, 1.0));
  std::vector<double> out(g.cell_count(q), 0.0);
  for (std::uint64_t i = 0; i < out.size(); ++i) {
    const CellIndex leaf = local_leaf(g, q, i);
    for (std::size_t c = 0; c < cubes.size(); ++c)
      if (leaf_in(g, cubes[c], leaf)) out[i] = std::max(out[i], avg[c]);
  }
  return out;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace support
