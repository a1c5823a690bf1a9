#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sparsedom/dyadic.hpp"
#include "sparsedom/family.hpp"
#include "sparsedom/good_lambda.hpp"
#include "sparsedom/sparse_engine.hpp"

namespace sparsedom {

// A function on the discretized upper half-space over an analysis root of
// side l with 2^L cells per axis. The y-grid is the ambient cube of side 3l
// (the root padded by l on every side); F vanishes outside it. Band j = 1..L
// covers t in [l 2^-j, l 2^-j+1); F vanishes for t outside all bands.
struct HalfSpaceFunction {
  RootGeometry geometry;  // the analysis root
  // values[j - 1][ambient row-major cell], ambient axis index 0 .. 3 * 2^L - 1,
  // with the analysis root at indices 2^L .. 2^(L+1) - 1.
  std::vector<std::vector<double>> values;

  HalfSpaceFunction() = default;
  explicit HalfSpaceFunction(const RootGeometry& g);  // zero
  HalfSpaceFunction(const RootGeometry& g, std::vector<std::vector<double>> values);

  std::uint32_t ambient_axis() const { return 3u * geometry.axis_cells(); }
  std::uint64_t ambient_cells() const;
  int bands() const { return geometry.depth; }
  // Band edges [lo, hi) of band j.
  std::pair<double, double> band(int j) const;
  // exact int_band dt / t^{n+1}
  double band_weight(int j) const;
  // Ambient index of an analysis-root leaf.
  std::uint64_t ambient_index(const CellIndex& ambient) const;
};

enum class ConeKind { Sharp, Smooth };

// Smooth cutoff: 1 on |z| <= 1, cos^2(pi (|z| - 1) / 2) on 1 < |z| < 2, 0 beyond.
double cutoff(double z);

// Per-band cone energies int_band int |F|^2 K(x - y, t) dy dt / t^{n+1} at the
// analysis leaf x (root row-major index), where K is the cone indicator
// |x - y| < alpha t (Sharp) or Phi((x - y) / (alpha t))^2 (Smooth), with y at
// cell centers and t truncated at h. Sharp t-integrals are exact; the Smooth
// transition piece uses Gauss-Legendre quadrature scaled by the exact weight
// of the same piece, so it never exceeds it.
std::vector<double> cone_energies(const HalfSpaceFunction& F, const CellIndex& x, double alpha,
                                  ConeKind kind, std::optional<double> h = std::nullopt);

// Untruncated energies for every leaf, indexed [root Z-order][j - 1].
std::vector<std::vector<double>> band_energies(const HalfSpaceFunction& F, double alpha,
                                               ConeKind kind);

double cone_functional(const HalfSpaceFunction& F, const CellIndex& x, double alpha,
                       std::optional<double> h = std::nullopt);

// sup over dyadic Q containing x of ((1/|Q|) int_Q A_{l_Q}^q)^{1/q}, for every
// leaf (root Z-order). Energies are band_energies at the wanted aperture.
Field carleson_field(const RootGeometry& g, const std::vector<std::vector<double>>& energy,
                     double q);
double carleson_functional(const HalfSpaceFunction& F, const CellIndex& x, double alpha, double q);

struct TentReport {
  DominationReport engine;
  // Smallest K with A_{l_Q}^{(alpha)}(x)^2 <= K sum_P coef_P chi_P(x), where
  // coef_P = (1/|P|) int_P A_{l_P}^{(4 alpha + sqrt n)}^2.
  double constant = 0.0;
  std::uint64_t witness_leaf = 0;
  double sandwich_worst = 0.0;  // largest relative violation, 0 when exact
  bool sandwich_ok = true;
  EllrResult ellr;
  bool passed = true;
  std::vector<std::string> failures;
};

// Energies computed once per aperture and reused across cubes.
struct TentEnergies {
  double alpha = 1.0;
  std::vector<std::vector<double>> smooth, sharp, wide, big;  // Phi at alpha; alpha; 2 alpha; 4 alpha + sqrt n
};
TentEnergies tent_energies(const HalfSpaceFunction& F, double alpha);

TentReport tent_sparse(const HalfSpaceFunction& F, const DyadicCube& q, double alpha, double eta);
TentReport tent_sparse(const RootGeometry& g, const TentEnergies& e, const DyadicCube& q,
                       double eta);

// Bad set {A^{(alpha)} > 2 lambda, C <= gamma lambda} against {A^{(alpha_big)} > lambda}
// with alpha_big = alpha + 5 sqrt n and C the dyadic Carleson functional at
// aperture 4 alpha + sqrt n, q = 2.
GoodLambdaCurve tent_good_lambda(const HalfSpaceFunction& F, const std::vector<double>& lambdas,
                                 const std::vector<double>& gammas, double alpha = 1.0);

}  // namespace sparsedom
