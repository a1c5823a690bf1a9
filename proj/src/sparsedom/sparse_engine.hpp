#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sparsedom/dyadic.hpp"
#include "sparsedom/family.hpp"
#include "sparsedom/gridfn.hpp"

namespace sparsedom {

struct SparseParams {
  double eta = 0.5;
  // Bilinear mode only; must exceed the family's r.
  std::optional<double> q;

  // t_P / |P| = (1 - eta) / 2^{n+2}
  double threshold_fraction(int dim) const;
  void validate() const;
};

struct CZResult {
  std::vector<DyadicCube> selected;
  std::vector<std::uint64_t> hits;  // |P_j ∩ Ω| in cells, parallel to selected
  std::uint64_t omega_cells = 0;
  bool bounds_ok = true;    // height |P_j| <= |P_j ∩ Ω| <= 2^n height |P_j|
  bool total_ok = true;     // sum |P_j| <= |Ω| / height
  bool coverage_ok = true;  // every cell of Ω lies in some P_j
};

// Local Calderón–Zygmund stopping time inside p: the maximal strict subcubes R
// with |R ∩ Ω| > height |R|. `omega` is an indicator in p's local Z-order.
CZResult cz_decompose(const RootGeometry& g, const DyadicCube& p, const std::vector<char>& omega,
                      double height);

// Per-cube data of a constructed family, parallel to family.base.generations.
struct CubeStats {
  double a1 = 0.0;  // (f_P chi_P)^*(t_P)
  double a2 = 0.0;  // (m_P^# f)^*(t_P), sup or q-mean version
  std::uint64_t omega_cells = 0;
  std::uint64_t omega1_cells = 0;

  double coefficient() const { return a1 + a2; }
};

// Thresholds of a single cube, as computed by the construction.
CubeStats cube_stats(const CubeFamily& fam, const DyadicCube& p, double eta, OscillationMode mode);

struct Construction {
  SparseFamily family;
  std::vector<std::vector<CubeStats>> stats;
  std::vector<std::string> failures;  // violated internal assertions
};

// The stopping-time construction. The sharp maximal function is taken in
// `mode` (sup for the pointwise principle, q-mean for the bilinear one).
Construction construct_sparse(const CubeFamily& fam, const DyadicCube& q, double eta,
                              OscillationMode mode);

struct DominationReport {
  std::string mode;  // "pointwise" or "bilinear"
  DyadicCube root;
  double eta = 0.5;
  double r = 1.0;
  double q = 0.0;  // bilinear only
  double cr = 1.0;
  Construction construction;
  OverlapDistribution overlap;
  double empirical_constant = 0.0;
  double paper_bound = 0.0;
  // Pointwise mode: the leaf (root Z-order) where the ratio is largest and both
  // sides there. Bilinear mode: the two sides of the form inequality.
  std::uint64_t witness_leaf = 0;
  double witness_lhs = 0.0;
  double witness_rhs = 0.0;
  bool passed = true;
  std::vector<std::string> failures;

  // Flattened (cube, coefficient) list in generation order.
  std::vector<std::pair<DyadicCube, double>> coefficients() const;
};

// |f_Q(x)| <= K C_r (sum_P gamma_P^r chi_P(x))^{1/r}; K must not exceed 2 * 3^{1/r}.
DominationReport build_sparse_pointwise(const CubeFamily& fam, const DyadicCube& q,
                                        const SparseParams& params);

// int_Q |f_Q|^r g <= K C_r^r sum_P alpha_P^r <g>_{(q/r)',P} |P|; K must not exceed 18 * 4^r.
DominationReport build_sparse_bilinear(const CubeFamily& fam, const DyadicCube& q,
                                       const SparseParams& params, const GridFunction& g);

// Re-verifies the bilinear inequality of an existing bilinear report for a new g.
DominationReport verify_bilinear(const CubeFamily& fam, DominationReport report, const GridFunction& g);

// Max over leaves of |f_Q(x)| / (sum_k sum_{P in F_k} (|f_P|^r chi_{E_P} +
// sum_{P' in F_{k+1}, P' in P} |f_{P',P}|^r chi_{P'}))^{1/r}. Bounded by C_r.
double toy_domination_check(const CubeFamily& fam, const ContractingFamily& family);

// Sum over the family of w_P chi_P, as a field in the local Z-order of the family root.
Field weighted_overlap(const RootGeometry& g, const SparseFamily& fam,
                       const std::vector<std::vector<double>>& weights);

}  // namespace sparsedom
