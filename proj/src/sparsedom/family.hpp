#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <vector>

#include "sparsedom/dyadic.hpp"
#include "sparsedom/gridfn.hpp"

namespace sparsedom {

// A cube-indexed family {f_Q, f_{P,Q}}. Fields are local to their cube (local
// Z-order): f(Q) lives on Q, diff(P, Q) lives on P. Evaluation must be
// deterministic and safe to call from several threads; f(Q) is memoized.
class CubeFamily {
 public:
  CubeFamily(const RootGeometry& g, double r, double declared_cr);
  virtual ~CubeFamily() = default;
  CubeFamily(const CubeFamily&) = delete;
  CubeFamily& operator=(const CubeFamily&) = delete;

  const RootGeometry& geometry() const { return geometry_; }
  double r() const { return r_; }
  double declared_cr() const { return cr_; }
  virtual std::string kind() const = 0;

  const Field& f(const DyadicCube& q) const;
  // diff(Q, Q) is identically zero by convention.
  Field diff(const DyadicCube& p, const DyadicCube& q) const;

 protected:
  virtual Field compute_f(const DyadicCube& q) const = 0;
  virtual Field compute_diff(const DyadicCube& p, const DyadicCube& q) const = 0;

  // Restriction of a field on `outer` to its subcube `inner`.
  Field restrict(const Field& outer_field, const DyadicCube& outer, const DyadicCube& inner) const;

 private:
  RootGeometry geometry_;
  double r_;
  double cr_;
  mutable std::shared_mutex mutex_;
  mutable std::map<DyadicCube, std::unique_ptr<const Field>> cache_;
};

// f_{P,Q} = f_Q - f_P on P. The l^r constant is 1 for r <= 1; for r > 1 the
// telescoping sum has at most depth+1 terms, giving (depth+1)^(1-1/r).
class CanonicalFamily : public CubeFamily {
 public:
  using Map = std::function<Field(const DyadicCube&)>;

  CanonicalFamily(const RootGeometry& g, Map f_map, double r);
  std::string kind() const override { return "canonical"; }

 protected:
  Field compute_f(const DyadicCube& q) const override;
  Field compute_diff(const DyadicCube& p, const DyadicCube& q) const override;

 private:
  Map map_;
};

// Operators act on whole-grid fields in root Z-order.
using Operator = std::function<Field(const Field&)>;

Operator identity_operator();
// Average over the generation-`level` cube containing each cell.
Operator dyadic_average_operator(const RootGeometry& g, int level);
// Mean over the (2 radius + 1)^n box of cells around each cell, zero outside.
Operator box_convolution_operator(const RootGeometry& g, int radius);
// Dyadic maximal function over the root cube.
Operator maximal_operator(const RootGeometry& g);

// Cells of the concentric dilate alpha*Q, by cell center, clipped to the root.
std::vector<std::uint64_t> dilate_cells(const RootGeometry& g, const DyadicCube& q, double alpha);

// f_Q = |T(f chi_{alpha Q})| on Q and f_{P,Q} = |T(f chi_{alpha Q}) - T(f chi_{alpha P})|
// on P. The l^r constant 1 (r <= 1) follows from the triangle inequality.
class OperatorLocalizationFamily : public CubeFamily {
 public:
  OperatorLocalizationFamily(const GridFunction& f, Operator t, double alpha, double r);
  std::string kind() const override { return "operator"; }

  // T(f chi_{alpha Q}) restricted to Q, signed.
  const Field& localized(const DyadicCube& q) const;
  // sup over P in D(Q) containing x of the oscillation of T_Q - T_P on P.
  Field operator_sharp(const DyadicCube& q) const;

 protected:
  Field compute_f(const DyadicCube& q) const override;
  Field compute_diff(const DyadicCube& p, const DyadicCube& q) const override;

 private:
  Field f_morton_;
  Operator t_;
  double alpha_;
  mutable std::shared_mutex mutex_;
  mutable std::map<DyadicCube, std::unique_ptr<const Field>> localized_;
};

// Families built from nonnegative per-cell scale-band energies E[x][j], j = 1..depth,
// where band j covers the scales [side 2^-j, side 2^-j+1):
//   f_Q(x) = (sum_{j > k_Q} E[x][j])^(1/r),  f_{P,Q}(x) = (sum_{k_Q < j <= k_P} E[x][j])^(1/r).
// Band sums are disjoint, so the l^r condition holds with constant 1.
class BandFamily : public CubeFamily {
 public:
  // energy is indexed [root Z-order cell][j - 1].
  BandFamily(const RootGeometry& g, std::vector<std::vector<double>> energy, double r,
             std::string kind);
  std::string kind() const override { return kind_; }
  const std::vector<std::vector<double>>& energy() const { return energy_; }

 protected:
  Field compute_f(const DyadicCube& q) const override;
  Field compute_diff(const DyadicCube& p, const DyadicCube& q) const override;

 private:
  std::vector<std::vector<double>> energy_;
  std::string kind_;
};

// f_Q = |f - c(Q)| on Q, f_{P,Q} = |c(P) - c(Q)| with c the center of the
// shortest window at lambda (an optimal center of local mean oscillation).
class LocalMeanOscillationFamily : public CubeFamily {
 public:
  LocalMeanOscillationFamily(const GridFunction& f, double lambda = 0.25);
  std::string kind() const override { return "local-mean-oscillation"; }
  double center(const DyadicCube& q) const;

 protected:
  Field compute_f(const DyadicCube& q) const override;
  Field compute_diff(const DyadicCube& p, const DyadicCube& q) const override;

 private:
  Field f_morton_;
  double lambda_;
};

// Sharp maximal function of the family relative to Q, local to Q.
Field sharp_maximal(const CubeFamily& fam, const DyadicCube& q, OscillationMode mode);

// Generic helper: given o(R) for every subcube R of a cube (levels 0..H, Z-order
// within each level), the field x -> max over R containing x of o(R).
Field chain_max(const std::vector<std::vector<double>>& per_level, int dim);

struct EllrResult {
  double constant = 0.0;  // measured C_r (exact in exhaustive mode, a lower bound otherwise)
  bool exhaustive = false;
  std::uint64_t chains = 0;
  std::uint64_t witness_leaf = 0;  // local Z-order within the root
  std::vector<DyadicCube> witness_chain;
};

// Exhaustive mode enumerates every chain through every leaf; it is limited
// to depth <= 6 below q in one dimension. Sampled mode draws `samples`
// (leaf, chain) pairs from SplitMix64(seed).
EllrResult check_ellr(const CubeFamily& fam, const DyadicCube& q, double r, bool exhaustive,
                      std::uint64_t samples = 0, std::uint64_t seed = 0);

struct MajorizationResult {
  bool ok = true;
  double worst_ratio = 0.0;  // max |f_{P,Q}| / (|f_P| + |f_Q|)
  std::uint64_t pairs = 0;
};

// Every pair (P, Q') with P in D(Q') in D(q) when the tree has at most
// `max_pairs` pairs, otherwise `max_pairs` sampled pairs.
MajorizationResult check_majorization(const CubeFamily& fam, const DyadicCube& q,
                                      std::uint64_t max_pairs = 200000, std::uint64_t seed = 0);

}  // namespace sparsedom
