#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sparsedom/family.hpp"
#include "sparsedom/gridfn.hpp"
#include "sparsedom/sparse_engine.hpp"

namespace sparsedom {

// Discrete L^2 projection onto cell averages of polynomials of total degree
// <= m. The basis depends only on how many levels a cube has below it, so it
// is built once per level count (in local coordinates u in [-1, 1]^n).
class PolynomialProjector {
 public:
  PolynomialProjector(int dim, int degree);

  int dim() const { return dim_; }
  int degree() const { return degree_; }
  // C(n + m, m)
  std::size_t space_dimension() const;

  // Projection of a local field (local Z-order, 2^{n h} cells). When the cube
  // has fewer than m + 1 cells per axis, strict mode throws; otherwise the
  // projection is onto the (smaller) span of the representable monomials.
  Field project(std::span<const double> v, bool strict = true) const;

  // Orthonormal basis (mean inner product), one vector per basis function.
  const std::vector<Field>& basis(int levels, bool strict = true) const;

 private:
  int dim_;
  int degree_;
  mutable std::mutex mutex_;
  mutable std::map<int, std::unique_ptr<const std::vector<Field>>> cache_;
};

// P_Q f on Q, local Z-order.
Field poly_project(const GridFunction& f, const DyadicCube& q, int m);

// Exponent vectors of the monomials of total degree <= m, by degree.
std::vector<std::array<int, kMaxDim>> monomials(int dim, int degree);

// f_Q = f - P_Q f, f_{R,Q} = P_R f - P_Q f.
class PoincareFamily : public CubeFamily {
 public:
  PoincareFamily(const GridFunction& f, int m);
  std::string kind() const override { return "poincare"; }
  const PolynomialProjector& projector() const { return projector_; }
  // <|f - P_Q f|>_{1,Q}
  double mean_residual(const DyadicCube& q) const;

 protected:
  Field compute_f(const DyadicCube& q) const override;
  Field compute_diff(const DyadicCube& p, const DyadicCube& q) const override;

 private:
  Field f_morton_;
  PolynomialProjector projector_;
};

// f_Q = M_Q(f - P_Q f), f_{R,Q} = f_R - f_Q.
class MaximalPoincareFamily : public CubeFamily {
 public:
  MaximalPoincareFamily(const GridFunction& f, int m);
  std::string kind() const override { return "poincare-maximal"; }

 protected:
  Field compute_f(const DyadicCube& q) const override;
  Field compute_diff(const DyadicCube& p, const DyadicCube& q) const override;

 private:
  PoincareFamily residuals_;
};

struct PoincareReport {
  DominationReport engine;
  int m = 0;
  // max over leaves of |f - P_Q f| / sum_{R in F} <|f - P_R f|>_{1,R} chi_R
  double constant = 0.0;
  // max over all R in D(Q) of gamma_R / <|f - P_R f|>_{1,R}: the measured
  // C_{n,m}/(1-eta); nondecreasing in eta.
  double coefficient_constant = 0.0;
  // sup over tested cubes of ||P_R f||_inf / <|f|>_{1,R}
  double projection_sup_constant = 0.0;
  bool passed = true;
  std::vector<std::string> failures;
};

PoincareReport poincare_sparse(const GridFunction& f, const DyadicCube& q, int m, double eta);

using Functional = std::function<double(const DyadicCube&)>;

// a(Q) = <|f - P_Q f|>_{1,Q}
Functional oscillation_functional(const GridFunction& f, int m);
// a(Q) = scale |Q|^exponent
Functional power_functional(const RootGeometry& g, double scale, double exponent);
// a(Q) = table[Q]; cubes absent from the table are an error.
Functional table_functional(std::map<DyadicCube, double> table);
// a(Q) = side(Q) <|grad f|>_{1,Q}, forward differences (backward on the last cell).
Functional gradient_functional(const GridFunction& f);

struct SmallnessBudget {
  // Exact maximisation over all disjoint subfamilies (a knapsack over the
  // occupied measure) for cubes with at most this many cells; above it the
  // search below gives a lower bound.
  std::uint64_t exact_cells = 4096;
  std::uint64_t random_antichains = 64;
  std::uint64_t seed = 0;
  bool greedy = true;
  // Additional candidate families, each a list of disjoint cubes inside the root.
  std::vector<std::vector<DyadicCube>> extra;
};

struct SmallnessResult {
  double norm = 0.0;
  bool exact = false;
  DyadicCube witness_top;
  std::vector<DyadicCube> witness_family;
  std::uint64_t candidates = 0;
};

// Largest value over tested (Q', {Q_j}) with Q' in D(q) of
//   ((1/w(Q')) sum_j a(Q_j)^p w(Q_j))^{1/p} / ((sum_j |Q_j| / |Q'|)^{1/s} a(Q')).
SmallnessResult smallness_norm(const Functional& a, const Weight& w, double p, double s,
                               const DyadicCube& q, const SmallnessBudget& budget = {});

// Brute force over every antichain of every Q' (test oracle; tiny trees only).
double smallness_norm_bruteforce(const Functional& a, const Weight& w, double p, double s,
                                 const DyadicCube& q);

struct NormSpec {
  enum class Kind { WeightedLp, Ratio } kind = Kind::WeightedLp;
  double p = 1.0;
  double s = 1.0;  // WeightedLp: the SD exponent
  double r = 2.0;  // Ratio: the weight exponent, r > 1
};

enum class SelfImproveMode { Pointwise, LocalMaximal };

struct SelfImproveReport {
  bool vacuous = false;  // the hypothesis <|f - P_R f|> <= a(R) failed somewhere
  std::string vacuous_reason;
  SelfImproveMode mode = SelfImproveMode::Pointwise;
  double lhs = 0.0;
  double k = 0.0;                // max LHS field / sum_R a(R) chi_R
  double sparse_side = 0.0;      // sum_k || sum_{R in F_k} a(R) chi_R ||_X
  double a_side = 0.0;           // a(Q) sum_{k < K} phi(2^-k)
  double rhs = 0.0;              // k * a_side
  double geometric_factor = 0.0; // sum_{k >= 0} phi(2^-k)
  double integral_factor = 0.0;  // int_0^1 phi dt/t + phi(1): (s+1)||a|| or p r' + 1
  double normalized = 0.0;       // lhs / (k a(Q) integral_factor)
  double measured_norm = 0.0;    // ||a||_{SD}, WeightedLp only
  bool norm_exact = false;
  bool passed = true;
  std::vector<std::string> failures;
};

SelfImproveReport verify_self_improve(const GridFunction& f, const Functional& a,
                                      const DyadicCube& q, int m, const NormSpec& norm,
                                      const Weight& w, SelfImproveMode mode,
                                      const SmallnessBudget& budget = {});

}  // namespace sparsedom
