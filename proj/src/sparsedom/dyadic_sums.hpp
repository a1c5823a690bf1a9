#pragma once

#include <map>
#include <optional>
#include <vector>

#include "sparsedom/dyadic.hpp"
#include "sparsedom/family.hpp"
#include "sparsedom/good_lambda.hpp"
#include "sparsedom/gridfn.hpp"
#include "sparsedom/sparse_engine.hpp"

namespace sparsedom {

// Nonnegative coefficients alpha_R on the cubes of the tree; absent means 0.
class CubeCoefficients {
 public:
  explicit CubeCoefficients(const RootGeometry& g);

  const RootGeometry& geometry() const { return geometry_; }
  double get(const DyadicCube& r) const;
  void set(const DyadicCube& r, double value);
  const std::map<DyadicCube, double>& entries() const { return values_; }

  // levels[k][z] = alpha of the generation-k cube with Z-order code z.
  std::vector<std::vector<double>> dense() const;
  CubeCoefficients pow(double exponent) const;
  CubeCoefficients scaled(double c) const;

 private:
  RootGeometry geometry_;
  std::map<DyadicCube, double> values_;
};

// max over Q' in D(q) of sum_{R in D(Q')} alpha_R^delta |R| / (alpha_{Q'}^delta |Q'|);
// infinite when some alpha_{Q'} = 0 has a nonzero subtree.
double smallness_constant(const CubeCoefficients& alpha, double delta,
                          std::optional<DyadicCube> q = std::nullopt);

// f_{Q'} = sum_{R in D(Q')} alpha_R chi_R with canonical differences, which are
// constant on P.
class DyadicSumsFamily : public CubeFamily {
 public:
  explicit DyadicSumsFamily(const CubeCoefficients& alpha);
  std::string kind() const override { return "dyadic-sums"; }

 protected:
  Field compute_f(const DyadicCube& q) const override;
  Field compute_diff(const DyadicCube& p, const DyadicCube& q) const override;

 private:
  std::vector<std::vector<double>> levels_;
};

struct SumSparseReport {
  DominationReport engine;
  double smallness = 0.0;
  double delta = 1.0;
  // max over leaves of sum_R alpha_R chi_R / sum_{P in F} alpha_P chi_P
  double constant = 0.0;
  // 6 (2^{n+2} C / (1 - eta))^{1/delta}, the proof's chain with the measured C
  double reference_bound = 0.0;
  // (2^{n+3} C_measured / (1 - eta))^{1/delta}, reported for comparison
  double chebyshev_factor = 0.0;
  bool passed = true;
  std::vector<std::string> failures;
};

SumSparseReport sum_sparse(const CubeCoefficients& alpha, double delta, double eta,
                           std::optional<DyadicCube> q = std::nullopt);

struct SAndM {
  GridFunction s;
  GridFunction m;
};

// Per-leaf chain sums (sum alpha^q)^{1/q} and chain maxima over the whole tree.
SAndM s_and_m(const CubeCoefficients& alpha, double q);

struct Potential {
  GridFunction t;      // T_{q,gamma}
  GridFunction m;      // M_gamma
  CubeCoefficients alpha;
};

// alpha_Q = mu(Q) / |Q|^{1 - gamma/n}.
Potential potential(const DiscreteMeasure& mu, double q, double gamma);

GoodLambdaCurve good_lambda_sums(const CubeCoefficients& alpha, double q, double delta,
                                 const std::vector<double>& lambdas,
                                 const std::vector<double>& eps_grid);

}  // namespace sparsedom
