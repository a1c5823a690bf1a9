#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sparsedom/dyadic.hpp"
#include "sparsedom/family.hpp"
#include "sparsedom/gridfn.hpp"
#include "sparsedom/sparse_engine.hpp"

namespace sparsedom {

using Point = std::array<double, kMaxDim>;

// A kernel phi on R^n with decay |phi(x)| <= (1+|x|)^{-n-eps} and Hoelder
// regularity of order delta; phi is treated as zero beyond |x| > radius().
class HormanderKernel {
 public:
  virtual ~HormanderKernel() = default;
  virtual std::string name() const = 0;
  virtual double epsilon() const = 0;
  virtual double delta() const = 0;
  virtual double radius() const = 0;
  virtual double value(const Point& x, int dim) const = 0;
  // int over the box [lo, hi] of phi_t(z) = t^{-n} phi(z / t). The default is
  // tensor Gauss-Legendre on the box.
  virtual double box_integral(const Point& lo, const Point& hi, int dim, double t) const;
};

// c (G_s1 - G_s2) with G_s the centered Gaussian density of standard deviation s.
class GaussianDifferenceKernel : public HormanderKernel {
 public:
  GaussianDifferenceKernel(double sigma1 = 0.5, double sigma2 = 1.0, double scale = 0.25);
  std::string name() const override { return "gaussian-difference"; }
  double epsilon() const override { return 0.5; }
  double delta() const override { return 1.0; }
  double radius() const override { return 9.0 * sigma2_; }
  double value(const Point& x, int dim) const override;
  double box_integral(const Point& lo, const Point& hi, int dim, double t) const override;

 private:
  double sigma1_, sigma2_, scale_;
};

class ZeroKernel : public HormanderKernel {
 public:
  std::string name() const override { return "zero"; }
  double epsilon() const override { return 0.5; }
  double delta() const override { return 1.0; }
  double radius() const override { return 1.0; }
  double value(const Point&, int) const override { return 0.0; }
  double box_integral(const Point&, const Point&, int, double) const override { return 0.0; }
};

// (1+|x|)^{-n-eps}: obeys the size bound but has no cancellation.
class PowerDecayKernel : public HormanderKernel {
 public:
  explicit PowerDecayKernel(double eps = 0.5, double radius = 16.0) : eps_(eps), radius_(radius) {}
  std::string name() const override { return "power-decay"; }
  double epsilon() const override { return eps_; }
  double delta() const override { return 1.0; }
  double radius() const override { return radius_; }
  double value(const Point& x, int dim) const override;

 private:
  double eps_, radius_;
};

std::unique_ptr<HormanderKernel> make_kernel(const std::string& name);

struct KernelValidation {
  bool ok = true;
  double integral = 0.0;     // int phi over the truncation box
  double size_worst = 0.0;   // max |phi(x)| (1+|x|)^{n+eps}
  double holder_worst = 0.0; // max |phi(x)-phi(x')| (1+min)^{n+eps+delta} / |x-x'|^delta
  std::uint64_t size_points = 0;
  std::uint64_t holder_pairs = 0;
  std::vector<std::string> violations;
};

KernelValidation kernel_validate(const HormanderKernel& k, int dim, std::uint64_t seed = 0);

// Band j = 1..L covers t in [l 2^-j, l 2^-j+1) (l = root side), represented
// by phi_t * f at the geometric midpoint t_j = l 2^-j sqrt 2 and weighted by
// int_band dt / t = ln 2. f is zero outside the root.
struct SquareEnergies {
  std::vector<std::vector<double>> conv;    // [root Z-order][j - 1] = phi_{t_j} * f
  std::vector<std::vector<double>> energy;  // ln 2 |conv|^q
  std::vector<double> tail_bound;           // per band, bound on the truncated part of the sum
  double q = 2.0;
};

SquareEnergies square_energies(const GridFunction& f, const HormanderKernel& k, double q);

// G^h_{q,phi}(f)(x) over the bands lying below h (all bands when h is empty).
double vertical_square(const GridFunction& f, const CellIndex& x, double q, const HormanderKernel& k,
                       std::optional<double> h = std::nullopt);

// sum_{m >= 1} 2^{-m eps} <|f|>_{1, 2^m P}^q, summed exactly until 2^m P covers
// the root, then with the geometric tail in closed form.
double dilation_tail(const GridFunction& f, const DyadicCube& p, double q, double eps);

struct SquareReport {
  DominationReport engine;
  // Smallest K with G^{l_Q}(x)^q <= K sum_P beta_P^q chi_P(x).
  double constant = 0.0;
  std::uint64_t witness_leaf = 0;
  KernelValidation kernel;
  EllrResult ellr;
  double tail_bound = 0.0;
  double weak_l1 = 0.0;  // sup_a a |{G > a}| / ||f||_1, diagnostic only
  bool passed = true;
  std::vector<std::string> failures;
};

SquareReport square_sparse(const GridFunction& f, const DyadicCube& q, double qexp,
                           const HormanderKernel& k, double eta);

}  // namespace sparsedom
