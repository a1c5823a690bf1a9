#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "sparsedom/dyadic.hpp"

namespace sparsedom {

// Values on the leaf cells of a cube, in the cube's local Z-order.
using Field = std::vector<double>;

// Leaf-cell-constant function on the root cube. `values` is row-major.
struct GridFunction {
  RootGeometry geometry;
  std::vector<double> values;

  GridFunction() = default;
  explicit GridFunction(const RootGeometry& g);
  GridFunction(const RootGeometry& g, std::vector<double> row_major);

  // Whole grid in root Z-order.
  Field morton() const;
  static GridFunction from_morton(const RootGeometry& g, const Field& z_order);
  // Restriction to q in q's local Z-order.
  Field on_cube(const DyadicCube& q) const;
};

struct DiscreteMeasure {
  GridFunction masses;

  explicit DiscreteMeasure(GridFunction m);
  double mass(const DyadicCube& q) const;
};

struct Weight {
  GridFunction w;

  explicit Weight(GridFunction values);
  double integral(const DyadicCube& q) const;
};

// root Z-order position -> row-major position. Cached per (dim, depth).
const std::vector<std::uint64_t>& morton_to_rowmajor(const RootGeometry& g);

// Slice of a root Z-order field belonging to q.
std::span<const double> cube_span(const RootGeometry& g, const Field& root_field,
                                  const DyadicCube& q);

// Relative position of sub inside q's local Z-order, and its length.
std::pair<std::uint64_t, std::uint64_t> local_range(const RootGeometry& g, const DyadicCube& q,
                                                    const DyadicCube& sub);

double p_average(std::span<const double> v, double p);
double p_average(const GridFunction& f, const DyadicCube& q, double p);

// Right-continuous step function t -> f*(t) stored as (start, value) pairs.
struct Rearrangement {
  std::vector<std::pair<double, double>> breakpoints;
  double total = 0.0;

  double query(double t) const;
};

Rearrangement rearrangement(std::span<const double> v, double cell_measure);
Rearrangement rearrangement(const GridFunction& f);

// f*(t) for equal cells without building the whole step function.
double rearrangement_at(std::span<const double> v, double cell_measure, double t);

struct LocalOscillation {
  double omega = 0.0;
  double center = 0.0;
};

LocalOscillation local_oscillation(std::span<const double> v, double lambda);
LocalOscillation local_oscillation(const GridFunction& f, const DyadicCube& q, double lambda);

struct OscillationMode {
  bool sup = true;
  double q = 1.0;

  static OscillationMode supremum() { return {true, 1.0}; }
  static OscillationMode mean(double q) { return {false, q}; }
};

double oscillation(std::span<const double> v, OscillationMode mode);
double oscillation(const GridFunction& f, const DyadicCube& q, OscillationMode mode);

// M_Q f on the cube whose local field is v (local Z-order in, local Z-order out).
Field dyadic_maximal(std::span<const double> v, int dim);
Field dyadic_maximal(const GridFunction& f, const DyadicCube& q);

// For every subcube R of a cube (levels 0..H below it), the mean of v over R.
// means[j][i] is the i-th generation-j subcube in Z-order.
std::vector<std::vector<double>> subcube_means(std::span<const double> v, int dim);

}  // namespace sparsedom
