#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace sparsedom {

inline constexpr int kMaxDim = 3;

using CellIndex = std::array<std::uint32_t, kMaxDim>;

struct DyadicCube {
  int generation = 0;
  CellIndex index{};

  auto operator<=>(const DyadicCube&) const = default;
};

// The root cube Q0 = origin + [0, side)^n, subdivided down to generation
// `depth` (the leaf cells). Measures are products of integer cell counts and
// the leaf cell measure, so set arithmetic never needs a tolerance.
struct RootGeometry {
  int dim = 1;
  double side = 1.0;
  std::array<double, kMaxDim> origin{};
  int depth = 1;

  void validate() const;

  std::uint32_t axis_cells() const { return std::uint32_t{1} << depth; }
  std::uint64_t leaf_count() const { return std::uint64_t{1} << (dim * depth); }
  double cell_side() const;
  double cell_measure() const;
  double side_at(int generation) const;

  DyadicCube root() const { return DyadicCube{}; }
  // Number of leaf cells inside a cube of the given generation.
  std::uint64_t cell_count(int generation) const {
    return std::uint64_t{1} << (dim * (depth - generation));
  }
  std::uint64_t cell_count(const DyadicCube& q) const { return cell_count(q.generation); }
  double measure(const DyadicCube& q) const;

  bool operator==(const RootGeometry&) const = default;
};

// Z-order code of an index with `bits` bits per axis. Axis 0 is the most
// significant bit of each child number, matching children().
std::uint64_t morton_encode(const CellIndex& index, int dim, int bits);
CellIndex morton_decode(std::uint64_t code, int dim, int bits);

// Leaf cells of every cube form a contiguous range of the root's Z-order.
// Field values local to a cube are stored in that order.
std::uint64_t morton_offset(const RootGeometry& g, const DyadicCube& q);

// Row-major position of a leaf cell (axis 0 most significant), the order
// used by GridFunction storage and files.
std::uint64_t rowmajor_index(const RootGeometry& g, const CellIndex& leaf);
CellIndex rowmajor_leaf(const RootGeometry& g, std::uint64_t flat);

bool in_tree(const RootGeometry& g, const DyadicCube& q);
void require_in_tree(const RootGeometry& g, const DyadicCube& q);

// Child c sets bit (n-1-d) of c from axis d.
std::vector<DyadicCube> children(const RootGeometry& g, const DyadicCube& q);
DyadicCube parent(const DyadicCube& q, int dim);
DyadicCube ancestor(const DyadicCube& q, int generation, int dim);
// True when `inner` is `outer` or one of its descendants.
bool contains(const DyadicCube& outer, const DyadicCube& inner, int dim);
// The i-th (in Z-order) descendant of q lying `level` generations below it.
DyadicCube descendant(const RootGeometry& g, const DyadicCube& q, int level, std::uint64_t i);
DyadicCube leaf_cube(const RootGeometry& g, const CellIndex& leaf);

// Generation-k cube containing x, half-open convention.
DyadicCube locate(const RootGeometry& g, const std::array<double, kMaxDim>& x, int generation);

// Lower corner of a cube in ambient coordinates.
std::array<double, kMaxDim> lower_corner(const RootGeometry& g, const DyadicCube& q);

// "k:i1,...,in"
std::string to_address(const DyadicCube& q, int dim);
DyadicCube parse_address(std::string_view address, int dim);

struct ContractingFamily {
  std::vector<std::vector<DyadicCube>> generations;

  std::size_t size() const;
};

struct Verdict {
  bool ok = true;
  std::string message;
};

Verdict validate_contracting(const RootGeometry& g, const ContractingFamily& fam);

// children[k][i]: indices into generations[k+1] of the cubes inside generations[k][i].
// Assumes the family is contracting.
std::vector<std::vector<std::vector<std::size_t>>> nest_children(const RootGeometry& g,
                                                                 const ContractingFamily& fam);

struct SparseFamily {
  ContractingFamily base;
  double eta = 0.5;
  // e_cells[k][i]: number of leaf cells of E_P for P = generations[k][i].
  std::vector<std::vector<std::uint64_t>> e_cells;
  // children[k][i]: indices into generations[k+1] of the cubes inside P.
  std::vector<std::vector<std::vector<std::size_t>>> children;

  const DyadicCube& root() const { return base.generations.front().front(); }
};

struct SparseViolation {
  std::string message;
  DyadicCube cube;
  double ratio = 0.0;
};

std::variant<SparseFamily, SparseViolation> validate_eta_sparse(
    const RootGeometry& g, const ContractingFamily& fam, double eta);

// Membership test for E_P given the cubes of the next generation inside P.
bool in_e_set(const RootGeometry& g, const SparseFamily& fam, std::size_t k, std::size_t i,
              std::uint64_t root_morton_leaf);

struct OverlapDistribution {
  // Sum of indicators over the family, local Z-order of the family root.
  std::vector<int> overlap;
  // above[a] = |{overlap > a}| for a = 0..max overlap.
  std::vector<double> above;
  std::vector<double> bound;
  bool ok = true;
};

OverlapDistribution overlap_distribution(const RootGeometry& g, const SparseFamily& fam);

}  // namespace sparsedom
