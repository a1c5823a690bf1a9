#include "sparsedom/dyadic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "sparsedom/errors.hpp"

namespace sparsedom {

void RootGeometry::validate() const {
  if (dim < 1 || dim > kMaxDim)
    throw InvalidArgument("dimension must be between 1 and " + std::to_string(kMaxDim));
  if (!(side > 0.0) || !std::isfinite(side)) throw InvalidArgument("side must be positive");
  if (depth < 1) throw InvalidArgument("depth must be at least 1");
  if (dim * depth > 26)
    throw InvalidArgument("too many leaf cells: dim * depth must not exceed 26");
  for (int d = 0; d < dim; ++d)
    if (!std::isfinite(origin[d])) throw InvalidArgument("origin must be finite");
}

double RootGeometry::cell_side() const { return std::ldexp(side, -depth); }

double RootGeometry::cell_measure() const { return std::pow(cell_side(), dim); }

double RootGeometry::side_at(int generation) const { return std::ldexp(side, -generation); }

double RootGeometry::measure(const DyadicCube& q) const {
  return static_cast<double>(cell_count(q)) * cell_measure();
}

std::uint64_t morton_encode(const CellIndex& index, int dim, int bits) {
  std::uint64_t code = 0;
  for (int b = 0; b < bits; ++b) {
    std::uint64_t child = 0;
    for (int d = 0; d < dim; ++d) child |= std::uint64_t{(index[d] >> b) & 1u} << (dim - 1 - d);
    code |= child << (dim * b);
  }
  return code;
}

CellIndex morton_decode(std::uint64_t code, int dim, int bits) {
  CellIndex index{};
  for (int b = 0; b < bits; ++b) {
    const std::uint64_t child = code >> (dim * b);
    for (int d = 0; d < dim; ++d)
      index[d] |= static_cast<std::uint32_t>((child >> (dim - 1 - d)) & 1u) << b;
  }
  return index;
}

std::uint64_t morton_offset(const RootGeometry& g, const DyadicCube& q) {
  return morton_encode(q.index, g.dim, q.generation) * g.cell_count(q);
}

std::uint64_t rowmajor_index(const RootGeometry& g, const CellIndex& leaf) {
  std::uint64_t flat = 0;
  for (int d = 0; d < g.dim; ++d) flat = flat * g.axis_cells() + leaf[d];
  return flat;
}

CellIndex rowmajor_leaf(const RootGeometry& g, std::uint64_t flat) {
  CellIndex leaf{};
  for (int d = g.dim - 1; d >= 0; --d) {
    leaf[d] = static_cast<std::uint32_t>(flat % g.axis_cells());
    flat /= g.axis_cells();
  }
  return leaf;
}

bool in_tree(const RootGeometry& g, const DyadicCube& q) {
  if (q.generation < 0 || q.generation > g.depth) return false;
  for (int d = 0; d < kMaxDim; ++d) {
    if (d >= g.dim) {
      if (q.index[d] != 0) return false;
    } else if (q.index[d] >= (std::uint32_t{1} << q.generation)) {
      return false;
    }
  }
  return true;
}

void require_in_tree(const RootGeometry& g, const DyadicCube& q) {
  if (!in_tree(g, q)) throw DomainError("cube " + to_address(q, g.dim) + " is not in the tree");
}

std::vector<DyadicCube> children(const RootGeometry& g, const DyadicCube& q) {
  require_in_tree(g, q);
  if (q.generation >= g.depth) throw PreconditionError("leaf has no children");
  std::vector<DyadicCube> out(std::size_t{1} << g.dim);
  for (std::size_t c = 0; c < out.size(); ++c) {
    out[c].generation = q.generation + 1;
    for (int d = 0; d < g.dim; ++d)
      out[c].index[d] = 2 * q.index[d] + static_cast<std::uint32_t>((c >> (g.dim - 1 - d)) & 1u);
  }
  return out;
}

DyadicCube parent(const DyadicCube& q, int dim) {
  if (q.generation == 0) throw PreconditionError("root has no parent");
  return ancestor(q, q.generation - 1, dim);
}

DyadicCube ancestor(const DyadicCube& q, int generation, int dim) {
  if (generation > q.generation || generation < 0)
    throw PreconditionError("ancestor generation out of range");
  DyadicCube a{generation, {}};
  const int shift = q.generation - generation;
  for (int d = 0; d < dim; ++d) a.index[d] = q.index[d] >> shift;
  return a;
}

bool contains(const DyadicCube& outer, const DyadicCube& inner, int dim) {
  if (inner.generation < outer.generation) return false;
  const int shift = inner.generation - outer.generation;
  for (int d = 0; d < dim; ++d)
    if ((inner.index[d] >> shift) != outer.index[d]) return false;
  return true;
}

DyadicCube descendant(const RootGeometry& g, const DyadicCube& q, int level, std::uint64_t i) {
  DyadicCube r{q.generation + level, {}};
  const CellIndex rel = morton_decode(i, g.dim, level);
  for (int d = 0; d < g.dim; ++d) r.index[d] = (q.index[d] << level) + rel[d];
  return r;
}

DyadicCube leaf_cube(const RootGeometry& g, const CellIndex& leaf) {
  return DyadicCube{g.depth, leaf};
}

DyadicCube locate(const RootGeometry& g, const std::array<double, kMaxDim>& x, int generation) {
  if (generation < 0 || generation > g.depth) throw InvalidArgument("generation out of range");
  DyadicCube q{generation, {}};
  const double n_cells = std::ldexp(1.0, generation);
  for (int d = 0; d < g.dim; ++d) {
    const double u = (x[d] - g.origin[d]) / g.side;
    if (!(u >= 0.0 && u < 1.0)) throw DomainError("point outside the root cube");
    q.index[d] = std::min(static_cast<std::uint32_t>(std::floor(u * n_cells)),
                          (std::uint32_t{1} << generation) - 1);
  }
  return q;
}

std::array<double, kMaxDim> lower_corner(const RootGeometry& g, const DyadicCube& q) {
  std::array<double, kMaxDim> c{};
  const double s = g.side_at(q.generation);
  for (int d = 0; d < g.dim; ++d) c[d] = g.origin[d] + s * q.index[d];
  return c;
}

std::string to_address(const DyadicCube& q, int dim) {
  std::string s = std::to_string(q.generation) + ":";
  for (int d = 0; d < dim; ++d) {
    if (d) s += ',';
    s += std::to_string(q.index[d]);
  }
  return s;
}

DyadicCube parse_address(std::string_view address, int dim) {
  const auto fail = [&] { return ParseError("malformed cube address '" + std::string(address) + "'"); };
  DyadicCube q;
  const char* p = address.data();
  const char* end = p + address.size();
  auto r = std::from_chars(p, end, q.generation);
  if (r.ec != std::errc{} || r.ptr == end || *r.ptr != ':') throw fail();
  p = r.ptr + 1;
  for (int d = 0; d < dim; ++d) {
    r = std::from_chars(p, end, q.index[d]);
    if (r.ec != std::errc{}) throw fail();
    p = r.ptr;
    if (d + 1 < dim) {
      if (p == end || *p != ',') throw fail();
      ++p;
    }
  }
  if (p != end) throw fail();
  return q;
}

std::size_t ContractingFamily::size() const {
  std::size_t n = 0;
  for (const auto& gen : generations) n += gen.size();
  return n;
}

namespace {

struct Span {
  std::uint64_t begin, end;
  std::size_t pos;
};

std::vector<Span> spans_of(const RootGeometry& g, const std::vector<DyadicCube>& gen) {
  std::vector<Span> s;
  s.reserve(gen.size());
  for (std::size_t i = 0; i < gen.size(); ++i) {
    const std::uint64_t b = morton_offset(g, gen[i]);
    s.push_back({b, b + g.cell_count(gen[i]), i});
  }
  std::sort(s.begin(), s.end(), [](const Span& a, const Span& b) { return a.begin < b.begin; });
  return s;
}

// Index of the span containing [b, e), or npos.
std::size_t enclosing(const std::vector<Span>& spans, std::uint64_t b, std::uint64_t e) {
  auto it = std::upper_bound(spans.begin(), spans.end(), b,
                             [](std::uint64_t v, const Span& s) { return v < s.begin; });
  if (it == spans.begin()) return static_cast<std::size_t>(-1);
  --it;
  if (it->begin <= b && e <= it->end) return it->pos;
  return static_cast<std::size_t>(-1);
}

}  // namespace

Verdict validate_contracting(const RootGeometry& g, const ContractingFamily& fam) {
  if (fam.generations.empty() || fam.generations.front().size() != 1)
    return {false, "first generation must consist of exactly one cube"};
  std::vector<Span> prev;
  for (std::size_t k = 0; k < fam.generations.size(); ++k) {
    const auto& gen = fam.generations[k];
    for (const auto& q : gen)
      if (!in_tree(g, q)) return {false, "cube " + to_address(q, g.dim) + " is not in the tree"};
    auto spans = spans_of(g, gen);
    for (std::size_t i = 1; i < spans.size(); ++i) {
      if (spans[i].begin < spans[i - 1].end)
        return {false, "generation " + std::to_string(k) + " is not pairwise disjoint: " +
                           to_address(gen[spans[i - 1].pos], g.dim) + " and " +
                           to_address(gen[spans[i].pos], g.dim)};
    }
    if (k > 0) {
      for (const auto& q : gen) {
        const std::uint64_t b = morton_offset(g, q);
        const std::size_t host = enclosing(prev, b, b + g.cell_count(q));
        if (host == static_cast<std::size_t>(-1))
          return {false, "generation " + std::to_string(k) + " is not nested: " +
                             to_address(q, g.dim) + " lies outside the previous union"};
        if (fam.generations[k - 1][host].generation >= q.generation)
          return {false, "cube " + to_address(q, g.dim) + " in generation " + std::to_string(k) +
                             " is not a strict descendant"};
      }
    }
    prev = std::move(spans);
  }
  return {};
}

std::vector<std::vector<std::vector<std::size_t>>> nest_children(const RootGeometry& g,
                                                                 const ContractingFamily& fam) {
  const std::size_t K = fam.generations.size();
  std::vector<std::vector<std::vector<std::size_t>>> children(K);
  for (std::size_t k = 0; k < K; ++k) {
    children[k].assign(fam.generations[k].size(), {});
    if (k + 1 == K) continue;
    const auto spans = spans_of(g, fam.generations[k]);
    const auto& next = fam.generations[k + 1];
    for (std::size_t j = 0; j < next.size(); ++j) {
      const std::uint64_t b = morton_offset(g, next[j]);
      const std::size_t host = enclosing(spans, b, b + g.cell_count(next[j]));
      if (host == static_cast<std::size_t>(-1)) throw PreconditionError("family is not nested");
      children[k][host].push_back(j);
    }
  }
  return children;
}

std::variant<SparseFamily, SparseViolation> validate_eta_sparse(const RootGeometry& g,
                                                                const ContractingFamily& fam,
                                                                double eta) {
  if (!(eta > 0.0 && eta < 1.0)) throw InvalidArgument("eta must lie in (0,1)");
  if (auto v = validate_contracting(g, fam); !v.ok)
    return SparseViolation{v.message, fam.generations.empty() ? DyadicCube{} : fam.generations[0][0], 0.0};
  SparseFamily sf;
  sf.base = fam;
  sf.eta = eta;
  sf.children = nest_children(g, fam);
  const std::size_t K = fam.generations.size();
  sf.e_cells.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& gen = fam.generations[k];
    sf.e_cells[k].resize(gen.size());
    for (std::size_t i = 0; i < gen.size(); ++i) {
      const std::uint64_t total = g.cell_count(gen[i]);
      std::uint64_t covered = 0;
      for (std::size_t j : sf.children[k][i]) covered += g.cell_count(fam.generations[k + 1][j]);
      sf.e_cells[k][i] = total - covered;
      const double ratio = static_cast<double>(sf.e_cells[k][i]) / static_cast<double>(total);
      if (ratio < eta)
        return SparseViolation{"cube " + to_address(gen[i], g.dim) + " has |E_P|/|P| = " +
                                   std::to_string(ratio) + " < eta",
                               gen[i], ratio};
    }
  }
  return sf;
}

bool in_e_set(const RootGeometry& g, const SparseFamily& fam, std::size_t k, std::size_t i,
              std::uint64_t leaf) {
  const DyadicCube& p = fam.base.generations[k][i];
  const std::uint64_t b = morton_offset(g, p);
  if (leaf < b || leaf >= b + g.cell_count(p)) return false;
  if (k + 1 >= fam.base.generations.size()) return true;
  for (std::size_t j : fam.children[k][i]) {
    const DyadicCube& c = fam.base.generations[k + 1][j];
    const std::uint64_t cb = morton_offset(g, c);
    if (leaf >= cb && leaf < cb + g.cell_count(c)) return false;
  }
  return true;
}

OverlapDistribution overlap_distribution(const RootGeometry& g, const SparseFamily& fam) {
  OverlapDistribution out;
  const DyadicCube& root = fam.root();
  const std::uint64_t base = morton_offset(g, root);
  const std::uint64_t n = g.cell_count(root);
  std::vector<int> delta(n + 1, 0);
  for (const auto& gen : fam.base.generations)
    for (const auto& p : gen) {
      const std::uint64_t b = morton_offset(g, p) - base;
      ++delta[b];
      --delta[b + g.cell_count(p)];
    }
  out.overlap.resize(n);
  int run = 0, peak = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    run += delta[i];
    out.overlap[i] = run;
    peak = std::max(peak, run);
  }
  std::vector<std::uint64_t> histogram(static_cast<std::size_t>(peak) + 1, 0);
  for (int v : out.overlap) ++histogram[static_cast<std::size_t>(v)];
  const double cell = g.cell_measure();
  const double q_measure = g.measure(root);
  std::uint64_t above = n;
  for (int a = 0; a <= peak; ++a) {
    above -= histogram[static_cast<std::size_t>(a)];
    out.above.push_back(static_cast<double>(above) * cell);
    const double bound = std::pow(1.0 - fam.eta, a - 1) * q_measure;
    out.bound.push_back(bound);
    // The measures are exact; the slack only absorbs rounding in pow().
    if (out.above.back() > bound * (1.0 + 1e-12)) out.ok = false;
  }
  return out;
}

}  // namespace sparsedom
