#include "sparsedom/sparse_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sparsedom/errors.hpp"
#include "sparsedom/parallel.hpp"

namespace sparsedom {

namespace {

constexpr double kRelTol = 1e-9;

double ratio_of(double num, double den) {
  if (num == 0.0) return 0.0;
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  return num / den;
}

struct CubeOutcome {
  CubeStats stats;
  CZResult cz;
  std::vector<std::string> failures;
};

CubeOutcome process_cube(const CubeFamily& fam, const DyadicCube& p, double eta,
                         OscillationMode mode) {
  const RootGeometry& g = fam.geometry();
  CubeOutcome out;
  const Field& fp = fam.f(p);
  const Field sharp = sharp_maximal(fam, p, mode);
  const double cell = g.cell_measure();
  const std::uint64_t cells = g.cell_count(p);
  const double t = static_cast<double>(cells) * cell * (1.0 - eta) / std::ldexp(1.0, g.dim + 2);
  out.stats.a1 = rearrangement_at(fp, cell, t);
  out.stats.a2 = rearrangement_at(sharp, cell, t);

  std::vector<char> omega(cells, 0);
  for (std::size_t i = 0; i < cells; ++i) {
    const bool o1 = std::fabs(fp[i]) > out.stats.a1;
    if (o1) ++out.stats.omega1_cells;
    omega[i] = o1 || sharp[i] > out.stats.a2;
    out.stats.omega_cells += static_cast<std::uint64_t>(omega[i]);
  }
  const double omega_cap = static_cast<double>(cells) * (1.0 - eta) / std::ldexp(1.0, g.dim + 1);
  if (static_cast<double>(out.stats.omega_cells) > omega_cap)
    out.failures.push_back("|Omega(P)| exceeds (1-eta)|P|/2^{n+1} at " + to_address(p, g.dim));

  if (out.stats.omega_cells > 0) {
    out.cz = cz_decompose(g, p, omega, 1.0 / std::ldexp(1.0, g.dim + 1));
    if (!out.cz.bounds_ok || !out.cz.total_ok || !out.cz.coverage_ok)
      out.failures.push_back("Calderon-Zygmund bounds fail at " + to_address(p, g.dim));
  }
  // On E_P the function stays below the first threshold.
  std::vector<char> covered(cells, 0);
  for (const auto& c : out.cz.selected) {
    const auto [off, len] = local_range(g, p, c);
    std::fill(covered.begin() + static_cast<std::ptrdiff_t>(off),
              covered.begin() + static_cast<std::ptrdiff_t>(off + len), 1);
  }
  for (std::size_t i = 0; i < cells; ++i)
    if (!covered[i] && std::fabs(fp[i]) > out.stats.a1) {
      out.failures.push_back("|f_P| exceeds its threshold on E_P at " + to_address(p, g.dim));
      break;
    }
  return out;
}

}  // namespace

CubeStats cube_stats(const CubeFamily& fam, const DyadicCube& p, double eta, OscillationMode mode) {
  return process_cube(fam, p, eta, mode).stats;
}

double SparseParams::threshold_fraction(int dim) const {
  return (1.0 - eta) / std::ldexp(1.0, dim + 2);
}

void SparseParams::validate() const {
  if (!(eta > 0.0 && eta < 1.0)) throw InvalidArgument("eta must lie in (0,1)");
  if (q && !(*q > 0.0 && std::isfinite(*q))) throw InvalidArgument("q must be positive");
}

CZResult cz_decompose(const RootGeometry& g, const DyadicCube& p, const std::vector<char>& omega,
                      double height) {
  const std::uint64_t cells = g.cell_count(p);
  if (omega.size() != cells) throw InvalidArgument("omega indicator has the wrong size");
  if (!(height > 0.0 && height < 1.0)) throw InvalidArgument("height must lie in (0,1)");
  std::vector<std::uint64_t> prefix(cells + 1, 0);
  for (std::size_t i = 0; i < cells; ++i) prefix[i + 1] = prefix[i] + (omega[i] ? 1 : 0);
  CZResult res;
  res.omega_cells = prefix[cells];
  if (static_cast<double>(res.omega_cells) > height * static_cast<double>(cells))
    throw PreconditionError("|Omega| exceeds height * |P|: the cube itself would be selected");

  const int h = g.depth - p.generation;
  // Depth-first over the subtree in Z-order so the output is sorted.
  struct Item {
    int level;
    std::uint64_t index;
  };
  std::vector<Item> stack;
  const std::uint64_t fan = std::uint64_t{1} << g.dim;
  for (std::uint64_t c = fan; c-- > 0;) stack.push_back({1, c});
  while (h > 0 && !stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    const std::uint64_t len = std::uint64_t{1} << (g.dim * (h - it.level));
    const std::uint64_t off = it.index * len;
    const std::uint64_t hit = prefix[off + len] - prefix[off];
    if (hit == 0) continue;
    if (static_cast<double>(hit) > height * static_cast<double>(len)) {
      res.selected.push_back(descendant(g, p, it.level, it.index));
      res.hits.push_back(hit);
      continue;
    }
    for (std::uint64_t c = fan; c-- > 0;) stack.push_back({it.level + 1, it.index * fan + c});
  }

  std::uint64_t total = 0, covered = 0;
  for (std::size_t j = 0; j < res.selected.size(); ++j) {
    const double len = static_cast<double>(g.cell_count(res.selected[j]));
    const double hit = static_cast<double>(res.hits[j]);
    if (!(hit >= height * len && hit <= std::ldexp(height, g.dim) * len)) res.bounds_ok = false;
    total += g.cell_count(res.selected[j]);
    covered += res.hits[j];
  }
  res.total_ok = static_cast<double>(total) * height <= static_cast<double>(res.omega_cells);
  res.coverage_ok = covered == res.omega_cells;
  return res;
}

Construction construct_sparse(const CubeFamily& fam, const DyadicCube& q, double eta,
                              OscillationMode mode) {
  const RootGeometry& g = fam.geometry();
  require_in_tree(g, q);
  if (!(eta > 0.0 && eta < 1.0)) throw InvalidArgument("eta must lie in (0,1)");
  Construction out;
  ContractingFamily family;
  std::vector<DyadicCube> current{q};
  while (!current.empty()) {
    std::vector<CubeOutcome> results(current.size());
    parallel_for(current.size(),
                 [&](std::size_t i) { results[i] = process_cube(fam, current[i], eta, mode); });
    std::vector<DyadicCube> next;
    std::vector<CubeStats> stats;
    for (auto& r : results) {
      stats.push_back(r.stats);
      next.insert(next.end(), r.cz.selected.begin(), r.cz.selected.end());
      out.failures.insert(out.failures.end(), r.failures.begin(), r.failures.end());
    }
    family.generations.push_back(std::move(current));
    out.stats.push_back(std::move(stats));
    current = std::move(next);
  }
  auto checked = validate_eta_sparse(g, family, eta);
  if (auto* v = std::get_if<SparseViolation>(&checked)) {
    out.failures.push_back("constructed family is not eta-sparse: " + v->message);
    out.family.base = std::move(family);
    out.family.eta = eta;
    out.family.children = nest_children(g, out.family.base);
  } else {
    out.family = std::move(std::get<SparseFamily>(checked));
  }
  return out;
}

std::vector<std::pair<DyadicCube, double>> DominationReport::coefficients() const {
  std::vector<std::pair<DyadicCube, double>> out;
  const auto& gens = construction.family.base.generations;
  for (std::size_t k = 0; k < gens.size(); ++k)
    for (std::size_t i = 0; i < gens[k].size(); ++i)
      out.emplace_back(gens[k][i], construction.stats[k][i].coefficient());
  return out;
}

Field weighted_overlap(const RootGeometry& g, const SparseFamily& fam,
                       const std::vector<std::vector<double>>& weights) {
  const DyadicCube& root = fam.root();
  const std::uint64_t base = morton_offset(g, root);
  const std::uint64_t n = g.cell_count(root);
  // Summed per cube rather than by a difference array, so each leaf gets the
  // plain sum over its own chain without cancellation.
  Field out(n, 0.0);
  const auto& gens = fam.base.generations;
  for (std::size_t k = 0; k < gens.size(); ++k)
    for (std::size_t i = 0; i < gens[k].size(); ++i) {
      const std::uint64_t b = morton_offset(g, gens[k][i]) - base;
      const std::uint64_t len = g.cell_count(gens[k][i]);
      for (std::uint64_t x = b; x < b + len; ++x) out[x] += weights[k][i];
    }
  return out;
}

namespace {

void finish(DominationReport& rep, const RootGeometry& g) {
  rep.overlap = overlap_distribution(g, rep.construction.family);
  rep.failures = rep.construction.failures;
  if (!rep.overlap.ok) rep.failures.push_back("overlap distribution exceeds (1-eta)^(a-1)|Q|");
  if (!(rep.empirical_constant <= rep.paper_bound * (1.0 + kRelTol)))
    rep.failures.push_back("empirical constant exceeds the proof bound");
  rep.passed = rep.failures.empty();
}

}  // namespace

DominationReport build_sparse_pointwise(const CubeFamily& fam, const DyadicCube& q,
                                        const SparseParams& params) {
  params.validate();
  const RootGeometry& g = fam.geometry();
  DominationReport rep;
  rep.mode = "pointwise";
  rep.root = q;
  rep.eta = params.eta;
  rep.r = fam.r();
  rep.cr = fam.declared_cr();
  rep.construction = construct_sparse(fam, q, params.eta, OscillationMode::supremum());
  rep.paper_bound = 2.0 * std::pow(3.0, 1.0 / rep.r);

  std::vector<std::vector<double>> weights;
  for (const auto& gen : rep.construction.stats) {
    weights.emplace_back();
    for (const auto& s : gen) weights.back().push_back(std::pow(s.coefficient(), rep.r));
  }
  const Field sum = weighted_overlap(g, rep.construction.family, weights);
  const Field& fq = fam.f(q);
  rep.witness_leaf = morton_offset(g, q);
  for (std::size_t x = 0; x < fq.size(); ++x) {
    const double lhs = std::fabs(fq[x]);
    const double rhs = rep.cr * std::pow(sum[x], 1.0 / rep.r);
    const double ratio = ratio_of(lhs, rhs);
    if (x == 0 || ratio > rep.empirical_constant) {
      rep.empirical_constant = ratio;
      rep.witness_leaf = morton_offset(g, q) + x;
      rep.witness_lhs = lhs;
      rep.witness_rhs = rhs;
    }
  }
  finish(rep, g);
  return rep;
}

DominationReport verify_bilinear(const CubeFamily& fam, DominationReport rep, const GridFunction& gfun) {
  const RootGeometry& g = fam.geometry();
  if (!(gfun.geometry == g)) throw InvalidArgument("g lives on a different grid");
  for (double v : gfun.values)
    if (v < 0.0) throw InvalidArgument("g must be nonnegative");
  const double s = rep.q / (rep.q - rep.r);
  const Field gz = gfun.morton();
  const double cell = g.cell_measure();
  const auto gz_span = std::span<const double>(gz);

  const Field& fq = fam.f(rep.root);
  const std::uint64_t base = morton_offset(g, rep.root);
  double lhs = 0.0;
  for (std::size_t x = 0; x < fq.size(); ++x)
    lhs += std::pow(std::fabs(fq[x]), rep.r) * gz[base + x] * cell;

  double rhs = 0.0;
  const auto& gens = rep.construction.family.base.generations;
  for (std::size_t k = 0; k < gens.size(); ++k)
    for (std::size_t i = 0; i < gens[k].size(); ++i) {
      const DyadicCube& p = gens[k][i];
      const double avg = p_average(gz_span.subspan(morton_offset(g, p), g.cell_count(p)), s);
      rhs += std::pow(rep.construction.stats[k][i].coefficient(), rep.r) * avg * g.measure(p);
    }
  rhs *= std::pow(rep.cr, rep.r);
  rep.witness_lhs = lhs;
  rep.witness_rhs = rhs;
  rep.empirical_constant = ratio_of(lhs, rhs);
  finish(rep, g);
  return rep;
}

DominationReport build_sparse_bilinear(const CubeFamily& fam, const DyadicCube& q,
                                       const SparseParams& params, const GridFunction& gfun) {
  params.validate();
  if (!params.q) throw InvalidArgument("bilinear mode needs q");
  if (!(*params.q > fam.r())) throw InvalidArgument("bilinear mode needs q > r");
  DominationReport rep;
  rep.mode = "bilinear";
  rep.root = q;
  rep.eta = params.eta;
  rep.r = fam.r();
  rep.q = *params.q;
  rep.cr = fam.declared_cr();
  rep.paper_bound = 18.0 * std::pow(4.0, rep.r);
  rep.construction = construct_sparse(fam, q, params.eta, OscillationMode::mean(*params.q));
  return verify_bilinear(fam, std::move(rep), gfun);
}

double toy_domination_check(const CubeFamily& fam, const ContractingFamily& family) {
  const RootGeometry& g = fam.geometry();
  if (auto v = validate_contracting(g, family); !v.ok) throw PreconditionError(v.message);
  const double r = fam.r();
  const auto children = nest_children(g, family);
  const DyadicCube& q = family.generations.front().front();
  const std::uint64_t base = morton_offset(g, q);
  Field rhs(g.cell_count(q), 0.0);
  const auto& gens = family.generations;
  for (std::size_t k = 0; k < gens.size(); ++k)
    for (std::size_t i = 0; i < gens[k].size(); ++i) {
      const DyadicCube& p = gens[k][i];
      const std::uint64_t pb = morton_offset(g, p) - base;
      const Field& fp = fam.f(p);
      std::vector<char> in_child(fp.size(), 0);
      for (std::size_t j : children[k][i]) {
        const DyadicCube& c = gens[k + 1][j];
        const auto [off, len] = local_range(g, p, c);
        const Field d = fam.diff(c, p);
        for (std::uint64_t x = 0; x < len; ++x) {
          in_child[off + x] = 1;
          rhs[pb + off + x] += std::pow(std::fabs(d[x]), r);
        }
      }
      for (std::size_t x = 0; x < fp.size(); ++x)
        if (!in_child[x]) rhs[pb + x] += std::pow(std::fabs(fp[x]), r);
    }
  const Field& fq = fam.f(q);
  double worst = 0.0;
  for (std::size_t x = 0; x < fq.size(); ++x)
    worst = std::max(worst, ratio_of(std::fabs(fq[x]), std::pow(rhs[x], 1.0 / r)));
  return worst;
}

}  // namespace sparsedom
