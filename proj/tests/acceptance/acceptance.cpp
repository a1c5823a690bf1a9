// Acceptance suite: one PASS/FAIL line per criterion. Every check recomputes
// the quantity it asserts with the local oracles below rather than trusting
// the library's own verdicts.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparsedom/dyadic_sums.hpp"
#include "sparsedom/family.hpp"
#include "sparsedom/gridfn.hpp"
#include "sparsedom/poincare.hpp"
#include "sparsedom/random.hpp"
#include "sparsedom/sparse_engine.hpp"
#include "sparsedom/sparsedom.h"
#include "sparsedom/square.hpp"
#include "sparsedom/tent.hpp"

using namespace sparsedom;

namespace {

constexpr int kSeeds = 50;
constexpr double kTol = 1e-9;
const std::vector<double> kEtas{0.25, 0.5, 0.75};

RootGeometry geom(int n, int L) {
  RootGeometry g;
  g.dim = n;
  g.depth = L;
  return g;
}

// Leaf coordinates of root Z-order position z, decoded level by level.
CellIndex zleaf(const RootGeometry& g, std::uint64_t z) {
  CellIndex c{};
  for (int level = 0; level < g.depth; ++level) {
    const std::uint64_t child = (z >> (g.dim * (g.depth - 1 - level))) & ((1u << g.dim) - 1);
    for (int d = 0; d < g.dim; ++d)
      if (child & (1u << (g.dim - 1 - d))) c[d] |= 1u << (g.depth - 1 - level);
  }
  return c;
}

bool holds(const RootGeometry& g, const DyadicCube& q, const CellIndex& leaf) {
  for (int d = 0; d < g.dim; ++d)
    if ((leaf[d] >> (g.depth - q.generation)) != q.index[d]) return false;
  return true;
}

std::uint64_t rowmajor(const RootGeometry& g, const CellIndex& c) {
  std::uint64_t f = 0;
  for (int d = 0; d < g.dim; ++d) f = f * g.axis_cells() + c[d];
  return f;
}

// Every cube of D(q), generation by generation.
std::vector<DyadicCube> subtree(const RootGeometry& g, const DyadicCube& q) {
  std::vector<DyadicCube> out{q};
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i].generation < g.depth)
      for (const auto& c : children(g, out[i])) out.push_back(c);
  return out;
}

// Leaves of the root (Z-order positions) inside q.
std::vector<std::uint64_t> leaves_of(const RootGeometry& g, const DyadicCube& q) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t z = 0; z < g.leaf_count(); ++z)
    if (holds(g, q, zleaf(g, z))) out.push_back(z);
  return out;
}

GridFunction random_grid(const RootGeometry& g, SplitMix64& rng, int style) {
  std::vector<double> v(g.leaf_count(), 0.0);
  switch (style % 3) {
    case 0:
      for (double& x : v) x = rng.uniform(-1.0, 1.0);
      break;
    case 1:
      for (int a = 0; a < 4; ++a) v[rng.below(v.size())] += rng.uniform(1.0, 10.0);
      break;
    default:
      for (double& x : v) x = static_cast<double>(rng.below(4));
  }
  return GridFunction(g, std::move(v));
}

HalfSpaceFunction random_halfspace(const RootGeometry& g, SplitMix64& rng) {
  HalfSpaceFunction F(g);
  const std::uint32_t pad = g.axis_cells();
  for (auto& band : F.values)
    for (std::uint64_t y = 0; y < band.size(); ++y) {
      const std::uint64_t c = y % F.ambient_axis();
      if (c >= pad && c < 2 * pad && rng.uniform() < 0.5) band[y] = rng.uniform(-1.0, 1.0);
    }
  return F;
}

// F = 1 on the cone |y - x0| < t around the root centre (one dimension).
HalfSpaceFunction log_cone(const RootGeometry& g) {
  HalfSpaceFunction F(g);
  const double h = g.cell_side();
  for (int j = 1; j <= g.depth; ++j)
    for (std::uint64_t y = 0; y < F.ambient_cells(); ++y) {
      const double c = (static_cast<double>(y) + 0.5) * h - 1.5;
      if (std::fabs(c) < std::ldexp(1.0, -j)) F.values[j - 1][y] = 1.0;
    }
  return F;
}

// f*(t) = inf{a >= 0 : #{|v| > a} cell <= t}, over the candidate thresholds.
double brute_rearrangement(const std::vector<double>& v, double cell, double t) {
  std::vector<double> cand{0.0};
  for (double x : v) cand.push_back(std::fabs(x));
  double best = std::numeric_limits<double>::infinity();
  for (double a : cand) {
    std::uint64_t above = 0;
    for (double x : v) above += std::fabs(x) > a ? 1 : 0;
    if (static_cast<double>(above) * cell <= t) best = std::min(best, a);
  }
  return best;
}

// omega_lambda over equal cells: the shortest window of sorted values holding
// all but floor(lambda N) cells; half its width.
double brute_omega(std::vector<double> v, double lambda) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const std::size_t keep = n - static_cast<std::size_t>(std::floor(lambda * static_cast<double>(n)));
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + keep <= n; ++i) best = std::min(best, (v[i + keep - 1] - v[i]) / 2.0);
  return best;
}

// (|v|)^*(m cells): the (m+1)-th largest |v|, zero past the end.
double kth_largest_abs(std::vector<double> v, std::uint64_t m) {
  for (double& x : v) x = std::fabs(x);
  std::sort(v.begin(), v.end(), std::greater<>());
  return m < v.size() ? v[m] : 0.0;
}

struct FamilyCheck {
  bool sparse_ok = true;
  bool overlap_ok = true;
  bool domination_ok = true;
  double ratio = 0.0;  // worst K / bound
  std::string message;
};

// Independent checks of a pointwise report: contracting + eta-sparse by cell
// counts, the overlap bound, and the inequality recomputed leaf by leaf.
FamilyCheck check_family(const CubeFamily& fam, const DominationReport& rep, double eta) {
  FamilyCheck out;
  const RootGeometry& g = fam.geometry();
  const auto& gens = rep.construction.family.base.generations;
  const DyadicCube q = rep.root;
  const auto leaves = leaves_of(g, q);
  const std::size_t N = leaves.size();
  std::vector<int> count(N, 0);
  std::vector<double> sum(N, 0.0);
  std::vector<std::vector<std::int64_t>> owner(gens.size(), std::vector<std::int64_t>(N, -1));
  for (std::size_t k = 0; k < gens.size(); ++k)
    for (std::size_t i = 0; i < gens[k].size(); ++i)
      for (std::size_t x = 0; x < N; ++x)
        if (holds(g, gens[k][i], zleaf(g, leaves[x]))) {
          if (owner[k][x] >= 0) out.sparse_ok = false;  // overlap within a generation
          owner[k][x] = static_cast<std::int64_t>(i);
          ++count[x];
          sum[x] += std::pow(rep.construction.stats[k][i].coefficient(), rep.r);
        }
  for (std::size_t k = 0; k < gens.size(); ++k) {
    for (std::size_t x = 0; x < N; ++x)
      if (k > 0 && owner[k][x] >= 0 && owner[k - 1][x] < 0) out.sparse_ok = false;  // not nested
    for (std::size_t i = 0; i < gens[k].size(); ++i) {
      std::uint64_t cells = 0, kept = 0;
      for (std::size_t x = 0; x < N; ++x) {
        if (owner[k][x] != static_cast<std::int64_t>(i)) continue;
        ++cells;
        if (k + 1 == gens.size() || owner[k + 1][x] < 0) ++kept;
      }
      if (static_cast<double>(kept) < eta * static_cast<double>(cells)) out.sparse_ok = false;
    }
  }
  if (!out.sparse_ok) out.message = "family is not eta-sparse";

  const int top = *std::max_element(count.begin(), count.end());
  for (int a = 1; a <= top; ++a) {
    const double above = static_cast<double>(std::count_if(count.begin(), count.end(), [&](int c) { return c > a; }));
    if (above > std::pow(1.0 - eta, a - 1) * static_cast<double>(N)) out.overlap_ok = false;
  }
  if (!out.overlap_ok) out.message = "overlap bound fails";

  const double bound = 2.0 * std::pow(3.0, 1.0 / rep.r);
  const Field& fq = fam.f(q);
  for (std::size_t x = 0; x < N; ++x) {
    const double lhs = std::fabs(fq[x]);
    const double rhs = rep.cr * std::pow(sum[x], 1.0 / rep.r);
    if (lhs == 0.0) continue;
    const double ratio = rhs > 0.0 ? lhs / rhs / bound : std::numeric_limits<double>::infinity();
    out.ratio = std::max(out.ratio, ratio);
  }
  if (out.ratio > 1.0 + kTol) {
    out.domination_ok = false;
    out.message = "pointwise inequality fails";
  }
  if (!rep.passed) {
    out.domination_ok = false;
    out.message = rep.failures.empty() ? "report failed" : rep.failures.front();
  }
  return out;
}

struct Line {
  int id;
  std::string name;
  bool ok = true;
  std::string detail;
  double seconds = 0.0;
};

std::string fmt(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

// ---------------------------------------------------------------- criteria

struct EngineTotals {
  std::uint64_t runs = 0, sparse_bad = 0, overlap_bad = 0, dom_bad = 0;
  double worst = 0.0;
  std::map<std::string, std::uint64_t> per_kind;
  std::string first_failure;
};

void record(EngineTotals& t, const std::string& kind, const CubeFamily& fam, const DominationReport& rep,
            double eta) {
  const FamilyCheck c = check_family(fam, rep, eta);
  ++t.runs;
  ++t.per_kind[kind];
  t.sparse_bad += c.sparse_ok ? 0 : 1;
  t.overlap_bad += c.overlap_ok ? 0 : 1;
  t.dom_bad += c.domination_ok ? 0 : 1;
  t.worst = std::max(t.worst, c.ratio);
  if (!c.message.empty() && t.first_failure.empty()) t.first_failure = kind + ": " + c.message;
}

// Criteria 1 and 3 share the runs.
EngineTotals engine_runs() {
  EngineTotals t;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    SplitMix64 rng(static_cast<std::uint64_t>(seed));
    const RootGeometry g = seed % 5 == 0 ? geom(2, 4) : geom(1, 8);
    const GridFunction f = random_grid(g, rng, seed);
    const CanonicalFamily canonical(g, [&](const DyadicCube& q) { return dyadic_maximal(f, q); }, 1.0);
    const OperatorLocalizationFamily op(f, box_convolution_operator(g, 1), 3.0, 1.0);
    const PoincareFamily poincare(f, seed % 2);
    CubeCoefficients alpha(g);
    for (const auto& q : subtree(g, g.root()))
      if (q.generation < 2 || rng.uniform() < 0.3) alpha.set(q, rng.uniform(0.1, 2.0));
    const DyadicSumsFamily sums(alpha);

    const RootGeometry gt = geom(1, 6);
    const TentEnergies te = tent_energies(random_halfspace(gt, rng), 1.0);
    const BandFamily tent(gt, te.smooth, 2.0, "tent");
    const RootGeometry gs = geom(1, 7);
    const GridFunction fs = random_grid(gs, rng, seed);
    const double qs = seed % 2 ? 2.0 : 3.0;
    const BandFamily square(gs, square_energies(fs, GaussianDifferenceKernel(), qs).energy, qs, "square");

    const std::vector<std::pair<std::string, const CubeFamily*>> all{
        {"canonical", &canonical}, {"operator", &op},  {"poincare", &poincare},
        {"dyadic-sums", &sums},    {"tent", &tent},    {"square", &square}};
    for (double eta : kEtas) {
      SparseParams p;
      p.eta = eta;
      for (const auto& [kind, fam] : all) record(t, kind, *fam, build_sparse_pointwise(*fam, fam->geometry().root(), p), eta);
    }
  }
  return t;
}

Line criterion_engine(const EngineTotals& t) {
  Line l{1, "engine soundness"};
  l.ok = t.runs > 0 && t.sparse_bad == 0 && t.dom_bad == 0;
  std::string kinds;
  for (const auto& [k, n] : t.per_kind) kinds += (kinds.empty() ? "" : ",") + k;
  l.detail = std::to_string(t.runs) + " runs (" + kinds + ") at eta 1/4,1/2,3/4; max K/(2*3^(1/r)) = " +
             fmt(t.worst) + (t.first_failure.empty() ? "" : "; " + t.first_failure);
  return l;
}

Line criterion_overlap(const EngineTotals& t) {
  Line l{3, "overlap distribution"};
  l.ok = t.runs > 0 && t.overlap_bad == 0;
  l.detail = "|{sum chi_P > a}| <= (1-eta)^(a-1)|Q| for every integer a on all " + std::to_string(t.runs) +
             " engine families" + (t.overlap_bad ? ", " + std::to_string(t.overlap_bad) + " violations" : "");
  return l;
}

Line criterion_cz() {
  Line l{2, "Calderon-Zygmund decomposition"};
  std::uint64_t instances = 0, bad = 0, selected = 0;
  SplitMix64 rng(2024);
  while (instances < 1000) {
    const int n = 1 + static_cast<int>(rng.below(2));
    const RootGeometry g = n == 1 ? geom(1, 4 + static_cast<int>(rng.below(5))) : geom(2, 2 + static_cast<int>(rng.below(3)));
    const auto cubes = subtree(g, g.root());
    DyadicCube p = cubes[rng.below(std::min<std::size_t>(cubes.size(), 1u + (std::size_t{1} << g.dim)))];
    if (p.generation >= g.depth - 1) p = g.root();
    const std::uint64_t cells = g.cell_count(p);
    const double height = std::ldexp(1.0, -(n + 1));
    // |Omega| <= height |P|, in a few clumps
    const std::uint64_t budget = static_cast<std::uint64_t>(height * static_cast<double>(cells));
    std::vector<char> omega(cells, 0);
    std::uint64_t used = 0;
    const std::uint64_t target = budget == 0 ? 0 : 1 + rng.below(budget);
    while (used < target) {
      const std::uint64_t start = rng.below(cells), len = 1 + rng.below(std::min<std::uint64_t>(8, target - used));
      for (std::uint64_t i = start; i < std::min(cells, start + len) && used < target; ++i)
        if (!omega[i]) {
          omega[i] = 1;
          ++used;
        }
    }
    ++instances;
    const CZResult cz = cz_decompose(g, p, omega, height);
    selected += cz.selected.size();

    // Maximal strict subcubes R with |R cap Omega| > height |R|, by brute force.
    const std::uint64_t base = morton_offset(g, p);
    auto hits = [&](const DyadicCube& r) {
      std::uint64_t h = 0;
      for (std::uint64_t i = 0; i < cells; ++i)
        if (omega[i] && holds(g, r, zleaf(g, base + i))) ++h;
      return h;
    };
    std::vector<DyadicCube> expect;
    for (const auto& r : subtree(g, p)) {
      if (r == p) continue;
      if (!(static_cast<double>(hits(r)) > height * static_cast<double>(g.cell_count(r)))) continue;
      bool maximal = true;
      for (DyadicCube a = parent(r, g.dim); a.generation > p.generation; a = parent(a, g.dim))
        if (static_cast<double>(hits(a)) > height * static_cast<double>(g.cell_count(a))) maximal = false;
      if (maximal) expect.push_back(r);
    }
    std::vector<DyadicCube> got = cz.selected;
    std::sort(got.begin(), got.end());
    std::sort(expect.begin(), expect.end());
    bool ok = got == expect;
    std::uint64_t total = 0;
    for (const auto& r : got) {
      const std::uint64_t h = hits(r), c = g.cell_count(r);
      total += c;
      // height |P_j| < |P_j cap Omega| <= |P_j| / 2, in integer cell counts
      ok = ok && (h << (n + 1)) > c && 2 * h <= c;
    }
    ok = ok && total <= (used << (n + 1));
    for (std::uint64_t i = 0; i < cells; ++i) {
      if (!omega[i]) continue;
      bool covered = false;
      for (const auto& r : got) covered = covered || holds(g, r, zleaf(g, base + i));
      ok = ok && covered;
    }
    ok = ok && cz.bounds_ok && cz.total_ok && cz.coverage_ok;
    bad += ok ? 0 : 1;
  }
  l.ok = bad == 0;
  l.detail = std::to_string(instances) + " instances, " + std::to_string(selected) +
             " selected cubes; bounds, total and coverage exact" + (bad ? ", " + std::to_string(bad) + " failures" : "");
  return l;
}

Line criterion_bilinear() {
  Line l{4, "bilinear form"};
  std::uint64_t runs = 0, bad = 0;
  double worst = 0.0;
  const double bound = 18.0 * 4.0;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    SplitMix64 rng(1000u + static_cast<std::uint64_t>(seed));
    const RootGeometry g = seed % 5 == 0 ? geom(2, 4) : geom(1, 8);
    const GridFunction f = random_grid(g, rng, seed);
    const CanonicalFamily canonical(g, [&](const DyadicCube& q) { return dyadic_maximal(f, q); }, 1.0);
    const OperatorLocalizationFamily op(f, maximal_operator(g), 1.0, 1.0);
    std::vector<double> gv(g.leaf_count());
    for (double& x : gv) x = rng.uniform(0.0, 2.0);
    const GridFunction ones(g, std::vector<double>(g.leaf_count(), 1.0)), random_g(g, gv);
    for (const CubeFamily* fam : {static_cast<const CubeFamily*>(&canonical), static_cast<const CubeFamily*>(&op)})
      for (const GridFunction* gf : {&ones, &random_g}) {
        SparseParams p;
        p.eta = kEtas[static_cast<std::size_t>(seed) % 3];
        p.q = 2.0;
        const DominationReport rep = build_sparse_bilinear(*fam, g.root(), p, *gf);
        ++runs;
        // int |f_Q| g versus C_r sum_P alpha_P <g>_{2,P} |P|, both by direct sums
        const Field fq = fam->f(g.root());
        const Field gz = gf->morton();
        double lhs = 0.0;
        for (std::size_t x = 0; x < fq.size(); ++x) lhs += std::fabs(fq[x]) * gz[x] * g.cell_measure();
        double rhs = 0.0;
        for (const auto& [cube, a] : rep.coefficients()) {
          double s2 = 0.0;
          std::uint64_t c = 0;
          for (std::uint64_t z = 0; z < g.leaf_count(); ++z)
            if (holds(g, cube, zleaf(g, z))) {
              s2 += gz[z] * gz[z];
              ++c;
            }
          rhs += a * std::sqrt(s2 / static_cast<double>(c)) * g.measure(cube);
        }
        rhs *= rep.cr;
        const double k = lhs > 0.0 ? lhs / rhs : 0.0;
        worst = std::max(worst, k);
        const bool agree = std::fabs(k - rep.empirical_constant) <= kTol * std::max(1.0, k);
        if (!(rep.passed && agree && k <= bound * (1 + kTol))) ++bad;
      }
  }
  l.ok = bad == 0;
  l.detail = std::to_string(runs) + " runs (r=1, q=2, g in {1, random}); max K = " + fmt(worst) +
             " (bound 18*4^r = 72)" + (bad ? ", " + std::to_string(bad) + " failures" : "");
  return l;
}

Line criterion_lmo() {
  Line l{5, "local mean oscillation"};
  std::uint64_t runs = 0, cubes = 0, bad = 0;
  double worst = 0.0;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    SplitMix64 rng(2000u + static_cast<std::uint64_t>(seed));
    const RootGeometry g = seed % 5 == 0 ? geom(2, 4) : geom(1, 8);
    const GridFunction f = random_grid(g, rng, seed);
    const LocalMeanOscillationFamily fam(f, 0.25);
    const Field fz = f.morton();
    auto values = [&](const DyadicCube& q) {
      std::vector<double> v;
      for (std::uint64_t z = 0; z < g.leaf_count(); ++z)
        if (holds(g, q, zleaf(g, z))) v.push_back(fz[z]);
      return v;
    };
    for (double eta : kEtas) {
      SparseParams p;
      p.eta = eta;
      const DominationReport rep = build_sparse_pointwise(fam, g.root(), p);
      ++runs;
      bool ok = rep.passed;
      const double lambda = (1.0 - eta) / std::ldexp(1.0, g.dim + 2);
      const auto& gens = rep.construction.family.base.generations;
      std::vector<double> rhs(g.leaf_count(), 0.0);
      for (std::size_t k = 0; k < gens.size(); ++k)
        for (std::size_t i = 0; i < gens[k].size(); ++i) {
          const DyadicCube& c = gens[k][i];
          const auto v = values(c);
          const double gamma = rep.construction.stats[k][i].coefficient();
          const double omega = brute_omega(v, lambda);
          ++cubes;
          if (gamma > 0.0) worst = std::max(worst, omega > 0.0 ? gamma / (4.0 * omega) : std::numeric_limits<double>::infinity());
          ok = ok && gamma <= 4.0 * omega * (1 + kTol);
          // the family's center is a quarter-optimal center of oscillation
          std::vector<double> dev(v.size());
          for (std::size_t x = 0; x < v.size(); ++x) dev[x] = v[x] - fam.center(c);
          const double w = brute_omega(v, 0.25);
          const double at = kth_largest_abs(dev, static_cast<std::uint64_t>(std::floor(0.25 * static_cast<double>(v.size()))));
          ok = ok && std::fabs(at - w) <= 1e-12 * std::max(1.0, w);
          for (std::uint64_t z = 0; z < g.leaf_count(); ++z)
            if (holds(g, c, zleaf(g, z))) rhs[z] += gamma;
        }
      // |f - c_{1/4}(f; Q)| <= 6 sum_P gamma_P chi_P
      const double c0 = fam.center(g.root());
      for (std::uint64_t z = 0; z < g.leaf_count(); ++z) ok = ok && std::fabs(fz[z] - c0) <= 6.0 * rhs[z] * (1 + kTol);
      bad += ok ? 0 : 1;
    }
  }
  l.ok = bad == 0;
  l.detail = std::to_string(runs) + " runs, " + std::to_string(cubes) + " cubes; max gamma_P/(4 omega) = " + fmt(worst) +
             "; |f - c_1/4| dominated at every leaf" + (bad ? ", " + std::to_string(bad) + " failures" : "");
  return l;
}

Line criterion_rearrangement() {
  Line l{6, "rearrangement and Chebyshev"};
  std::uint64_t grids = 0, queries = 0, bad = 0, cheb_bad = 0;
  SplitMix64 rng(6006);
  for (; grids < 1000; ++grids) {
    const int n = 1 + static_cast<int>(rng.below(2));
    const RootGeometry g = geom(n, n == 1 ? 1 + static_cast<int>(rng.below(7)) : 1 + static_cast<int>(rng.below(3)));
    const GridFunction f = random_grid(g, rng, static_cast<int>(rng.below(3)));
    const Rearrangement r = rearrangement(f);
    const double cell = g.cell_measure();
    std::vector<double> ts;
    for (std::uint64_t k = 0; k <= g.leaf_count(); ++k) ts.push_back(static_cast<double>(k) * cell);
    for (int i = 0; i < 8; ++i) ts.push_back(rng.uniform(0.0, 1.0));
    for (double t : ts) {
      ++queries;
      const double want = brute_rearrangement(f.values, cell, t);
      if (r.query(t) != want || rearrangement_at(f.values, cell, t) != want) ++bad;
      if (t <= 0.0) continue;
      for (double delta : {0.5, 1.0, 2.0}) {
        double integral = 0.0;
        for (double v : f.values) integral += std::pow(std::fabs(v), delta) * cell;
        // f*(t) <= (int |f|^delta / t)^(1/delta), compared as t f*(t)^delta <= int |f|^delta
        if (t * std::pow(want, delta) > integral * (1 + 1e-12)) ++cheb_bad;
      }
    }
  }
  l.ok = bad == 0 && cheb_bad == 0;
  l.detail = std::to_string(grids) + " grids, " + std::to_string(queries) +
             " queries equal to the inf-over-thresholds oracle; Chebyshev at delta 1/2,1,2" +
             (bad + cheb_bad ? ", " + std::to_string(bad) + "+" + std::to_string(cheb_bad) + " failures" : "");
  return l;
}

Line criterion_tent() {
  Line l{7, "tent sparse domination"};
  std::vector<double> constants;
  std::uint64_t bad = 0;
  double sandwich = 0.0, ellr_dev = 0.0;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    SplitMix64 rng(7000u + static_cast<std::uint64_t>(seed));
    const RootGeometry g = geom(1, 6);
    const HalfSpaceFunction F = random_halfspace(g, rng);
    const TentReport rep = tent_sparse(F, g.root(), 1.0, 0.5);
    // sandwich recomputed from the three energy tables
    const TentEnergies e = tent_energies(F, 1.0);
    double worst = 0.0;
    for (std::uint64_t z = 0; z < g.leaf_count(); ++z)
      for (int j = 0; j < g.depth; ++j) {
        if (e.sharp[z][j] > e.smooth[z][j]) worst = std::max(worst, (e.sharp[z][j] - e.smooth[z][j]) / e.sharp[z][j]);
        if (e.smooth[z][j] > e.wide[z][j]) worst = std::max(worst, (e.smooth[z][j] - e.wide[z][j]) / e.smooth[z][j]);
      }
    sandwich = std::max(sandwich, worst);
    ellr_dev = std::max(ellr_dev, std::fabs(rep.ellr.constant - 1.0));
    constants.push_back(rep.constant);
    if (!(rep.passed && rep.ellr.exhaustive && std::isfinite(rep.constant) && worst <= 1e-12)) ++bad;
  }
  std::vector<double> sorted = constants;
  std::sort(sorted.begin(), sorted.end());
  const double median = 0.5 * (sorted[(sorted.size() - 1) / 2] + sorted[sorted.size() / 2]);
  const double mx = sorted.back();
  l.ok = bad == 0 && mx <= 2.0 * median && ellr_dev <= 1e-12;
  l.detail = std::to_string(constants.size()) + " seeds; constant median " + fmt(median) + ", max " + fmt(mx) +
             " (max/median " + fmt(mx / median) + " <= 2); sandwich slack " + fmt(sandwich) + "; |C_2 - 1| = " +
             fmt(ellr_dev) + (bad ? "; " + std::to_string(bad) + " failed runs" : "");
  return l;
}

Line criterion_good_lambda() {
  Line l{8, "good-lambda certificates"};
  std::uint64_t tent_rows = 0, tent_nonempty = 0, sums_rows = 0, sums_nonempty = 0, bad = 0;
  double tent_cert = std::numeric_limits<double>::infinity(), sums_cert = std::numeric_limits<double>::infinity();
  double min_ca = std::numeric_limits<double>::infinity();
  auto tent_case = [&](const HalfSpaceFunction& F) {
    const RootGeometry& g = F.geometry;
    const TentEnergies e = tent_energies(F, 1.0);
    const Field c = carleson_field(g, e.big, 2.0);
    double amax = 0.0;
    for (std::uint64_t z = 0; z < g.leaf_count(); ++z) {
      double s = 0.0;
      for (double v : e.sharp[z]) s += v;
      amax = std::max(amax, std::sqrt(s));
      if (s > 0.0) min_ca = std::min(min_ca, c[z] / std::sqrt(s));
    }
    if (amax == 0.0) return;
    const GoodLambdaCurve curve = tent_good_lambda(F, {0.2 * amax, 0.35 * amax, 0.45 * amax}, {0.25, 0.5, 1.0});
    bad += curve.passed ? 0 : 1;
    for (std::size_t i = 0; i < curve.rows.size(); ++i) {
      ++tent_rows;
      if (curve.rows[i].bad_measure == 0.0) continue;
      ++tent_nonempty;
      tent_cert = std::min(tent_cert, curve.certificate_min[i]);
      if (!(curve.certificate_min[i] >= 3.0 * (1 - kTol))) ++bad;
    }
  };
  for (int seed = 1; seed <= kSeeds; ++seed) {
    SplitMix64 rng(8000u + static_cast<std::uint64_t>(seed));
    tent_case(random_halfspace(geom(1, 6), rng));
  }
  for (int L : {8, 10}) tent_case(log_cone(geom(1, L)));

  for (int seed = 1; seed <= kSeeds; ++seed) {
    SplitMix64 rng(8500u + static_cast<std::uint64_t>(seed));
    const RootGeometry g = seed % 5 == 0 ? geom(2, 4) : geom(1, 8);
    std::vector<double> m(g.leaf_count());
    for (double& x : m) x = rng.uniform(0.5, 1.5) * g.cell_measure();
    if (seed % 3 == 0)
      for (int a = 0; a < 3; ++a) m[rng.below(m.size())] += rng.uniform(0.0, 0.2);
    const double q = seed % 2 ? 1.0 : 2.0;
    const Potential p = potential(DiscreteMeasure(GridFunction(g, m)), q, 0.05 * g.dim);
    double smax = 0.0;
    for (double v : p.t.values) smax = std::max(smax, v);
    const GoodLambdaCurve curve = good_lambda_sums(p.alpha, q, 1.0, {0.3 * smax, 0.45 * smax, 0.49 * smax}, {0.5, 0.95});
    bad += curve.passed ? 0 : 1;
    for (std::size_t i = 0; i < curve.rows.size(); ++i) {
      ++sums_rows;
      if (curve.rows[i].bad_measure == 0.0) continue;
      ++sums_nonempty;
      const double need = std::pow(2.0, q) - 1.0;
      sums_cert = std::min(sums_cert, curve.certificate_min[i] / need);
      if (!(curve.certificate_min[i] >= need * (1 - kTol))) ++bad;
    }
  }
  l.ok = bad == 0 && sums_nonempty > 0;
  l.detail = "tent: " + std::to_string(tent_nonempty) + "/" + std::to_string(tent_rows) +
             " nonempty bad sets (min C/A over inputs " + fmt(min_ca) + ", nonempty needs < gamma/2)" +
             (tent_nonempty ? ", min certificate/3 " + fmt(tent_cert / 3.0) : "") + "; sums: " +
             std::to_string(sums_nonempty) + "/" + std::to_string(sums_rows) +
             " nonempty, min certificate/(2^q-1) " + fmt(sums_cert) + (bad ? "; " + std::to_string(bad) + " failures" : "");
  return l;
}

Line criterion_potential() {
  Line l{9, "potential constants"};
  std::uint64_t checks = 0, bad = 0;
  double worst = 0.0;
  auto expect = [&](double got, double want, bool relative) {
    ++checks;
    const double err = std::fabs(got - want) / (relative ? std::fabs(want) : 1.0);
    worst = std::max(worst, err);
    if (!(err <= 1e-12)) ++bad;
  };
  for (int seed = 1; seed <= kSeeds; ++seed) {
    SplitMix64 rng(9000u + static_cast<std::uint64_t>(seed));
    const int n = seed % 4 == 0 ? 2 : 1;
    const int L = n == 1 ? 6 + static_cast<int>(rng.below(5)) : 3 + static_cast<int>(rng.below(3));
    const RootGeometry g = geom(n, L);
    const double gamma = n * rng.uniform(0.1, 0.9);
    std::vector<double> atom(g.leaf_count(), 0.0);
    const std::uint64_t at = rng.below(atom.size());
    atom[at] = 1.0;
    const DiscreteMeasure mu{GridFunction(g, atom)};
    const Potential p1 = potential(mu, 1.0, gamma);
    expect(smallness_constant(p1.alpha, 1.0), (1.0 - std::pow(2.0, -gamma * (L + 1))) / (1.0 - std::pow(2.0, -gamma)), false);
    // T_{q,gamma} and M_gamma at the atom: alpha_k = 2^{k(n - gamma)} along its chain
    const double q = rng.uniform(0.5, 3.0);
    const Potential pq = potential(mu, q, gamma);
    double series = 0.0;
    for (int k = 0; k <= L; ++k) series += std::pow(2.0, k * q * (n - gamma));
    expect(pq.t.values[at], std::pow(series, 1.0 / q), true);
    expect(pq.m.values[at], std::pow(2.0, L * (n - gamma)), true);

    const DiscreteMeasure leb{GridFunction(g, std::vector<double>(g.leaf_count(), g.cell_measure()))};
    const double qs = rng.uniform(0.2, 0.95);
    const Potential u = potential(leb, qs, gamma);
    double trunc = 0.0;
    for (int k = 0; k <= L; ++k) trunc += std::pow(2.0, -k * gamma * qs);
    expect(smallness_constant(u.alpha, qs), trunc, false);
  }
  l.ok = bad == 0;
  l.detail = std::to_string(checks) + " closed-form checks on " + std::to_string(kSeeds) +
             " seeds (atom delta=1, uniform delta=q<1, T and M at the atom); max error " + fmt(worst);
  return l;
}

Line criterion_poincare() {
  Line l{10, "Poincare"};
  std::uint64_t bad = 0, cubes = 0;
  double repro = 0.0;
  // cell averages of random polynomials of degree <= m
  SplitMix64 rng(10010);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + trial % 2, m = trial % 3;
    const RootGeometry g = n == 1 ? geom(1, 6) : geom(2, 4);
    const auto mons = monomials(n, m);
    std::vector<double> coef(mons.size());
    for (double& c : coef) c = rng.uniform(-2.0, 2.0);
    std::vector<double> v(g.leaf_count(), 0.0);
    const double h = g.cell_side();
    for (std::uint64_t flat = 0; flat < v.size(); ++flat) {
      CellIndex c{};
      std::uint64_t rest = flat;
      for (int d = n - 1; d >= 0; --d) {
        c[d] = static_cast<std::uint32_t>(rest % g.axis_cells());
        rest /= g.axis_cells();
      }
      for (std::size_t i = 0; i < mons.size(); ++i) {
        double term = coef[i];
        for (int d = 0; d < n; ++d) {
          const int e = mons[i][d];
          const double a = c[d] * h, b = (c[d] + 1) * h;
          term *= (std::pow(b, e + 1) - std::pow(a, e + 1)) / ((e + 1) * h);
        }
        v[flat] += term;
      }
    }
    const GridFunction f(g, v);
    const PolynomialProjector proj(n, m);
    for (const auto& q : subtree(g, g.root())) {
      if (g.depth - q.generation < 2) continue;
      const Field local = f.on_cube(q);
      const Field p = proj.project(local);
      const Field pp = proj.project(p);
      double e1 = 0.0, e2 = 0.0, s_in = 0.0, s_out = 0.0;
      for (std::size_t x = 0; x < local.size(); ++x) {
        e1 = std::max(e1, std::fabs(p[x] - local[x]));
        e2 = std::max(e2, std::fabs(pp[x] - p[x]));
        s_in += local[x] * local[x];
        s_out += p[x] * p[x];
      }
      repro = std::max({repro, e1, e2});
      ++cubes;
      if (!(e1 <= 1e-12 && e2 <= 1e-12 && s_out <= s_in * (1 + 1e-12))) ++bad;
    }
  }

  std::uint64_t runs = 0, self = 0;
  double cmax = 0.0, factor_err = 0.0;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    SplitMix64 r(10100u + static_cast<std::uint64_t>(seed));
    const RootGeometry g = geom(1, 7);
    const GridFunction f = random_grid(g, r, seed);
    for (int m : {0, 1}) {
      const PoincareReport rep = poincare_sparse(f, g.root(), m, 0.5);
      ++runs;
      // |f - P_Q f| <= K sum_{R in F} <|f - P_R f|>_{1,R} chi_R with the reported K
      const Field resid = PoincareFamily(f, m).f(g.root());
      std::vector<double> rhs(g.leaf_count(), 0.0);
      for (const auto& gen : rep.engine.construction.family.base.generations)
        for (const auto& c : gen) {
          const Field pr = poly_project(f, c, m);
          const Field fr = f.on_cube(c);
          double mean = 0.0;
          for (std::size_t x = 0; x < fr.size(); ++x) mean += std::fabs(fr[x] - pr[x]);
          mean /= static_cast<double>(fr.size());
          for (std::uint64_t z = 0; z < g.leaf_count(); ++z)
            if (holds(g, c, zleaf(g, z))) rhs[z] += mean;
        }
      bool ok = rep.passed && std::isfinite(rep.constant) && std::isfinite(rep.coefficient_constant);
      for (std::uint64_t z = 0; z < g.leaf_count(); ++z)
        ok = ok && std::fabs(resid[z]) <= rep.constant * rhs[z] * (1 + kTol) + 1e-12;
      cmax = std::max(cmax, rep.constant);
      bad += ok ? 0 : 1;
    }
    const Weight one(GridFunction(g, std::vector<double>(g.leaf_count(), 1.0)));
    for (double s : {1.0, 2.0}) {
      const NormSpec norm{NormSpec::Kind::WeightedLp, 1.0, s, 2.0};
      const SelfImproveReport rep =
          verify_self_improve(f, oscillation_functional(f, 0), g.root(), 0, norm, one, SelfImproveMode::Pointwise);
      ++self;
      const double want = (s + 1.0) * rep.measured_norm;
      factor_err = std::max(factor_err, std::fabs(rep.integral_factor - want) / want);
      if (!(rep.passed && !rep.vacuous && rep.norm_exact && std::fabs(rep.integral_factor - want) <= 1e-12 * want &&
            rep.lhs <= rep.rhs * (1 + kTol)))
        ++bad;
    }
  }
  l.ok = bad == 0;
  l.detail = "reproduction/idempotence on " + std::to_string(cubes) + " cubes, max error " + fmt(repro) + "; " +
             std::to_string(runs) + " sparse runs (m=0,1), max measured constant " + fmt(cmax) + "; " +
             std::to_string(self) + " self-improvement runs, factor (s+1)||a|| rel. error " + fmt(factor_err) +
             (bad ? "; " + std::to_string(bad) + " failures" : "");
  return l;
}

Line criterion_ellr() {
  Line l{11, "exhaustive l^r checks"};
  std::uint64_t runs = 0, bad = 0;
  double worst = 0.0;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    SplitMix64 rng(11000u + static_cast<std::uint64_t>(seed));
    const RootGeometry g = geom(1, 4 + seed % 3);
    const GridFunction f = random_grid(g, rng, seed);
    const CanonicalFamily canonical(g, [&](const DyadicCube& q) { return dyadic_maximal(f, q); }, 1.0);
    const BandFamily tent(g, tent_energies(random_halfspace(g, rng), 1.0).smooth, 2.0, "tent");
    const double q = seed % 2 ? 2.0 : 3.0;
    const BandFamily square(g, square_energies(f, GaussianDifferenceKernel(), q).energy, q, "square");
    for (const auto& [fam, r] : {std::pair<const CubeFamily*, double>{&canonical, 1.0}, {&tent, 2.0}, {&square, q}}) {
      const EllrResult e = check_ellr(*fam, g.root(), r, true);
      ++runs;
      worst = std::max(worst, e.constant);
      if (!(e.exhaustive && e.chains > 0 && e.constant <= 1.0 + 1e-12)) ++bad;
    }
  }
  l.ok = bad == 0;
  l.detail = std::to_string(runs) + " exhaustive runs (canonical r=1, tent r=2, square r=q; n=1, L=4..6); max C = " +
             fmt(worst, 17);
  return l;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Line criterion_determinism() {
  Line l{12, "determinism"};
  namespace fs = std::filesystem;
  std::uint64_t configs = 0, files = 0, bad = 0;
  std::string first;
  const fs::path work = fs::current_path() / "acceptance_runs";
  fs::remove_all(work);
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(SPARSEDOM_CONFIG_DIR))
    if (entry.path().extension() == ".json") paths.push_back(entry.path());
  std::sort(paths.begin(), paths.end());
  for (const auto& path : paths) {
    const std::string text = slurp(path);
    const std::string sub = nlohmann::json::parse(text).at("experiment").get<std::string>();
    ++configs;
    std::string reports[2];
    for (int run = 0; run < 2; ++run) {
      const fs::path out = work / path.stem() / (run ? "b" : "a");
      fs::create_directories(out);
      sd_run* handle = nullptr;
      const sd_status st = sd_run_experiment(sub.c_str(), text.c_str(), out.string().c_str(), &handle);
      const char* report = nullptr;
      if (st != SD_OK || sd_run_report_json(handle, &report) != SD_OK) {
        ++bad;
        if (first.empty()) first = path.filename().string() + ": " + sd_last_error();
      } else {
        reports[run] = report;
      }
      sd_run_destroy(handle);
    }
    if (reports[0].empty() || reports[0] != reports[1]) ++bad;
    for (const auto& entry : fs::directory_iterator(work / path.stem() / "a")) {
      const auto name = entry.path().filename();
      if (name == "timing.json") continue;
      ++files;
      if (slurp(entry.path()) != slurp(work / path.stem() / "b" / name)) {
        ++bad;
        if (first.empty()) first = path.stem().string() + "/" + name.string() + " differs";
      }
    }
  }
  l.ok = configs > 0 && bad == 0;
  l.detail = std::to_string(configs) + " configs run twice through the C API; " + std::to_string(files) +
             " output files byte-identical" + (first.empty() ? "" : "; " + first);
  return l;
}

}  // namespace

int main() {
  std::vector<Line> lines;
  auto timed = [&](auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Line l = fn();
    l.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    lines.push_back(l);
    std::printf("%s %2d %-32s %s [%.1fs]\n", l.ok ? "PASS" : "FAIL", l.id, l.name.c_str(), l.detail.c_str(), l.seconds);
    std::fflush(stdout);
  };
  EngineTotals totals;
  timed([&] {
    totals = engine_runs();
    return criterion_engine(totals);
  });
  timed(criterion_cz);
  timed([&] { return criterion_overlap(totals); });
  timed(criterion_bilinear);
  timed(criterion_lmo);
  timed(criterion_rearrangement);
  timed(criterion_tent);
  timed(criterion_good_lambda);
  timed(criterion_potential);
  timed(criterion_poincare);
  timed(criterion_ellr);
  timed(criterion_determinism);
  const auto failed = std::count_if(lines.begin(), lines.end(), [](const Line& l) { return !l.ok; });
  std::printf("%zu/%zu criteria passed\n", lines.size() - static_cast<std::size_t>(failed), lines.size());
  return failed ? 1 : 0;
}
