#include "support.hpp"

#include <set>
#include <variant>

#include "sparsedom/errors.hpp"

using namespace sparsedom;
using support::geom;

namespace {

DyadicCube cube1(int k, std::uint32_t i) { return DyadicCube{k, {i, 0, 0}}; }

ContractingFamily chain_family() {
  ContractingFamily f;
  f.generations = {{cube1(0, 0)}, {cube1(1, 0)}, {cube1(2, 0)}};
  return f;
}

// A random contracting family: every cube of generation k splits into a random
// subset of its descendants a few levels down.
ContractingFamily random_contracting(const RootGeometry& g, SplitMix64& rng) {
  ContractingFamily f;
  f.generations.push_back({g.root()});
  while (true) {
    std::vector<DyadicCube> next;
    for (const auto& p : f.generations.back()) {
      if (p.generation == g.depth) continue;
      const int step = 1 + static_cast<int>(rng.below(std::min(2, g.depth - p.generation)));
      for (const auto& c : support::all_cubes(g, p))
        if (c.generation == p.generation + step && rng.below(3) == 0) next.push_back(c);
    }
    if (next.empty()) break;
    f.generations.push_back(std::move(next));
  }
  return f;
}

}  // namespace

TEST_CASE("children bisect the interval and the square") {
  const auto g1 = geom(1, 3);
  const auto c = children(g1, g1.root());
  REQUIRE(c.size() == 2);
  CHECK(c[0] == cube1(1, 0));
  CHECK(c[1] == cube1(1, 1));
  CHECK(g1.measure(c[0]) == 0.5);

  const auto g2 = geom(2, 3);
  const auto q = children(g2, g2.root());
  REQUIRE(q.size() == 4);
  std::set<DyadicCube> seen(q.begin(), q.end());
  CHECK(seen.size() == 4);
  for (const auto& s : q) {
    CHECK(s.generation == 1);
    CHECK(g2.measure(s) == 0.25);
    CHECK(parent(s, 2) == g2.root());
  }
  CHECK_THROWS_AS(children(g1, cube1(3, 5)), PreconditionError);
}

TEST_CASE("parent and children round-trip on every cube") {
  for (int n = 1; n <= 3; ++n) {
    const auto g = geom(n, n == 3 ? 2 : 3);
    for (const auto& q : support::all_cubes(g, g.root())) {
      if (q.generation == g.depth) continue;
      for (const auto& c : children(g, q)) {
        CHECK(parent(c, n) == q);
        CHECK(contains(q, c, n));
        CHECK_FALSE(contains(c, q, n));
      }
    }
  }
}

TEST_CASE("locate uses half-open cubes") {
  const auto g = geom(1, 4);
  CHECK(locate(g, {0.6}, 1) == cube1(1, 1));
  for (int k = 0; k <= 4; ++k) CHECK(locate(g, {0.0}, k) == cube1(k, 0));
  CHECK_THROWS_AS(locate(g, {1.0}, 2), DomainError);
  CHECK_THROWS_AS(locate(g, {-1e-12}, 2), DomainError);
  CHECK(locate(g, {0.5}, 1) == cube1(1, 1));
  CHECK(locate(g, {std::nextafter(0.5, 0.0)}, 1) == cube1(1, 0));
}

TEST_CASE("morton and row-major indexing are bijections") {
  for (int n = 1; n <= 3; ++n) {
    const auto g = geom(n, n == 3 ? 3 : 4);
    std::set<std::uint64_t> seen;
    for (std::uint64_t z = 0; z < g.leaf_count(); ++z) {
      const CellIndex c = morton_decode(z, n, g.depth);
      CHECK(morton_encode(c, n, g.depth) == z);
      seen.insert(rowmajor_index(g, c));
    }
    CHECK(seen.size() == g.leaf_count());
    // local Z-order of the root agrees with the hand-written decoder
    for (std::uint64_t z = 0; z < g.leaf_count(); ++z)
      CHECK(morton_decode(z, n, g.depth) == support::local_leaf(g, g.root(), z));
  }
}

TEST_CASE("addresses round-trip and reject garbage") {
  const auto g = geom(2, 5);
  for (const auto& q : support::all_cubes(g, DyadicCube{2, {1, 3, 0}})) CHECK(parse_address(to_address(q, 2), 2) == q);
  CHECK(to_address(DyadicCube{2, {1, 3, 0}}, 2) == "2:1,3");
  CHECK_THROWS(parse_address("2:1", 2));
  CHECK_THROWS(parse_address("x:1,2", 2));
  CHECK_THROWS(parse_address("1:0,0,", 2));
}

TEST_CASE("validate_contracting flags overlap and escape") {
  const auto g = geom(1, 4);
  ContractingFamily ok;
  ok.generations = {{g.root()}, {cube1(1, 0)}};
  CHECK(validate_contracting(g, ok).ok);

  ContractingFamily overlap;
  overlap.generations = {{g.root()}, {cube1(1, 0), cube1(2, 0)}};
  const Verdict v1 = validate_contracting(g, overlap);
  CHECK_FALSE(v1.ok);
  CHECK(v1.message.find("not pairwise disjoint") != std::string::npos);

  ContractingFamily escape;
  escape.generations = {{g.root()}, {cube1(1, 0)}, {cube1(2, 3)}};
  const Verdict v2 = validate_contracting(g, escape);
  CHECK_FALSE(v2.ok);
  CHECK(v2.message.find("not nested") != std::string::npos);

  ContractingFamily stall;
  stall.generations = {{g.root()}, {cube1(1, 0)}, {cube1(1, 0)}};
  CHECK_FALSE(validate_contracting(g, stall).ok);
}

TEST_CASE("eta-sparse certificates on the chain family") {
  const auto g = geom(1, 4);
  {
    ContractingFamily single;
    single.generations = {{g.root()}};
    for (double eta : {0.1, 0.5, 0.99}) {
      const auto r = validate_eta_sparse(g, single, eta);
      REQUIRE(std::holds_alternative<SparseFamily>(r));
      CHECK(std::get<SparseFamily>(r).e_cells[0][0] == g.leaf_count());
    }
  }
  const auto r = validate_eta_sparse(g, chain_family(), 0.5);
  REQUIRE(std::holds_alternative<SparseFamily>(r));
  const auto& sf = std::get<SparseFamily>(r);
  CHECK(sf.e_cells[0][0] == 8);
  CHECK(sf.e_cells[1][0] == 4);
  CHECK(sf.e_cells[2][0] == 4);

  const auto bad = validate_eta_sparse(g, chain_family(), 0.9);
  REQUIRE(std::holds_alternative<SparseViolation>(bad));
  CHECK(std::get<SparseViolation>(bad).cube == g.root());
  CHECK(std::get<SparseViolation>(bad).ratio == doctest::Approx(0.5));
}

TEST_CASE("E sets are disjoint and match P minus the next union") {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 1 + static_cast<int>(trial % 2);
    const auto g = geom(n, n == 1 ? 6 : 3);
    const ContractingFamily f = random_contracting(g, rng);
    REQUIRE(validate_contracting(g, f).ok);
    const auto r = validate_eta_sparse(g, f, 1e-9);
    if (std::holds_alternative<SparseViolation>(r)) {
      // some cube is covered entirely by the next generation
      CHECK(std::get<SparseViolation>(r).ratio == 0.0);
      continue;
    }
    const auto& sf = std::get<SparseFamily>(r);
    std::vector<int> owners(g.leaf_count(), 0);
    for (std::size_t k = 0; k < f.generations.size(); ++k) {
      for (std::size_t i = 0; i < f.generations[k].size(); ++i) {
        const DyadicCube& p = f.generations[k][i];
        std::uint64_t count = 0;
        for (std::uint64_t z = 0; z < g.leaf_count(); ++z) {
          const CellIndex leaf = support::local_leaf(g, g.root(), z);
          if (!support::leaf_in(g, p, leaf)) continue;
          bool covered = false;
          if (k + 1 < f.generations.size())
            for (const auto& c : f.generations[k + 1]) covered = covered || support::leaf_in(g, c, leaf);
          const bool in_e = in_e_set(g, sf, k, i, z);
          CHECK(in_e == !covered);
          if (in_e) {
            ++count;
            ++owners[z];
          }
        }
        CHECK(sf.e_cells[k][i] == count);
      }
    }
    for (int o : owners) CHECK(o <= 1);
  }
}

TEST_CASE("overlap distribution of the chain") {
  const auto g = geom(1, 4);
  const auto sf = std::get<SparseFamily>(validate_eta_sparse(g, chain_family(), 0.5));
  const auto od = overlap_distribution(g, sf);
  std::vector<int> expect(16, 1);
  for (int z = 0; z < 4; ++z) expect[z] = 3;
  for (int z = 4; z < 8; ++z) expect[z] = 2;
  CHECK(od.overlap == expect);
  REQUIRE(od.above.size() >= 3);
  CHECK(od.above[0] == 1.0);
  CHECK(od.above[1] == 0.5);
  CHECK(od.above[2] == 0.25);
  CHECK(od.above[2] <= std::pow(0.5, 2 - 1));
  CHECK(od.ok);

  ContractingFamily single;
  single.generations = {{g.root()}};
  const auto od1 = overlap_distribution(g, std::get<SparseFamily>(validate_eta_sparse(g, single, 0.5)));
  CHECK(od1.above.size() >= 1);
  CHECK((od1.above.size() < 2 || od1.above[1] == 0.0));
}

TEST_CASE("overlap bound (1-eta)^(a-1)|Q| on random sparse families") {
  SplitMix64 rng(23);
  int tested = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = geom(1, 7);
    const ContractingFamily f = random_contracting(g, rng);
    for (double eta : {0.25, 0.5, 0.75}) {
      const auto r = validate_eta_sparse(g, f, eta);
      if (!std::holds_alternative<SparseFamily>(r)) continue;
      ++tested;
      const auto od = overlap_distribution(g, std::get<SparseFamily>(r));
      CHECK(od.ok);
      for (std::size_t a = 1; a < od.above.size(); ++a)
        CHECK(od.above[a] <= std::pow(1.0 - eta, static_cast<double>(a) - 1.0) * (1.0 + 1e-12));
    }
  }
  CHECK(tested > 20);
}
