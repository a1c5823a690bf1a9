#include "support.hpp"

#include "sparsedom/errors.hpp"

using namespace sparsedom;
using support::geom;

TEST_CASE("p-averages") {
  const auto g = geom(1, 1);
  const GridFunction one(g, {1.0, 1.0});
  for (double p : {0.5, 1.0, 3.0}) CHECK(p_average(one, g.root(), p) == doctest::Approx(1.0).epsilon(1e-15));
  const GridFunction f(g, {0.0, 2.0});
  CHECK(p_average(f, g.root(), 2.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(p_average(f, DyadicCube{1, {1, 0, 0}}, 1.0) == 2.0);
  CHECK_THROWS_AS(p_average(f, g.root(), 0.0), InvalidArgument);

  SplitMix64 rng(5);
  const auto g2 = geom(2, 3);
  for (int t = 0; t < 20; ++t) {
    const GridFunction h = support::random_grid(g2, rng, -2.0, 2.0);
    for (const auto& q : support::all_cubes(g2, g2.root()))
      CHECK(p_average(h, q, 1.5) == doctest::Approx(support::brute_average(h, q, 1.5)).epsilon(1e-12));
  }
}

TEST_CASE("morton storage round-trips") {
  SplitMix64 rng(8);
  for (int n = 1; n <= 3; ++n) {
    const auto g = geom(n, 2);
    const GridFunction f = support::random_grid(g, rng);
    const GridFunction back = GridFunction::from_morton(g, f.morton());
    CHECK(back.values == f.values);
    for (const auto& q : support::all_cubes(g, g.root())) CHECK(f.on_cube(q) == support::local_values(f, q));
  }
}

TEST_CASE("rearrangement examples") {
  const auto g = geom(1, 2);
  const GridFunction f(g, {3.0, 1.0, 2.0, 0.0});
  CHECK(rearrangement(f).query(0.3) == 2.0);
  CHECK(support::brute_rearrangement(f.values, 0.25, 0.3) == 2.0);
  const GridFunction c(g, {-1.5, -1.5, -1.5, -1.5});
  const Rearrangement rc = rearrangement(c);
  CHECK(rc.query(0.0) == 1.5);
  CHECK(rc.query(0.999) == 1.5);
  CHECK(rc.query(1.0) == 0.0);
  CHECK(rc.query(5.0) == 0.0);
  CHECK_THROWS_AS(rc.query(-0.1), InvalidArgument);
}

TEST_CASE("rearrangement agrees with the threshold definition") {
  SplitMix64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const auto g = geom(1 + static_cast<int>(trial % 2), 3);
    const GridFunction f = trial % 3 == 0 ? support::random_ties(g, rng) : support::random_grid(g, rng, -1.0, 1.0);
    const Rearrangement r = rearrangement(f);
    const double cell = g.cell_measure();
    for (std::uint64_t i = 0; i <= g.leaf_count(); ++i) {
      // every breakpoint and a point strictly between breakpoints
      for (double t : {static_cast<double>(i) * cell, (static_cast<double>(i) + 0.5) * cell}) {
        const double expect = support::brute_rearrangement(f.values, cell, t);
        CHECK(r.query(t) == expect);
        CHECK(rearrangement_at(f.values, cell, t) == expect);
      }
    }
  }
}

TEST_CASE("Chebyshev bound for the rearrangement") {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = geom(1, 5);
    const GridFunction f = support::random_grid(g, rng, -3.0, 3.0);
    const Rearrangement r = rearrangement(f);
    for (double delta : {0.5, 1.0, 2.0}) {
      double integral = 0.0;
      for (double v : f.values) integral += std::pow(std::fabs(v), delta) * g.cell_measure();
      for (double t : {0.01, 0.1, 0.37, 0.5, 0.99})
        CHECK(r.query(t) <= std::pow(t, -1.0 / delta) * std::pow(integral, 1.0 / delta));
    }
  }
}

TEST_CASE("local oscillation examples") {
  const auto g = geom(1, 2);
  const GridFunction f(g, {0.0, 0.0, 10.0, 10.0});
  const auto lo = local_oscillation(f, g.root(), 0.25);
  CHECK(lo.omega == 5.0);
  CHECK(lo.center == 5.0);
  // Just below 1/2 the window must still hold more than half of Q, so it
  // spans both values.
  CHECK(local_oscillation(f, g.root(), 0.5 - 1e-9).omega == 5.0);
  const GridFunction c(g, {2.5, 2.5, 2.5, 2.5});
  const auto lc = local_oscillation(c, g.root(), 0.25);
  CHECK(lc.omega == 0.0);
  CHECK(lc.center == 2.5);
  CHECK_THROWS_AS(local_oscillation(f, g.root(), 0.5), InvalidArgument);
}

TEST_CASE("local oscillation matches the shortest-window oracle") {
  SplitMix64 rng(71);
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = geom(1, 4);
    const GridFunction f = trial % 2 ? support::random_ties(g, rng, 5) : support::random_grid(g, rng);
    for (double lambda : {0.05, 0.125, 0.25, 0.3, 0.49}) {
      const std::vector<double> v = f.values;
      const auto lo = local_oscillation(v, lambda);
      CHECK(lo.omega == doctest::Approx(support::brute_local_oscillation(v, lambda)).epsilon(1e-15));
      // the center realises omega
      std::uint64_t outside = 0;
      for (double x : v) outside += std::fabs(x - lo.center) > lo.omega * (1 + 1e-15) ? 1 : 0;
      CHECK(static_cast<double>(outside) <= lambda * static_cast<double>(v.size()));
    }
  }
}

TEST_CASE("oscillation in both modes") {
  const auto g = geom(1, 1);
  const GridFunction c(g, {4.0, 4.0});
  CHECK(oscillation(c, g.root(), OscillationMode::supremum()) == 0.0);
  CHECK(oscillation(c, g.root(), OscillationMode::mean(2.0)) == 0.0);
  const GridFunction f(g, {0.0, 1.0});
  CHECK(oscillation(f, g.root(), OscillationMode::supremum()) == 1.0);
  CHECK(oscillation(f, g.root(), OscillationMode::mean(2.0)) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("dyadic maximal function") {
  const auto g = geom(1, 2);
  const GridFunction f(g, {1.0, 0.0, 0.0, 0.0});
  CHECK(dyadic_maximal(f, g.root()) == std::vector<double>{1.0, 0.5, 0.25, 0.25});
  const GridFunction c(g, {0.7, 0.7, 0.7, 0.7});
  for (double v : dyadic_maximal(c, g.root())) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));

  SplitMix64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g2 = geom(1 + trial % 3, trial % 3 == 2 ? 2 : 3);
    const GridFunction h = support::random_grid(g2, rng, -1.0, 1.0);
    for (const auto& q : support::all_cubes(g2, g2.root())) {
      const Field m = dyadic_maximal(h, q);
      CHECK(support::max_abs_diff(m, support::brute_maximal(h, q)) < 1e-13);
      const auto v = support::local_values(h, q);
      for (std::size_t i = 0; i < m.size(); ++i) CHECK(m[i] >= std::fabs(v[i]) * (1 - 1e-15));
    }
  }
}

TEST_CASE("measures and weights validate their values") {
  const auto g = geom(1, 1);
  CHECK_THROWS_AS(DiscreteMeasure(GridFunction(g, {1.0, -1.0})), InvalidArgument);
  CHECK_THROWS_AS(Weight(GridFunction(g, {1.0, 0.0})), InvalidArgument);
  CHECK_THROWS_AS(GridFunction(g, {1.0}), InvalidArgument);
  const DiscreteMeasure mu(GridFunction(g, {0.25, 0.5}));
  CHECK(mu.mass(g.root()) == 0.75);
  const Weight w(GridFunction(g, {2.0, 4.0}));
  CHECK(w.integral(g.root()) == 3.0);
}
