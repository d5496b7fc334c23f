#include <catch2/catch_amalgamated.hpp>

#include "partrans/core.hpp"
#include "partrans/measure.hpp"

using namespace partrans;

TEST_CASE("rng is deterministic and roughly uniform") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    double x = a.uniform();
    REQUIRE(x == b.uniform());
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
  }
  // different seeds should diverge immediately
  REQUIRE(a.uniform() != c.uniform());

  Rng d(7);
  double mean = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) mean += d.uniform();
  mean /= n;
  REQUIRE(std::abs(mean - 0.5) < 0.02);

  Rng e(9);
  double m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double z = e.normal();
    m2 += z * z;
  }
  REQUIRE(std::abs(m2 / n - 1.0) < 0.05);
}

TEST_CASE("parallel_for writes each slot exactly once") {
  std::vector<int> out(257, -1);
  parallel_for(257, [&](int i) { out[i] = 3 * i; });
  for (int i = 0; i < 257; ++i) REQUIRE(out[i] == 3 * i);
}

TEST_CASE("descent engine minimizes a smooth quadratic") {
  Vec target = {1.0, -2.0, 0.25};
  auto eval = [&](const Vec& x, double, Vec& g) {
    double f = 0.0;
    for (int i = 0; i < 3; ++i) {
      double d = x[i] - target[i];
      f += d * d;
      g[i] = 2.0 * d;
    }
    return f;
  };
  DescentOptions opt;
  auto rep = minimize_smoothed(eval, Vec(3, 0.0), opt);
  REQUIRE(rep.value < 1e-12);
  for (int i = 0; i < 3; ++i) REQUIRE(std::abs(rep.x[i] - target[i]) < 1e-6);
}

TEST_CASE("descent engine handles a piecewise-linear kink via smoothing") {
  // f(x) = sum_i max(x_i, -2 x_i), minimized at 0 with value 0
  auto eval = [&](const Vec& x, double eps, Vec& g) {
    double f = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double a = x[i], b = -2.0 * x[i];
      if (eps > 0.0) {
        double m = std::max(a, b);
        double ea = std::exp((a - m) / eps), eb = std::exp((b - m) / eps);
        f += m + eps * std::log(ea + eb);
        double wa = ea / (ea + eb);
        g[i] = wa * 1.0 + (1.0 - wa) * (-2.0);
      } else {
        f += std::max(a, b);
        g[i] = a >= b ? 1.0 : -2.0;
      }
    }
    return f;
  };
  DescentOptions opt;
  auto rep = minimize_smoothed(eval, Vec{3.0, -4.0}, opt);
  REQUIRE(std::abs(rep.value) < 1e-5);
  REQUIRE(linf(rep.x) < 1e-5);
}

TEST_CASE("gauge projection keeps iterates on the zero-sum plane") {
  // f(p) = |p - c|^2 restricted to sum(p)=0; solution is c minus its mean
  Vec c = {2.0, 0.0, 1.0};
  auto eval = [&](const Vec& x, double, Vec& g) {
    double f = 0.0;
    for (int i = 0; i < 3; ++i) {
      double d = x[i] - c[i];
      f += d * d;
      g[i] = 2.0 * d;
    }
    return f;
  };
  auto project = [](Vec& v) {
    double mean = sum(v) / v.size();
    for (double& x : v) x -= mean;
  };
  auto rep = minimize_smoothed(eval, Vec(3, 0.0), DescentOptions{}, project);
  REQUIRE(std::abs(sum(rep.x)) < 1e-10);
  for (int i = 0; i < 3; ++i) REQUIRE(std::abs(rep.x[i] - (c[i] - 1.0)) < 1e-6);
}

TEST_CASE("measure discretization integrates simple densities") {
  auto uni = discretize_density([](const Vec&) { return 1.0; }, 1, 1000);
  REQUIRE(uni.size() == 1000);
  REQUIRE(std::abs(uni.total_mass() - 1.0) < 1e-12);

  // integral of x over [0,1]^2 cells: expect 1/2 by symmetry of midpoints
  auto lin = discretize_density([](const Vec& x) { return x[0]; }, 2, 64);
  REQUIRE(std::abs(lin.total_mass() - 0.5) < 1e-12);

  auto cube = discretize_density([](const Vec&) { return 2.0; }, 3, 8);
  REQUIRE(std::abs(cube.total_mass() - 2.0) < 1e-12);
}

TEST_CASE("measure construction prunes dust and validates input") {
  DiscreteMeasure mu(1, {0, 1, 2}, {{0.1}, {0.5}, {0.9}}, {0.5, 1e-18, 0.5});
  REQUIRE(mu.size() == 2);
  REQUIRE(mu.ids[1] == 2);
  REQUIRE(mu.max_weight() == 0.5);
  REQUIRE_THROWS_AS(DiscreteMeasure(1, {0}, {{0.0}}, {-1.0}), PartransError);
  REQUIRE_THROWS_AS(DiscreteMeasure(2, {0}, {{0.0}}, {1.0}), PartransError);
}

TEST_CASE("regime classification uses a relative band") {
  REQUIRE(classify_regime(1.0, 1.0) == Regime::Saturated);
  REQUIRE(classify_regime(1.0 + 1e-14, 1.0) == Regime::Saturated);
  REQUIRE(classify_regime(0.5, 1.0) == Regime::Undersupplied);
  REQUIRE(classify_regime(2.0, 1.0) == Regime::Oversupplied);
}
