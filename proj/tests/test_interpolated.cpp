#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "partrans/interpolated.hpp"
#include "partrans/transport.hpp"

using namespace partrans;

namespace {

DiscreteMeasure random_cloud(Rng& rng, int K, int d, double total = 1.0) {
  std::vector<int> ids(K);
  Mat pts(K, Vec(d));
  Vec w(K);
  double s = 0.0;
  for (int k = 0; k < K; ++k) {
    ids[k] = k;
    for (int j = 0; j < d; ++j) pts[k][j] = rng.uniform();
    w[k] = rng.uniform(0.5, 1.5);
    s += w[k];
  }
  for (double& v : w) v *= total / s;
  return DiscreteMeasure(d, ids, pts, w);
}

Mat grid_sites_1d(int m) {
  Mat z(m, Vec(1));
  for (int i = 0; i < m; ++i) z[i][0] = (i + 0.5) / m;
  return z;
}

Mat power_ground_cost(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                      double r) {
  Mat c(mu.size(), Vec(nu.size()));
  for (int k = 0; k < mu.size(); ++k)
    for (int l = 0; l < nu.size(); ++l) {
      double d2 = 0.0;
      for (int j = 0; j < mu.dim; ++j) {
        double d = mu.points[k][j] - nu.points[l][j];
        d2 += d * d;
      }
      c[k][l] = std::pow(d2, 0.5 * r);
    }
  return c;
}

}  // namespace

TEST_CASE("two-leg costs reproduce distance powers at midpoints") {
  Vec x{0.2}, y{0.8};
  Mat sites{{0.1}, {0.5}, {0.9}};  // contains the midpoint

  auto c2 = relay_cost(x, y, sites, CostPair::power(2.0));
  REQUIRE(c2.site == 1);
  REQUIRE(c2.value == Catch::Approx(0.36).margin(1e-15));

  auto c3 = relay_cost(x, y, sites, CostPair::power(3.0));
  REQUIRE(c3.site == 1);
  REQUIRE(c3.value == Catch::Approx(0.216).margin(1e-12));

  // one site: no choice, pay both legs through it
  Mat one{{0.1}};
  auto c1 = relay_cost(x, y, one, CostPair::power(2.0));
  REQUIRE(c1.value == Catch::Approx(2.0 * 0.01 + 2.0 * 0.49).margin(1e-15));

  // any relay is an upper bound for the straight-line power cost
  Rng rng(41);
  for (int t = 0; t < 50; ++t) {
    Vec a{rng.uniform(), rng.uniform()}, b{rng.uniform(), rng.uniform()};
    Mat z(3, Vec(2));
    for (auto& row : z)
      for (double& v : row) v = rng.uniform();
    for (double r : {1.0, 1.5, 2.0, 3.0}) {
      double d2 = (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]);
      double straight = std::pow(d2, 0.5 * r);
      REQUIRE(relay_cost(a, b, z, CostPair::power(r)).value >=
              straight - 1e-12);
    }
  }
}

TEST_CASE("price functional: gauge shift, supergradient, concavity") {
  Rng rng(141);
  auto mu = random_cloud(rng, 9, 2);
  auto nu = random_cloud(rng, 8, 2);
  Mat sites(5, Vec(2));
  for (auto& row : sites)
    for (double& v : row) v = rng.uniform();
  auto cost = CostPair::power(2.0);

  Vec p(5);
  for (double& v : p) v = rng.normal();

  // adding a constant to every price cancels between the two sides
  auto base = site_price_value(p, mu, nu, sites, cost);
  for (double alpha : {0.75, -2.0, 13.0}) {
    Vec q = p;
    for (double& v : q) v += alpha;
    auto shifted = site_price_value(q, mu, nu, sites, cost);
    REQUIRE(std::abs(shifted.value - base.value) <= 1e-12 * (1.0 + std::abs(base.value)));
  }

  // cell-mass difference is a supergradient: check against central differences
  const double h = 1e-7;
  for (int i = 0; i < 5; ++i) {
    Vec qp = p, qm = p;
    qp[i] += h;
    qm[i] -= h;
    double fd = (site_price_value(qp, mu, nu, sites, cost).value -
                 site_price_value(qm, mu, nu, sites, cost).value) /
                (2.0 * h);
    REQUIRE(std::abs(fd - base.supergradient[i]) <= 1e-5);
  }

  // concave: chords lie below the graph
  for (int t = 0; t < 20; ++t) {
    Vec p1(5), p2(5);
    for (double& v : p1) v = rng.normal();
    for (double& v : p2) v = rng.normal();
    double lam = rng.uniform();
    Vec mid(5);
    for (int i = 0; i < 5; ++i) mid[i] = lam * p1[i] + (1.0 - lam) * p2[i];
    double vm = site_price_value(mid, mu, nu, sites, cost).value;
    double v1 = site_price_value(p1, mu, nu, sites, cost).value;
    double v2 = site_price_value(p2, mu, nu, sites, cost).value;
    REQUIRE(vm >= lam * v1 + (1.0 - lam) * v2 - 1e-12);
  }

  // identical marginals: zero prices already balance every cell
  auto sym = site_price_value(Vec(5, 0.0), mu, mu, sites, cost);
  for (int i = 0; i < 5; ++i) REQUIRE(sym.supergradient[i] == 0.0);
}

TEST_CASE("congruent solve matches the relay transport optimum") {
  auto cost = CostPair::power(2.0);

  SECTION("identical marginals pay twice the best single leg") {
    Rng rng(97);
    auto mu = random_cloud(rng, 20, 1);
    Mat sites{{0.15}, {0.4}, {0.65}, {0.9}};
    auto res = solve_congruent(mu, mu, sites, cost);
    REQUIRE(res.converged);
    double expect = 0.0;
    for (int k = 0; k < mu.size(); ++k) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& z : sites)
        best = std::min(best, cost.leg(mu.points[k], z));
      expect += 2.0 * mu.weights[k] * best;
    }
    REQUIRE(std::abs(res.value - expect) <= 1e-6 * (1.0 + expect));
  }

  SECTION("single site gives the full product plan") {
    Rng rng(98);
    auto mu = random_cloud(rng, 6, 1);
    auto nu = random_cloud(rng, 5, 1);
    Mat sites{{0.5}};
    auto res = solve_congruent(mu, nu, sites, cost);
    REQUIRE(res.converged);
    REQUIRE(res.plan.size() == static_cast<std::size_t>(6 * 5));
    for (const auto& e : res.plan)
      REQUIRE(e.mass == Catch::Approx(mu.weights[e.i] * nu.weights[e.j] /
                                      nu.total_mass())
                            .epsilon(1e-12));
    double direct = 0.0;
    for (int k = 0; k < 6; ++k)
      direct += mu.weights[k] * cost.leg(mu.points[k], sites[0]);
    for (int l = 0; l < 5; ++l)
      direct += nu.weights[l] * cost.leg(nu.points[l], sites[0]);
    REQUIRE(res.value == Catch::Approx(direct).margin(1e-9));
  }

  SECTION("random instances agree with the transport program") {
    Rng rng(99);
    for (int trial = 0; trial < 4; ++trial) {
      auto mu = random_cloud(rng, 30, 2);
      auto nu = random_cloud(rng, 28, 2);
      Mat sites(6, Vec(2));
      for (auto& row : sites)
        for (double& v : row) v = rng.uniform();
      auto res = solve_congruent(mu, nu, sites, cost);
      REQUIRE(res.converged);

      Mat czm = relay_cost_matrix(mu, nu, sites, cost);
      double lp = solve_transport(mu.weights, nu.weights, czm, false).value;
      REQUIRE(std::abs(res.value - lp) <= 1e-6 * (1.0 + std::abs(lp)));

      for (std::size_t i = 0; i < sites.size(); ++i)
        REQUIRE(std::abs(res.mass_mu[i] - res.mass_nu[i]) <= res.mass_tol);

      // the product plan has exact source marginals
      Vec row_mass(mu.size(), 0.0);
      for (const auto& e : res.plan) row_mass[e.i] += e.mass;
      for (int k = 0; k < mu.size(); ++k)
        if (res.mass_nu[res.site_of_mu[k]] > 0.0)
          REQUIRE(row_mass[k] == Catch::Approx(mu.weights[k]).epsilon(1e-12));
    }
  }

  SECTION("unbalanced marginals are rejected") {
    Rng rng(100);
    auto mu = random_cloud(rng, 5, 1, 1.0);
    auto nu = random_cloud(rng, 5, 1, 1.4);
    REQUIRE_THROWS_AS(solve_congruent(mu, nu, Mat{{0.5}}, cost),
                      PartransError);
  }
}

TEST_CASE("site improvement recenters cells and never raises the cost") {
  SECTION("quadratic cells move to the joint center of mass") {
    DiscreteMeasure mu(1, {0, 1}, {{0.0}, {1.0}}, {0.3, 0.7});
    DiscreteMeasure nu(1, {0}, {{0.5}}, {1.0});
    Mat sites{{0.2}};
    auto z = improve_sites(sites, {0, 0}, {0}, mu, nu, CostPair::power(2.0));
    REQUIRE(z[0][0] == Catch::Approx((0.3 * 0.0 + 0.7 * 1.0 + 1.0 * 0.5) / 2.0)
                           .margin(1e-15));
  }

  SECTION("empty cells keep their site") {
    DiscreteMeasure mu(1, {0}, {{0.1}}, {1.0});
    DiscreteMeasure nu(1, {0}, {{0.2}}, {1.0});
    Mat sites{{0.15}, {0.8}};
    auto z = improve_sites(sites, {0}, {0}, mu, nu, CostPair::power(2.0));
    REQUIRE(z[1][0] == 0.8);
  }

  SECTION("re-solving through improved sites is monotone") {
    Rng rng(142);
    for (double r : {2.0, 3.0, 1.5}) {
      auto cost = CostPair::power(r);
      auto mu = random_cloud(rng, 16, 1);
      auto nu = random_cloud(rng, 14, 1);
      Mat sites(3, Vec(1));
      for (auto& row : sites) row[0] = rng.uniform();
      auto before = solve_congruent(mu, nu, sites, cost);
      auto z = improve_sites(sites, before.site_of_mu, before.site_of_nu, mu,
                             nu, cost);
      auto after = solve_congruent(mu, nu, z, cost);
      REQUIRE(after.value <= before.value + 1e-10);
    }
  }
}

TEST_CASE("improvement loop descends and finds cluster centers") {
  auto cost = CostPair::power(2.0);

  SECTION("bimodal marginals pull the sites into the clusters") {
    Mat pts{{0.08}, {0.10}, {0.12}, {0.88}, {0.90}, {0.92}};
    DiscreteMeasure mu(1, {0, 1, 2, 3, 4, 5}, pts, Vec(6, 1.0 / 6.0));
    Mat sites{{0.45}, {0.55}};
    auto out = lloyd_loop(mu, mu, sites, cost, 30);
    REQUIRE(out.values.front() > 0.3);
    REQUIRE(out.values.back() < 2e-3);
    auto final_sites = out.site_history.back();
    std::sort(final_sites.begin(), final_sites.end());
    REQUIRE(std::abs(final_sites[0][0] - 0.10) < 1e-2);
    REQUIRE(std::abs(final_sites[1][0] - 0.90) < 1e-2);
  }

  SECTION("trajectories are monotone and dominated below by the exact cost") {
    Rng rng(143);
    for (int trial = 0; trial < 6; ++trial) {
      auto mu = random_cloud(rng, 14, 1);
      auto nu = random_cloud(rng, 14, 1);
      Mat sites(3, Vec(1));
      for (auto& row : sites) row[0] = rng.uniform();
      auto out = lloyd_loop(mu, nu, sites, cost, 12);
      for (std::size_t k = 1; k < out.values.size(); ++k)
        REQUIRE(out.values[k] <= out.values[k - 1] + 1e-10);
      double exact = solve_transport(mu.weights, nu.weights,
                                     power_ground_cost(mu, nu, 2.0), false)
                         .value;
      REQUIRE(out.values.back() >= exact - 1e-8);
    }
  }

  SECTION("a fixed point stops the loop immediately") {
    DiscreteMeasure mu(1, {0, 1}, {{0.0}, {1.0}}, {0.5, 0.5});
    // single site at the joint center of mass: improvement is a no-op
    Mat sites{{0.5}};
    auto out = lloyd_loop(mu, mu, sites, cost, 8);
    REQUIRE(out.reached_tol);
    REQUIRE(out.values.size() == 2);
    REQUIRE(out.values[0] == out.values[1]);
  }
}

TEST_CASE("relay gap is nonnegative and shrinks under site refinement") {
  auto cost = CostPair::power(2.0);

  SECTION("midpoint-rich sites close the gap entirely") {
    Rng rng(144);
    auto mu = random_cloud(rng, 5, 1);
    auto nu = random_cloud(rng, 6, 1);
    Mat sites;
    for (int k = 0; k < mu.size(); ++k)
      for (int l = 0; l < nu.size(); ++l)
        sites.push_back({0.5 * (mu.points[k][0] + nu.points[l][0])});
    double g = relay_gap(mu, nu, sites, cost, power_ground_cost(mu, nu, 2.0));
    REQUIRE(g >= -1e-10);
    REQUIRE(g <= 1e-10);
  }

  SECTION("a single distant site leaves a large positive gap") {
    DiscreteMeasure mu(1, {0}, {{1.0}}, {1.0});
    DiscreteMeasure nu(1, {0}, {{2.0}}, {1.0});
    double g = relay_gap(mu, nu, Mat{{0.0}}, cost,
                         power_ground_cost(mu, nu, 2.0));
    REQUIRE(g == Catch::Approx(2.0 * 1.0 + 2.0 * 4.0 - 1.0).margin(1e-12));
  }

  SECTION("doubling a 1-D site grid divides the gap by about four") {
    Rng rng(145);
    double coarse = 0.0, fine = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      auto mu = random_cloud(rng, 12, 1);
      auto nu = random_cloud(rng, 13, 1);
      Mat exact = power_ground_cost(mu, nu, 2.0);
      double g8 = relay_gap(mu, nu, grid_sites_1d(8), cost, exact);
      double g16 = relay_gap(mu, nu, grid_sites_1d(16), cost, exact);
      REQUIRE(g8 >= -1e-8);
      REQUIRE(g16 >= -1e-8);
      coarse += g8;
      fine += g16;
    }
    double ratio = coarse / fine;
    REQUIRE(ratio >= 2.5);
    REQUIRE(ratio <= 6.0);
  }
}

TEST_CASE("quantile distance of order q") {
  SECTION("unit point masses one apart") {
    DiscreteMeasure mu(1, {0}, {{0.0}}, {1.0});
    DiscreteMeasure nu(1, {0}, {{1.0}}, {1.0});
    REQUIRE(wq_distance_1d(mu, nu, 2.0) == Catch::Approx(1.0).margin(1e-15));
    REQUIRE(wq_distance_1d(mu, mu, 2.0) == 0.0);
  }

  SECTION("agrees with the transport program for several orders") {
    Rng rng(146);
    for (int trial = 0; trial < 4; ++trial) {
      auto mu = random_cloud(rng, 20, 1);
      auto nu = random_cloud(rng, 17, 1);
      for (double q : {1.0, 2.0, 3.0}) {
        double wq = wq_distance_1d(mu, nu, q);
        double lp = solve_transport(mu.weights, nu.weights,
                                    power_ground_cost(mu, nu, q), false)
                        .value;
        REQUIRE(std::abs(std::pow(wq, q) - lp) <= 1e-8 * (1.0 + lp));
      }
      REQUIRE(std::abs(wq_distance_1d(mu, nu, 1.0) - w1_distance_1d(mu, nu)) <=
              1e-12);
    }
  }

  SECTION("displacement interpolation is a metric geodesic") {
    Rng rng(147);
    const int n = 12;
    std::vector<int> ids(n);
    Mat pa(n, Vec(1)), pb(n, Vec(1));
    for (int k = 0; k < n; ++k) {
      ids[k] = k;
      pa[k][0] = rng.uniform();
      pb[k][0] = rng.uniform();
    }
    DiscreteMeasure mu(1, ids, pa, Vec(n, 1.0 / n));
    DiscreteMeasure nu(1, ids, pb, Vec(n, 1.0 / n));
    double full = wq_distance_1d(mu, nu, 2.0);
    for (double s : {0.25, 0.6}) {
      auto mid = mccann_interpolate(mu, nu, s);
      REQUIRE(std::abs(wq_distance_1d(mu, mid, 2.0) - s * full) <= 1e-9);
    }
  }
}

TEST_CASE("hedonic market clears or empties depending on the signed losses") {
  SECTION("prohibitive losses leave everyone out at zero prices") {
    Mat t1(6, Vec(2, 5.0)), t2(5, Vec(2, 7.0));
    Rng rng(148);
    auto mu = random_cloud(rng, 6, 1);
    auto nu = random_cloud(rng, 5, 1);
    auto res = hedonic_equilibrium(mu, nu, Mat(),
                                   CostPair::tables(t1, t2));
    REQUIRE(res.converged);
    REQUIRE(res.surplus == 0.0);
    for (int c : res.buyer_choice) REQUIRE(c == 0);
    for (int c : res.producer_choice) REQUIRE(c == 0);
    for (double p : res.prices) REQUIRE(p == 0.0);
  }

  SECTION("a free market fully matches at zero prices") {
    Rng rng(149);
    auto mu = random_cloud(rng, 7, 1);
    Mat t(7, Vec(1, 0.0));
    auto res = hedonic_equilibrium(mu, mu, Mat(), CostPair::tables(t, t));
    REQUIRE(res.converged);
    REQUIRE(res.surplus == Catch::Approx(0.0).margin(1e-12));
    for (int c : res.buyer_choice) REQUIRE(c == 1);
    for (int c : res.producer_choice) REQUIRE(c == 1);
    REQUIRE(std::abs(res.matched_mu[0] - res.matched_nu[0]) <= res.mass_tol);
  }

  SECTION("signed losses clear the market at the matching optimum") {
    Rng rng(150);
    for (int trial = 0; trial < 4; ++trial) {
      const int K = 12, L = 10, m = 2;
      auto mu = random_cloud(rng, K, 1, 1.0);
      auto nu = random_cloud(rng, L, 1, 1.3);
      Mat t1(K, Vec(m)), t2(L, Vec(m));
      for (auto& row : t1)
        for (double& v : row) v = rng.uniform(-1.0, 0.5);
      for (auto& row : t2)
        for (double& v : row) v = rng.uniform(-1.0, 0.5);
      auto cost = CostPair::tables(t1, t2);
      auto res = hedonic_equilibrium(mu, nu, Mat(), cost);
      REQUIRE(res.converged);
      REQUIRE(res.surplus >= -1e-12);
      for (int i = 0; i < m; ++i)
        REQUIRE(std::abs(res.matched_mu[i] - res.matched_nu[i]) <=
                res.mass_tol);

      // total participant gain equals the best partial matching of gains
      Mat czm = relay_cost_matrix(mu, nu, Mat(), cost);
      Mat gain(K, Vec(L));
      for (int k = 0; k < K; ++k)
        for (int l = 0; l < L; ++l) gain[k][l] = std::max(0.0, -czm[k][l]);
      double best = solve_relaxed(mu.weights, nu.weights, gain).value;
      REQUIRE(std::abs(res.surplus - best) <= 1e-6 * (1.0 + best));
    }
  }
}
