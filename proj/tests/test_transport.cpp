#include <catch2/catch_amalgamated.hpp>

#include "oracles/brute.hpp"
#include "partrans/lp.hpp"
#include "partrans/transport.hpp"

using namespace partrans;

namespace {

Mat random_matrix(Rng& rng, int r, int c, double lo, double hi) {
  Mat m(r, Vec(c));
  for (auto& row : m)
    for (double& x : row) x = rng.uniform(lo, hi);
  return m;
}

Vec random_masses(Rng& rng, int n, double lo = 0.2, double hi = 1.5) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// independent route: the same transport problem as a dense LP
double transport_value_by_lp(const Vec& a, const Vec& b, const Mat& payoff,
                             bool maximize) {
  const int R = static_cast<int>(a.size()), C = static_cast<int>(b.size());
  Vec c(R * C);
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < C; ++j) c[i * C + j] = payoff[i][j];
  Mat A(R + C, Vec(R * C, 0.0));
  Vec rhs(R + C);
  for (int i = 0; i < R; ++i) {
    for (int j = 0; j < C; ++j) A[i][i * C + j] = 1.0;
    rhs[i] = a[i];
  }
  for (int j = 0; j < C; ++j) {
    for (int i = 0; i < R; ++i) A[R + j][i * C + j] = 1.0;
    rhs[R + j] = b[j];
  }
  auto res = solve_lp(c, A, rhs, {}, {}, maximize);
  REQUIRE(res.status == LpStatus::Optimal);
  return res.objective;
}

}  // namespace

TEST_CASE("two-by-two transferable example") {
  // surplus [[2,5],[0,2]]: the anti-diagonal pairing collects 5
  Mat theta = {{2, 5}, {0, 2}};
  auto asg = solve_assignment(theta, true);
  REQUIRE(asg.perm == std::vector<int>{1, 0});
  REQUIRE(asg.value == 5.0);
}

TEST_CASE("transport agrees with a dense LP on random instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    int R = 2 + rng.uniform_int(0, 4), C = 2 + rng.uniform_int(0, 4);
    Vec a = random_masses(rng, R), b = random_masses(rng, C);
    // rescale to balance
    double ta = sum(a), tb = sum(b);
    for (double& x : b) x *= ta / tb;
    Mat payoff = random_matrix(rng, R, C, -3.0, 5.0);
    bool maximize = trial % 2 == 0;

    auto t = solve_transport(a, b, payoff, maximize);
    double ref = transport_value_by_lp(a, b, payoff, maximize);
    REQUIRE(std::abs(t.value - ref) < 1e-7);

    // plan feasibility
    Vec ra(R, 0.0), rb(C, 0.0);
    double v = 0.0;
    for (const auto& e : t.plan) {
      REQUIRE(e.mass > 0.0);
      ra[e.i] += e.mass;
      rb[e.j] += e.mass;
      v += e.mass * payoff[e.i][e.j];
    }
    for (int i = 0; i < R; ++i) REQUIRE(std::abs(ra[i] - a[i]) < 1e-9);
    for (int j = 0; j < C; ++j) REQUIRE(std::abs(rb[j] - b[j]) < 1e-9);
    REQUIRE(std::abs(v - t.value) < 1e-9);

    // duals support the plan: u+v >= theta everywhere (max), tight on support
    if (maximize) {
      for (int i = 0; i < R; ++i)
        for (int j = 0; j < C; ++j)
          REQUIRE(t.row_duals[i] + t.col_duals[j] >= payoff[i][j] - 1e-8);
      for (const auto& e : t.plan)
        REQUIRE(std::abs(t.row_duals[e.i] + t.col_duals[e.j] - payoff[e.i][e.j]) <
                1e-8);
      REQUIRE(std::abs(dot(t.row_duals, a) + dot(t.col_duals, b) - t.value) < 1e-7);
    }
  }
}

TEST_CASE("assignment matches brute-force permutation search") {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    int n = 2 + rng.uniform_int(0, 4);
    Mat payoff = random_matrix(rng, n, n, -2.0, 4.0);
    auto asg = solve_assignment(payoff, true);
    auto [bv, bp] = oracle::brute_best_assignment(payoff, true);
    REQUIRE(std::abs(asg.value - bv) < 1e-9);
  }
}

TEST_CASE("birkhoff decomposition reassembles the plan") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 2 + rng.uniform_int(0, 4);
    // random convex combination of permutation matrices
    Mat plan = zeros(n, n);
    int terms = 1 + rng.uniform_int(0, 5);
    std::vector<int> perm(n);
    for (int t = 0; t < terms; ++t) {
      std::iota(perm.begin(), perm.end(), 0);
      for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
      double w = rng.uniform(0.1, 1.0);
      for (int i = 0; i < n; ++i) plan[i][perm[i]] += w;
    }
    auto decomp = birkhoff_decompose(plan);
    REQUIRE(static_cast<int>(decomp.size()) <= n * n - 2 * n + 2);
    Mat back = zeros(n, n);
    for (const auto& term : decomp) {
      REQUIRE(term.coeff > 0.0);
      for (int i = 0; i < n; ++i) back[i][term.perm[i]] += term.coeff;
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) REQUIRE(std::abs(back[i][j] - plan[i][j]) < 1e-9);
  }
}

TEST_CASE("conjugate potentials contract and stabilize") {
  Rng rng(55);
  Mat payoff = random_matrix(rng, 5, 6, -1.0, 3.0);
  Vec u = random_masses(rng, 5, -2.0, 2.0);
  Vec v = dual_conjugate_rows_to_cols(payoff, u);
  Vec u2 = dual_conjugate_cols_to_rows(payoff, v);
  for (int i = 0; i < 5; ++i) REQUIRE(u2[i] <= u[i] + 1e-12);
  Vec v2 = dual_conjugate_rows_to_cols(payoff, u2);
  for (int j = 0; j < 6; ++j) REQUIRE(std::abs(v2[j] - v[j]) < 1e-12);
  // conjugate pair is dual-feasible by construction
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 6; ++j) REQUIRE(u2[i] + v[j] >= payoff[i][j] - 1e-12);
}

TEST_CASE("cycle scan certifies optimal assignments and rejects others") {
  Rng rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    int n = 3 + rng.uniform_int(0, 3);
    Mat payoff = random_matrix(rng, n, n, 0.0, 4.0);
    auto best = solve_assignment(payoff, true);
    auto rep = check_cycle_improvements(payoff, best.perm, n);
    REQUIRE(rep.ok);

    // a strictly worse permutation must expose an improving cycle
    auto [bv, bp] = oracle::brute_best_assignment(payoff, true);
    std::vector<int> worse = bp;
    std::swap(worse[0], worse[1]);
    double wv = 0.0;
    for (int i = 0; i < n; ++i) wv += payoff[i][worse[i]];
    if (wv < bv - 1e-6) {
      auto rep2 = check_cycle_improvements(payoff, worse, n);
      REQUIRE_FALSE(rep2.ok);
      REQUIRE(rep2.worst_gain > 1e-6);
    }
  }
}

TEST_CASE("path-built duals support optimal assignments") {
  Rng rng(13);
  for (int trial = 0; trial < 25; ++trial) {
    int n = 3 + rng.uniform_int(0, 3);
    Mat payoff = random_matrix(rng, n, n, -1.0, 3.0);
    auto best = solve_assignment(payoff, true);
    auto pd = assignment_duals_by_paths(payoff, best.perm);
    REQUIRE(pd.ok);
    for (int i = 0; i < n; ++i) {
      REQUIRE(std::abs(pd.u[i] + pd.v[best.perm[i]] - payoff[i][best.perm[i]]) <
              1e-9);
      for (int j = 0; j < n; ++j)
        REQUIRE(pd.u[i] + pd.v[j] >= payoff[i][j] - 1e-9);
    }

    std::vector<int> worse = best.perm;
    std::swap(worse[0], worse[n - 1]);
    double wv = 0.0, bv = 0.0;
    for (int i = 0; i < n; ++i) {
      wv += payoff[i][worse[i]];
      bv += payoff[i][best.perm[i]];
    }
    if (wv < bv - 1e-6) {
      auto pd2 = assignment_duals_by_paths(payoff, worse);
      REQUIRE_FALSE(pd2.ok);
      REQUIRE(pd2.bad_cycle.size() >= 2);
    }
  }
}

namespace {

// Sign-constrained Lipschitz dual as a dense LP over the union point set;
// independent route for the metric distance.
double lip_dual_by_lp(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  std::vector<Vec> pts;
  Vec obj_coeff;  // coefficient of eta at that point in integral d(nu - mu)
  for (int k = 0; k < mu.size(); ++k) {
    pts.push_back(mu.points[k]);
    obj_coeff.push_back(-mu.weights[k]);
  }
  for (int k = 0; k < nu.size(); ++k) {
    pts.push_back(nu.points[k]);
    obj_coeff.push_back(nu.weights[k]);
  }
  const int U = static_cast<int>(pts.size());
  auto dist = [&](int a, int b) {
    double s = 0.0;
    for (std::size_t d = 0; d < pts[a].size(); ++d) {
      double t = pts[a][d] - pts[b][d];
      s += t * t;
    }
    return std::sqrt(s);
  };
  // One LP shape covers all three balance cases with eta >= 0: when mu is
  // heavier substitute eta for the nonpositive potential, when nu is heavier
  // the potential is nonnegative but weighs the opposite signed difference,
  // and when balanced a constant shift makes the sign constraint free.
  Vec c(obj_coeff);
  if (nu.total_mass() > mu.total_mass() + 1e-12 * (1.0 + mu.total_mass()))
    for (double& x : c) x = -x;
  Mat A;
  Vec b;
  for (int a = 0; a < U; ++a)
    for (int q = 0; q < U; ++q) {
      if (a == q) continue;
      Vec row(U, 0.0);
      row[a] += 1.0;
      row[q] -= 1.0;
      A.push_back(std::move(row));
      b.push_back(dist(a, q));
    }
  auto res = solve_lp(c, {}, {}, A, b, true);
  REQUIRE(res.status == LpStatus::Optimal);
  return res.objective;
}

DiscreteMeasure random_cloud(Rng& rng, int n, int dim, double mass_scale) {
  std::vector<int> ids(n);
  Mat pts(n, Vec(dim));
  Vec w(n);
  for (int k = 0; k < n; ++k) {
    ids[k] = k;
    for (int d = 0; d < dim; ++d) pts[k][d] = rng.uniform();
    w[k] = rng.uniform(0.1, 1.0) * mass_scale;
  }
  return DiscreteMeasure(dim, ids, pts, w);
}

}  // namespace

TEST_CASE("metric distance matches the Lipschitz dual in all balance cases") {
  Rng rng(404);
  for (int trial = 0; trial < 12; ++trial) {
    int dim = 1 + trial % 2;
    DiscreteMeasure mu = random_cloud(rng, 4 + trial % 3, dim, 1.0);
    double scale = trial % 3 == 0 ? 1.0 : (trial % 3 == 1 ? 0.6 : 1.7);
    DiscreteMeasure nu = random_cloud(rng, 5, dim, scale);
    if (trial % 3 == 0) {
      // force exact balance
      double f = mu.total_mass() / nu.total_mass();
      for (double& w : nu.weights) w *= f;
    }
    auto md = metric_distance(mu, nu);
    double ref = lip_dual_by_lp(mu, nu);
    REQUIRE(std::abs(md.distance - ref) < 1e-8);
    REQUIRE(md.distance >= -1e-12);
  }
}

TEST_CASE("metric distance is zero onto itself and symmetric when balanced") {
  Rng rng(11);
  DiscreteMeasure mu = random_cloud(rng, 6, 2, 1.0);
  REQUIRE(metric_distance(mu, mu).distance < 1e-12);
  DiscreteMeasure nu = random_cloud(rng, 5, 2, 1.0);
  double f = mu.total_mass() / nu.total_mass();
  for (double& w : nu.weights) w *= f;
  REQUIRE(std::abs(metric_distance(mu, nu).distance -
                   metric_distance(nu, mu).distance) < 1e-8);
}

TEST_CASE("relaxed problem matches its LP and produces certified potentials") {
  Rng rng(808);
  for (int trial = 0; trial < 20; ++trial) {
    int R = 2 + rng.uniform_int(0, 3), C = 2 + rng.uniform_int(0, 3);
    Vec a = random_masses(rng, R), b = random_masses(rng, C);
    Mat payoff = random_matrix(rng, R, C, 0.0, 3.0);
    auto rel = solve_relaxed(a, b, payoff);

    // reference LP: maximize over sub-couplings
    Vec c(R * C);
    for (int i = 0; i < R; ++i)
      for (int j = 0; j < C; ++j) c[i * C + j] = payoff[i][j];
    Mat A(R + C, Vec(R * C, 0.0));
    Vec rhs(R + C);
    for (int i = 0; i < R; ++i) {
      for (int j = 0; j < C; ++j) A[i][i * C + j] = 1.0;
      rhs[i] = a[i];
    }
    for (int j = 0; j < C; ++j) {
      for (int i = 0; i < R; ++i) A[R + j][i * C + j] = 1.0;
      rhs[R + j] = b[j];
    }
    auto ref = solve_lp(c, {}, {}, A, rhs, true);
    REQUIRE(ref.status == LpStatus::Optimal);
    REQUIRE(std::abs(rel.value - ref.objective) < 1e-7);

    // potentials: nonnegative, dominate the payoff, and close the gap
    for (double x : rel.xi) REQUIRE(x >= 0.0);
    for (double x : rel.p) REQUIRE(x >= 0.0);
    for (int i = 0; i < R; ++i)
      for (int j = 0; j < C; ++j)
        REQUIRE(rel.xi[i] + rel.p[j] >= payoff[i][j] - 1e-8);
    REQUIRE(std::abs(dot(rel.xi, a) + dot(rel.p, b) - rel.value) < 1e-6);
  }
}

TEST_CASE("displacement interpolation splits the distance linearly") {
  Rng rng(606);
  const int n = 6;
  Mat pa(n, Vec(2)), pb(n, Vec(2));
  std::vector<int> ids(n);
  for (int k = 0; k < n; ++k) {
    ids[k] = k;
    pa[k] = {rng.uniform(), rng.uniform()};
    pb[k] = {rng.uniform(), rng.uniform()};
  }
  DiscreteMeasure mu(2, ids, pa, Vec(n, 1.0 / n));
  DiscreteMeasure nu(2, ids, pb, Vec(n, 1.0 / n));
  double w = w2_distance(mu, nu);
  for (double s : {0.1, 0.5, 0.9}) {
    DiscreteMeasure mid = mccann_interpolate(mu, nu, s);
    REQUIRE(std::abs(w2_distance(mu, mid) - s * w) < 1e-9);
    REQUIRE(std::abs(w2_distance(nu, mid) - (1.0 - s) * w) < 1e-9);
  }
}

TEST_CASE("one-dimensional sweep agrees with the LP route") {
  Rng rng(777);
  for (int trial = 0; trial < 10; ++trial) {
    DiscreteMeasure mu = random_cloud(rng, 5 + trial % 4, 1, 1.0);
    DiscreteMeasure nu = random_cloud(rng, 6, 1, 1.0);
    double f = mu.total_mass() / nu.total_mass();
    for (double& w : nu.weights) w *= f;
    double sweep = w1_distance_1d(mu, nu);
    Mat d = pairwise_distances(mu, nu);
    double lp = solve_transport(mu.weights, nu.weights, d, false).value;
    REQUIRE(std::abs(sweep - lp) < 1e-8);
  }
}
