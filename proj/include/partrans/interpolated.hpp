#pragma once

// Two-leg transport costs through a finite set of relay sites: each unit of
// mass travels source -> site -> target, paying a kernel on each leg.  The
// induced cost min over sites approximates a ground cost from above; prices on
// the sites make the problem a small concave maximization whose cells give
// congruent partitions of both marginals.  Includes monotone site improvement
// (a Lloyd-type loop), gap measurement against an exact ground cost, 1-D
// quantile distances, and a hedonic market variant with an opt-out commodity.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <partrans/core.hpp>
#include <partrans/measure.hpp>
#include <partrans/transport.hpp>

namespace partrans {

// Kernel pair for the two legs.  The power family uses
// 2^{r-1} |a - z|^r on both legs, which reproduces |x - y|^r exactly when the
// midpoint is available; tables give per-atom-per-site values directly.
struct CostPair {
  enum class Kind { Power, Tables };
  Kind kind = Kind::Power;
  double r = 2.0;
  Mat t1, t2;  // Tables kind: rows = atoms, cols = sites

  static CostPair power(double r_) {
    require(r_ >= 1.0, "power cost needs r >= 1");
    CostPair c;
    c.kind = Kind::Power;
    c.r = r_;
    return c;
  }

  static CostPair tables(Mat a, Mat b) {
    require(!a.empty() && !b.empty(), "cost tables must be nonempty");
    require(!a[0].empty() && a[0].size() == b[0].size(),
            "cost tables must agree on the site count");
    for (const auto& row : a) require(row.size() == a[0].size(), "ragged table");
    for (const auto& row : b) require(row.size() == b[0].size(), "ragged table");
    CostPair c;
    c.kind = Kind::Tables;
    c.t1 = std::move(a);
    c.t2 = std::move(b);
    return c;
  }

  int site_count(const Mat& sites) const {
    return kind == Kind::Power ? static_cast<int>(sites.size())
                               : static_cast<int>(t1[0].size());
  }

  double leg(const Vec& a, const Vec& z) const {
    double d2 = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      double d = a[j] - z[j];
      d2 += d * d;
    }
    if (r == 2.0) return 2.0 * d2;
    return std::pow(2.0, r - 1.0) * std::pow(d2, 0.5 * r);
  }

  double side1(const DiscreteMeasure& mu, int atom, const Mat& sites,
               int site) const {
    return kind == Kind::Power ? leg(mu.points[atom], sites[site])
                               : t1[atom][site];
  }
  double side2(const DiscreteMeasure& nu, int atom, const Mat& sites,
               int site) const {
    return kind == Kind::Power ? leg(nu.points[atom], sites[site])
                               : t2[atom][site];
  }
};

// best relay for a single pair of points (power family only)
struct RelayCost {
  double value = 0.0;
  int site = -1;
};

inline RelayCost relay_cost(const Vec& x, const Vec& y, const Mat& sites,
                            const CostPair& cost) {
  require(cost.kind == CostPair::Kind::Power,
          "point evaluation needs a point-based cost family");
  require(!sites.empty(), "need at least one site");
  RelayCost out;
  out.value = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sites.size(); ++i) {
    double v = cost.leg(x, sites[i]) + cost.leg(y, sites[i]);
    if (v < out.value) {
      out.value = v;
      out.site = static_cast<int>(i);
    }
  }
  return out;
}

// induced cost matrix between two atom families
inline Mat relay_cost_matrix(const DiscreteMeasure& mu,
                             const DiscreteMeasure& nu, const Mat& sites,
                             const CostPair& cost) {
  const int m = cost.site_count(sites);
  require(m >= 1, "need at least one site");
  Mat c(mu.size(), Vec(nu.size(), 0.0));
  parallel_for(mu.size(), [&](int k) {
    Vec first(m);
    for (int i = 0; i < m; ++i) first[i] = cost.side1(mu, k, sites, i);
    for (int l = 0; l < nu.size(); ++l) {
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i)
        best = std::min(best, first[i] + cost.side2(nu, l, sites, i));
      c[k][l] = best;
    }
  });
  return c;
}

// ---------------------------------------------------------------------------
// site-price functional

struct SitePriceEval {
  double value = 0.0;
  Vec supergradient;  // per site: source cell mass minus target cell mass
  Vec mass_mu, mass_nu;
};

// concave in p: sum_x w min_i [c1 + p_i] + sum_y w min_i [c2 - p_i]
inline SitePriceEval site_price_value(const Vec& p, const DiscreteMeasure& mu,
                                      const DiscreteMeasure& nu,
                                      const Mat& sites, const CostPair& cost) {
  const int m = cost.site_count(sites);
  require(static_cast<int>(p.size()) == m, "price vector must match the sites");
  SitePriceEval out;
  out.mass_mu.assign(m, 0.0);
  out.mass_nu.assign(m, 0.0);
  for (int k = 0; k < mu.size(); ++k) {
    double best = std::numeric_limits<double>::infinity();
    int bi = 0;
    for (int i = 0; i < m; ++i) {
      double v = cost.side1(mu, k, sites, i) + p[i];
      if (v < best) {
        best = v;
        bi = i;
      }
    }
    out.value += mu.weights[k] * best;
    out.mass_mu[bi] += mu.weights[k];
  }
  for (int l = 0; l < nu.size(); ++l) {
    double best = std::numeric_limits<double>::infinity();
    int bi = 0;
    for (int i = 0; i < m; ++i) {
      double v = cost.side2(nu, l, sites, i) - p[i];
      if (v < best) {
        best = v;
        bi = i;
      }
    }
    out.value += nu.weights[l] * best;
    out.mass_nu[bi] += nu.weights[l];
  }
  out.supergradient = out.mass_mu - out.mass_nu;
  return out;
}

// ---------------------------------------------------------------------------
// congruent partition solve

struct CongruentResult {
  Vec prices;
  std::vector<int> site_of_mu, site_of_nu;  // hard cell labels per atom
  Vec mass_mu, mass_nu;                     // per-site cell masses
  std::vector<PlanEntry> plan;              // per-cell product coupling
  double value = 0.0;                       // optimal two-leg transport cost
  double mass_tol = 0.0;
  bool converged = false;
  int iterations = 0;
};

inline CongruentResult solve_congruent(const DiscreteMeasure& mu,
                                       const DiscreteMeasure& nu,
                                       const Mat& sites, const CostPair& cost) {
  const int m = cost.site_count(sites);
  const int K = mu.size(), L = nu.size();
  require(m >= 1, "need at least one site");
  require(std::abs(mu.total_mass() - nu.total_mass()) <=
              1e-9 * std::max(1.0, mu.total_mass()),
          "congruent solve needs balanced marginals");

  // freeze both kernel tables once; the descent only re-reads them per price
  Mat a1(K, Vec(m)), a2(L, Vec(m));
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < m; ++i) a1[k][i] = cost.side1(mu, k, sites, i);
  for (int l = 0; l < L; ++l)
    for (int i = 0; i < m; ++i) a2[l][i] = cost.side2(nu, l, sites, i);

  // maximize the concave price functional == minimize its negation, with the
  // min switched to a max by negating the arguments
  Vec vals(m), sigma(m);
  auto eval = [&](const Vec& p, double eps, Vec& grad, Mat& hess) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (auto& row : hess) std::fill(row.begin(), row.end(), 0.0);
    double f = 0.0;
    for (int k = 0; k < K; ++k) {
      for (int i = 0; i < m; ++i) vals[i] = -(a1[k][i] + p[i]);
      double wk = mu.weights[k];
      f += wk * detail::smooth_max(vals, eps, false, sigma);
      for (int i = 0; i < m; ++i) grad[i] -= wk * sigma[i];
      if (eps > 0.0) {
        double s = wk / eps;
        for (int i = 0; i < m; ++i) {
          if (sigma[i] == 0.0) continue;
          for (int j = 0; j < m; ++j) hess[i][j] -= s * sigma[i] * sigma[j];
          hess[i][i] += s * sigma[i];
        }
      }
    }
    for (int l = 0; l < L; ++l) {
      for (int i = 0; i < m; ++i) vals[i] = -(a2[l][i] - p[i]);
      double wl = nu.weights[l];
      f += wl * detail::smooth_max(vals, eps, false, sigma);
      for (int i = 0; i < m; ++i) grad[i] += wl * sigma[i];
      if (eps > 0.0) {
        double s = wl / eps;
        for (int i = 0; i < m; ++i) {
          if (sigma[i] == 0.0) continue;
          for (int j = 0; j < m; ++j) hess[i][j] -= s * sigma[i] * sigma[j];
          hess[i][i] += s * sigma[i];
        }
      }
    }
    return f;
  };

  DescentOptions opt;
  opt.eps_end = 1e-7;
  opt.max_iters_per_level = 200;
  opt.polish_iters = 400;
  auto rep = minimize_newton(eval, Vec(m, 0.0), opt, [](Vec& x) {
    double mean = sum(x) / x.size();
    for (double& v : x) v -= mean;
  });

  CongruentResult out;
  out.prices = rep.x;
  out.iterations = rep.iterations;
  out.value = -rep.value;
  out.mass_tol = std::max(mu.max_weight(), nu.max_weight()) + 1e-9;

  auto hard = site_price_value(out.prices, mu, nu, sites, cost);
  out.mass_mu = hard.mass_mu;
  out.mass_nu = hard.mass_nu;
  out.site_of_mu.assign(K, 0);
  out.site_of_nu.assign(L, 0);
  for (int k = 0; k < K; ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i)
      if (a1[k][i] + out.prices[i] < best) {
        best = a1[k][i] + out.prices[i];
        out.site_of_mu[k] = i;
      }
  }
  for (int l = 0; l < L; ++l) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i)
      if (a2[l][i] - out.prices[i] < best) {
        best = a2[l][i] - out.prices[i];
        out.site_of_nu[l] = i;
      }
  }

  bool congruent = true;
  for (int i = 0; i < m; ++i)
    if (std::abs(out.mass_mu[i] - out.mass_nu[i]) > out.mass_tol)
      congruent = false;
  out.converged = rep.converged && congruent;

  // per-cell product coupling: mass through site i splits proportionally
  for (int i = 0; i < m; ++i) {
    if (out.mass_nu[i] <= 0.0) continue;
    for (int k = 0; k < K; ++k) {
      if (out.site_of_mu[k] != i) continue;
      for (int l = 0; l < L; ++l) {
        if (out.site_of_nu[l] != i) continue;
        out.plan.push_back(
            {k, l, mu.weights[k] * nu.weights[l] / out.mass_nu[i]});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// monotone site improvement

// Re-centers every site on its combined cell (the quadratic family has the
// weighted centroid in closed form; other exponents descend numerically).
// Cells that would make things worse, and empty cells, keep their site, so a
// re-solve can never pay more through the new sites than through the old.
inline Mat improve_sites(const Mat& sites, const std::vector<int>& site_of_mu,
                         const std::vector<int>& site_of_nu,
                         const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                         const CostPair& cost) {
  require(cost.kind == CostPair::Kind::Power,
          "site improvement needs a point-based cost family");
  const int m = static_cast<int>(sites.size());
  const int d = mu.dim;
  Mat out = sites;

  for (int i = 0; i < m; ++i) {
    std::vector<int> cell_mu, cell_nu;
    for (int k = 0; k < mu.size(); ++k)
      if (site_of_mu[k] == i) cell_mu.push_back(k);
    for (int l = 0; l < nu.size(); ++l)
      if (site_of_nu[l] == i) cell_nu.push_back(l);
    if (cell_mu.empty() && cell_nu.empty()) continue;

    auto cell_cost = [&](const Vec& z) {
      double s = 0.0;
      for (int k : cell_mu) s += mu.weights[k] * cost.leg(mu.points[k], z);
      for (int l : cell_nu) s += nu.weights[l] * cost.leg(nu.points[l], z);
      return s;
    };

    Vec z = sites[i];
    if (cost.r == 2.0) {
      // weighted center of mass of both cells
      Vec num(d, 0.0);
      double den = 0.0;
      for (int k : cell_mu) {
        for (int j = 0; j < d; ++j) num[j] += mu.weights[k] * mu.points[k][j];
        den += mu.weights[k];
      }
      for (int l : cell_nu) {
        for (int j = 0; j < d; ++j) num[j] += nu.weights[l] * nu.points[l][j];
        den += nu.weights[l];
      }
      for (int j = 0; j < d; ++j) z[j] = num[j] / den;
    } else {
      // convex in z for r >= 1: plain backtracking descent from the old site
      double f = cell_cost(z);
      double step = 1.0;
      for (int it = 0; it < 80; ++it) {
        Vec g(d, 0.0);
        for (int k : cell_mu) {
          double dist = 0.0;
          for (int j = 0; j < d; ++j) {
            double dd = z[j] - mu.points[k][j];
            dist += dd * dd;
          }
          dist = std::sqrt(dist);
          if (dist < 1e-14) continue;
          double coef = mu.weights[k] * std::pow(2.0, cost.r - 1.0) * cost.r *
                        std::pow(dist, cost.r - 2.0);
          for (int j = 0; j < d; ++j) g[j] += coef * (z[j] - mu.points[k][j]);
        }
        for (int l : cell_nu) {
          double dist = 0.0;
          for (int j = 0; j < d; ++j) {
            double dd = z[j] - nu.points[l][j];
            dist += dd * dd;
          }
          dist = std::sqrt(dist);
          if (dist < 1e-14) continue;
          double coef = nu.weights[l] * std::pow(2.0, cost.r - 1.0) * cost.r *
                        std::pow(dist, cost.r - 2.0);
          for (int j = 0; j < d; ++j) g[j] += coef * (z[j] - nu.points[l][j]);
        }
        double gn = norm(g);
        if (gn <= 1e-12) break;
        bool moved = false;
        for (int bt = 0; bt < 40; ++bt) {
          Vec trial(d);
          for (int j = 0; j < d; ++j) trial[j] = z[j] - step * g[j];
          double ft = cell_cost(trial);
          if (ft < f - 0.25 * step * gn * gn) {
            z = trial;
            f = ft;
            step *= 1.5;
            moved = true;
            break;
          }
          step *= 0.5;
          if (step < 1e-16) break;
        }
        if (!moved) break;
      }
    }

    if (cell_cost(z) <= cell_cost(sites[i])) out[i] = z;
  }
  return out;
}

// ---------------------------------------------------------------------------
// improvement loop

struct LloydResult {
  std::vector<Mat> site_history;
  Vec values;  // two-leg transport cost at each recorded site set
  bool reached_tol = false;
  int solves = 0;
};

inline LloydResult lloyd_loop(const DiscreteMeasure& mu,
                              const DiscreteMeasure& nu, Mat sites,
                              const CostPair& cost, int iters) {
  require(iters >= 1, "loop needs at least one iteration");
  LloydResult out;
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < iters; ++it) {
    auto cr = solve_congruent(mu, nu, sites, cost);
    ++out.solves;
    out.site_history.push_back(sites);
    out.values.push_back(cr.value);
    if (it > 0 && cr.value > prev + 1e-10) break;  // numeric guard
    if (it > 0 && std::abs(prev - cr.value) <= 1e-9 * (1.0 + std::abs(prev))) {
      out.reached_tol = true;
      break;
    }
    prev = cr.value;
    if (it + 1 < iters)
      sites = improve_sites(sites, cr.site_of_mu, cr.site_of_nu, mu, nu, cost);
  }
  return out;
}

// ---------------------------------------------------------------------------
// approximation gap against an exact ground cost

inline double relay_gap(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                        const Mat& sites, const CostPair& cost,
                        const Mat& exact_cost) {
  Mat through = relay_cost_matrix(mu, nu, sites, cost);
  double v_relay =
      solve_transport(mu.weights, nu.weights, through, false).value;
  double v_exact =
      solve_transport(mu.weights, nu.weights, exact_cost, false).value;
  return v_relay - v_exact;
}

// ---------------------------------------------------------------------------
// 1-D quantile distance of order q

inline double wq_distance_1d(const DiscreteMeasure& mu,
                             const DiscreteMeasure& nu, double q) {
  require(mu.dim == 1 && nu.dim == 1, "quantile sweep is one-dimensional");
  require(q >= 1.0, "order must be at least one");
  double ta = mu.total_mass(), tb = nu.total_mass();
  require(std::abs(ta - tb) <= 1e-9 * std::max(1.0, ta),
          "quantile sweep needs balanced totals");

  auto sorted = [](const DiscreteMeasure& m) {
    std::vector<std::pair<double, double>> v(m.size());
    for (int k = 0; k < m.size(); ++k) v[k] = {m.points[k][0], m.weights[k]};
    std::sort(v.begin(), v.end());
    return v;
  };
  auto A = sorted(mu), B = sorted(nu);

  double acc = 0.0;
  std::size_t ia = 0, ib = 0;
  double ra = A.empty() ? 0.0 : A[0].second;
  double rb = B.empty() ? 0.0 : B[0].second;
  while (ia < A.size() && ib < B.size()) {
    double take = std::min(ra, rb);
    acc += take * std::pow(std::abs(A[ia].first - B[ib].first), q);
    ra -= take;
    rb -= take;
    if (ra <= 1e-15 && ++ia < A.size()) ra = A[ia].second;
    if (rb <= 1e-15 && ++ib < B.size()) rb = B[ib].second;
  }
  return std::pow(acc, 1.0 / q);
}

// ---------------------------------------------------------------------------
// hedonic market with an opt-out commodity

// Both sides may stay out at zero loss, so the functional truncates every
// best response at zero and prices are pinned (no shift gauge).  Kernels here
// are signed losses: a negative entry is a gain, and without some negative
// joint loss nobody ever trades.
struct HedonicResult {
  Vec prices;  // per commodity
  std::vector<int> buyer_choice, producer_choice;  // 0 = out, i+1 = commodity i
  Vec matched_mu, matched_nu;  // per-commodity matched masses
  double surplus = 0.0;        // total gain of all participants
  double mass_tol = 0.0;
  bool converged = false;
  int iterations = 0;
};

inline HedonicResult hedonic_equilibrium(const DiscreteMeasure& mu,
                                         const DiscreteMeasure& nu,
                                         const Mat& sites,
                                         const CostPair& cost) {
  const int m = cost.site_count(sites);
  const int K = mu.size(), L = nu.size();
  require(m >= 1, "need at least one commodity");

  Mat a1(K, Vec(m)), a2(L, Vec(m));
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < m; ++i) a1[k][i] = cost.side1(mu, k, sites, i);
  for (int l = 0; l < L; ++l)
    for (int i = 0; i < m; ++i) a2[l][i] = cost.side2(nu, l, sites, i);

  // minimize total forfeited gain: positive part of the best signed gain on
  // each side, which is exactly the plus-form smoothed max machinery
  Vec vals(m), sigma(m);
  auto eval = [&](const Vec& p, double eps, Vec& grad, Mat& hess) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (auto& row : hess) std::fill(row.begin(), row.end(), 0.0);
    double f = 0.0;
    for (int k = 0; k < K; ++k) {
      for (int i = 0; i < m; ++i) vals[i] = -(a1[k][i] + p[i]);
      double wk = mu.weights[k];
      f += wk * detail::smooth_max(vals, eps, true, sigma);
      for (int i = 0; i < m; ++i) grad[i] -= wk * sigma[i];
      if (eps > 0.0) {
        double s = wk / eps;
        for (int i = 0; i < m; ++i) {
          if (sigma[i] == 0.0) continue;
          for (int j = 0; j < m; ++j) hess[i][j] -= s * sigma[i] * sigma[j];
          hess[i][i] += s * sigma[i];
        }
      }
    }
    for (int l = 0; l < L; ++l) {
      for (int i = 0; i < m; ++i) vals[i] = -(a2[l][i] - p[i]);
      double wl = nu.weights[l];
      f += wl * detail::smooth_max(vals, eps, true, sigma);
      for (int i = 0; i < m; ++i) grad[i] += wl * sigma[i];
      if (eps > 0.0) {
        double s = wl / eps;
        for (int i = 0; i < m; ++i) {
          if (sigma[i] == 0.0) continue;
          for (int j = 0; j < m; ++j) hess[i][j] -= s * sigma[i] * sigma[j];
          hess[i][i] += s * sigma[i];
        }
      }
    }
    return f;
  };

  DescentOptions opt;
  opt.eps_end = 1e-7;
  opt.max_iters_per_level = 200;
  opt.polish_iters = 400;
  auto rep = minimize_newton(eval, Vec(m, 0.0), opt);

  HedonicResult out;
  out.prices = rep.x;
  out.iterations = rep.iterations;
  out.surplus = rep.value;
  out.mass_tol = std::max(mu.max_weight(), nu.max_weight()) + 1e-9;
  out.matched_mu.assign(m, 0.0);
  out.matched_nu.assign(m, 0.0);
  out.buyer_choice.assign(K, 0);
  out.producer_choice.assign(L, 0);

  // ties at exactly zero gain participate, so a free market fully matches
  for (int k = 0; k < K; ++k) {
    double best = std::numeric_limits<double>::infinity();
    int bi = 0;
    for (int i = 0; i < m; ++i)
      if (a1[k][i] + out.prices[i] < best) {
        best = a1[k][i] + out.prices[i];
        bi = i;
      }
    if (best <= 0.0) {
      out.buyer_choice[k] = bi + 1;
      out.matched_mu[bi] += mu.weights[k];
    }
  }
  for (int l = 0; l < L; ++l) {
    double best = std::numeric_limits<double>::infinity();
    int bi = 0;
    for (int i = 0; i < m; ++i)
      if (a2[l][i] - out.prices[i] < best) {
        best = a2[l][i] - out.prices[i];
        bi = i;
      }
    if (best <= 0.0) {
      out.producer_choice[l] = bi + 1;
      out.matched_nu[bi] += nu.weights[l];
    }
  }

  bool balanced = true;
  for (int i = 0; i < m; ++i)
    if (std::abs(out.matched_mu[i] - out.matched_nu[i]) > out.mass_tol)
      balanced = false;
  out.converged = rep.converged && balanced;
  return out;
}

}  // namespace partrans
