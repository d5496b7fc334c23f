#pragma once

// Cooperative and competitive layer on top of the price-partition machinery:
// coalition games built from two-block capacitated screening solves, core
// membership via an implicit-column LP over every coalition, monotonicity
// checks with witnesses, grid-certified unilateral deviation scans, and the
// consumer-differentiating price profile that supports an efficient
// equilibrium.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <exception>
#include <utility>
#include <vector>

#include <partrans/core.hpp>
#include <partrans/measure.hpp>
#include <partrans/partition.hpp>

namespace partrans {

// value per coalition, indexed by player bitmask
struct CoalitionGame {
  int n = 0;
  Vec nu;  // size 1 << n, nu[0] == 0

  CoalitionGame() = default;
  CoalitionGame(int players, Vec values) : n(players), nu(std::move(values)) {
    require(n >= 1 && n <= 20, "coalition game supports 1..20 players");
    require(nu.size() == (std::size_t{1} << n), "need a value per coalition");
    require(nu[0] == 0.0, "the empty coalition must be worthless");
  }

  unsigned grand() const { return (1u << n) - 1u; }
  double value(unsigned mask) const { return nu[mask]; }
};

namespace detail {

// pointwise best utility of the coalition's members
inline Vec super_utility(const Mat& theta, int atoms, unsigned mask) {
  Vec t(atoms, -std::numeric_limits<double>::infinity());
  for (int i = 0; i < static_cast<int>(theta.size()); ++i) {
    if (!(mask & (1u << i))) continue;
    for (int k = 0; k < atoms; ++k) t[k] = std::max(t[k], theta[i][k]);
  }
  return t;
}

// total screening optimum of the block-vs-complement market at the given
// capacities; single-block when the complement is empty
inline double two_block_total(const DiscreteMeasure& mu, const Vec& tJ,
                              const Vec* tC, double capJ, double capC) {
  Mat th;
  CapacitySpec cap;
  th.push_back(tJ);
  cap.m.push_back(std::max(0.0, capJ));
  if (tC) {
    th.push_back(*tC);
    cap.m.push_back(std::max(0.0, capC));
  }
  cap.mode = CapacityMode::AtMost;
  return solve_prices(mu, th, cap).dual_value;
}

// per-mask subset sums of a per-player vector, by peeling the lowest bit
inline Vec subset_sums(const Vec& y, unsigned full) {
  Vec s(full + 1, 0.0);
  for (unsigned mask = 1; mask <= full; ++mask) {
    unsigned low = mask & (0u - mask);
    s[mask] = s[mask ^ low] + y[std::countr_zero(low)];
  }
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// coalition games from block-vs-complement screening

// Gross utility a coalition secures when its members pool capacity, offer
// their best member's utility, and compete with the pooled complement.
inline double coalition_surplus(const DiscreteMeasure& mu, const Mat& theta,
                                const Vec& m, unsigned mask) {
  const int N = static_cast<int>(theta.size());
  const unsigned full = (1u << N) - 1u;
  require(mask >= 1 && mask <= full, "coalition mask out of range");
  const int K = mu.size();

  Vec tJ = detail::super_utility(theta, K, mask);
  double mJ = 0.0, mC = 0.0;
  for (int i = 0; i < N; ++i)
    ((mask >> i) & 1u ? mJ : mC) += m[i];

  Mat th;
  CapacitySpec cap;
  th.push_back(tJ);
  cap.m.push_back(mJ);
  if (mask != full) {
    th.push_back(detail::super_utility(theta, K, full ^ mask));
    cap.m.push_back(mC);
  }
  cap.mode = CapacityMode::AtMost;
  auto sd = solve_prices(mu, th, cap);

  double v = 0.0;
  for (int k = 0; k < K; ++k)
    if (sd.labeling.label[k] == 0) v += mu.weights[k] * tJ[k];
  return v;
}

inline CoalitionGame surplus_game(const DiscreteMeasure& mu, const Mat& theta,
                                  const Vec& m) {
  const int N = static_cast<int>(theta.size());
  require(N >= 1 && N <= 12, "full enumeration supports up to 12 agents");
  require(m.size() == theta.size(), "one capacity per agent");
  const unsigned full = (1u << N) - 1u;

  Vec nu(full + 1, 0.0);
  std::exception_ptr bad;
  std::atomic<bool> failed{false};
  parallel_for(static_cast<int>(full), [&](int idx) {
    if (failed.load()) return;
    try {
      nu[idx + 1] = coalition_surplus(mu, theta, m, idx + 1);
    } catch (...) {
      if (!failed.exchange(true)) bad = std::current_exception();
    }
  });
  if (bad) std::rethrow_exception(bad);
  return CoalitionGame(N, std::move(nu));
}

// Capacity-rent game: each coalition is paid its pooled capacity times the
// marginal value of that capacity in the block-vs-complement market.  The
// derivative comes from symmetric finite differences; a kink (one-sided
// slopes disagreeing beyond 1e-3) is flagged.  When the capacities exceed the
// consumer mass the point is first pulled back radially onto the saturated
// face and only the inward slope is reported.
struct ProfitGame {
  CoalitionGame game;
  std::vector<char> nonsmooth;  // per mask: symmetric slopes disagreed
  std::vector<char> one_sided;  // per mask: clamped, inward slope only
};

inline ProfitGame profit_game(const DiscreteMeasure& mu, const Mat& theta,
                              const Vec& m) {
  const int N = static_cast<int>(theta.size());
  require(N >= 1 && N <= 12, "full enumeration supports up to 12 agents");
  require(m.size() == theta.size(), "one capacity per agent");
  for (double v : m) require(v > 0.0, "capacities must be positive");
  const unsigned full = (1u << N) - 1u;
  const double total_mass = mu.total_mass();
  const int K = mu.size();

  ProfitGame out;
  out.nonsmooth.assign(full + 1, 0);
  out.one_sided.assign(full + 1, 0);
  Vec nu(full + 1, 0.0);

  std::exception_ptr bad;
  std::atomic<bool> failed{false};
  parallel_for(static_cast<int>(full), [&](int idx) {
    if (failed.load()) return;
    try {
      unsigned mask = static_cast<unsigned>(idx) + 1u;
      Vec tJ = detail::super_utility(theta, K, mask);
      Vec tC;
      const Vec* tCp = nullptr;
      double mJ = 0.0, mC = 0.0;
      for (int i = 0; i < N; ++i)
        ((mask >> i) & 1u ? mJ : mC) += m[i];
      if (mask != full) {
        tC = detail::super_utility(theta, K, full ^ mask);
        tCp = &tC;
      }

      bool clamp = mJ + mC > total_mass * (1.0 + 1e-12);
      if (clamp) {
        double scale = total_mass / (mJ + mC);
        mJ *= scale;
        mC *= scale;
        out.one_sided[mask] = 1;
      }
      const double h = 1e-4 * mJ;
      double back = (detail::two_block_total(mu, tJ, tCp, mJ, mC) -
                     detail::two_block_total(mu, tJ, tCp, mJ - h, mC)) /
                    h;
      if (clamp) {
        nu[mask] = mJ * back;
      } else {
        double fwd = (detail::two_block_total(mu, tJ, tCp, mJ + h, mC) -
                      detail::two_block_total(mu, tJ, tCp, mJ, mC)) /
                     h;
        if (std::abs(fwd - back) > 1e-3) out.nonsmooth[mask] = 1;
        nu[mask] = mJ * 0.5 * (fwd + back);
      }
    } catch (...) {
      if (!failed.exchange(true)) bad = std::current_exception();
    }
  });
  if (bad) std::rethrow_exception(bad);
  out.game = CoalitionGame(N, std::move(nu));
  return out;
}

// ---------------------------------------------------------------------------
// core membership

struct CoreResult {
  bool nonempty = false;
  Vec imputation;  // efficient and coalition-proof when nonempty
  std::vector<std::pair<unsigned, double>> certificate;  // balanced collection
  double lp_value = 0.0;  // sharpest balanced-collection bound
};

inline bool in_core(const CoalitionGame& g, const Vec& x, double tol = 1e-9) {
  require(x.size() == static_cast<std::size_t>(g.n), "imputation size");
  const unsigned full = g.grand();
  Vec s = detail::subset_sums(x, full);
  if (s[full] > g.nu[full] + tol) return false;
  for (unsigned mask = 1; mask <= full; ++mask)
    if (s[mask] < g.nu[mask] - tol) return false;
  return true;
}

// Decides core nonemptiness by maximizing the total reward of a fractional
// coalition cover: each player covered exactly once, columns generated
// implicitly over all bitmasks.  The cover value exceeding the grand value
// certifies emptiness; otherwise the row multipliers form a core point.
inline CoreResult core_nonempty(const CoalitionGame& g) {
  const int n = g.n;
  const unsigned full = g.grand();
  CoreResult out;

  std::vector<unsigned> basis(n);
  Mat Binv(n, Vec(n, 0.0));
  for (int i = 0; i < n; ++i) {
    basis[i] = 1u << i;
    Binv[i][i] = 1.0;
  }
  Vec xb(n, 1.0);
  Vec y(n, 0.0);

  for (int iter = 0;; ++iter) {
    require(iter < 200000, "coalition cover LP failed to terminate");
    std::fill(y.begin(), y.end(), 0.0);
    for (int r = 0; r < n; ++r) {
      double cB = g.nu[basis[r]];
      if (cB == 0.0) continue;
      for (int c = 0; c < n; ++c) y[c] += cB * Binv[r][c];
    }
    Vec ys = detail::subset_sums(y, full);
    unsigned entering = 0;
    for (unsigned mask = 1; mask <= full; ++mask)
      if (g.nu[mask] - ys[mask] > 1e-9) {
        entering = mask;  // lowest improving column, for finite termination
        break;
      }
    if (!entering) break;

    Vec d(n, 0.0);
    for (int r = 0; r < n; ++r)
      for (unsigned rest = entering; rest;) {
        unsigned low = rest & (0u - rest);
        d[r] += Binv[r][std::countr_zero(low)];
        rest ^= low;
      }
    int leave = -1;
    double best_t = 0.0;
    for (int r = 0; r < n; ++r) {
      if (d[r] <= 1e-12) continue;
      double t = xb[r] / d[r];
      if (leave < 0 || t < best_t - 1e-15 ||
          (t <= best_t + 1e-15 && basis[r] < basis[leave]))
        leave = r, best_t = t;
    }
    require(leave >= 0, "coalition cover LP lost boundedness");

    // pivot: replace the leaving row and re-normalize the inverse
    double piv = d[leave];
    for (int c = 0; c < n; ++c) Binv[leave][c] /= piv;
    xb[leave] = best_t;
    for (int r = 0; r < n; ++r) {
      if (r == leave || d[r] == 0.0) continue;
      for (int c = 0; c < n; ++c) Binv[r][c] -= d[r] * Binv[leave][c];
      xb[r] -= d[r] * best_t;
      if (xb[r] < 0.0) xb[r] = 0.0;
    }
    basis[leave] = entering;
  }

  out.lp_value = 0.0;
  for (int r = 0; r < n; ++r) out.lp_value += xb[r] * g.nu[basis[r]];

  if (out.lp_value <= g.nu[full] + 1e-9) {
    out.nonempty = true;
    out.imputation = y;
    double slack = (g.nu[full] - sum(y)) / n;
    for (double& v : out.imputation) v += slack;
  } else {
    for (int r = 0; r < n; ++r)
      if (xb[r] > 1e-12) out.certificate.push_back({basis[r], xb[r]});
    std::sort(out.certificate.begin(), out.certificate.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// structural checks

struct SplitWitness {
  bool ok = true;
  unsigned part_a = 0, part_b = 0;  // disjoint pair beating their union
};

inline SplitWitness is_superadditive(const CoalitionGame& g) {
  require(g.n <= 12, "exhaustive check supports up to 12 players");
  const unsigned full = g.grand();
  for (unsigned t = 1; t <= full; ++t)
    for (unsigned s = (t - 1) & t; s; s = (s - 1) & t) {
      unsigned r = t ^ s;
      if (s > r) continue;
      if (g.nu[s] + g.nu[r] > g.nu[t] + 1e-9) return {false, s, r};
    }
  return {};
}

struct IncrementWitness {
  bool ok = true;
  int i = -1, j = -1;   // players whose increments cross
  unsigned base = 0;    // context coalition without either player
};

inline IncrementWitness is_supermodular(const CoalitionGame& g) {
  require(g.n <= 12, "exhaustive check supports up to 12 players");
  const unsigned full = g.grand();
  for (int i = 0; i < g.n; ++i)
    for (int j = i + 1; j < g.n; ++j) {
      unsigned bi = 1u << i, bj = 1u << j;
      unsigned rest = full & ~(bi | bj);
      for (unsigned s = rest;; s = (s - 1) & rest) {
        if (g.nu[s | bi] + g.nu[s | bj] > g.nu[s | bi | bj] + g.nu[s] + 1e-9)
          return {false, i, j, s};
        if (!s) break;
      }
    }
  return {};
}

// marginal-contribution vector along an arrival order
inline Vec greedy_imputation(const CoalitionGame& g,
                             const std::vector<int>& order) {
  require(order.size() == static_cast<std::size_t>(g.n),
          "order must list every player once");
  Vec x(g.n, 0.0);
  unsigned mask = 0;
  for (int i : order) {
    require(i >= 0 && i < g.n && !(mask & (1u << i)), "invalid arrival order");
    unsigned next = mask | (1u << i);
    x[i] = g.nu[next] - g.nu[mask];
    mask = next;
  }
  return x;
}

// ---------------------------------------------------------------------------
// grid-certified unilateral deviation scans

struct DeviationReport {
  double improvement = 0.0;  // best profit gain found on the grid
  int agent = -1;
  double deviation = 0.0;  // the price (or commission) achieving it
  Vec profits;             // at the base profile
};

// Posted flat prices: each consumer takes the best strictly positive net
// utility (ties to the lowest index); optional capacities truncate demand.
inline Vec flat_profits(const Vec& p, const Mat& theta,
                        const DiscreteMeasure& mu, const Vec& cap = {}) {
  const int N = static_cast<int>(theta.size());
  require(p.size() == theta.size(), "one price per agent");
  Vec demand(N, 0.0);
  for (int k = 0; k < mu.size(); ++k) {
    double best = 0.0;
    int bi = -1;
    for (int i = 0; i < N; ++i) {
      double v = theta[i][k] - p[i];
      if (v > best) {
        best = v;
        bi = i;
      }
    }
    if (bi >= 0) demand[bi] += mu.weights[k];
  }
  Vec profit(N, 0.0);
  for (int i = 0; i < N; ++i) {
    double served = cap.empty() ? demand[i] : std::min(demand[i], cap[i]);
    profit[i] = p[i] * served;
  }
  return profit;
}

inline DeviationReport nash_check_flat(const Vec& p, const Mat& theta,
                                       const DiscreteMeasure& mu,
                                       const Vec& grid, const Vec& cap = {}) {
  DeviationReport rep;
  rep.profits = flat_profits(p, theta, mu, cap);
  for (int i = 0; i < static_cast<int>(theta.size()); ++i)
    for (double cand : grid) {
      Vec q = p;
      q[i] = cand;
      double gain = flat_profits(q, theta, mu, cap)[i] - rep.profits[i];
      if (gain > rep.improvement) {
        rep.improvement = gain;
        rep.agent = i;
        rep.deviation = cand;
      }
    }
  return rep;
}

// Commission schedules: agent i keeps the fraction q_i of the utility it
// delivers; consumers keep (1-q_i) theta_i and pick the best positive offer.
inline Vec commission_profits(const Vec& q, const Mat& theta,
                              const DiscreteMeasure& mu) {
  const int N = static_cast<int>(theta.size());
  require(q.size() == theta.size(), "one commission per agent");
  Vec profit(N, 0.0);
  for (int k = 0; k < mu.size(); ++k) {
    double best = 0.0;
    int bi = -1;
    for (int i = 0; i < N; ++i) {
      double v = (1.0 - q[i]) * theta[i][k];
      if (v > best) {
        best = v;
        bi = i;
      }
    }
    if (bi >= 0) profit[bi] += q[bi] * theta[bi][k] * mu.weights[k];
  }
  return profit;
}

inline DeviationReport nash_check_commission(const Vec& q, const Mat& theta,
                                             const DiscreteMeasure& mu,
                                             const Vec& grid) {
  DeviationReport rep;
  rep.profits = commission_profits(q, theta, mu);
  for (int i = 0; i < static_cast<int>(theta.size()); ++i)
    for (double cand : grid) {
      Vec v = q;
      v[i] = cand;
      double gain = commission_profits(v, theta, mu)[i] - rep.profits[i];
      if (gain > rep.improvement) {
        rep.improvement = gain;
        rep.agent = i;
        rep.deviation = cand;
      }
    }
  return rep;
}

// ---------------------------------------------------------------------------
// consumer-differentiating prices

// Every dominant agent charges away exactly its utility advantage, so each
// served consumer keeps the utility of their next-best option.
struct FreePriceResult {
  Mat w;                    // per-agent, per-atom posted charge (0 off-cell)
  std::vector<int> labels;  // serving agent per atom, -1 when out
  Vec residual;             // utility the consumer keeps
  Vec profits;              // per agent
};

inline FreePriceResult free_price_equilibrium(const Mat& theta,
                                              const DiscreteMeasure& mu) {
  const int N = static_cast<int>(theta.size());
  const int K = mu.size();
  FreePriceResult out;
  out.w.assign(N, Vec(K, 0.0));
  out.labels.assign(K, -1);
  out.residual.assign(K, 0.0);
  out.profits.assign(N, 0.0);
  for (int k = 0; k < K; ++k) {
    int bi = 0;
    for (int i = 1; i < N; ++i)
      if (theta[i][k] > theta[bi][k]) bi = i;
    double second = 0.0;
    for (int i = 0; i < N; ++i)
      if (i != bi) second = std::max(second, theta[i][k]);
    if (theta[bi][k] > second) {
      out.labels[k] = bi;
      out.w[bi][k] = theta[bi][k] - second;
      out.residual[k] = second;
      out.profits[bi] += mu.weights[k] * out.w[bi][k];
    }
  }
  return out;
}

// Joint profit of a coalition that differentiates prices against the pooled
// best of the outsiders.
inline double coalition_free_value(const Mat& theta, const DiscreteMeasure& mu,
                                   unsigned mask) {
  const int N = static_cast<int>(theta.size());
  require(mask >= 1 && mask < (1u << N), "coalition mask out of range");
  double v = 0.0;
  for (int k = 0; k < mu.size(); ++k) {
    double inside = -std::numeric_limits<double>::infinity(), outside = 0.0;
    for (int i = 0; i < N; ++i) {
      if ((mask >> i) & 1u)
        inside = std::max(inside, theta[i][k]);
      else
        outside = std::max(outside, theta[i][k]);
    }
    if (inside > outside) v += mu.weights[k] * (inside - outside);
  }
  return v;
}

inline CoalitionGame free_price_game(const Mat& theta,
                                     const DiscreteMeasure& mu) {
  const int N = static_cast<int>(theta.size());
  require(N >= 1 && N <= 12, "full enumeration supports up to 12 agents");
  const unsigned full = (1u << N) - 1u;
  Vec nu(full + 1, 0.0);
  for (unsigned mask = 1; mask <= full; ++mask)
    nu[mask] = coalition_free_value(theta, mu, mask);
  return CoalitionGame(N, std::move(nu));
}

// ---------------------------------------------------------------------------
// three proportional agents

// Closed-form stability conditions for three agents whose utilities are
// lambda_i scalings of one base utility, evaluated through the best-fill
// curve of the base.
struct ThreePlayerStability {
  bool surplus_stable = false;
  bool profit_stable = false;
  double surplus_margin = 0.0;  // lambda ratio minus the fill-curve ratio
  double profit_margin = 0.0;   // slope headroom of the grand coalition
};

inline ThreePlayerStability three_player_stability(const Vec& lambda,
                                                   const Vec& m,
                                                   const DiscreteMeasure& mu,
                                                   const Vec& base) {
  require(lambda.size() == 3 && m.size() == 3, "three agents expected");
  require(lambda[0] < lambda[1] && lambda[1] < lambda[2],
          "scalings must be strictly increasing");
  for (double v : m) require(v > 0.0, "capacities must be positive");

  auto F = [&](double mm) { return best_mass_fill(mu, base, mm).value; };
  auto Fp = [&](double mm) { return fill_price(mu, base, mm); };

  ThreePlayerStability out;
  out.surplus_margin =
      lambda[2] / lambda[1] - F(m[0] + m[1]) / (F(m[0]) + F(m[1]));
  out.surplus_stable = out.surplus_margin > 0.0;

  double d = 2.0 * m[0] * (lambda[2] - lambda[1]) +
             (m[1] + m[2]) * (2.0 * lambda[2] - lambda[1]);
  double alpha = (m[0] + m[2]) * (lambda[2] - lambda[1]) / d;
  double beta = (m[1] + m[2]) * (lambda[2] - lambda[0]) / d;
  out.profit_margin =
      Fp(m[0] + m[1] + m[2]) - alpha * Fp(m[1]) - beta * Fp(m[0]);
  out.profit_stable = out.profit_margin > 0.0;
  return out;
}

}  // namespace partrans
