#pragma once

// Partitioning a measure of consumers among finitely many agents with
// capacity targets: greedy fill curves and their marginal prices, values of
// a family of proportionally scaled utilities, a regime-aware price solver
// for the screening objective, and discretized-gradient price dynamics.

#include "partrans/measure.hpp"
#include "partrans/transport.hpp"

namespace partrans {

// ---------------------------------------------------------------------------
// Best-fill curve of a single utility: integral of theta over the
// highest-utility set of mass m, plus the cutoff utility level there.

struct FillResult {
  double value = 0.0;   // integral of theta over the filled set
  double price = 0.0;   // utility level at the marginal atom
  double filled = 0.0;  // mass actually placed (= min(m, total))
};

inline FillResult best_mass_fill(const DiscreteMeasure& mu, const Vec& theta,
                                 double m) {
  const int K = mu.size();
  std::vector<int> order(K);
  for (int k = 0; k < K; ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (theta[a] != theta[b]) return theta[a] > theta[b];
    return mu.ids[a] < mu.ids[b];
  });
  FillResult res;
  double remaining = std::max(0.0, m);
  for (int k : order) {
    if (remaining <= 0.0) break;
    double take = std::min(remaining, mu.weights[k]);
    res.value += take * theta[k];
    res.filled += take;
    remaining -= take;
    res.price = theta[k];
  }
  return res;
}

// d/dm of the fill curve (the cutoff level).
inline double fill_price(const DiscreteMeasure& mu, const Vec& theta, double m) {
  return best_mass_fill(mu, theta, m).price;
}

// Values when agent i's utility is lambda_i * base and stronger agents skim
// the better consumers first: agents sorted by lambda fill nested suffixes
// of the best-fill curve of the base utility.
inline Vec scaled_family_values(const DiscreteMeasure& mu, const Vec& base,
                                const Vec& lambda, const Vec& m) {
  const int N = static_cast<int>(lambda.size());
  std::vector<int> order(N);
  for (int i = 0; i < N; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (lambda[a] != lambda[b]) return lambda[a] < lambda[b];
    return a < b;
  });
  // suffix capacity above each agent in increasing-lambda order
  Vec suffix(N + 1, 0.0);
  for (int r = N - 1; r >= 0; --r) suffix[r] = suffix[r + 1] + m[order[r]];
  Vec values(N, 0.0);
  for (int r = 0; r < N; ++r) {
    double hi = best_mass_fill(mu, base, suffix[r]).value;
    double lo = best_mass_fill(mu, base, suffix[r + 1]).value;
    values[order[r]] = lambda[order[r]] * (hi - lo);
  }
  return values;
}

inline Vec partition_values(const DiscreteMeasure& mu, const Mat& theta,
                            const Labeling& lab) {
  Vec v(theta.size(), 0.0);
  for (int k = 0; k < mu.size(); ++k)
    if (lab.label[k] >= 0) v[lab.label[k]] += mu.weights[k] * theta[lab.label[k]][k];
  return v;
}

// ---------------------------------------------------------------------------
// Regime-aware price solver.
//
// Prices p screen consumers into cells by argmax of theta_i - p_i.  The
// convex objective minimized depends on the supply/demand balance:
//   saturated exact:      sum_x max_i(theta_i - p_i) + p.m   on sum(p) = 0
//   undersupplied exact:  sum_x [max_i(theta_i - p_i)]_+ + p.m
//   oversupplied / at-most: sum_x [max_i(theta_i - p_i)]_+ + [p]_+ . m
// In the last case cells with positive price fill exactly, cells with
// negative price stay empty, and partially booked cells sit at price zero.

struct SDResult {
  Vec prices;
  Labeling labeling;
  Vec cell_masses;
  double unassigned = 0.0;
  double primal_value = 0.0;  // payoff collected by the returned labeling
  double dual_value = 0.0;    // minimized screening objective
  Regime regime = Regime::Saturated;
  CapacityMode mode = CapacityMode::Exact;
  double mass_tol = 0.0;
  int iterations = 0;
  bool converged = false;
};

inline SDResult solve_prices(const DiscreteMeasure& mu, const Mat& theta,
                             const CapacitySpec& cap) {
  const int N = static_cast<int>(cap.m.size());
  const int K = mu.size();
  require(static_cast<int>(theta.size()) == N, "solve_prices: theta rows != agents");

  SDResult out;
  out.mode = cap.mode;
  out.regime = classify_regime(cap.total(), mu.total_mass());
  out.mass_tol = mu.max_weight() + 1e-9;
  const bool saturated_exact =
      cap.mode == CapacityMode::Exact && out.regime == Regime::Saturated;
  const bool under_exact =
      cap.mode == CapacityMode::Exact && out.regime == Regime::Undersupplied;
  const bool plus_form = !saturated_exact;
  const bool clip_caps = !saturated_exact && !under_exact;

  Vec vals(N), sigma(N);
  auto eval = [&](const Vec& p, double eps, Vec& grad, Mat& hess) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (auto& row : hess) std::fill(row.begin(), row.end(), 0.0);
    double f = 0.0;
    for (int k = 0; k < K; ++k) {
      for (int i = 0; i < N; ++i) vals[i] = theta[i][k] - p[i];
      double wk = mu.weights[k];
      f += wk * detail::smooth_max(vals, eps, plus_form, sigma);
      for (int i = 0; i < N; ++i) grad[i] -= wk * sigma[i];
      if (eps > 0.0) {
        double s = wk / eps;
        for (int i = 0; i < N; ++i) {
          if (sigma[i] == 0.0) continue;
          for (int j = 0; j < N; ++j) hess[i][j] -= s * sigma[i] * sigma[j];
          hess[i][i] += s * sigma[i];
        }
      }
    }
    for (int i = 0; i < N; ++i) {
      if (!clip_caps) {
        f += p[i] * cap.m[i];
        grad[i] += cap.m[i];
      } else if (eps > 0.0) {
        // softplus caps: eps*log(1+exp(p/eps)), stable in both tails
        double t = p[i] / eps;
        double sp = t > 0 ? p[i] + eps * std::log1p(std::exp(-t))
                          : eps * std::log1p(std::exp(t));
        double sg = 1.0 / (1.0 + std::exp(-t));
        f += cap.m[i] * sp;
        grad[i] += cap.m[i] * sg;
        hess[i][i] += cap.m[i] * sg * (1.0 - sg) / eps;
      } else {
        f += cap.m[i] * std::max(0.0, p[i]);
        if (p[i] > 0.0) grad[i] += cap.m[i];
      }
    }
    return f;
  };

  DescentOptions opt;
  opt.eps_end = 1e-7;
  opt.max_iters_per_level = 200;
  opt.polish_iters = 400;
  DescentReport rep;
  if (saturated_exact) {
    rep = minimize_newton(eval, Vec(N, 0.0), opt, [](Vec& x) {
      double mean = sum(x) / x.size();
      for (double& v : x) v -= mean;
    });
  } else {
    rep = minimize_newton(eval, Vec(N, 0.0), opt);
  }

  out.prices = rep.x;
  out.dual_value = rep.value;
  out.iterations = rep.iterations;

  // hard labeling at the solved prices (outside wins exact ties in plus form)
  out.labeling.label.assign(K, -1);
  for (int k = 0; k < K; ++k) {
    int best = -1;
    double bv = plus_form ? 0.0 : -std::numeric_limits<double>::infinity();
    for (int i = 0; i < N; ++i) {
      double v = theta[i][k] - out.prices[i];
      if (v > bv) {
        bv = v;
        best = i;
      }
    }
    out.labeling.label[k] = best;
    if (out.labeling.label[k] >= 0)
      out.primal_value += mu.weights[k] * theta[out.labeling.label[k]][k];
  }
  out.cell_masses = out.labeling.cell_masses(mu, N);
  out.unassigned = out.labeling.unassigned_mass(mu);

  bool masses_ok = true;
  const double ptol = 1e-6;
  for (int i = 0; i < N; ++i) {
    double mi = out.cell_masses[i];
    if (clip_caps) {
      if (out.prices[i] > ptol)
        masses_ok = masses_ok && std::abs(mi - cap.m[i]) <= out.mass_tol;
      else if (out.prices[i] < -ptol)
        masses_ok = masses_ok && mi <= out.mass_tol;
      else
        masses_ok = masses_ok && mi <= cap.m[i] + out.mass_tol;
    } else {
      masses_ok = masses_ok && std::abs(mi - cap.m[i]) <= out.mass_tol;
    }
  }
  out.converged = rep.converged && masses_ok;
  return out;
}

// Exact optimum of the same primal via the transportation solver; intended
// for cross-checks at moderate sizes.
inline double exact_partition_value(const DiscreteMeasure& mu, const Mat& theta,
                                    const CapacitySpec& cap) {
  const int N = static_cast<int>(cap.m.size());
  const int K = mu.size();
  Regime reg = classify_regime(cap.total(), mu.total_mass());
  const bool saturated_exact = cap.mode == CapacityMode::Exact && reg == Regime::Saturated;
  const bool under_exact =
      cap.mode == CapacityMode::Exact && reg == Regime::Undersupplied;

  Mat payoff(K);
  Vec colcap;
  for (int k = 0; k < K; ++k) {
    payoff[k].resize(N);
    for (int i = 0; i < N; ++i) payoff[k][i] = theta[i][k];
  }
  for (int i = 0; i < N; ++i) colcap.push_back(cap.m[i]);
  Vec rowmass = mu.weights;

  if (saturated_exact) {
    // already balanced
  } else if (under_exact) {
    for (int k = 0; k < K; ++k) payoff[k].push_back(0.0);
    colcap.push_back(mu.total_mass() - cap.total());
  } else {
    // optional participation on both sides
    for (int k = 0; k < K; ++k) payoff[k].push_back(0.0);
    colcap.push_back(mu.total_mass());
    payoff.push_back(Vec(N + 1, 0.0));
    rowmass.push_back(cap.total());
  }
  return solve_transport(rowmass, colcap, payoff, true).value;
}

// ---------------------------------------------------------------------------
// Implicit (proximal) price dynamics for the plus-form screening objective
// G(p) = sum_x [max_i(theta_i - p_i)]_+ + p.m.  Each step minimizes
// |q - p|^2/(2 dt) + G(q), so G never increases.  When capacities exceed
// what screening can deliver, |p| grows without bound along a stabilizing
// direction instead; that is reported as escalation.

struct DynamicsResult {
  Mat prices;       // p_k per recorded step (including the start)
  Vec values;       // G(p_k)
  bool escalating = false;
  Vec direction;    // normalized terminal direction when escalating
  int steps_taken = 0;
};

inline DynamicsResult price_dynamics(const DiscreteMeasure& mu, const Mat& theta,
                                     const Vec& m, double dt, int max_steps,
                                     double escalate_norm = 1e3) {
  const int N = static_cast<int>(m.size());
  const int K = mu.size();
  Vec vals(N), sigma(N);

  auto G = [&](const Vec& p, double eps, Vec& grad, Mat& hess) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (auto& row : hess) std::fill(row.begin(), row.end(), 0.0);
    double f = 0.0;
    for (int k = 0; k < K; ++k) {
      for (int i = 0; i < N; ++i) vals[i] = theta[i][k] - p[i];
      double wk = mu.weights[k];
      f += wk * detail::smooth_max(vals, eps, true, sigma);
      for (int i = 0; i < N; ++i) grad[i] -= wk * sigma[i];
      if (eps > 0.0) {
        double s = wk / eps;
        for (int i = 0; i < N; ++i) {
          if (sigma[i] == 0.0) continue;
          for (int j = 0; j < N; ++j) hess[i][j] -= s * sigma[i] * sigma[j];
          hess[i][i] += s * sigma[i];
        }
      }
    }
    for (int i = 0; i < N; ++i) {
      f += p[i] * m[i];
      grad[i] += m[i];
    }
    return f;
  };

  DynamicsResult out;
  Vec p(N, 0.0), gdummy(N);
  Mat hdummy(N, Vec(N, 0.0));
  Vec prev_dir;
  out.prices.push_back(p);
  out.values.push_back(G(p, 0.0, gdummy, hdummy));

  DescentOptions opt;
  opt.eps_start = 1e-2;
  opt.eps_end = 1e-8;
  opt.max_iters_per_level = 100;
  opt.polish_iters = 200;

  for (int step = 0; step < max_steps; ++step) {
    Vec anchor = p;
    auto prox = [&](const Vec& q, double eps, Vec& grad, Mat& hess) {
      double f = G(q, eps, grad, hess);
      double d2 = 0.0;
      for (int i = 0; i < N; ++i) {
        double d = q[i] - anchor[i];
        d2 += d * d;
        grad[i] += d / dt;
        hess[i][i] += 1.0 / dt;
      }
      return f + d2 / (2.0 * dt);
    };
    DescentReport rep = minimize_newton(prox, p, opt);
    p = rep.x;
    out.prices.push_back(p);
    out.values.push_back(G(p, 0.0, gdummy, hdummy));
    out.steps_taken = step + 1;

    double pn = norm(p);
    if (pn > escalate_norm) {
      Vec dir(N);
      for (int i = 0; i < N; ++i) dir[i] = p[i] / pn;
      if (!prev_dir.empty() && linf(dir - prev_dir) <= 1e-6) {
        out.escalating = true;
        out.direction = dir;
        break;
      }
      prev_dir = dir;
    }
  }
  return out;
}

}  // namespace partrans
