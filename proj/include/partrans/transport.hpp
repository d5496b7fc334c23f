#pragma once

// Finite transportation problems: primal simplex on the transportation
// polytope, one-to-one assignment, Birkhoff decomposition of bistochastic
// plans, conjugate duals, path-built duals for cyclically monotone
// assignments, unbalanced metric distances, capacity-relaxed problems, and
// displacement interpolation between equal-weight clouds.

#include <array>
#include <queue>

#include "partrans/measure.hpp"

namespace partrans {

struct TransportResult {
  std::vector<PlanEntry> plan;  // atom-index pairs with positive mass
  double value = 0.0;
  Vec row_duals;  // u
  Vec col_duals;  // v; for a max problem u_i + v_j >= payoff, tight on plan
  int iterations = 0;
};

namespace detail {

// Primal transportation simplex, minimization form.  Basis is a spanning
// tree over row+column nodes; entering variable is the first reduced-cost
// violation in row-major order and the leaving variable breaks ratio ties by
// lowest cell index, which together rule out cycling.
inline TransportResult transport_min(const Vec& a, const Vec& b, const Mat& cost) {
  const int R = static_cast<int>(a.size());
  const int C = static_cast<int>(b.size());
  require(R > 0 && C > 0, "transport: empty marginal");
  require(static_cast<int>(cost.size()) == R, "transport: cost rows mismatch");
  double ta = sum(a), tb = sum(b);
  require(std::abs(ta - tb) <= 1e-9 * std::max({1.0, ta, tb}),
          "transport: marginals must balance");

  Mat flow = zeros(R, C);
  std::vector<std::vector<char>> basic(R, std::vector<char>(C, 0));

  // northwest-corner start walks a staircase of exactly R+C-1 cells
  {
    Vec ar = a, br = b;
    int i = 0, j = 0;
    while (true) {
      double t = std::min(ar[i], br[j]);
      flow[i][j] = t;
      basic[i][j] = 1;
      ar[i] -= t;
      br[j] -= t;
      if (i == R - 1 && j == C - 1) break;
      if (i < R - 1 && (ar[i] <= br[j] || j == C - 1))
        ++i;
      else
        ++j;
    }
  }

  Vec u(R), v(C);
  std::vector<int> parent(R + C), parent_other(R + C);
  // node ids: rows are 0..R-1, columns R..R+C-1

  auto compute_duals = [&]() {
    // solve u_i + v_j = c_ij over the basis tree, anchored at v_0 = 0
    std::vector<std::vector<int>> adj(R + C);
    for (int i = 0; i < R; ++i)
      for (int j = 0; j < C; ++j)
        if (basic[i][j]) {
          adj[i].push_back(R + j);
          adj[R + j].push_back(i);
        }
    std::vector<char> seen(R + C, 0);
    std::queue<int> q;
    v[0] = 0.0;
    seen[R] = 1;
    q.push(R);
    while (!q.empty()) {
      int node = q.front();
      q.pop();
      for (int nb : adj[node]) {
        if (seen[nb]) continue;
        seen[nb] = 1;
        if (nb < R)
          u[nb] = cost[nb][node - R] - v[node - R];
        else
          v[nb - R] = cost[node][nb - R] - u[node];
        q.push(nb);
      }
    }
  };

  int iters = 0;
  for (; iters < 200000; ++iters) {
    compute_duals();
    int ei = -1, ej = -1;
    for (int i = 0; i < R && ei < 0; ++i)
      for (int j = 0; j < C; ++j) {
        if (basic[i][j]) continue;
        if (cost[i][j] - u[i] - v[j] < -1e-10) {
          ei = i;
          ej = j;
          break;
        }
      }
    if (ei < 0) break;  // optimal

    // unique tree path from row node ei to column node R+ej
    std::vector<std::vector<int>> adj(R + C);
    for (int i = 0; i < R; ++i)
      for (int j = 0; j < C; ++j)
        if (basic[i][j]) {
          adj[i].push_back(R + j);
          adj[R + j].push_back(i);
        }
    std::fill(parent.begin(), parent.end(), -2);
    std::queue<int> q;
    parent[ei] = -1;
    q.push(ei);
    while (!q.empty() && parent[R + ej] == -2) {
      int node = q.front();
      q.pop();
      for (int nb : adj[node])
        if (parent[nb] == -2) {
          parent[nb] = node;
          q.push(nb);
        }
    }
    require(parent[R + ej] != -2, "transport: basis lost connectivity");
    std::vector<int> path;  // nodes from entering column back to entering row
    for (int node = R + ej; node != -1; node = parent[node]) path.push_back(node);
    // cycle cells: entering (ei,ej) gets +, then alternate along the path
    struct CellRef { int i, j, sign; };
    std::vector<CellRef> cycle;
    cycle.push_back({ei, ej, +1});
    int sign = -1;
    // path currently runs column -> ... -> row; traverse from the row end so
    // consecutive nodes give basis cells adjacent to the entering row first
    for (int k = static_cast<int>(path.size()) - 1; k > 0; --k) {
      int aN = path[k], bN = path[k - 1];
      int ci = std::min(aN, bN);
      int cj = std::max(aN, bN) - R;
      cycle.push_back({ci, cj, sign});
      sign = -sign;
    }

    double delta = std::numeric_limits<double>::infinity();
    int leave = -1;
    for (std::size_t k = 0; k < cycle.size(); ++k) {
      if (cycle[k].sign != -1) continue;
      double f = flow[cycle[k].i][cycle[k].j];
      long cell = static_cast<long>(cycle[k].i) * C + cycle[k].j;
      long best = leave < 0 ? -1
                            : static_cast<long>(cycle[leave].i) * C + cycle[leave].j;
      if (leave < 0 || f < delta - 1e-15 ||
          (f <= delta + 1e-15 && cell < best)) {
        delta = f;
        leave = static_cast<int>(k);
      }
    }
    require(leave >= 0, "transport: no leaving variable");
    for (const auto& cell : cycle) flow[cell.i][cell.j] += cell.sign * delta;
    basic[ei][ej] = 1;
    basic[cycle[leave].i][cycle[leave].j] = 0;
    flow[cycle[leave].i][cycle[leave].j] = 0.0;
  }
  require(iters < 200000, "transport: iteration limit");

  compute_duals();
  TransportResult res;
  res.iterations = iters;
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < C; ++j) {
      if (flow[i][j] > 1e-14) res.plan.push_back({i, j, flow[i][j]});
      res.value += flow[i][j] * cost[i][j];
    }
  res.row_duals = u;
  res.col_duals = v;
  return res;
}

}  // namespace detail

// max (default) or min of sum payoff[i][j] * plan[i][j] over couplings of
// (a, b).  Duals satisfy u_i + v_j >= payoff (max sense), tight on the plan.
inline TransportResult solve_transport(const Vec& a, const Vec& b,
                                       const Mat& payoff, bool maximize = true) {
  if (!maximize) return detail::transport_min(a, b, payoff);
  Mat cost(payoff.size());
  for (std::size_t i = 0; i < payoff.size(); ++i) {
    cost[i].resize(payoff[i].size());
    for (std::size_t j = 0; j < payoff[i].size(); ++j) cost[i][j] = -payoff[i][j];
  }
  TransportResult res = detail::transport_min(a, b, cost);
  res.value = -res.value;
  for (double& x : res.row_duals) x = -x;
  for (double& x : res.col_duals) x = -x;
  return res;
}

struct AssignmentResult {
  std::vector<int> perm;  // row i matched to column perm[i]
  double value = 0.0;
  Vec row_duals, col_duals;
};

// One worker per firm: unit masses force a permutation out of the basic
// optimal plan.
inline AssignmentResult solve_assignment(const Mat& payoff, bool maximize = true) {
  const int N = static_cast<int>(payoff.size());
  Vec ones(N, 1.0);
  TransportResult t = solve_transport(ones, ones, payoff, maximize);
  AssignmentResult res;
  res.perm.assign(N, -1);
  for (const auto& e : t.plan)
    if (e.mass > 0.5) res.perm[e.i] = e.j;
  for (int i = 0; i < N; ++i)
    require(res.perm[i] >= 0, "assignment: plan was not a permutation");
  res.value = t.value;
  res.row_duals = std::move(t.row_duals);
  res.col_duals = std::move(t.col_duals);
  return res;
}

struct BirkhoffTerm {
  double coeff = 0.0;
  std::vector<int> perm;
};

// Writes a square plan with equal row and column sums as a nonnegative
// combination of permutation matrices (at most N^2 - 2N + 2 terms).
inline std::vector<BirkhoffTerm> birkhoff_decompose(Mat plan, double tol = 1e-12) {
  const int N = static_cast<int>(plan.size());
  std::vector<BirkhoffTerm> terms;
  auto max_entry = [&]() {
    double m = 0.0;
    for (const auto& row : plan)
      for (double x : row) m = std::max(m, x);
    return m;
  };
  std::vector<int> match_col(N);  // column -> row
  std::vector<char> visited(N);
  // Kuhn's augmenting search over the positive support
  std::function<bool(int)> try_row = [&](int i) -> bool {
    for (int j = 0; j < N; ++j) {
      if (plan[i][j] <= tol || visited[j]) continue;
      visited[j] = 1;
      if (match_col[j] < 0 || try_row(match_col[j])) {
        match_col[j] = i;
        return true;
      }
    }
    return false;
  };
  while (max_entry() > tol) {
    std::fill(match_col.begin(), match_col.end(), -1);
    for (int i = 0; i < N; ++i) {
      std::fill(visited.begin(), visited.end(), 0);
      require(try_row(i), "birkhoff: support admits no perfect matching");
    }
    BirkhoffTerm term;
    term.perm.assign(N, -1);
    term.coeff = std::numeric_limits<double>::infinity();
    for (int j = 0; j < N; ++j) {
      term.perm[match_col[j]] = j;
      term.coeff = std::min(term.coeff, plan[match_col[j]][j]);
    }
    for (int i = 0; i < N; ++i) plan[i][term.perm[i]] -= term.coeff;
    terms.push_back(std::move(term));
  }
  return terms;
}

// Profit conjugates: tightest partner potential given one side.
inline Vec dual_conjugate_rows_to_cols(const Mat& payoff, const Vec& u) {
  const int C = static_cast<int>(payoff.empty() ? 0 : payoff[0].size());
  Vec v(C, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < payoff.size(); ++i)
    for (int j = 0; j < C; ++j) v[j] = std::max(v[j], payoff[i][j] - u[i]);
  return v;
}

inline Vec dual_conjugate_cols_to_rows(const Mat& payoff, const Vec& v) {
  Vec u(payoff.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < payoff.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j)
      u[i] = std::max(u[i], payoff[i][j] - v[j]);
  return u;
}

struct CycleReport {
  bool ok = true;
  double worst_gain = 0.0;
  std::vector<int> cycle;  // row indices in exchange order (empty if ok)
};

// Scans every directed simple cycle of length <= k_max for a payoff gain
// from reassigning partners along the cycle.  N is small wherever this is
// called (exhaustive stability audits), so brute force is fine.
inline CycleReport check_cycle_improvements(const Mat& payoff,
                                            const std::vector<int>& assign,
                                            int k_max, double tol = 1e-9) {
  const int N = static_cast<int>(payoff.size());
  k_max = std::min(k_max, N);
  CycleReport rep;
  std::vector<int> path;
  std::vector<char> used(N, 0);

  std::function<void(int)> extend = [&](int start) {
    int last = path.back();
    if (static_cast<int>(path.size()) >= 2) {
      // close the cycle back to start
      double gain = payoff[last][assign[start]] - payoff[last][assign[last]];
      for (std::size_t k = 0; k + 1 < path.size(); ++k)
        gain += payoff[path[k]][assign[path[k + 1]]] - payoff[path[k]][assign[path[k]]];
      if (gain > rep.worst_gain) {
        rep.worst_gain = gain;
        rep.cycle = path;
        rep.ok = rep.worst_gain <= tol;
      }
    }
    if (static_cast<int>(path.size()) == k_max) return;
    for (int nxt = start + 1; nxt < N; ++nxt) {
      if (used[nxt]) continue;
      used[nxt] = 1;
      path.push_back(nxt);
      extend(start);
      path.pop_back();
      used[nxt] = 0;
    }
  };

  for (int s = 0; s + 1 < N; ++s) {
    path.assign(1, s);
    std::fill(used.begin(), used.end(), 0);
    used[s] = 1;
    extend(s);
  }
  rep.ok = rep.worst_gain <= tol;
  if (rep.ok) rep.cycle.clear();
  return rep;
}

struct PathDuals {
  bool ok = true;          // false iff a negative exchange cycle exists
  Vec u, v;                // u_i + v_j >= payoff(i,j), tight on the assignment
  std::vector<int> bad_cycle;
};

// Builds exact supporting potentials for a cyclically monotone assignment by
// shortest paths: with columns relabeled so the match is the identity, the
// edge a -> b costs payoff(a,a) - payoff(b,a), and -u is the distance from a
// free virtual source.  A negative cycle certifies the assignment is not
// optimal, and is returned instead.
inline PathDuals assignment_duals_by_paths(const Mat& payoff,
                                           const std::vector<int>& assign) {
  const int N = static_cast<int>(payoff.size());
  Mat th(N, Vec(N));  // th[i][j] = payoff(i, assign(j))
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) th[i][j] = payoff[i][assign[j]];

  Vec dist(N, 0.0);  // virtual source connects to every node at cost 0
  std::vector<int> pred(N, -1);
  PathDuals res;
  for (int pass = 0; pass < N; ++pass) {
    bool changed = false;
    for (int aN = 0; aN < N; ++aN)
      for (int bN = 0; bN < N; ++bN) {
        if (aN == bN) continue;
        double w = th[aN][aN] - th[bN][aN];
        if (dist[aN] + w < dist[bN] - 1e-13) {
          dist[bN] = dist[aN] + w;
          pred[bN] = aN;
          changed = true;
        }
      }
    if (!changed) break;
    if (pass == N - 1) {
      // negative cycle: walk predecessors until a node repeats
      res.ok = false;
      int node = 0;
      for (int k = 0; k < N; ++k) node = pred[node];
      std::vector<int> seq;
      int cur = node;
      do {
        seq.push_back(cur);
        cur = pred[cur];
      } while (cur != node);
      std::reverse(seq.begin(), seq.end());
      res.bad_cycle = seq;
      return res;
    }
  }

  res.u.assign(N, 0.0);
  res.v.assign(N, 0.0);
  for (int i = 0; i < N; ++i) res.u[i] = -dist[i];
  for (int j = 0; j < N; ++j) res.v[assign[j]] = th[j][j] - res.u[j];
  return res;
}

// ---------------------------------------------------------------------------
// Metric distance between measures of possibly different total mass.

inline Mat pairwise_distances(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  Mat d(mu.size(), Vec(nu.size()));
  for (int i = 0; i < mu.size(); ++i)
    for (int j = 0; j < nu.size(); ++j) {
      double s = 0.0;
      for (int k = 0; k < mu.dim; ++k) {
        double t = mu.points[i][k] - nu.points[j][k];
        s += t * t;
      }
      d[i][j] = std::sqrt(s);
    }
  return d;
}

struct MetricDistanceResult {
  double distance = 0.0;
  Regime balance = Regime::Saturated;  // mass of mu vs mass of nu
  std::vector<PlanEntry> plan;         // real-atom legs only
};

// Kantorovich distance extended to unequal totals: the heavier side may
// leave excess mass in place at zero cost, which matches the sign-constrained
// Lipschitz dual.  A custom metric matrix overrides Euclidean distances.
inline MetricDistanceResult metric_distance(const DiscreteMeasure& mu,
                                            const DiscreteMeasure& nu,
                                            const Mat* metric = nullptr) {
  Mat d = metric ? *metric : pairwise_distances(mu, nu);
  double ma = mu.total_mass(), mb = nu.total_mass();
  MetricDistanceResult out;
  out.balance = classify_regime(mb, ma);  // Undersupplied: nu lighter

  Vec a = mu.weights, b = nu.weights;
  if (out.balance == Regime::Undersupplied) {
    // mu heavier: free virtual destination absorbs the excess
    for (auto& row : d) row.push_back(0.0);
    b.push_back(ma - mb);
  } else if (out.balance == Regime::Oversupplied) {
    // nu heavier: free virtual source supplies the shortfall
    d.push_back(Vec(nu.size(), 0.0));
    a.push_back(mb - ma);
  }
  TransportResult t = solve_transport(a, b, d, /*maximize=*/false);
  out.distance = t.value;
  for (const auto& e : t.plan)
    if (e.i < mu.size() && e.j < nu.size()) out.plan.push_back(e);
  return out;
}

// ---------------------------------------------------------------------------
// Capacity-relaxed problem: not all mass has to move.

struct RelaxedResult {
  double value = 0.0;
  std::vector<PlanEntry> plan;
  Vec xi;  // nonnegative row potentials
  Vec p;   // nonnegative column potentials; xi_i + p_j >= payoff(i,j)
};

// sup of the payoff over sub-couplings (both marginals only bounded above).
// Solved as a balanced problem with a free virtual row/column pair; each
// real-side potential is then shifted by the opposite virtual potential,
// which lands in the nonnegative orthant and keeps the dual objective equal
// to the primal value.
inline RelaxedResult solve_relaxed(const Vec& a, const Vec& b, const Mat& payoff) {
  const int R = static_cast<int>(a.size());
  const int C = static_cast<int>(b.size());
  for (const auto& row : payoff)
    for (double x : row) require(x >= 0.0, "relaxed: payoff must be nonnegative");

  Mat big(R + 1, Vec(C + 1, 0.0));
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < C; ++j) big[i][j] = payoff[i][j];
  Vec aa = a, bb = b;
  aa.push_back(sum(b));  // virtual row soaks unmet column capacity
  bb.push_back(sum(a));  // virtual column soaks unmoved row mass

  TransportResult t = solve_transport(aa, bb, big, /*maximize=*/true);
  RelaxedResult res;
  res.value = t.value;
  for (const auto& e : t.plan)
    if (e.i < R && e.j < C && big[e.i][e.j] >= 0) res.plan.push_back(e);

  // xi_i = u_i + v0 >= 0 and p_j = v_j + u0 >= 0 by dual feasibility against
  // the zero-payoff virtual cells; their weighted sum telescopes to the
  // balanced dual value, i.e. the primal value.
  const double u0 = t.row_duals[R], v0 = t.col_duals[C];
  res.xi.assign(R, 0.0);
  res.p.assign(C, 0.0);
  for (int i = 0; i < R; ++i) res.xi[i] = std::max(0.0, t.row_duals[i] + v0);
  for (int j = 0; j < C; ++j) res.p[j] = std::max(0.0, t.col_duals[j] + u0);
  return res;
}

// ---------------------------------------------------------------------------
// Displacement interpolation for equal-size, equal-weight clouds.

inline double w2_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  Mat d2 = pairwise_distances(mu, nu);
  for (auto& row : d2)
    for (double& x : row) x = x * x;
  TransportResult t = solve_transport(mu.weights, nu.weights, d2, false);
  return std::sqrt(std::max(0.0, t.value));
}

inline DiscreteMeasure mccann_interpolate(const DiscreteMeasure& mu,
                                          const DiscreteMeasure& nu, double s,
                                          std::vector<int>* map_out = nullptr) {
  require(mu.size() == nu.size(), "interpolation needs equal atom counts");
  require(mu.dim == nu.dim, "interpolation needs equal dimensions");
  const int N = mu.size();
  for (int k = 0; k < N; ++k)
    require(std::abs(mu.weights[k] - nu.weights[k]) <= 1e-12,
            "interpolation needs matching atom weights");
  Mat neg_d2(N, Vec(N));
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      double acc = 0.0;
      for (int k = 0; k < mu.dim; ++k) {
        double t = mu.points[i][k] - nu.points[j][k];
        acc += t * t;
      }
      neg_d2[i][j] = -acc;
    }
  AssignmentResult asg = solve_assignment(neg_d2, true);
  if (map_out) *map_out = asg.perm;

  DiscreteMeasure out;
  out.dim = mu.dim;
  out.ids = mu.ids;
  out.weights = mu.weights;
  out.points.resize(N, Vec(mu.dim));
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < mu.dim; ++k)
      out.points[i][k] =
          (1.0 - s) * mu.points[i][k] + s * nu.points[asg.perm[i]][k];
  return out;
}

// 1-D earth-mover distance by sweeping the CDF difference; totals must match.
inline double w1_distance_1d(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  require(mu.dim == 1 && nu.dim == 1, "w1 sweep is one-dimensional");
  double ta = mu.total_mass(), tb = nu.total_mass();
  require(std::abs(ta - tb) <= 1e-9 * std::max(1.0, ta), "w1: totals differ");
  std::vector<std::pair<double, double>> events;  // (x, d mass of mu - nu)
  for (int k = 0; k < mu.size(); ++k)
    events.push_back({mu.points[k][0], mu.weights[k]});
  for (int k = 0; k < nu.size(); ++k)
    events.push_back({nu.points[k][0], -nu.weights[k]});
  std::sort(events.begin(), events.end());
  double dist = 0.0, cdf = 0.0, prev = events.empty() ? 0.0 : events[0].first;
  for (const auto& [x, dm] : events) {
    dist += std::abs(cdf) * (x - prev);
    cdf += dm;
    prev = x;
  }
  return dist;
}

}  // namespace partrans
