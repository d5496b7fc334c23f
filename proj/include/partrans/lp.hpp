#pragma once

// Dense two-phase primal simplex for the small/medium linear programs used
// across the library: feasibility checks, dominance tests, Lipschitz dual
// problems, and cross-checks of the specialized solvers.  Bland's rule keeps
// it cycle-free; sizes here are a few hundred rows/columns at most.

#include <optional>

#include "partrans/core.hpp"

namespace partrans {

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  Vec x;            // primal solution over the original variables
  double objective = 0.0;
  Vec duals_eq;     // one multiplier per equality row
  Vec duals_ub;     // one multiplier per inequality row
};

// min (or max) c.x  subject to  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0
inline LpResult solve_lp(Vec c, const Mat& A_eq, const Vec& b_eq,
                         const Mat& A_ub, const Vec& b_ub,
                         bool maximize = false) {
  const int n = static_cast<int>(c.size());
  const int m_eq = static_cast<int>(A_eq.size());
  const int m_ub = static_cast<int>(A_ub.size());
  const int m = m_eq + m_ub;
  const double eps = 1e-9;

  if (maximize)
    for (double& v : c) v = -v;

  // Column layout: [0,n) originals, [n,n+m_ub) slacks, [n+m_ub, n+m_ub+m)
  // artificials, last column RHS.
  const int slack0 = n;
  const int art0 = n + m_ub;
  const int ncols = n + m_ub + m;
  Mat T(m, Vec(ncols + 1, 0.0));
  std::vector<int> row_sign(m, 1);

  for (int r = 0; r < m; ++r) {
    const bool is_eq = r < m_eq;
    const Vec& arow = is_eq ? A_eq[r] : A_ub[r - m_eq];
    require(static_cast<int>(arow.size()) == n, "lp: row length mismatch");
    for (int j = 0; j < n; ++j) T[r][j] = arow[j];
    if (!is_eq) T[r][slack0 + (r - m_eq)] = 1.0;
    T[r][ncols] = is_eq ? b_eq[r] : b_ub[r - m_eq];
    if (T[r][ncols] < 0.0) {
      row_sign[r] = -1;
      for (int j = 0; j <= ncols; ++j) T[r][j] = -T[r][j];
    }
    T[r][art0 + r] = 1.0;
  }

  std::vector<int> basis(m);
  for (int r = 0; r < m; ++r) basis[r] = art0 + r;

  Vec cost(ncols, 0.0);  // active phase objective over columns
  Vec z(ncols + 1, 0.0);  // reduced-cost row (z_j = c_j - c_B B^-1 a_j), z[ncols] = -obj

  auto rebuild_costrow = [&]() {
    for (int j = 0; j <= ncols; ++j) z[j] = j < ncols ? cost[j] : 0.0;
    for (int r = 0; r < m; ++r) {
      double cb = cost[basis[r]];
      if (cb == 0.0) continue;
      for (int j = 0; j <= ncols; ++j) z[j] -= cb * T[r][j];
    }
  };

  auto pivot = [&](int pr, int pc) {
    double pv = T[pr][pc];
    for (int j = 0; j <= ncols; ++j) T[pr][j] /= pv;
    for (int r = 0; r < m; ++r) {
      if (r == pr) continue;
      double f = T[r][pc];
      if (f == 0.0) continue;
      for (int j = 0; j <= ncols; ++j) T[r][j] -= f * T[pr][j];
    }
    double f = z[pc];
    if (f != 0.0)
      for (int j = 0; j <= ncols; ++j) z[j] -= f * T[pr][j];
    basis[pr] = pc;
  };

  // Bland: lowest-index entering column with z_j < -eps among allowed cols;
  // leaving row by min ratio, ties broken by lowest basis index.
  auto simplex_loop = [&](int col_limit) -> LpStatus {
    for (int iter = 0; iter < 200000; ++iter) {
      int pc = -1;
      for (int j = 0; j < col_limit; ++j) {
        if (z[j] < -eps) { pc = j; break; }
      }
      if (pc < 0) return LpStatus::Optimal;
      int pr = -1;
      double best = 0.0;
      for (int r = 0; r < m; ++r) {
        if (T[r][pc] <= eps) continue;
        double ratio = T[r][ncols] / T[r][pc];
        if (pr < 0 || ratio < best - 1e-12 ||
            (ratio < best + 1e-12 && basis[r] < basis[pr])) {
          pr = r;
          best = ratio;
        }
      }
      if (pr < 0) return LpStatus::Unbounded;
      pivot(pr, pc);
    }
    throw PartransError("lp: iteration limit exceeded");
  };

  LpResult res;

  // Phase 1: minimize the sum of artificials.
  for (int j = art0; j < art0 + m; ++j) cost[j] = 1.0;
  rebuild_costrow();
  simplex_loop(ncols);
  double phase1 = -z[ncols];
  if (phase1 > 1e-7) {
    res.status = LpStatus::Infeasible;
    // hand back the phase-1 multipliers: they satisfy duals.b > 0 and
    // duals^T A <= 0 over the original columns (a Farkas ray), which lets
    // callers build an explicit certificate of infeasibility
    res.duals_eq.assign(m_eq, 0.0);
    res.duals_ub.assign(m_ub, 0.0);
    for (int i = 0; i < m; ++i) {
      double y = 0.0;
      for (int r = 0; r < m; ++r) y += cost[basis[r]] * T[r][art0 + i];
      y *= row_sign[i];
      if (i < m_eq)
        res.duals_eq[i] = y;
      else
        res.duals_ub[i - m_eq] = y;
    }
    return res;
  }
  // Drive any basic artificials out (or leave them at zero in redundant rows).
  for (int r = 0; r < m; ++r) {
    if (basis[r] < art0) continue;
    int pc = -1;
    for (int j = 0; j < art0; ++j)
      if (std::abs(T[r][j]) > 1e-8) { pc = j; break; }
    if (pc >= 0) pivot(r, pc);
  }

  // Phase 2 over the true objective; artificial columns are barred.
  std::fill(cost.begin(), cost.end(), 0.0);
  for (int j = 0; j < n; ++j) cost[j] = c[j];
  rebuild_costrow();
  res.status = simplex_loop(art0);
  if (res.status != LpStatus::Optimal) return res;

  res.x.assign(n, 0.0);
  for (int r = 0; r < m; ++r)
    if (basis[r] < n) res.x[basis[r]] = T[r][ncols];
  double obj = 0.0;
  for (int j = 0; j < n; ++j) obj += c[j] * res.x[j];
  res.objective = maximize ? -obj : obj;

  // Duals from the artificial columns: final T[., art0+i] is column i of
  // B^-1, so y_i = c_B . T[., art0+i].  Undo row negations and the sense flip.
  res.duals_eq.assign(m_eq, 0.0);
  res.duals_ub.assign(m_ub, 0.0);
  for (int i = 0; i < m; ++i) {
    double y = 0.0;
    for (int r = 0; r < m; ++r) {
      int b = basis[r];
      if (b < n) y += c[b] * T[r][art0 + i];
    }
    y *= row_sign[i];
    if (maximize) y = -y;
    if (i < m_eq)
      res.duals_eq[i] = y;
    else
      res.duals_ub[i - m_eq] = y;
  }
  return res;
}

inline bool lp_feasible(const Mat& A_eq, const Vec& b_eq, const Mat& A_ub,
                        const Vec& b_ub, int nvars) {
  Vec c(nvars, 0.0);
  return solve_lp(c, A_eq, b_eq, A_ub, b_ub).status == LpStatus::Optimal;
}

}  // namespace partrans
