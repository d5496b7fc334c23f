#pragma once

// Vector-valued splitting of a discrete measure: each atom carries a share
// vector over J goods, agents are assigned whole atoms (or fractions, in the
// weak relaxation), and a capacity matrix prescribes how much of every good
// each agent must end up holding.  Feasibility of a capacity matrix, the
// dominance order between matrices, and the price-based optimal split all
// reduce to small LPs plus a smoothed dual descent.

#include <array>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include <partrans/core.hpp>
#include <partrans/lp.hpp>
#include <partrans/measure.hpp>

namespace partrans {

// Per-atom share rows over J goods; every row lies on the unit simplex.
struct GoodsField {
  Mat zeta;

  GoodsField() = default;
  explicit GoodsField(Mat z) : zeta(std::move(z)) {
    require(!zeta.empty(), "goods field needs at least one atom");
    const std::size_t J = zeta[0].size();
    require(J > 0, "goods field needs at least one good");
    for (auto& row : zeta) {
      require(row.size() == J, "ragged goods field");
      double s = 0.0;
      for (double& v : row) {
        require(v >= -1e-12, "negative goods share");
        if (v < 0.0) v = 0.0;
        s += v;
      }
      require(std::abs(s - 1.0) <= 1e-9, "goods shares must sum to one");
      for (double& v : row) v /= s;
    }
  }

  int goods() const { return zeta.empty() ? 0 : static_cast<int>(zeta[0].size()); }
  int atoms() const { return static_cast<int>(zeta.size()); }

  // total endowment per good under mu
  Vec totals(const DiscreteMeasure& mu) const {
    require(atoms() == mu.size(), "goods field does not match the measure");
    Vec t(goods(), 0.0);
    for (int k = 0; k < atoms(); ++k)
      for (int j = 0; j < goods(); ++j) t[j] += mu.weights[k] * zeta[k][j];
    return t;
  }
};

// two goods with complementary shares: (s, 1-s) per atom
inline GoodsField two_goods_field(const Vec& share) {
  Mat z(share.size(), Vec(2));
  for (std::size_t k = 0; k < share.size(); ++k) {
    require(share[k] >= -1e-12 && share[k] <= 1.0 + 1e-12,
            "share must lie in [0,1]");
    z[k][0] = std::min(1.0, std::max(0.0, share[k]));
    z[k][1] = 1.0 - z[k][0];
  }
  return GoodsField(std::move(z));
}

enum class CoverMode { Partition, Subpartition };

// Support value of a price matrix: sum over atoms of the best row response
// p_i . zeta(x), optionally floored at zero (atoms may stay unassigned in
// subpartition mode).  The gradient rows are the goods captured per agent.
struct SupportResult {
  double value = 0.0;
  Mat gradient;  // N x J, row i = goods mass collected by agent i
};

inline SupportResult goods_support(const Mat& P, const DiscreteMeasure& mu,
                                   const GoodsField& zeta, CoverMode mode) {
  const int N = static_cast<int>(P.size());
  const int J = zeta.goods();
  require(N > 0, "price matrix needs at least one row");
  require(zeta.atoms() == mu.size(), "goods field does not match the measure");
  for (const auto& row : P)
    require(static_cast<int>(row.size()) == J, "price row has wrong width");

  SupportResult out;
  out.gradient.assign(N, Vec(J, 0.0));
  for (int k = 0; k < mu.size(); ++k) {
    double best = -std::numeric_limits<double>::infinity();
    int bi = -1;
    for (int i = 0; i < N; ++i) {
      double v = dot(P[i], zeta.zeta[k]);
      if (v > best) {
        best = v;
        bi = i;
      }
    }
    if (mode == CoverMode::Subpartition && best <= 0.0) continue;
    out.value += mu.weights[k] * best;
    for (int j = 0; j < J; ++j)
      out.gradient[bi][j] += mu.weights[k] * zeta.zeta[k][j];
  }
  return out;
}

inline double frobenius_dot(const Mat& A, const Mat& B) {
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) s += dot(A[i], B[i]);
  return s;
}

inline double frobenius_norm(const Mat& A) {
  return std::sqrt(std::max(0.0, frobenius_dot(A, A)));
}

// ---------------------------------------------------------------------------
// feasibility of a capacity matrix

struct FeasibilityCheck {
  enum class Verdict { Feasible, Infeasible, Boundary };
  Verdict verdict = Verdict::Feasible;
  bool balanced = true;
  Vec balance_gap;           // per-good column sum minus endowment
  Mat weights;               // K x N fractional assignment when feasible
  bool has_certificate = false;
  Mat certificate;           // unit-norm price matrix separating M, if found
  double certificate_value = 0.0;  // support value minus P:M, negative outside

  bool feasible() const { return verdict == Verdict::Feasible; }
};

namespace detail {

// Turn the phase-1 multipliers of a failed cover LP into a violated price
// inequality.  The multipliers on the moment rows are the price matrix
// itself: complementary slackness on the assignment columns bounds the
// cover-row multipliers by -w_k max_i(P_i . zeta_k), so a positive Farkas
// product means support(P) < P:M.  The matrix is rescaled to unit Frobenius
// norm (the inequality is homogeneous) and re-scored against the hard
// support so the reported margin is exact rather than solver slop.
inline double farkas_certificate(const Vec& moment_duals, const Mat& M,
                                 const DiscreteMeasure& mu,
                                 const GoodsField& zeta, CoverMode mode,
                                 Mat& best_P) {
  const int N = static_cast<int>(M.size());
  const int J = zeta.goods();
  best_P.assign(N, Vec(J, 0.0));
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < J; ++j) best_P[i][j] = moment_duals[i * J + j];
  double nn = frobenius_norm(best_P);
  if (nn < 1e-12) {
    best_P.assign(N, Vec(J, 0.0));
    return 0.0;
  }
  for (auto& row : best_P)
    for (double& v : row) v /= nn;
  return goods_support(best_P, mu, zeta, mode).value - frobenius_dot(best_P, M);
}

}  // namespace detail

inline FeasibilityCheck capacity_feasible(const Mat& M,
                                          const DiscreteMeasure& mu,
                                          const GoodsField& zeta,
                                          CoverMode mode) {
  const int N = static_cast<int>(M.size());
  const int J = zeta.goods();
  const int K = mu.size();
  require(N > 0, "capacity matrix needs at least one row");
  require(zeta.atoms() == K, "goods field does not match the measure");
  for (const auto& row : M) {
    require(static_cast<int>(row.size()) == J, "capacity row has wrong width");
    for (double v : row) require(v >= -1e-12, "negative capacity entry");
  }

  FeasibilityCheck out;
  Vec endow = zeta.totals(mu);
  out.balance_gap.assign(J, 0.0);
  for (int j = 0; j < J; ++j) {
    double col = 0.0;
    for (int i = 0; i < N; ++i) col += M[i][j];
    out.balance_gap[j] = col - endow[j];
  }
  if (mode == CoverMode::Partition) {
    for (int j = 0; j < J; ++j)
      if (std::abs(out.balance_gap[j]) > 1e-9 * (1.0 + endow[j]))
        out.balanced = false;
    if (!out.balanced) {
      // a full split always hands out every good, so the column sums are
      // forced; no LP needed to reject
      out.verdict = FeasibilityCheck::Verdict::Infeasible;
      return out;
    }
  }

  // ground-truth LP on fractional atom assignments gamma(x, i) >= 0
  const int nvars = K * N;
  Mat A_eq;
  Vec b_eq;
  Mat A_ub;
  Vec b_ub;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < J; ++j) {
      Vec row(nvars, 0.0);
      for (int k = 0; k < K; ++k)
        row[k * N + i] = mu.weights[k] * zeta.zeta[k][j];
      A_eq.push_back(std::move(row));
      b_eq.push_back(M[i][j]);
    }
  for (int k = 0; k < K; ++k) {
    Vec row(nvars, 0.0);
    for (int i = 0; i < N; ++i) row[k * N + i] = 1.0;
    if (mode == CoverMode::Partition) {
      A_eq.push_back(std::move(row));
      b_eq.push_back(1.0);
    } else {
      A_ub.push_back(std::move(row));
      b_ub.push_back(1.0);
    }
  }
  auto lp = solve_lp(Vec(nvars, 0.0), A_eq, b_eq, A_ub, b_ub);
  if (lp.status == LpStatus::Optimal) {
    out.verdict = FeasibilityCheck::Verdict::Feasible;
    out.weights.assign(K, Vec(N, 0.0));
    for (int k = 0; k < K; ++k)
      for (int i = 0; i < N; ++i) out.weights[k][i] = lp.x[k * N + i];
    return out;
  }

  // the phase-1 ray of the same LP doubles as a separating price system, so
  // the verdict and its witness cannot disagree
  double cv =
      detail::farkas_certificate(lp.duals_eq, M, mu, zeta, mode, out.certificate);
  out.certificate_value = cv;
  if (cv < -1e-9) {
    out.has_certificate = true;
    out.verdict = FeasibilityCheck::Verdict::Infeasible;
  } else {
    out.verdict = FeasibilityCheck::Verdict::Boundary;
  }
  return out;
}

// ---------------------------------------------------------------------------
// dominance order between capacity matrices

struct DominanceResult {
  bool dominates = false;
  Mat split;         // rows of the first matrix distributed over the second
  bool jensen_witness = false;
  double jensen_gap = 0.0;  // quadratic moment excess of the target matrix
};

// quadratic moment sum_i |row|^2 / mass(row); merging rows can only lower it
inline double quadratic_row_moment(const Mat& M) {
  double s = 0.0;
  for (const auto& row : M) {
    double mass = sum(row);
    if (mass <= 1e-15) continue;
    s += dot(row, row) / mass;
  }
  return s;
}

inline DominanceResult capacity_dominates(const Mat& M, const Mat& M2) {
  const int N1 = static_cast<int>(M.size());
  const int N2 = static_cast<int>(M2.size());
  require(N1 > 0 && N2 > 0, "empty capacity matrix");
  const int J = static_cast<int>(M[0].size());
  for (const auto& row : M2)
    require(static_cast<int>(row.size()) == J, "matrices disagree on goods");

  // unknowns S[k][i] >= 0: how row k of M spreads over the rows of M2.
  // Each source row is fully distributed and the images must add up to M2.
  const int nvars = N1 * N2;
  Mat A_eq;
  Vec b_eq;
  for (int k = 0; k < N1; ++k) {
    Vec row(nvars, 0.0);
    for (int i = 0; i < N2; ++i) row[k * N2 + i] = 1.0;
    A_eq.push_back(std::move(row));
    b_eq.push_back(1.0);
  }
  for (int i = 0; i < N2; ++i)
    for (int j = 0; j < J; ++j) {
      Vec row(nvars, 0.0);
      for (int k = 0; k < N1; ++k) row[k * N2 + i] = M[k][j];
      A_eq.push_back(std::move(row));
      b_eq.push_back(M2[i][j]);
    }
  auto lp = solve_lp(Vec(nvars, 0.0), A_eq, b_eq, {}, {});

  DominanceResult out;
  if (lp.status == LpStatus::Optimal) {
    out.dominates = true;
    out.split.assign(N1, Vec(N2, 0.0));
    for (int k = 0; k < N1; ++k)
      for (int i = 0; i < N2; ++i) out.split[k][i] = lp.x[k * N2 + i];
    return out;
  }
  double gap = quadratic_row_moment(M2) - quadratic_row_moment(M);
  if (gap > 1e-9) {
    // averaging rows cannot raise the quadratic moment, so the target matrix
    // being strictly hotter certifies the failure
    out.jensen_witness = true;
    out.jensen_gap = gap;
  }
  return out;
}

// ---------------------------------------------------------------------------
// convex moment criterion

// F is a max of linear forms on the simplex (rows of `pieces`), optionally
// floored at zero.  Returns mu(F(zeta)) - sum_i mass_i F(row_i / mass_i); the
// row term collapses to a plain max because F is positively homogeneous.
inline double convex_moment_residual(const Mat& M, const DiscreteMeasure& mu,
                                     const GoodsField& zeta, const Mat& pieces,
                                     bool floor_at_zero) {
  require(!pieces.empty(), "need at least one linear piece");
  double lhs = 0.0;
  for (int k = 0; k < mu.size(); ++k) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& a : pieces) best = std::max(best, dot(a, zeta.zeta[k]));
    if (floor_at_zero) best = std::max(best, 0.0);
    lhs += mu.weights[k] * best;
  }
  double rhs = 0.0;
  for (const auto& row : M) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& a : pieces) best = std::max(best, dot(a, row));
    if (floor_at_zero) best = std::max(best, 0.0);
    rhs += best;
  }
  return lhs - rhs;
}

// worst residual over randomly sampled max-of-affine functions
inline double worst_convex_residual(const Mat& M, const DiscreteMeasure& mu,
                                    const GoodsField& zeta, Rng& rng,
                                    int samples, CoverMode mode) {
  const int J = zeta.goods();
  double worst = std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) {
    int pieces = 1 + rng.uniform_int(0, 3);
    Mat a(pieces, Vec(J));
    for (auto& row : a)
      for (double& v : row) v = rng.normal();
    double r = convex_moment_residual(M, mu, zeta, a,
                                      mode == CoverMode::Subpartition);
    worst = std::min(worst, r);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// optimal split under a capacity matrix

struct MultiSplitResult {
  Mat prices;        // N x J
  Labeling labeling;
  Mat cell_moments;  // goods captured per agent by the hard labeling
  double primal_value = 0.0;  // utility collected by the hard labeling
  double dual_value = 0.0;    // smoothed-dual optimum; equals the weak optimum
  bool converged = false;
  bool escalating = false;
  int iterations = 0;
};

// Maximize total utility over fractional splits whose goods moments equal M,
// via the price dual min_P sum_x w max_i(theta_i(x) + p_i.zeta(x)) - P:M.
// When M sits on the boundary of the feasible set the minimizing prices run
// away along a flat direction; this is detected and reported instead of
// looping forever.  A capacity matrix strictly outside the feasible set makes
// the dual unbounded below, which surfaces as an error here (the LP check in
// capacity_feasible stays authoritative but would dwarf the solve itself on
// large atom counts).
inline MultiSplitResult solve_multipartition(const DiscreteMeasure& mu,
                                             const GoodsField& zeta,
                                             const Mat& theta, const Mat& M,
                                             double escalate_norm = 1e3) {
  const int N = static_cast<int>(M.size());
  const int J = zeta.goods();
  const int K = mu.size();
  require(static_cast<int>(theta.size()) == N,
          "utility rows must match capacity rows");
  for (const auto& row : theta)
    require(static_cast<int>(row.size()) == K, "utility row has wrong width");
  {
    Vec endow = zeta.totals(mu);
    for (int j = 0; j < J; ++j) {
      double col = 0.0;
      for (int i = 0; i < N; ++i) col += M[i][j];
      require(std::abs(col - endow[j]) <= 1e-9 * (1.0 + endow[j]),
              "capacity matrix is not balanced");
    }
  }

  const int n = N * J;
  Vec row(N), sigma(N);
  auto eval = [&](const Vec& p, double eps, Vec& grad, Mat& hess) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (auto& r : hess) std::fill(r.begin(), r.end(), 0.0);
    double f = 0.0;
    for (int k = 0; k < K; ++k) {
      const Vec& z = zeta.zeta[k];
      for (int i = 0; i < N; ++i) {
        double v = theta[i][k];
        for (int j = 0; j < J; ++j) v += p[i * J + j] * z[j];
        row[i] = v;
      }
      double wk = mu.weights[k];
      f += wk * detail::smooth_max(row, eps, false, sigma);
      for (int i = 0; i < N; ++i) {
        if (sigma[i] == 0.0) continue;
        for (int j = 0; j < J; ++j) grad[i * J + j] += wk * sigma[i] * z[j];
      }
      if (eps > 0.0) {
        double s = wk / eps;
        for (int i = 0; i < N; ++i) {
          if (sigma[i] == 0.0) continue;
          for (int i2 = 0; i2 < N; ++i2) {
            double c = -s * sigma[i] * sigma[i2];
            if (i2 == i) c += s * sigma[i];
            if (c == 0.0) continue;
            for (int j = 0; j < J; ++j)
              for (int j2 = 0; j2 < J; ++j2)
                hess[i * J + j][i2 * J + j2] += c * z[j] * z[j2];
          }
        }
      }
    }
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < J; ++j) {
        f -= p[i * J + j] * M[i][j];
        grad[i * J + j] -= M[i][j];
      }
    return f;
  };

  // common per-good shifts cancel against the balanced capacities, so pin the
  // gauge by keeping every price column centered
  auto project = [N, J](Vec& x) {
    for (int j = 0; j < J; ++j) {
      double mean = 0.0;
      for (int i = 0; i < N; ++i) mean += x[i * J + j];
      mean /= N;
      for (int i = 0; i < N; ++i) x[i * J + j] -= mean;
    }
  };

  DescentOptions opt;
  opt.eps_end = 1e-7;
  opt.max_iters_per_level = 200;
  opt.polish_iters = 400;
  auto rep = minimize_newton(eval, Vec(n, 0.0), opt, project);

  MultiSplitResult out;
  out.iterations = rep.iterations;
  out.dual_value = rep.value;
  out.prices.assign(N, Vec(J));
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < J; ++j) out.prices[i][j] = rep.x[i * J + j];

  double pn = frobenius_norm(out.prices);
  if (pn > escalate_norm) {
    Mat D = out.prices;
    for (auto& r : D)
      for (double& v : r) v /= pn;
    double flat =
        goods_support(D, mu, zeta, CoverMode::Partition).value -
        frobenius_dot(D, M);
    // a strictly separating direction means no split can realize M at all;
    // a flat one means M sits on the boundary and the dual runs away
    require(flat >= -1e-6, "capacity matrix is not feasible");
    out.escalating = std::abs(flat) <= 1e-6;
  }
  out.converged = rep.converged && !out.escalating;

  out.labeling.label.assign(K, -1);
  out.cell_moments.assign(N, Vec(J, 0.0));
  for (int k = 0; k < K; ++k) {
    const Vec& z = zeta.zeta[k];
    double best = -std::numeric_limits<double>::infinity();
    int bi = 0;
    for (int i = 0; i < N; ++i) {
      double v = theta[i][k] + dot(out.prices[i], z);
      if (v > best) {
        best = v;
        bi = i;
      }
    }
    out.labeling.label[k] = bi;
    out.primal_value += mu.weights[k] * theta[bi][k];
    for (int j = 0; j < J; ++j)
      out.cell_moments[bi][j] += mu.weights[k] * z[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// hard split straight from prices

struct StrongExtract {
  Labeling labeling;
  Mat cell_moments;
  bool coalition_warning = false;  // duplicate price rows act as one agent
};

inline StrongExtract extract_strong_split(const Mat& P,
                                          const DiscreteMeasure& mu,
                                          const GoodsField& zeta) {
  const int N = static_cast<int>(P.size());
  const int J = zeta.goods();
  StrongExtract out;
  for (int i = 0; i < N; ++i)
    for (int i2 = i + 1; i2 < N; ++i2) {
      double d = 0.0;
      for (int j = 0; j < J; ++j)
        d = std::max(d, std::abs(P[i][j] - P[i2][j]));
      if (d <= 1e-12) out.coalition_warning = true;
    }
  out.labeling.label.assign(mu.size(), -1);
  out.cell_moments.assign(N, Vec(J, 0.0));
  for (int k = 0; k < mu.size(); ++k) {
    double best = -std::numeric_limits<double>::infinity();
    int bi = 0;
    for (int i = 0; i < N; ++i) {
      double v = dot(P[i], zeta.zeta[k]);
      if (v > best) {
        best = v;
        bi = i;
      }
    }
    out.labeling.label[k] = bi;
    for (int j = 0; j < J; ++j)
      out.cell_moments[bi][j] += mu.weights[k] * zeta.zeta[k][j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// two-goods share-ratio region

// Sweep a threshold r on the share ratio s/(1-s): the cell {s >= r(1-s)}
// captures goods masses (mJ, mP), tracing the boundary of what a single cell
// can hold.  Rows are (r, mJ, mP), ready for CSV output.
inline std::vector<std::array<double, 3>> ratio_region(
    const Vec& share, const DiscreteMeasure& mu, const Vec& thresholds) {
  require(static_cast<int>(share.size()) == mu.size(),
          "share vector does not match the measure");
  for (double s : share)
    require(s >= -1e-12 && s <= 1.0 + 1e-12, "share must lie in [0,1]");
  std::vector<std::array<double, 3>> out;
  out.reserve(thresholds.size());
  for (double r : thresholds) {
    double mJ = 0.0, mP = 0.0;
    for (int k = 0; k < mu.size(); ++k) {
      if (share[k] < r * (1.0 - share[k])) continue;
      mJ += mu.weights[k] * share[k];
      mP += mu.weights[k] * (1.0 - share[k]);
    }
    out.push_back({r, mJ, mP});
  }
  return out;
}

}  // namespace partrans
