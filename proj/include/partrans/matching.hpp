#pragma once

// Two-sided matching: deferred acceptance over preference lists, blocking
// pair audits, the two-parameter exchange-stability family over cardinal
// payoffs, and a quota-constrained variant where a measure of candidates is
// matched to finitely many slots.

#include <functional>

#include "partrans/measure.hpp"

namespace partrans {

// ---------------------------------------------------------------------------
// Ordinal one-to-one matching.

struct DeferredAcceptanceResult {
  std::vector<int> match_row;  // proposer i -> partner (always complete)
  std::vector<int> match_col;  // receiver j -> partner
  int proposals = 0;
  int rounds = 0;  // simultaneous proposal passes
};

// Proposer-optimal deferred acceptance.  pref_row[i] lists partners in
// descending preference; pref_col likewise ranks proposers.
inline DeferredAcceptanceResult deferred_acceptance(
    const std::vector<std::vector<int>>& pref_row,
    const std::vector<std::vector<int>>& pref_col) {
  const int R = static_cast<int>(pref_row.size());
  const int C = static_cast<int>(pref_col.size());
  std::vector<std::vector<int>> rank_col(C, std::vector<int>(R, R));
  for (int j = 0; j < C; ++j)
    for (std::size_t r = 0; r < pref_col[j].size(); ++r)
      rank_col[j][pref_col[j][r]] = static_cast<int>(r);

  DeferredAcceptanceResult res;
  res.match_row.assign(R, -1);
  res.match_col.assign(C, -1);
  std::vector<int> next(R, 0);

  while (true) {
    // everyone currently free proposes once in this pass
    std::vector<std::pair<int, int>> bids;  // (proposer, target)
    for (int i = 0; i < R; ++i)
      if (res.match_row[i] < 0 && next[i] < static_cast<int>(pref_row[i].size()))
        bids.push_back({i, pref_row[i][next[i]++]});
    if (bids.empty()) break;
    ++res.rounds;
    res.proposals += static_cast<int>(bids.size());
    for (const auto& [i, j] : bids) {
      int cur = res.match_col[j];
      if (cur < 0 || rank_col[j][i] < rank_col[j][cur]) {
        if (cur >= 0) res.match_row[cur] = -1;
        res.match_col[j] = i;
        res.match_row[i] = j;
      }
    }
  }
  return res;
}

// Pairs (i, j) where both sides strictly prefer each other to their partner.
inline std::vector<std::pair<int, int>> blocking_pairs(
    const std::vector<std::vector<int>>& pref_row,
    const std::vector<std::vector<int>>& pref_col,
    const std::vector<int>& match_row) {
  const int R = static_cast<int>(pref_row.size());
  const int C = static_cast<int>(pref_col.size());
  std::vector<std::vector<int>> rank_row(R, std::vector<int>(C, C));
  std::vector<std::vector<int>> rank_col(C, std::vector<int>(R, R));
  for (int i = 0; i < R; ++i)
    for (std::size_t r = 0; r < pref_row[i].size(); ++r)
      rank_row[i][pref_row[i][r]] = static_cast<int>(r);
  for (int j = 0; j < C; ++j)
    for (std::size_t r = 0; r < pref_col[j].size(); ++r)
      rank_col[j][pref_col[j][r]] = static_cast<int>(r);
  std::vector<int> match_col(C, -1);
  for (int i = 0; i < R; ++i)
    if (match_row[i] >= 0) match_col[match_row[i]] = i;

  std::vector<std::pair<int, int>> blocks;
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < C; ++j) {
      if (match_row[i] == j) continue;
      bool i_wants = match_row[i] < 0 || rank_row[i][j] < rank_row[i][match_row[i]];
      bool j_wants = match_col[j] < 0 || rank_col[j][i] < rank_col[j][match_col[j]];
      if (i_wants && j_wants) blocks.push_back({i, j});
    }
  return blocks;
}

// ---------------------------------------------------------------------------
// Two-parameter exchange stability over cardinal payoffs.
//
// For an exchange where i takes j's partner, let a be i's payoff gain and b
// the partner's gain.  The q-weighted pair gain is min(q*a + b, q*b + a);
// losses are discounted by p when summing around an exchange cycle.  The
// (0,0) endpoint is the no-blocking-pair condition and (1,1) is optimality
// of the assignment for the summed payoffs.

inline double pair_exchange_gain(const Mat& theta_row, const Mat& theta_col,
                                 const std::vector<int>& assign, int i, int j,
                                 double q) {
  double a = theta_row[i][assign[j]] - theta_row[i][assign[i]];
  double b = theta_col[i][assign[j]] - theta_col[j][assign[j]];
  return std::min(q * a + b, q * b + a);
}

inline double loss_discounted(double x, double p) { return x >= 0.0 ? x : p * x; }

struct StabilityReport {
  bool stable = true;
  double worst = 0.0;            // largest discounted cycle gain found
  std::vector<int> cycle;        // row indices in exchange order
};

inline StabilityReport check_exchange_stability(const Mat& theta_row,
                                                const Mat& theta_col,
                                                const std::vector<int>& assign,
                                                double p, double q,
                                                int k_max = 8,
                                                double tol = 1e-9) {
  const int N = static_cast<int>(theta_row.size());
  k_max = std::min(k_max, N);
  StabilityReport rep;
  std::vector<int> path;
  std::vector<char> used(N, 0);

  auto cycle_gain = [&](int start) {
    // discounted gains along path, closing back to start
    double s = 0.0;
    for (std::size_t k = 0; k < path.size(); ++k) {
      int nxt = k + 1 < path.size() ? path[k + 1] : start;
      s += loss_discounted(
          pair_exchange_gain(theta_row, theta_col, assign, path[k], nxt, q), p);
    }
    return s;
  };

  std::function<void(int)> extend = [&](int start) {
    if (path.size() >= 2) {
      double g = cycle_gain(start);
      if (g > rep.worst) {
        rep.worst = g;
        rep.cycle = path;
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
  rep.stable = rep.worst <= tol;
  if (rep.stable) rep.cycle.clear();
  return rep;
}

// Cardinal blocking pairs: both strict gains positive.
inline std::vector<std::pair<int, int>> cardinal_blocking_pairs(
    const Mat& theta_row, const Mat& theta_col, const std::vector<int>& assign,
    double tol = 1e-9) {
  const int N = static_cast<int>(theta_row.size());
  std::vector<std::pair<int, int>> blocks;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      if (i == j) continue;
      double a = theta_row[i][assign[j]] - theta_row[i][assign[i]];
      double b = theta_col[i][assign[j]] - theta_col[j][assign[j]];
      if (a > tol && b > tol) blocks.push_back({i, assign[j]});
    }
  return blocks;
}

// ---------------------------------------------------------------------------
// Quota-constrained deferred acceptance: atoms of a measure court finitely
// many slots with capacities; each slot keeps the heaviest-scoring prefix
// that fits and ejects the rest.  Unplaced atoms end in the outside cell.

struct QuotaMatchResult {
  Labeling labeling;    // -1 = outside cell
  Vec used_capacity;
  int rounds = 0;
};

// phi[j][k]: atom k's utility for slot j (drives the proposal order).
// psi[j][k]: slot j's score for atom k (drives retention).  Both must be
// tie-free where they are compared; exact ties are rejected.
inline QuotaMatchResult quota_deferred_acceptance(const DiscreteMeasure& mu,
                                                  const Mat& phi, const Mat& psi,
                                                  const Vec& quota) {
  const int J = static_cast<int>(quota.size());
  const int K = mu.size();
  const double slack = 1e-12;

  // proposals follow each atom's slots in descending phi
  std::vector<std::vector<int>> order(K);
  for (int k = 0; k < K; ++k) {
    order[k].resize(J);
    for (int j = 0; j < J; ++j) order[k][j] = j;
    std::sort(order[k].begin(), order[k].end(),
              [&](int a, int b) { return phi[a][k] > phi[b][k]; });
    for (int j = 0; j + 1 < J; ++j)
      require(phi[order[k][j]][k] != phi[order[k][j + 1]][k],
              "quota matching: tied candidate-side scores");
  }

  QuotaMatchResult res;
  res.labeling.label.assign(K, -1);
  std::vector<int> next(K, 0);
  std::vector<std::vector<int>> tent(J);  // atoms currently held by each slot

  bool active = true;
  while (active) {
    active = false;
    // free atoms propose in id order, one slot per round
    std::vector<std::vector<int>> incoming(J);
    for (int k = 0; k < K; ++k) {
      if (res.labeling.label[k] >= 0 || next[k] >= J) continue;
      incoming[order[k][next[k]]].push_back(k);
      ++next[k];
      active = true;
    }
    if (!active) break;
    ++res.rounds;
    for (int j = 0; j < J; ++j) {
      if (incoming[j].empty()) continue;
      auto& held = tent[j];
      for (int k : incoming[j]) held.push_back(k);
      std::sort(held.begin(), held.end(),
                [&](int a, int b) { return psi[j][a] > psi[j][b]; });
      for (std::size_t t = 0; t + 1 < held.size(); ++t)
        require(psi[j][held[t]] != psi[j][held[t + 1]],
                "quota matching: tied slot-side scores");
      double used = 0.0;
      std::size_t keep = 0;
      while (keep < held.size() && used + mu.weights[held[keep]] <= quota[j] + slack)
        used += mu.weights[held[keep++]];
      for (std::size_t t = keep; t < held.size(); ++t)
        res.labeling.label[held[t]] = -1;
      for (std::size_t t = 0; t < keep; ++t) res.labeling.label[held[t]] = j;
      held.resize(keep);
    }
  }
  res.used_capacity = res.labeling.cell_masses(mu, J);
  return res;
}

struct QuotaBlock {
  int atom = -1;
  int slot = -1;
};

// An atom and a slot block the outcome when the atom strictly prefers the
// slot and the slot could admit it alongside its strictly better residents.
inline std::vector<QuotaBlock> quota_blocking_pairs(const DiscreteMeasure& mu,
                                                    const Mat& phi, const Mat& psi,
                                                    const Vec& quota,
                                                    const Labeling& lab) {
  const int J = static_cast<int>(quota.size());
  const int K = mu.size();
  std::vector<QuotaBlock> out;
  for (int k = 0; k < K; ++k) {
    int cur = lab.label[k];
    for (int j = 0; j < J; ++j) {
      if (j == cur) continue;
      if (cur >= 0 && phi[j][k] <= phi[cur][k]) continue;
      double better_mass = 0.0;
      for (int t = 0; t < K; ++t)
        if (lab.label[t] == j && psi[j][t] > psi[j][k]) better_mass += mu.weights[t];
      if (better_mass + mu.weights[k] <= quota[j] + 1e-12) out.push_back({k, j});
    }
  }
  return out;
}

}  // namespace partrans
