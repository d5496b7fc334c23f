#pragma once

// Shared numeric utilities: vector/matrix aliases, a reproducible RNG,
// thread-pool sizing, and the smoothed-descent engine used by every
// piecewise-linear convex objective in the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace partrans {

using Vec = std::vector<double>;
using Mat = std::vector<std::vector<double>>;  // row-major

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& a) { return dot(a, a); }
inline double norm(const Vec& a) { return std::sqrt(norm2(a)); }

inline double linf(const Vec& a) {
  double s = 0.0;
  for (double v : a) s = std::max(s, std::abs(v));
  return s;
}

inline Vec operator-(const Vec& a, const Vec& b) {
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

inline double sum(const Vec& a) {
  double s = 0.0;
  for (double v : a) s += v;
  return s;
}

inline Mat zeros(std::size_t r, std::size_t c) { return Mat(r, Vec(c, 0.0)); }

// Deterministic RNG.  We avoid std distributions on purpose: their output is
// implementation-defined, and seeded runs must be byte-identical everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0x9e3779b97f4a7c15ULL) : state_(seed) {
    // splitmix-style warmup so nearby seeds decorrelate
    next_u64();
    next_u64();
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0,1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  double normal() {
    // Box-Muller; cache the second value
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// PARTRANS_THREADS caps worker threads for independent sub-solves.  Results
// are always written to per-index slots, so the thread count never changes
// output bytes.
inline int thread_count() {
  if (const char* env = std::getenv("PARTRANS_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc ? static_cast<int>(hc) : 1;
}

template <class Fn>
void parallel_for(int n, Fn&& fn) {
  int workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (int i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// Smoothed-descent engine.
//
// Minimizes a convex piecewise-linear objective given an evaluator
//   eval(x, eps, grad) -> value
// where eps > 0 requests the smooth surrogate (softmax-regularized) with its
// exact gradient, and eps == 0 requests the hard value with one subgradient.
// The homotopy anneals eps downward with warm starts; an optional projector
// restricts iterates and gradients to a gauge subspace.

struct DescentOptions {
  double eps_start = 1e-1;
  double eps_end = 1e-6;
  double eps_factor = 0.1;
  double grad_tol = 1e-8;
  int max_iters_per_level = 4000;
  int polish_iters = 10000;
};

struct DescentReport {
  Vec x;
  double value = 0.0;       // hard objective at x
  double grad_norm = 0.0;   // subgradient norm at x (after projection)
  int iterations = 0;
  bool converged = false;
};

template <class Eval, class Project>
DescentReport minimize_smoothed(Eval&& eval, Vec x0, const DescentOptions& opt,
                                Project&& project) {
  const std::size_t n = x0.size();
  Vec x = std::move(x0);
  project(x);
  Vec g(n), gtrial(n), xtrial(n);
  int total_iters = 0;

  // returns true when the level ended by tolerance or stall (not budget)
  auto run_level = [&](double eps, int max_iters, double tol) {
    double step = 1.0;
    double f = eval(x, eps, g);
    project(g);
    int slow = 0;
    for (int it = 0; it < max_iters; ++it) {
      ++total_iters;
      double gn = norm(g);
      if (gn <= tol) return true;
      double f_before = f;
      // backtracking line search with Armijo condition
      bool moved = false;
      for (int bt = 0; bt < 60; ++bt) {
        for (std::size_t i = 0; i < n; ++i) xtrial[i] = x[i] - step * g[i];
        project(xtrial);
        double ftrial = eval(xtrial, eps, gtrial);
        if (ftrial <= f - 0.25 * step * gn * gn) {
          x.swap(xtrial);
          project(gtrial);
          g.swap(gtrial);
          f = ftrial;
          step *= 1.6;
          moved = true;
          break;
        }
        step *= 0.5;
        if (step < 1e-18) break;
      }
      if (!moved) return true;  // numerical floor for this level
      if (f_before - f <= 1e-13 * (1.0 + std::abs(f))) {
        if (++slow >= 8) return true;
      } else {
        slow = 0;
      }
    }
    return false;
  };

  for (double eps = opt.eps_start; eps >= opt.eps_end * (1.0 - 1e-12);
       eps *= opt.eps_factor) {
    // at coarse eps a loose tolerance is enough; tighten as we anneal
    run_level(eps, opt.max_iters_per_level, std::max(opt.grad_tol, eps * 1e-3));
  }
  // final pass on the smallest smoothing level with the target tolerance
  bool settled = run_level(opt.eps_end, opt.polish_iters, opt.grad_tol);

  DescentReport rep;
  rep.value = eval(x, 0.0, g);
  project(g);
  rep.grad_norm = norm(g);
  rep.iterations = total_iters;
  rep.converged = settled;
  rep.x = std::move(x);
  return rep;
}

template <class Eval>
DescentReport minimize_smoothed(Eval&& eval, Vec x0, const DescentOptions& opt) {
  return minimize_smoothed(std::forward<Eval>(eval), std::move(x0), opt,
                           [](Vec&) {});
}

// Solve H d = b by Gaussian elimination with partial pivoting (tiny systems).
inline Vec solve_dense(Mat H, Vec b) {
  const int n = static_cast<int>(b.size());
  for (int c = 0; c < n; ++c) {
    int piv = c;
    for (int r = c + 1; r < n; ++r)
      if (std::abs(H[r][c]) > std::abs(H[piv][c])) piv = r;
    std::swap(H[c], H[piv]);
    std::swap(b[c], b[piv]);
    double d = H[c][c];
    if (std::abs(d) < 1e-300) d = 1e-300;
    for (int r = c + 1; r < n; ++r) {
      double f = H[r][c] / d;
      if (f == 0.0) continue;
      for (int k = c; k < n; ++k) H[r][k] -= f * H[c][k];
      b[r] -= f * b[c];
    }
  }
  Vec x(n, 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int k = r + 1; k < n; ++k) s -= H[r][k] * x[k];
    double d = H[r][r];
    if (std::abs(d) < 1e-300) d = 1e-300;
    x[r] = s / d;
  }
  return x;
}

// Damped-Newton homotopy for smoothed convex objectives whose evaluator also
// supplies the Hessian: eval(x, eps, grad, hess) -> value.  Much faster than
// plain descent when the smoothing makes the problem stiff.
template <class Eval, class Project>
DescentReport minimize_newton(Eval&& eval, Vec x0, const DescentOptions& opt,
                              Project&& project) {
  const std::size_t n = x0.size();
  Vec x = std::move(x0);
  project(x);
  Vec g(n), gtrial(n), xtrial(n), d(n);
  Mat H(n, Vec(n, 0.0)), Htrial(n, Vec(n, 0.0));
  int total_iters = 0;

  auto run_level = [&](double eps, int max_iters, double tol) {
    double f = eval(x, eps, g, H);
    project(g);
    int slow = 0;
    for (int it = 0; it < max_iters; ++it) {
      ++total_iters;
      double gn = norm(g);
      if (gn <= tol) return true;
      double f_before = f;
      // ridge keeps the system solvable when cells are deep in their basins
      double ridge = 1e-12;
      for (std::size_t i = 0; i < n; ++i) ridge += 1e-9 * std::abs(H[i][i]);
      Mat Hr = H;
      for (std::size_t i = 0; i < n; ++i) Hr[i][i] += ridge;
      d = solve_dense(Hr, g);
      for (double& v : d) v = -v;
      project(d);
      double gd = dot(g, d);
      if (gd > -1e-18) {  // not a descent direction; fall back to gradient
        for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
        project(d);
        gd = dot(g, d);
        if (gd > -1e-18) return true;
      }
      double step = 1.0;
      bool moved = false;
      for (int bt = 0; bt < 60; ++bt) {
        for (std::size_t i = 0; i < n; ++i) xtrial[i] = x[i] + step * d[i];
        project(xtrial);
        double ftrial = eval(xtrial, eps, gtrial, Htrial);
        if (ftrial <= f + 1e-4 * step * gd) {
          x.swap(xtrial);
          project(gtrial);
          g.swap(gtrial);
          H.swap(Htrial);
          f = ftrial;
          moved = true;
          break;
        }
        step *= 0.5;
        if (step < 1e-18) break;
      }
      if (!moved) return true;
      // steps that stop lowering the value are at the numerical floor even
      // if the gradient norm cannot reach tol at this smoothing level
      if (f_before - f <= 1e-13 * (1.0 + std::abs(f))) {
        if (++slow >= 8) return true;
      } else {
        slow = 0;
      }
    }
    return false;
  };

  for (double eps = opt.eps_start; eps >= opt.eps_end * (1.0 - 1e-12);
       eps *= opt.eps_factor)
    run_level(eps, opt.max_iters_per_level, std::max(opt.grad_tol, eps * 1e-3));
  bool settled = run_level(opt.eps_end, opt.polish_iters, opt.grad_tol);

  DescentReport rep;
  rep.value = eval(x, 0.0, g, H);
  project(g);
  rep.grad_norm = norm(g);
  rep.iterations = total_iters;
  rep.converged = settled;
  rep.x = std::move(x);
  return rep;
}

template <class Eval>
DescentReport minimize_newton(Eval&& eval, Vec x0, const DescentOptions& opt) {
  return minimize_newton(std::forward<Eval>(eval), std::move(x0), opt,
                         [](Vec&) {});
}

namespace detail {

// log-sum-exp including the outside option 0 when plus_form is set
inline double smooth_max(const Vec& vals, double eps, bool plus_form, Vec& sigma) {
  double hard = plus_form ? 0.0 : -std::numeric_limits<double>::infinity();
  for (double v : vals) hard = std::max(hard, v);
  if (eps <= 0.0) {
    // hard evaluation: single subgradient weight on the first argmax
    std::fill(sigma.begin(), sigma.end(), 0.0);
    if (!plus_form || hard > 0.0)
      for (std::size_t i = 0; i < vals.size(); ++i)
        if (vals[i] == hard) {
          sigma[i] = 1.0;
          break;
        }
    return hard;
  }
  double z = plus_form ? std::exp(-hard / eps) : 0.0;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    sigma[i] = std::exp((vals[i] - hard) / eps);
    z += sigma[i];
  }
  for (double& s : sigma) s /= z;
  return hard + eps * std::log(z);
}

}  // namespace detail

// softmax building blocks shared by the smoothed objectives
inline double softmax(const Vec& a, double eps) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : a) m = std::max(m, v);
  double s = 0.0;
  for (double v : a) s += std::exp((v - m) / eps);
  return m + eps * std::log(s);
}

// One cell of a sparse coupling between two indexed families.
struct PlanEntry {
  int i = 0;
  int j = 0;
  double mass = 0.0;
};

struct PartransError : std::runtime_error {
  explicit PartransError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw PartransError(msg);
}

}  // namespace partrans
