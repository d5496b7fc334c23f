#pragma once

// Discrete measures on [0,1]^d, agent utility fields over them, and the
// capacity bookkeeping shared by the matching / partition solvers.

#include <functional>
#include <utility>

#include "partrans/core.hpp"

namespace partrans {

// Finite weighted point cloud.  Atoms with weight below the pruning floor are
// dropped at construction so downstream mass comparisons stay clean.
struct DiscreteMeasure {
  int dim = 1;
  std::vector<int> ids;  // stable external identifiers
  Mat points;            // natoms x dim
  Vec weights;

  static constexpr double kPruneFloor = 1e-15;

  DiscreteMeasure() = default;
  DiscreteMeasure(int d, std::vector<int> id, Mat pts, Vec w) : dim(d) {
    require(id.size() == pts.size() && id.size() == w.size(),
            "measure: ids/points/weights size mismatch");
    for (std::size_t k = 0; k < id.size(); ++k) {
      require(static_cast<int>(pts[k].size()) == d, "measure: point dim mismatch");
      require(w[k] >= 0.0, "measure: negative weight");
      if (w[k] < kPruneFloor) continue;
      ids.push_back(id[k]);
      points.push_back(std::move(pts[k]));
      weights.push_back(w[k]);
    }
  }

  int size() const { return static_cast<int>(weights.size()); }
  double total_mass() const { return sum(weights); }
  double max_weight() const {
    double m = 0.0;
    for (double w : weights) m = std::max(m, w);
    return m;
  }

  template <class Pred>
  DiscreteMeasure restrict(Pred&& keep) const {
    DiscreteMeasure r;
    r.dim = dim;
    for (int k = 0; k < size(); ++k) {
      if (!keep(k)) continue;
      r.ids.push_back(ids[k]);
      r.points.push_back(points[k]);
      r.weights.push_back(weights[k]);
    }
    return r;
  }
};

// Midpoint discretization of a density on [0,1]^d, d <= 3.  Cell weight is
// f(midpoint) * cell volume; ids run row-major over the grid.
inline DiscreteMeasure discretize_density(
    const std::function<double(const Vec&)>& density, int dim, int cells_per_axis) {
  require(dim >= 1 && dim <= 3, "discretize_density: dim must be 1, 2, or 3");
  require(cells_per_axis >= 1, "discretize_density: need at least one cell");
  const int n = cells_per_axis;
  const double h = 1.0 / n;
  const double vol = std::pow(h, dim);
  int total = 1;
  for (int d = 0; d < dim; ++d) total *= n;

  std::vector<int> ids(total);
  Mat pts(total, Vec(dim));
  Vec w(total);
  for (int k = 0; k < total; ++k) {
    int rem = k;
    for (int d = dim - 1; d >= 0; --d) {
      pts[k][d] = (rem % n + 0.5) * h;
      rem /= n;
    }
    ids[k] = k;
    w[k] = density(pts[k]) * vol;
  }
  return DiscreteMeasure(dim, std::move(ids), std::move(pts), std::move(w));
}

// Utility of agent i at a point of X.  Several closed forms plus a raw
// per-atom matrix; the matrix form is only valid against the measure whose
// atom order it was built for.
class UtilityField {
 public:
  enum class Kind { Matrix, Scaled, Quadratic, Dot, Metric };

  static UtilityField from_matrix(Mat values) {
    UtilityField u;
    u.kind_ = Kind::Matrix;
    u.matrix_ = std::move(values);
    u.agents_ = static_cast<int>(u.matrix_.size());
    return u;
  }

  // theta_i(x) = lambda_i * base(x)
  static UtilityField scaled(Vec lambda, std::function<double(const Vec&)> base) {
    UtilityField u;
    u.kind_ = Kind::Scaled;
    u.lambda_ = std::move(lambda);
    u.base_ = std::move(base);
    u.agents_ = static_cast<int>(u.lambda_.size());
    return u;
  }

  // theta_i(x) = -|x - site_i|^2
  static UtilityField quadratic(Mat sites) {
    UtilityField u;
    u.kind_ = Kind::Quadratic;
    u.sites_ = std::move(sites);
    u.agents_ = static_cast<int>(u.sites_.size());
    return u;
  }

  // theta_i(x) = b_i . x
  static UtilityField dot_form(Mat directions) {
    UtilityField u;
    u.kind_ = Kind::Dot;
    u.sites_ = std::move(directions);
    u.agents_ = static_cast<int>(u.sites_.size());
    return u;
  }

  // theta_i(x) = -|x - site_i|
  static UtilityField metric_form(Mat sites) {
    UtilityField u;
    u.kind_ = Kind::Metric;
    u.sites_ = std::move(sites);
    u.agents_ = static_cast<int>(u.sites_.size());
    return u;
  }

  int agents() const { return agents_; }
  Kind kind() const { return kind_; }
  const Vec& lambda() const { return lambda_; }

  double at_point(int agent, const Vec& x) const {
    switch (kind_) {
      case Kind::Matrix:
        throw PartransError("matrix utility has no point form; use value(agent, atom)");
      case Kind::Scaled:
        return lambda_[agent] * base_(x);
      case Kind::Quadratic: {
        double s = 0.0;
        for (std::size_t d = 0; d < x.size(); ++d) {
          double t = x[d] - sites_[agent][d];
          s += t * t;
        }
        return -s;
      }
      case Kind::Dot: {
        double s = 0.0;
        for (std::size_t d = 0; d < x.size(); ++d) s += sites_[agent][d] * x[d];
        return s;
      }
      case Kind::Metric: {
        double s = 0.0;
        for (std::size_t d = 0; d < x.size(); ++d) {
          double t = x[d] - sites_[agent][d];
          s += t * t;
        }
        return -std::sqrt(s);
      }
    }
    return 0.0;
  }

  double value(int agent, const DiscreteMeasure& mu, int atom) const {
    if (kind_ == Kind::Matrix) {
      require(atom < static_cast<int>(matrix_[agent].size()),
              "matrix utility: atom index out of range");
      return matrix_[agent][atom];
    }
    return at_point(agent, mu.points[atom]);
  }

  // Materialize agents x natoms values against a fixed measure.
  Mat to_matrix(const DiscreteMeasure& mu) const {
    Mat out(agents_, Vec(mu.size()));
    for (int i = 0; i < agents_; ++i)
      for (int k = 0; k < mu.size(); ++k) out[i][k] = value(i, mu, k);
    return out;
  }

 private:
  Kind kind_ = Kind::Matrix;
  int agents_ = 0;
  Mat matrix_;
  Vec lambda_;
  std::function<double(const Vec&)> base_;
  Mat sites_;
};

enum class CapacityMode { Exact, AtMost };

struct CapacitySpec {
  Vec m;
  CapacityMode mode = CapacityMode::Exact;
  double total() const { return sum(m); }
};

// Supply/demand balance of total capacity against total consumer mass.
enum class Regime { Undersupplied, Saturated, Oversupplied };

inline Regime classify_regime(double total_capacity, double total_mass,
                              double rel_tol = 1e-12) {
  double scale = std::max({1.0, std::abs(total_capacity), std::abs(total_mass)});
  if (std::abs(total_capacity - total_mass) <= rel_tol * scale)
    return Regime::Saturated;
  return total_capacity < total_mass ? Regime::Undersupplied : Regime::Oversupplied;
}

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::Undersupplied: return "undersupplied";
    case Regime::Saturated: return "saturated";
    case Regime::Oversupplied: return "oversupplied";
  }
  return "?";
}

// Assignment of atoms to agents; label -1 means unassigned (kept by the
// outside cell in oversupplied / at-most regimes).
struct Labeling {
  std::vector<int> label;  // per atom

  Vec cell_masses(const DiscreteMeasure& mu, int agents) const {
    Vec m(agents, 0.0);
    for (int k = 0; k < mu.size(); ++k)
      if (label[k] >= 0) m[label[k]] += mu.weights[k];
    return m;
  }

  double unassigned_mass(const DiscreteMeasure& mu) const {
    double s = 0.0;
    for (int k = 0; k < mu.size(); ++k)
      if (label[k] < 0) s += mu.weights[k];
    return s;
  }
};

}  // namespace partrans
