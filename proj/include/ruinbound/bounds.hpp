#pragma once

// Constants of the uniform sandwich
//   1 <= P(exists t <= T: X(t) in uS) / P(X(T) in uS) <= K
// for X(t) = Z(t) - c(t), its convolution-field version, and time-transformed
// coordinates Z_i(f_i(t)).

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "ruinbound/errors.hpp"
#include "ruinbound/gaussian.hpp"
#include "ruinbound/grid.hpp"
#include "ruinbound/ruin_set.hpp"
#include "ruinbound/transform.hpp"
#include "ruinbound/trend.hpp"

namespace ruinbound {

enum class BoundMethod { closed_form, grid_refined };

inline std::string_view to_string(BoundMethod m) {
  return m == BoundMethod::closed_form ? "closed-form" : "grid-refined";
}

struct BoundConstant {
  double value = 1.0;
  double log_value = 0.0;
  double argmin_t = 0.0;
  BoundMethod method = BoundMethod::closed_form;
  std::map<std::string, double> components;
  bool vacuous = false;
  std::vector<std::string> notes;
};

struct PenaltyOptions {
  std::size_t grid_points = 4096;
  double rel_tol = 1e-6;
  bool closed_form = true;  // use the analytic value for zero and linear trends
  double holder_cap = kDefaultHolderCap;
};

/// sup q above this makes exp(-q) meaningless in a report; the bound is then vacuous.
inline constexpr double kMaxPenaltyExponent = 700.0;

namespace detail {

struct Maximum {
  double t = 0.0;
  double q = 0.0;
};

/// Maximizes q over [0, T): dense uniform grid plus points T - T 2^-j clustering at T,
/// then golden-section search in the bracket around the best grid point.
inline Maximum maximize_on_horizon(const std::function<double(double)>& q, double T, std::size_t points,
                                   int cluster_depth, double rel_tol) {
  std::vector<double> ts;
  ts.reserve(points + cluster_depth);
  for (std::size_t j = 0; j < points; ++j) ts.push_back(T * static_cast<double>(j) / static_cast<double>(points));
  for (int j = 1; j <= cluster_depth; ++j) ts.push_back(T - std::ldexp(T, -j));
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  std::vector<double> qs(ts.size());
  std::size_t best = 0;
  for (std::size_t j = 0; j < ts.size(); ++j) {
    qs[j] = q(ts[j]);
    if (qs[j] > qs[best]) best = j;
  }
  Maximum result{ts[best], qs[best]};
  double lo = best > 0 ? ts[best - 1] : ts[0];
  double hi = best + 1 < ts.size() ? ts[best + 1] : ts[best];
  if (hi <= lo) return result;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
  double f1 = q(x1), f2 = q(x2);
  for (int it = 0; it < 200 && (hi - lo) > rel_tol * std::max(T, 1e-300) * 1e-3; ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = q(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = q(x1);
    }
  }
  for (const auto& [t, v] : {std::pair{x1, f1}, std::pair{x2, f2}}) {
    if (v > result.q) result = {t, v};
  }
  return result;
}

inline BoundConstant penalty_from_exponent(double sup_q, double argmin_t, BoundMethod method) {
  BoundConstant c;
  c.method = method;
  c.argmin_t = argmin_t;
  c.log_value = -sup_q;
  c.value = std::exp(-sup_q);
  c.components["sup_exponent"] = sup_q;
  if (sup_q > kMaxPenaltyExponent) {
    c.vacuous = true;
    c.notes.push_back("penalty exponent exceeds 700; bound vacuous");
  }
  return c;
}

inline Matrix spd_inverse(const Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw SingularMatrix("covariance is not positive definite");
  return llt.solve(Matrix::Identity(m.rows(), m.cols()));
}

}  // namespace detail

/// Drift penalty inf_{t in [0,T)} exp(-q(t)) with
///   q(t) = T v(t)' Cov(Z(T))^{-1} v(t) = (c(T) - c(t))' Sigma^{-1} (c(T) - c(t)) / (T - t),
/// v(t) = (c(T) - c(t)) / sqrt(T - t). Linear trends: q(t) = (T - t) c' Sigma^{-1} c.
inline BoundConstant drift_penalty(double T, const TrendFunction& trend, const CovarianceModel& model,
                                   const PenaltyOptions& options = {}) {
  if (!(T > 0.0)) throw InvalidArgument("drift_penalty: T must be positive");
  if (trend.dim() != model.dim()) throw DimensionMismatch("drift_penalty: trend and model dimensions differ");
  const TimeGrid grid = TimeGrid::uniform(T, options.grid_points);
  const HolderCertificate cert = holder_check(trend, T, 0.5, grid, options.holder_cap);
  if (cert.violated) {
    throw HolderViolation("drift_penalty: trend is not 1/2-Hoelder at T (M > cap near t = " +
                          std::to_string(cert.worst_t) + ")");
  }
  if (trend.is_zero()) {
    BoundConstant c = detail::penalty_from_exponent(0.0, 0.0, BoundMethod::closed_form);
    c.components["holder_M"] = cert.M;
    return c;
  }
  const Matrix precision = detail::spd_inverse(model.sigma);
  BoundConstant c;
  if (options.closed_form && trend.kind() == TrendFunction::Kind::linear) {
    const Vector& slope = trend.coefficients();
    c = detail::penalty_from_exponent(T * slope.dot(precision * slope), 0.0, BoundMethod::closed_form);
  } else {
    const Vector end = trend(T);
    const auto q = [&](double t) {
      const Vector v = end - trend(t);
      return v.dot(precision * v) / (T - t);
    };
    const auto best = detail::maximize_on_horizon(q, T, options.grid_points, 52, options.rel_tol);
    c = detail::penalty_from_exponent(best.q, best.t, BoundMethod::grid_refined);
  }
  c.components["holder_M"] = cert.M;
  return c;
}

inline BoundConstant assemble_bound(const BoundConstant& penalty, const ProbEstimate& eps, double log_prefactor,
                                    std::string_view eps_name) {
  BoundConstant k;
  k.method = penalty.method;
  k.argmin_t = penalty.argmin_t;
  k.notes = penalty.notes;
  k.components = penalty.components;
  k.components["penalty"] = penalty.value;
  k.components["log_penalty"] = penalty.log_value;
  k.components[std::string(eps_name)] = eps.value;
  k.components[std::string(eps_name) + "_error"] = eps.abs_error;
  k.components["prefactor"] = std::exp(log_prefactor);
  k.log_value = log_prefactor - penalty.log_value - std::log(eps.value);
  k.vacuous = penalty.vacuous || !(eps.value > 0.0);
  k.value = k.vacuous ? kInf : std::exp(k.log_value);
  return k;
}

/// K = 2^{d/2} / (penalty * eps_S).
inline BoundConstant ruin_bound_constant(double T, const RuinSet& set, const TrendFunction& trend,
                                         const CovarianceModel& model, const PenaltyOptions& options = {}) {
  if (set.dim() != model.dim()) throw DimensionMismatch("ruin_bound_constant: set and model dimensions differ");
  const BoundConstant penalty = drift_penalty(T, trend, model, options);
  const ProbEstimate eps = epsilon_S(set, model, T).epsilon;
  return assemble_bound(penalty, eps, 0.5 * model.dim() * std::numbers::ln2, "epsilon");
}

/// Constant for {F(X(t)) > u a} with F growing: {x : F(x) > u a} is an upper set,
/// the orthant cone applies, and the constant equals the one for any upper set.
inline BoundConstant growing_map_bound_constant(double T, const TrendFunction& trend, const CovarianceModel& model,
                                                const PenaltyOptions& options = {}) {
  return ruin_bound_constant(T, RuinSet::k_of_d(model.dim(), Vector::Ones(model.dim())), trend, model, options);
}

/// Product over axes of per-axis constants, each with its own horizon, trend and model.
inline BoundConstant convolution_bound_constant(const std::vector<double>& horizons, const RuinSet& set,
                                                const std::vector<TrendFunction>& trends,
                                                const std::vector<CovarianceModel>& models,
                                                const PenaltyOptions& options = {}) {
  const std::size_t n = horizons.size();
  if (n < 1 || trends.size() != n || models.size() != n) {
    throw InvalidArgument("convolution_bound_constant: need matching horizons, trends and models");
  }
  if (n == 1) return ruin_bound_constant(horizons[0], set, trends[0], models[0], options);
  BoundConstant k;
  k.method = BoundMethod::closed_form;
  k.log_value = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    const BoundConstant axis = ruin_bound_constant(horizons[a], set, trends[a], models[a], options);
    const std::string prefix = "axis" + std::to_string(a + 1) + "_";
    k.components[prefix + "K"] = axis.value;
    k.components[prefix + "penalty"] = axis.components.at("penalty");
    k.components[prefix + "epsilon"] = axis.components.at("epsilon");
    k.log_value += axis.log_value;
    k.vacuous = k.vacuous || axis.vacuous;
    if (axis.method == BoundMethod::grid_refined) k.method = BoundMethod::grid_refined;
    if (a == 0) k.argmin_t = axis.argmin_t;
  }
  k.value = k.vacuous ? kInf : std::exp(k.log_value);
  return k;
}

/// Sigma(delta)_ij = Sigma_ij min(delta_i, delta_j), the covariance of (Z_i(delta_i))_i.
inline Matrix delta_covariance(const Matrix& sigma, const Vector& delta) {
  Matrix out(sigma.rows(), sigma.cols());
  for (Eigen::Index i = 0; i < sigma.rows(); ++i)
    for (Eigen::Index j = 0; j < sigma.cols(); ++j) out(i, j) = sigma(i, j) * std::min(delta[i], delta[j]);
  return out;
}

namespace detail {

inline Vector deltas_at(const TimeTransform& f, double t, double T) {
  Vector d(f.dim());
  for (int i = 0; i < f.dim(); ++i) d[i] = f.delta(i, t, T);
  return d;
}

// Closest approach to T for the clustered probes; f(T) - f(t) loses all digits beyond this.
inline constexpr int kClockClusterDepth = 30;

}  // namespace detail

/// Penalty for time-transformed coordinates:
///   inf_t exp(-v' Sigma(delta(t))^{-1} v), v = (c(T) - c(t)) / sqrt(f_1(T) - f_1(t)).
inline BoundConstant clock_drift_penalty(double T, const TrendFunction& trend, const TimeTransform& clocks,
                                         const CovarianceModel& model, const PenaltyOptions& options = {}) {
  if (!(T > 0.0)) throw InvalidArgument("clock_drift_penalty: T must be positive");
  const int d = model.dim();
  if (trend.dim() != d || clocks.dim() != d) throw DimensionMismatch("clock_drift_penalty: dimension mismatch");
  const TimeGrid grid = TimeGrid::uniform(T, options.grid_points);
  clocks.check_monotone(grid);
  const Vector limit = clocks.delta_limit(grid);
  const double f1T = clocks(0, T);
  const Vector end = trend(T);

  double holder_M = 0.0;
  const auto check_point = [&](double t) {
    const double scale = std::sqrt(f1T - clocks(0, t));
    for (int i = 0; i < d; ++i) holder_M = std::max(holder_M, std::abs(end[i] - trend.component(i, t)) / scale);
  };
  for (std::size_t j = 0; j + 1 < grid.size(); ++j) check_point(grid[j]);
  for (int j = 1; j <= detail::kClockClusterDepth; ++j) check_point(T - std::ldexp(T, -j));
  if (!(holder_M <= options.holder_cap)) {
    throw HolderViolation("clock_drift_penalty: |c(T) - c(t)| is not O(sqrt(f_1(T) - f_1(t)))");
  }

  const auto delta_cov = [&](double t) {
    const Matrix m = delta_covariance(model.sigma, detail::deltas_at(clocks, t, T));
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) {
      throw SingularDeltaCovariance("Sigma(delta(t)) is not positive definite at t = " + std::to_string(t));
    }
    return llt;
  };
  delta_cov(0.0);
  {
    const Matrix m = delta_covariance(model.sigma, limit);
    if (Eigen::LLT<Matrix>(m).info() != Eigen::Success) throw SingularDeltaCovariance("Sigma(delta) singular near T");
  }

  BoundConstant c;
  if (trend.is_zero()) {
    c = detail::penalty_from_exponent(0.0, 0.0, BoundMethod::closed_form);
  } else {
    const auto q = [&](double t) {
      const Vector v = (end - trend(t)) / std::sqrt(f1T - clocks(0, t));
      return v.dot(delta_cov(t).solve(v));
    };
    const auto best = detail::maximize_on_horizon(q, T, options.grid_points, detail::kClockClusterDepth, options.rel_tol);
    c = detail::penalty_from_exponent(best.q, best.t, BoundMethod::grid_refined);
  }
  c.components["holder_M"] = holder_M;
  for (int i = 0; i < d; ++i) c.components["delta_limit_" + std::to_string(i + 1)] = limit[i];
  return c;
}

/// Extrema of delta_i(t) over i and the grid points t_0, ..., t_{m-1}.
inline std::pair<double, double> delta_extrema(const TimeTransform& clocks, const TimeGrid& grid) {
  const double T = grid.horizon();
  double lo = kInf, hi = -kInf;
  for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
    for (int i = 0; i < clocks.dim(); ++i) {
      const double v = clocks.delta(i, grid[j], T);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  return {lo, hi};
}

/// K* = (2 f_1(T))^{d/2} / (penalty * eps_bar).
inline BoundConstant clock_bound_constant(double T, const RuinSet& set, const TrendFunction& trend,
                                          const TimeTransform& clocks, const CovarianceModel& model,
                                          const PenaltyOptions& options = {}) {
  if (set.dim() != model.dim()) throw DimensionMismatch("clock_bound_constant: set and model dimensions differ");
  const BoundConstant penalty = clock_drift_penalty(T, trend, clocks, model, options);
  const auto [dmin, dmax] = delta_extrema(clocks, TimeGrid::uniform(T, options.grid_points));
  const ProbEstimate eps = epsilon_bar(set, model, dmin, dmax);
  BoundConstant k = assemble_bound(penalty, eps, 0.5 * model.dim() * std::log(2.0 * clocks(0, T)), "epsilon_bar");
  k.components["delta_min"] = dmin;
  k.components["delta_max"] = dmax;
  return k;
}

}  // namespace ruinbound
