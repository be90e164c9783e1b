#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ruinbound/errors.hpp"
#include "ruinbound/gaussian.hpp"
#include "ruinbound/grid.hpp"

namespace ruinbound {

/// Per-coordinate clocks f_i: continuous, strictly increasing, f_i(0) = 0.
class TimeTransform {
 public:
  enum class Kind { power, linear, tabulated };

  /// f_i(t) = t^{p_i}; fBm with Hurst H_i corresponds to p_i = 2 H_i.
  static TimeTransform power(Vector exponent) {
    if (exponent.size() < 1) throw InvalidArgument("TimeTransform::power: empty exponent vector");
    for (double p : exponent) {
      if (!(p > 0.0) || !std::isfinite(p)) throw NonMonotoneTransform("TimeTransform::power: exponents must be positive");
    }
    TimeTransform f;
    f.kind_ = Kind::power;
    f.param_ = std::move(exponent);
    return f;
  }

  /// f_i(t) = s_i t
  static TimeTransform linear(Vector scale) {
    if (scale.size() < 1) throw InvalidArgument("TimeTransform::linear: empty scale vector");
    for (double s : scale) {
      if (!(s > 0.0) || !std::isfinite(s)) throw NonMonotoneTransform("TimeTransform::linear: scales must be positive");
    }
    TimeTransform f;
    f.kind_ = Kind::linear;
    f.param_ = std::move(scale);
    return f;
  }

  /// Piecewise-linear f_i through (times[j], values[j][i]); times[0] must be 0.
  static TimeTransform tabulated(std::vector<double> times, std::vector<Vector> values) {
    if (times.size() < 2 || times.size() != values.size()) {
      throw InvalidArgument("TimeTransform::tabulated: need matching times and values (>= 2)");
    }
    if (times.front() != 0.0) throw InvalidArgument("TimeTransform::tabulated: first time must be 0");
    const auto d = values.front().size();
    for (std::size_t j = 0; j < times.size(); ++j) {
      if (values[j].size() != d) throw InvalidArgument("TimeTransform::tabulated: ragged values");
      if (j > 0 && !(times[j] > times[j - 1])) throw InvalidArgument("TimeTransform::tabulated: times must increase");
    }
    for (Eigen::Index i = 0; i < d; ++i) {
      if (values.front()[i] != 0.0) throw NonMonotoneTransform("TimeTransform::tabulated: f_i(0) must be 0");
      for (std::size_t j = 1; j < times.size(); ++j) {
        if (!(values[j][i] > values[j - 1][i])) {
          throw NonMonotoneTransform("TimeTransform::tabulated: coordinate " + std::to_string(i) +
                                     " is not strictly increasing");
        }
      }
    }
    TimeTransform f;
    f.kind_ = Kind::tabulated;
    f.param_ = Vector::Zero(static_cast<Eigen::Index>(d));
    f.times_ = std::move(times);
    f.values_ = std::move(values);
    return f;
  }

  Kind kind() const noexcept { return kind_; }
  int dim() const noexcept { return static_cast<int>(param_.size()); }
  const Vector& parameters() const noexcept { return param_; }
  const std::vector<double>& table_times() const noexcept { return times_; }
  const std::vector<Vector>& table_values() const noexcept { return values_; }

  double operator()(int i, double t) const {
    switch (kind_) {
      case Kind::power: return t <= 0.0 ? 0.0 : std::pow(t, param_[i]);
      case Kind::linear: return param_[i] * t;
      case Kind::tabulated: {
        if (t <= 0.0) return 0.0;
        if (t >= times_.back()) {
          // linear extrapolation with the last slope
          const std::size_t n = times_.size();
          const double slope = (values_[n - 1][i] - values_[n - 2][i]) / (times_[n - 1] - times_[n - 2]);
          return values_[n - 1][i] + slope * (t - times_[n - 1]);
        }
        const auto it = std::upper_bound(times_.begin(), times_.end(), t);
        const std::size_t j = static_cast<std::size_t>(it - times_.begin());
        const double w = (t - times_[j - 1]) / (times_[j] - times_[j - 1]);
        return (1.0 - w) * values_[j - 1][i] + w * values_[j][i];
      }
    }
    return 0.0;
  }

  /// delta_i(t) = (f_i(T) - f_i(t)) / (f_1(T) - f_1(t)) for t < T.
  double delta(int i, double t, double T) const {
    return ((*this)(i, T) - (*this)(i, t)) / ((*this)(0, T) - (*this)(0, t));
  }

  /// Throws NonMonotoneTransform unless every f_i is strictly increasing on the grid
  /// with f_i(0) = 0.
  void check_monotone(const TimeGrid& grid) const {
    for (int i = 0; i < dim(); ++i) {
      if ((*this)(i, 0.0) != 0.0) throw NonMonotoneTransform("time transform: f_i(0) != 0");
      for (std::size_t j = 1; j < grid.size(); ++j) {
        if (!((*this)(i, grid[j]) > (*this)(i, grid[j - 1]))) {
          throw NonMonotoneTransform("time transform: coordinate " + std::to_string(i) +
                                     " not strictly increasing at t = " + std::to_string(grid[j]));
        }
      }
    }
  }

  /// Estimates lim_{t->T} delta_i(t) from the last three grid points before T and
  /// throws TransformHypothesisViolated when their relative spread exceeds 10%
  /// or the values are not positive and finite. Returns the estimate at t_{m-1}.
  Vector delta_limit(const TimeGrid& grid) const {
    if (grid.size() < 4) throw InvalidArgument("time transform: grid too coarse for the delta limit check");
    const double T = grid.horizon();
    Vector limit(dim());
    for (int i = 0; i < dim(); ++i) {
      double lo = kInf, hi = -kInf;
      for (std::size_t back = 2; back <= 4; ++back) {
        const double v = delta(i, grid[grid.size() - back], T);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      const double last = delta(i, grid[grid.size() - 2], T);
      if (!(lo > 0.0) || !std::isfinite(hi) || (hi - lo) > 0.1 * std::abs(last)) {
        throw TransformHypothesisViolated("time transform: delta_" + std::to_string(i + 1) +
                                          "(t) has no stable positive limit at T");
      }
      limit[i] = last;
    }
    return limit;
  }

 private:
  Kind kind_ = Kind::power;
  Vector param_;
  std::vector<double> times_;
  std::vector<Vector> values_;
};

}  // namespace ruinbound
