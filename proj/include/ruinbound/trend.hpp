#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ruinbound/errors.hpp"
#include "ruinbound/gaussian.hpp"
#include "ruinbound/grid.hpp"

namespace ruinbound {

/// Declared Hoelder class: |c_i(t) - c_i(t0)| <= M |t - t0|^alpha.
struct HolderClass {
  double t0 = 0.0;
  double alpha = 0.5;
  double M = 1.0;
};

/// Deterministic trend c(t), subtracted from the Gaussian process.
class TrendFunction {
 public:
  enum class Kind { zero, linear, power, tabulated };

  static TrendFunction zero(int dim) {
    if (dim < 1) throw InvalidArgument("TrendFunction::zero: dim must be positive");
    TrendFunction f;
    f.kind_ = Kind::zero;
    f.coef_ = Vector::Zero(dim);
    return f;
  }

  /// c(t) = c t
  static TrendFunction linear(Vector c) {
    if (c.size() < 1 || !c.allFinite()) throw InvalidArgument("TrendFunction::linear: invalid coefficients");
    TrendFunction f;
    f.kind_ = Kind::linear;
    f.coef_ = std::move(c);
    return f;
  }

  /// c_i(t) = c_i t^{p_i}
  static TrendFunction power(Vector c, Vector exponent) {
    if (c.size() < 1 || c.size() != exponent.size() || !c.allFinite()) {
      throw InvalidArgument("TrendFunction::power: coefficient/exponent mismatch");
    }
    for (double p : exponent) {
      if (!(p > 0.0) || !std::isfinite(p)) throw InvalidArgument("TrendFunction::power: exponents must be positive");
    }
    TrendFunction f;
    f.kind_ = Kind::power;
    f.coef_ = std::move(c);
    f.exponent_ = std::move(exponent);
    return f;
  }

  /// Piecewise-linear interpolation of values[j] at times[j]; constant outside the table.
  static TrendFunction tabulated(std::vector<double> times, std::vector<Vector> values) {
    if (times.size() < 2 || times.size() != values.size()) {
      throw InvalidArgument("TrendFunction::tabulated: need matching times and values (>= 2)");
    }
    for (std::size_t j = 1; j < times.size(); ++j) {
      if (!(times[j] > times[j - 1])) throw InvalidArgument("TrendFunction::tabulated: times must increase");
    }
    for (const auto& v : values) {
      if (v.size() != values.front().size() || !v.allFinite()) {
        throw InvalidArgument("TrendFunction::tabulated: inconsistent values");
      }
    }
    TrendFunction f;
    f.kind_ = Kind::tabulated;
    f.coef_ = Vector::Zero(values.front().size());
    f.times_ = std::move(times);
    f.values_ = std::move(values);
    return f;
  }

  Kind kind() const noexcept { return kind_; }
  int dim() const noexcept { return static_cast<int>(coef_.size()); }
  const Vector& coefficients() const noexcept { return coef_; }
  const Vector& exponents() const noexcept { return exponent_; }
  const std::vector<double>& table_times() const noexcept { return times_; }
  const std::vector<Vector>& table_values() const noexcept { return values_; }

  const std::optional<HolderClass>& holder() const noexcept { return holder_; }
  TrendFunction& with_holder(HolderClass h) {
    holder_ = h;
    return *this;
  }

  bool is_zero() const noexcept { return kind_ == Kind::zero || (kind_ != Kind::tabulated && coef_.isZero(0.0)); }

  double component(int i, double t) const {
    switch (kind_) {
      case Kind::zero: return 0.0;
      case Kind::linear: return coef_[i] * t;
      case Kind::power: return t <= 0.0 ? 0.0 : coef_[i] * std::pow(t, exponent_[i]);
      case Kind::tabulated: {
        if (t <= times_.front()) return values_.front()[i];
        if (t >= times_.back()) return values_.back()[i];
        const auto it = std::upper_bound(times_.begin(), times_.end(), t);
        const std::size_t j = static_cast<std::size_t>(it - times_.begin());
        const double w = (t - times_[j - 1]) / (times_[j] - times_[j - 1]);
        return (1.0 - w) * values_[j - 1][i] + w * values_[j][i];
      }
    }
    return 0.0;
  }

  Vector operator()(double t) const {
    Vector v(dim());
    for (int i = 0; i < dim(); ++i) v[i] = component(i, t);
    return v;
  }

  /// Values at every grid point, row-major (point, coordinate).
  std::vector<double> sample(const TimeGrid& grid) const {
    std::vector<double> out(grid.size() * static_cast<std::size_t>(dim()));
    for (std::size_t j = 0; j < grid.size(); ++j) {
      for (int i = 0; i < dim(); ++i) out[j * dim() + i] = component(i, grid[j]);
    }
    return out;
  }

 private:
  Kind kind_ = Kind::zero;
  Vector coef_;
  Vector exponent_;
  std::vector<double> times_;
  std::vector<Vector> values_;
  std::optional<HolderClass> holder_;
};

inline std::string_view to_string(TrendFunction::Kind k) {
  switch (k) {
    case TrendFunction::Kind::zero: return "zero";
    case TrendFunction::Kind::linear: return "linear";
    case TrendFunction::Kind::power: return "power";
    case TrendFunction::Kind::tabulated: return "tabulated";
  }
  return "unknown";
}

struct HolderCertificate {
  double M = 0.0;       // smallest constant valid on the probed points
  double worst_t = 0.0; // where it is attained
  bool violated = false;
};

inline constexpr double kDefaultHolderCap = 1e6;

/// Smallest M with |c_i(t) - c_i(t0)| <= M |t - t0|^alpha over the grid points, plus
/// probes at t0 +- span * 2^-j (j = 1..52) so that non-Hoelder behaviour at t0 shows
/// up without an astronomically fine grid. Violation when M exceeds cap.
inline HolderCertificate holder_check(const TrendFunction& c, double t0, double alpha, const TimeGrid& grid,
                                      double cap = kDefaultHolderCap) {
  const double T = grid.horizon();
  if (!(t0 >= 0.0 && t0 <= T)) throw InvalidArgument("holder_check: t0 must lie in [0, T]");
  if (!(alpha > 0.0)) throw InvalidArgument("holder_check: alpha must be positive");
  HolderCertificate cert;
  const Vector base = c(t0);
  const auto probe = [&](double t) {
    const double gap = std::abs(t - t0);
    if (gap <= 0.0) return;
    const double scale = std::pow(gap, alpha);
    for (int i = 0; i < c.dim(); ++i) {
      const double ratio = std::abs(c.component(i, t) - base[i]) / scale;
      if (ratio > cert.M || std::isnan(ratio)) {
        cert.M = std::isnan(ratio) ? kInf : ratio;
        cert.worst_t = t;
      }
    }
  };
  for (double t : grid.points()) probe(t);
  for (int j = 1; j <= 52; ++j) {
    const double step = std::ldexp(T, -j);
    if (t0 + step <= T) probe(t0 + step);
    if (t0 - step >= 0.0) probe(t0 - step);
  }
  cert.violated = !(cert.M <= cap);
  return cert;
}

}  // namespace ruinbound
