#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ruinbound/errors.hpp"

namespace ruinbound {

/// Strictly increasing time points 0 = t_0 < ... < t_m = T.
///
/// A uniform grid with m = q * 2^L intervals (q odd) carries refinement levels:
/// node j belongs to level L - min(ctz(j), L), so the nodes of level <= l form the
/// uniform sub-grid with q * 2^l intervals. Non-uniform grids have a single level.
class TimeGrid {
 public:
  TimeGrid() = default;

  static TimeGrid uniform(double horizon, std::size_t intervals) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidArgument("TimeGrid: horizon must be positive");
    if (intervals < 1) throw InvalidArgument("TimeGrid: at least one interval required");
    TimeGrid g;
    g.points_.resize(intervals + 1);
    for (std::size_t j = 0; j <= intervals; ++j) {
      g.points_[j] = horizon * static_cast<double>(j) / static_cast<double>(intervals);
    }
    g.points_.back() = horizon;
    g.uniform_ = true;
    g.levels_ = std::countr_zero(intervals);
    return g;
  }

  static TimeGrid from_points(std::vector<double> points) {
    if (points.size() < 2) throw InvalidArgument("TimeGrid: need at least two points");
    if (points.front() != 0.0) throw InvalidArgument("TimeGrid: first point must be 0");
    for (std::size_t j = 1; j < points.size(); ++j) {
      if (!(points[j] > points[j - 1]) || !std::isfinite(points[j])) {
        throw InvalidArgument("TimeGrid: points must be finite and strictly increasing");
      }
    }
    TimeGrid g;
    g.points_ = std::move(points);
    const double h = g.points_[1];
    bool uniform = true;
    for (std::size_t j = 1; j < g.points_.size() && uniform; ++j) {
      uniform = std::abs(g.points_[j] - h * static_cast<double>(j)) <= 1e-12 * g.horizon();
    }
    g.uniform_ = uniform;
    g.levels_ = uniform ? std::countr_zero(g.intervals()) : 0;
    return g;
  }

  /// Inserts factor - 1 equally spaced points into every interval.
  TimeGrid refine(std::size_t factor) const {
    if (factor < 1) throw InvalidArgument("TimeGrid::refine: factor must be positive");
    if (uniform_) return uniform(horizon(), intervals() * factor);
    std::vector<double> pts;
    pts.reserve(intervals() * factor + 1);
    for (std::size_t j = 0; j + 1 < points_.size(); ++j) {
      for (std::size_t s = 0; s < factor; ++s) {
        pts.push_back(points_[j] + (points_[j + 1] - points_[j]) * static_cast<double>(s) / static_cast<double>(factor));
      }
    }
    pts.push_back(points_.back());
    return from_points(std::move(pts));
  }

  const std::vector<double>& points() const noexcept { return points_; }
  double operator[](std::size_t j) const noexcept { return points_[j]; }
  std::size_t size() const noexcept { return points_.size(); }
  std::size_t intervals() const noexcept { return points_.empty() ? 0 : points_.size() - 1; }
  double horizon() const noexcept { return points_.empty() ? 0.0 : points_.back(); }
  bool is_uniform() const noexcept { return uniform_; }

  /// Number of dyadic refinement levels above the base grid.
  int max_level() const noexcept { return levels_; }

  int level(std::size_t j) const noexcept {
    if (j == 0 || levels_ == 0) return 0;
    const int tz = std::countr_zero(j);
    return tz >= levels_ ? 0 : levels_ - tz;
  }

  /// Number of intervals of the sub-grid formed by levels <= l.
  std::size_t resolution_at(int l) const noexcept { return intervals() >> (levels_ - l); }

  /// Level whose sub-grid has the given number of intervals, or -1.
  int level_of_resolution(std::size_t m) const noexcept {
    for (int l = 0; l <= levels_; ++l) {
      if (resolution_at(l) == m) return l;
    }
    return -1;
  }

 private:
  std::vector<double> points_;
  bool uniform_ = false;
  int levels_ = 0;
};

}  // namespace ruinbound
