#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>

#include "ruinbound/normal.hpp"

namespace ruinbound {

struct Interval {
  double value = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double halfwidth() const noexcept { return std::max(value - lower, upper - value); }
};

/// Below this many successes (or failures) the normal approximation is replaced by Wilson.
inline constexpr std::size_t kWilsonThreshold = 30;

inline Interval wilson_interval(std::size_t successes, std::size_t n, double z = kZ99) {
  if (n == 0) return {0.0, 0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double spread = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {p, std::max(0.0, centre - spread), std::min(1.0, centre + spread)};
}

/// 99% two-sided interval for a binomial proportion.
inline Interval proportion_interval(std::size_t successes, std::size_t n, double z = kZ99) {
  if (n == 0) return {0.0, 0.0, 1.0};
  if (std::min(successes, n - successes) < kWilsonThreshold) return wilson_interval(successes, n, z);
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double h = z * std::sqrt(p * (1.0 - p) / nn);
  return {p, std::max(0.0, p - h), std::min(1.0, p + h)};
}

/// Weight w in P_inf ~ P_fine + w (P_fine - P_coarse) for an error ~ sqrt(dt) and halved steps.
inline const double kSqrtDtExtrapolationWeight = 1.0 / (std::numbers::sqrt2 - 1.0);

/// Extrapolated estimate from paired per-path indicators on a coarse grid and its
/// two-fold refinement (coarse hit implies fine hit). Per path the estimator is
/// (1 + w) 1[fine] - w 1[coarse], so its variance follows from the two counts.
inline Interval extrapolated_interval(std::size_t coarse_hits, std::size_t fine_hits, std::size_t n, double z = kZ99) {
  if (n == 0) return {0.0, 0.0, 0.0};
  const double w = kSqrtDtExtrapolationWeight;
  const double nn = static_cast<double>(n);
  const double p_both = static_cast<double>(coarse_hits) / nn;
  const double p_only = static_cast<double>(fine_hits - coarse_hits) / nn;
  const double mean = p_both + (1.0 + w) * p_only;
  const double second = p_both + (1.0 + w) * (1.0 + w) * p_only;
  const double var = std::max(0.0, second - mean * mean);
  // floor the spread at one event's worth so that zero counts do not give a zero-width interval
  const double h = z * std::sqrt(std::max(var, 1.0 / (nn * nn)) / nn);
  return {mean, mean - h, mean + h};
}

}  // namespace ruinbound
