#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <bit>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ruinbound/errors.hpp"
#include "ruinbound/gaussian.hpp"
#include "ruinbound/normal.hpp"
#include "ruinbound/parallel.hpp"
#include "ruinbound/rng.hpp"

namespace ruinbound {

/// One upper set S_I = {x : x_i > a_i for all i in I}.
struct UpperSet {
  std::vector<int> indices;
  std::vector<double> thresholds;
};

/// S = union of UpperSets. Every member needs a positive threshold so that 0 is not in S.
class RuinSet {
 public:
  static RuinSet from_family(int dim, std::vector<UpperSet> family) {
    if (dim < 1) throw InvalidArgument("RuinSet: dim must be positive");
    if (family.empty()) throw InvalidArgument("RuinSet: empty family");
    for (auto& member : family) {
      if (member.indices.empty() || member.indices.size() != member.thresholds.size()) {
        throw InvalidArgument("RuinSet: member needs matching indices and thresholds");
      }
      bool positive = false;
      for (std::size_t j = 0; j < member.indices.size(); ++j) {
        const int i = member.indices[j];
        if (i < 0 || i >= dim) throw InvalidArgument("RuinSet: index out of range");
        if (!std::isfinite(member.thresholds[j])) throw InvalidArgument("RuinSet: thresholds must be finite");
        positive = positive || member.thresholds[j] > 0.0;
      }
      if (!positive) throw OriginInSet("RuinSet: a member has no positive threshold, so 0 lies in S");
    }
    RuinSet s;
    s.dim_ = dim;
    s.family_ = std::move(family);
    return s;
  }

  /// At least k of the d coordinates exceed their thresholds.
  static RuinSet k_of_d(int k, const Vector& a) {
    const int d = static_cast<int>(a.size());
    if (d < 1 || k < 1 || k > d) throw InvalidArgument("RuinSet::k_of_d: need 1 <= k <= d");
    std::vector<UpperSet> family;
    std::vector<int> pick(k);
    std::iota(pick.begin(), pick.end(), 0);
    for (;;) {
      UpperSet m;
      m.indices = pick;
      for (int i : pick) m.thresholds.push_back(a[i]);
      family.push_back(std::move(m));
      int pos = k - 1;
      while (pos >= 0 && pick[pos] == d - k + pos) --pos;
      if (pos < 0) break;
      ++pick[pos];
      for (int j = pos + 1; j < k; ++j) pick[j] = pick[j - 1] + 1;
    }
    RuinSet s = from_family(d, std::move(family));
    s.k_ = k;
    s.thresholds_ = a;
    return s;
  }

  /// [a, inf) in one dimension.
  static RuinSet half_line(double a) { return k_of_d(1, Vector::Constant(1, a)); }

  int dim() const noexcept { return dim_; }
  const std::vector<UpperSet>& family() const noexcept { return family_; }
  const std::optional<int>& k() const noexcept { return k_; }
  const std::optional<Vector>& thresholds() const noexcept { return thresholds_; }

  /// x in uS
  bool contains(std::span<const double> x, double u) const {
    if (!(u > 0.0)) throw InvalidArgument("RuinSet::contains: u must be positive");
    for (const auto& m : family_) {
      bool inside = true;
      for (std::size_t j = 0; j < m.indices.size() && inside; ++j) inside = x[m.indices[j]] > u * m.thresholds[j];
      if (inside) return true;
    }
    return false;
  }

  bool contains(const Vector& x, double u) const { return contains(std::span<const double>(x.data(), x.size()), u); }

 private:
  int dim_ = 0;
  std::vector<UpperSet> family_;
  std::optional<int> k_;
  std::optional<Vector> thresholds_;
};

inline RuinSet make_k_of_d(int d, int k, const Vector& a) {
  if (a.size() != d) throw DimensionMismatch("make_k_of_d: threshold vector has wrong length");
  return RuinSet::k_of_d(k, a);
}

/// Fast membership for a fixed u: thresholds pre-scaled, members with one index
/// folded into a per-coordinate test.
class ScaledRuinSet {
 public:
  ScaledRuinSet(const RuinSet& set, double u) : dim_(set.dim()), single_(set.dim(), kInf) {
    if (!(u > 0.0)) throw InvalidArgument("ScaledRuinSet: u must be positive");
    for (const auto& m : set.family()) {
      if (m.indices.size() == 1) {
        single_[m.indices[0]] = std::min(single_[m.indices[0]], u * m.thresholds[0]);
      } else {
        Member s;
        s.indices = m.indices;
        for (double a : m.thresholds) s.levels.push_back(u * a);
        multi_.push_back(std::move(s));
      }
    }
  }

  bool contains(const double* x) const noexcept {
    for (int i = 0; i < dim_; ++i)
      if (x[i] > single_[i]) return true;
    for (const auto& m : multi_) {
      bool inside = true;
      for (std::size_t j = 0; j < m.indices.size() && inside; ++j) inside = x[m.indices[j]] > m.levels[j];
      if (inside) return true;
    }
    return false;
  }

 private:
  struct Member {
    std::vector<int> indices;
    std::vector<double> levels;
  };
  int dim_;
  std::vector<double> single_;
  std::vector<Member> multi_;
};

enum class ConeKind { upper_orthant };
enum class TimeDependence { constant_in_t };

struct ConeCertificate {
  ProbEstimate epsilon;
  ConeKind cone_kind = ConeKind::upper_orthant;
  TimeDependence t_dependence = TimeDependence::constant_in_t;
};

/// Cone constant for V_x = {y >= x}: P(Z(t) >= 0) = P(N(0, Sigma) >= 0) for every t > 0.
inline ConeCertificate epsilon_S(const RuinSet& set, const CovarianceModel& model, double t = 1.0,
                                 double target_abs_error = 1e-6) {
  if (set.dim() != model.dim()) throw DimensionMismatch("epsilon_S: set and model dimensions differ");
  if (!(t > 0.0)) throw InvalidArgument("epsilon_S: t must be positive");
  ConeCertificate cert;
  const int d = model.dim();
  cert.epsilon = rectangle_prob(t * model.sigma, Vector::Zero(d), Vector::Constant(d, kInf),
                                QmcOptions{target_abs_error});
  return cert;
}

/// Checks eps(uS) >= eps(S); with orthant cones both are the same orthant
/// probability, evaluated here with independent randomization.
inline bool epsilon_scaling_check(const RuinSet& set, const CovarianceModel& model, double u) {
  if (!(u > 1.0)) throw InvalidArgument("epsilon_scaling_check: u must exceed 1");
  const ProbEstimate base = epsilon_S(set, model).epsilon;
  QmcOptions options;
  options.seed = derive_seed(options.seed, std::bit_cast<std::uint64_t>(u));
  const int d = model.dim();
  const ProbEstimate scaled =
      rectangle_prob(u * u * model.sigma, Vector::Zero(d), Vector::Constant(d, kInf), options);
  return scaled.value + scaled.abs_error + base.abs_error >= base.value &&
         std::abs(scaled.value - base.value) <= scaled.abs_error + base.abs_error;
}

inline constexpr std::size_t kMaxInclusionExclusionTerms = std::size_t{1} << 15;

/// P(X in uS) for X ~ N(mean, cov) by inclusion-exclusion over the family, with
/// terms grouped by their merged threshold vector.
inline ProbEstimate terminal_prob(const RuinSet& set, double u, const Vector& mean, const Matrix& cov,
                                  double target_abs_error = 1e-7) {
  const int d = set.dim();
  if (mean.size() != d || cov.rows() != d || cov.cols() != d) throw DimensionMismatch("terminal_prob: dimension mismatch");
  if (!(u > 0.0)) throw InvalidArgument("terminal_prob: u must be positive");
  const std::size_t n = set.family().size();
  if (n >= 63 || (std::size_t{1} << n) - 1 > kMaxInclusionExclusionTerms) {
    throw FamilyTooLarge("terminal_prob: " + std::to_string(n) + " members exceed the inclusion-exclusion limit");
  }
  std::map<std::vector<double>, long> terms;
  std::vector<double> lower(d);
  for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
    std::fill(lower.begin(), lower.end(), -kInf);
    for (std::size_t m = 0; m < n; ++m) {
      if (!(mask >> m & 1u)) continue;
      const auto& member = set.family()[m];
      for (std::size_t j = 0; j < member.indices.size(); ++j) {
        const int i = member.indices[j];
        lower[i] = std::max(lower[i], u * member.thresholds[j] - mean[i]);
      }
    }
    terms[lower] += (std::popcount(mask) % 2 == 1) ? 1 : -1;
  }
  std::size_t live = 0;
  for (const auto& [key, coef] : terms) live += coef != 0;
  QmcOptions options;
  options.target_abs_error = target_abs_error / static_cast<double>(std::max<std::size_t>(1, live));
  double value = 0.0, error = 0.0;
  bool exact = true;
  for (const auto& [key, coef] : terms) {
    if (coef == 0) continue;
    const Vector lo = Eigen::Map<const Vector>(key.data(), d);
    const ProbEstimate p = rectangle_prob(cov, lo, Vector::Constant(d, kInf), options);
    value += static_cast<double>(coef) * p.value;
    error += static_cast<double>(std::abs(coef)) * p.abs_error;
    exact = exact && p.method == ProbMethod::analytic;
  }
  return {std::clamp(value, 0.0, 1.0), error,
          (exact && live == 1) ? ProbMethod::analytic : ProbMethod::inclusion_exclusion};
}

/// Plain Monte Carlo estimate of P(X in uS), 99% normal-approximation half-width.
inline ProbEstimate terminal_prob_mc(const RuinSet& set, double u, const Vector& mean, const Matrix& cov,
                                     std::size_t draws, std::uint64_t seed, unsigned jobs = 1) {
  const CovarianceModel model = covariance_from_sigma(cov);
  const ScaledRuinSet scaled(set, u);
  const int d = set.dim();
  constexpr std::size_t kBlock = 8192;
  std::vector<std::size_t> hits((draws + kBlock - 1) / kBlock, 0);
  parallel_blocks(draws, kBlock, jobs, [&](std::size_t b, std::size_t begin, std::size_t end) {
    RandomStream rng(seed, b);
    std::vector<double> xi(d), x(d);
    std::size_t count = 0;
    for (std::size_t j = begin; j < end; ++j) {
      rng.fill_normal(xi.data(), d);
      for (int i = 0; i < d; ++i) {
        double s = mean[i];
        for (int k = 0; k <= i; ++k) s += model.chol(i, k) * xi[k];
        x[i] = s;
      }
      count += scaled.contains(x.data());
    }
    hits[b] = count;
  });
  const double total = static_cast<double>(std::accumulate(hits.begin(), hits.end(), std::size_t{0}));
  const double p = total / static_cast<double>(draws);
  return {p, kZ99 * std::sqrt(std::max(p * (1.0 - p), 0.25 / static_cast<double>(draws)) / static_cast<double>(draws)),
          ProbMethod::monte_carlo};
}

/// Inclusion-exclusion when the family is small enough, Monte Carlo otherwise.
inline ProbEstimate terminal_prob_auto(const RuinSet& set, double u, const Vector& mean, const Matrix& cov,
                                       std::uint64_t seed, std::size_t mc_draws = 1000000, unsigned jobs = 1) {
  try {
    return terminal_prob(set, u, mean, cov);
  } catch (const FamilyTooLarge&) {
    return terminal_prob_mc(set, u, mean, cov, mc_draws, seed, jobs);
  }
}

/// (delta_min / delta_max)^{d/2} times the orthant probability of Sigma.
inline ProbEstimate epsilon_bar(const RuinSet& set, const CovarianceModel& model, double delta_min, double delta_max) {
  if (!(delta_min > 0.0) || !(delta_max >= delta_min)) throw InvalidArgument("epsilon_bar: need 0 < delta_min <= delta_max");
  const ProbEstimate eps = epsilon_S(set, model, delta_min).epsilon;
  const double ratio = std::pow(delta_min / delta_max, 0.5 * model.dim());
  return {ratio * eps.value, ratio * eps.abs_error, eps.method};
}

}  // namespace ruinbound
