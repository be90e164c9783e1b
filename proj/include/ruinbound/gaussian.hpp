#pragma once

// Dense Gaussian substrate: covariance models, sampling, and multivariate
// normal rectangle probabilities.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ruinbound/errors.hpp"
#include "ruinbound/normal.hpp"
#include "ruinbound/parallel.hpp"
#include "ruinbound/rng.hpp"

namespace ruinbound {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr int kMaxIntegrationDim = 25;
inline constexpr double kPivotTolerance = 1e-12;
inline constexpr double kDeterminantTolerance = 1e-12;

/// Z = A B with B a standard Brownian motion; sigma = A A^T is Cov Z(1).
struct CovarianceModel {
  Matrix mixing;
  Matrix sigma;
  Matrix chol;

  int dim() const noexcept { return static_cast<int>(sigma.rows()); }
};

/// Lower Cholesky factor. Rejects pivots below kPivotTolerance * max diagonal.
inline Matrix cholesky_lower(const Matrix& sigma) {
  const Eigen::Index d = sigma.rows();
  if (sigma.cols() != d) throw DimensionMismatch("cholesky_lower: matrix is not square");
  const double scale = d > 0 ? sigma.diagonal().cwiseAbs().maxCoeff() : 0.0;
  Matrix chol = Matrix::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    double pivot = sigma(j, j);
    for (Eigen::Index k = 0; k < j; ++k) pivot -= chol(j, k) * chol(j, k);
    if (!(pivot >= kPivotTolerance * scale) || !(pivot > 0.0)) {
      throw SingularMatrix("covariance is not positive definite (pivot " + std::to_string(pivot) +
                           " at index " + std::to_string(j) + ")");
    }
    chol(j, j) = std::sqrt(pivot);
    for (Eigen::Index i = j + 1; i < d; ++i) {
      double s = sigma(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= chol(i, k) * chol(j, k);
      chol(i, j) = s / chol(j, j);
    }
  }
  return chol;
}

inline CovarianceModel build_covariance(const Matrix& mixing) {
  if (mixing.rows() == 0 || mixing.rows() != mixing.cols()) {
    throw DimensionMismatch("build_covariance: mixing matrix must be square and non-empty");
  }
  if (!mixing.allFinite()) throw InvalidArgument("build_covariance: non-finite entries");
  const double det = mixing.partialPivLu().determinant();
  if (!(std::abs(det) >= kDeterminantTolerance)) {
    throw SingularMatrix("mixing matrix is singular (|det A| = " + std::to_string(std::abs(det)) + ")");
  }
  CovarianceModel model;
  model.mixing = mixing;
  model.sigma = mixing * mixing.transpose();
  model.sigma = 0.5 * (model.sigma + model.sigma.transpose()).eval();
  model.chol = cholesky_lower(model.sigma);
  return model;
}

/// Model whose mixing matrix is the Cholesky factor of a given SPD matrix.
inline CovarianceModel covariance_from_sigma(const Matrix& sigma) {
  if (sigma.rows() == 0 || sigma.rows() != sigma.cols()) {
    throw DimensionMismatch("covariance_from_sigma: matrix must be square and non-empty");
  }
  if (!sigma.allFinite()) throw InvalidArgument("covariance_from_sigma: non-finite entries");
  CovarianceModel model;
  model.sigma = 0.5 * (sigma + sigma.transpose());
  model.chol = cholesky_lower(model.sigma);
  model.mixing = model.chol;
  return model;
}

/// Unit-variance equicorrelated model.
inline CovarianceModel equicorrelated_model(int dim, double rho) {
  if (dim < 1) throw InvalidArgument("equicorrelated_model: dim must be positive");
  Matrix sigma = Matrix::Constant(dim, dim, rho);
  sigma.diagonal().setOnes();
  return covariance_from_sigma(sigma);
}

/// count i.i.d. draws from N(0, sigma), one per column; draw j uses stream j.
inline Matrix sample_mvn(const CovarianceModel& model, std::size_t count, std::uint64_t seed,
                         unsigned jobs = 1) {
  if (count == 0) throw InvalidArgument("sample_mvn: count must be positive");
  const int d = model.dim();
  Matrix draws(d, static_cast<Eigen::Index>(count));
  parallel_blocks(count, 4096, jobs, [&](std::size_t, std::size_t begin, std::size_t end) {
    Vector xi(d);
    for (std::size_t j = begin; j < end; ++j) {
      RandomStream rng(seed, j);
      for (int i = 0; i < d; ++i) xi[i] = rng.normal();
      draws.col(static_cast<Eigen::Index>(j)) = model.chol.triangularView<Eigen::Lower>() * xi;
    }
  });
  return draws;
}

enum class ProbMethod { analytic, quasi_mc, monte_carlo, inclusion_exclusion };

inline std::string_view to_string(ProbMethod m) {
  switch (m) {
    case ProbMethod::analytic: return "analytic";
    case ProbMethod::quasi_mc: return "quasi-mc";
    case ProbMethod::monte_carlo: return "monte-carlo";
    case ProbMethod::inclusion_exclusion: return "inclusion-exclusion";
  }
  return "unknown";
}

struct ProbEstimate {
  double value = 0.0;
  double abs_error = 0.0;
  ProbMethod method = ProbMethod::analytic;

  double lower() const noexcept { return std::clamp(value - abs_error, 0.0, 1.0); }
  double upper() const noexcept { return std::clamp(value + abs_error, 0.0, 1.0); }
};

struct QmcOptions {
  double target_abs_error = 1e-6;
  int shifts = 12;
  std::size_t initial_points = 512;
  std::size_t max_points = std::size_t{1} << 20;
  std::uint64_t seed = 0x5EED0F6E27ull;
};

namespace detail {

inline constexpr std::array<int, 25> kPrimes = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41,
                                                43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97};

inline double clamp_unit(double p) noexcept {
  return std::clamp(p, 1e-300, 1.0 - 0x1.0p-53);
}

/// Genz separation of variables after prioritized Cholesky (Genz & Bretz 2009, 4.1.3).
class GenzIntegrand {
 public:
  GenzIntegrand(Matrix sigma, Vector lower, Vector upper)
      : sigma_(std::move(sigma)), lower_(std::move(lower)), upper_(std::move(upper)) {
    prioritize();
  }

  int dim() const noexcept { return static_cast<int>(lower_.size()); }

  /// Integrand on [0,1]^(d-1); scratch must hold 2d doubles.
  double operator()(const double* w, double* scratch) const noexcept {
    const int d = dim();
    double* y = scratch;
    double lo = normal_cdf(lower_[0] / chol_(0, 0));
    double hi = normal_cdf(upper_[0] / chol_(0, 0));
    double f = hi - lo;
    for (int i = 1; i < d && f > 0.0; ++i) {
      y[i - 1] = normal_quantile(clamp_unit(lo + w[i - 1] * (hi - lo)));
      double s = 0.0;
      for (int j = 0; j < i; ++j) s += chol_(i, j) * y[j];
      lo = normal_cdf((lower_[i] - s) / chol_(i, i));
      hi = normal_cdf((upper_[i] - s) / chol_(i, i));
      f *= std::max(0.0, hi - lo);
    }
    return f;
  }

 private:
  void prioritize() {
    const int d = static_cast<int>(lower_.size());
    const double scale = sigma_.diagonal().maxCoeff();
    chol_ = Matrix::Zero(d, d);
    Vector y = Vector::Zero(d);
    for (int i = 0; i < d; ++i) {
      int best = i;
      double best_width = kInf;
      for (int j = i; j < d; ++j) {
        double var = sigma_(j, j);
        double s = 0.0;
        for (int k = 0; k < i; ++k) {
          var -= chol_(j, k) * chol_(j, k);
          s += chol_(j, k) * y[k];
        }
        if (var <= 0.0) continue;
        const double sd = std::sqrt(var);
        const double width = normal_cdf((upper_[j] - s) / sd) - normal_cdf((lower_[j] - s) / sd);
        if (width < best_width) {
          best_width = width;
          best = j;
        }
      }
      if (best != i) {
        sigma_.row(i).swap(sigma_.row(best));
        sigma_.col(i).swap(sigma_.col(best));
        chol_.row(i).swap(chol_.row(best));
        std::swap(lower_[i], lower_[best]);
        std::swap(upper_[i], upper_[best]);
      }
      double pivot = sigma_(i, i);
      for (int k = 0; k < i; ++k) pivot -= chol_(i, k) * chol_(i, k);
      if (!(pivot >= kPivotTolerance * scale) || !(pivot > 0.0)) {
        throw SingularMatrix("rectangle probability: covariance is not positive definite");
      }
      chol_(i, i) = std::sqrt(pivot);
      for (int j = i + 1; j < d; ++j) {
        double s = sigma_(j, i);
        for (int k = 0; k < i; ++k) s -= chol_(j, k) * chol_(i, k);
        chol_(j, i) = s / chol_(i, i);
      }
      // expected value of the truncated conditional variable
      double s = 0.0;
      for (int k = 0; k < i; ++k) s += chol_(i, k) * y[k];
      const double a = (lower_[i] - s) / chol_(i, i);
      const double b = (upper_[i] - s) / chol_(i, i);
      const double mass = normal_cdf(b) - normal_cdf(a);
      if (mass > 1e-300) {
        y[i] = (normal_pdf(a) - normal_pdf(b)) / mass;
      } else {
        y[i] = std::isfinite(a) ? a : (std::isfinite(b) ? b : 0.0);
      }
    }
  }

  Matrix sigma_;
  Vector lower_;
  Vector upper_;
  Matrix chol_;
};

}  // namespace detail

/// P(lower <= X <= upper) for X ~ N(0, sigma), by randomized Richtmyer rules over
/// the Genz transformation. abs_error is 2.58 standard errors across the shifts.
inline ProbEstimate rectangle_prob(const Matrix& sigma, const Vector& lower, const Vector& upper,
                                   const QmcOptions& options = {}) {
  const Eigen::Index d = sigma.rows();
  if (sigma.cols() != d || lower.size() != d || upper.size() != d) {
    throw DimensionMismatch("rectangle_prob: dimension mismatch");
  }
  if (d > kMaxIntegrationDim) {
    throw DimensionTooLarge("rectangle_prob: dimension " + std::to_string(d) + " exceeds " +
                            std::to_string(kMaxIntegrationDim));
  }
  if (!(options.target_abs_error > 0.0)) throw InvalidArgument("rectangle_prob: target_abs_error must be > 0");
  for (Eigen::Index i = 0; i < d; ++i) {
    if (std::isnan(lower[i]) || std::isnan(upper[i]) || lower[i] > upper[i]) {
      throw InvalidBounds("rectangle_prob: lower > upper at coordinate " + std::to_string(i));
    }
    if (lower[i] == upper[i]) return {0.0, 0.0, ProbMethod::analytic};
  }

  // marginalize unconstrained coordinates
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (std::isfinite(lower[i]) || std::isfinite(upper[i])) keep.push_back(i);
  }
  const auto k = static_cast<Eigen::Index>(keep.size());
  if (k == 0) return {1.0, 0.0, ProbMethod::analytic};
  Matrix sub(k, k);
  Vector a(k), b(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    a[i] = lower[keep[i]];
    b[i] = upper[keep[i]];
    for (Eigen::Index j = 0; j < k; ++j) sub(i, j) = sigma(keep[i], keep[j]);
  }
  if (k == 1) {
    if (!(sub(0, 0) > 0.0)) throw SingularMatrix("rectangle_prob: non-positive variance");
    const double sd = std::sqrt(sub(0, 0));
    // use the upper tail form where it is more accurate
    const double p = (a[0] > 0.0) ? normal_sf(a[0] / sd) - normal_sf(b[0] / sd)
                                  : normal_cdf(b[0] / sd) - normal_cdf(a[0] / sd);
    return {std::clamp(p, 0.0, 1.0), 4e-16, ProbMethod::analytic};
  }

  const detail::GenzIntegrand integrand(sub, a, b);
  const int dims = static_cast<int>(k) - 1;
  std::vector<double> generator(dims);
  for (int i = 0; i < dims; ++i) {
    const double r = std::sqrt(static_cast<double>(detail::kPrimes[i]));
    generator[i] = r - std::floor(r);
  }
  const int shifts = std::max(2, options.shifts);
  RandomStream rng(options.seed, 0);
  std::vector<std::vector<double>> shift(shifts, std::vector<double>(dims));
  for (auto& s : shift)
    for (auto& v : s) v = rng.uniform();

  std::vector<double> sums(shifts, 0.0);
  std::vector<double> point(dims), scratch(2 * k);
  std::size_t done = 0;
  std::size_t target_n = std::max<std::size_t>(16, options.initial_points);
  double mean = 0.0, err = 0.0;
  for (;;) {
    for (int s = 0; s < shifts; ++s) {
      double acc = 0.0;
      for (std::size_t j = done; j < target_n; ++j) {
        for (int i = 0; i < dims; ++i) {
          double x = static_cast<double>(j) * generator[i] + shift[s][i];
          x -= std::floor(x);
          point[i] = std::abs(2.0 * x - 1.0);
        }
        acc += integrand(point.data(), scratch.data());
      }
      sums[s] += acc;
    }
    done = target_n;
    double m = 0.0;
    for (double v : sums) m += v / static_cast<double>(done);
    m /= shifts;
    double var = 0.0;
    for (double v : sums) {
      const double e = v / static_cast<double>(done) - m;
      var += e * e;
    }
    var /= static_cast<double>(shifts - 1);
    mean = m;
    err = kZ99 * std::sqrt(var / shifts);
    if (err <= options.target_abs_error || done >= options.max_points) break;
    target_n = std::min(options.max_points, done * 2);
  }
  err = std::max(err, 1e-15);
  return {std::clamp(mean, 0.0, 1.0), err, ProbMethod::quasi_mc};
}

inline ProbEstimate mvn_rectangle_prob(const CovarianceModel& model, const Vector& lower,
                                       const Vector& upper, double target_abs_error = 1e-6,
                                       std::uint64_t seed = QmcOptions{}.seed) {
  QmcOptions options;
  options.target_abs_error = target_abs_error;
  options.seed = seed;
  return rectangle_prob(model.sigma, lower, upper, options);
}

/// P(X >= 0) for X ~ N(0, sigma).
inline ProbEstimate orthant_prob(const CovarianceModel& model, double target_abs_error = 1e-6,
                                 std::uint64_t seed = QmcOptions{}.seed) {
  const int d = model.dim();
  return mvn_rectangle_prob(model, Vector::Zero(d), Vector::Constant(d, kInf), target_abs_error, seed);
}

}  // namespace ruinbound
