#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ruinbound/bounds.hpp"

using namespace ruinbound;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

const CovarianceModel kId1 = build_covariance(Matrix::Identity(1, 1));
const CovarianceModel kId2 = build_covariance(Matrix::Identity(2, 2));

// exp(-T^2 c' Cov(Z(T))^{-1} c) with Cov(Z(T)) = T Sigma
double linear_penalty(double T, const Vector& c, const CovarianceModel& m) {
  const Matrix cov_T = T * m.sigma;
  return std::exp(-T * T * c.dot(cov_T.llt().solve(c)));
}

PenaltyOptions grid_only(std::size_t points = 4096) {
  PenaltyOptions o;
  o.closed_form = false;
  o.grid_points = points;
  return o;
}

}  // namespace

TEST(DriftPenalty, ZeroTrend) {
  const BoundConstant c = drift_penalty(2.0, TrendFunction::zero(2), equicorrelated_model(2, 0.3));
  EXPECT_EQ(c.value, 1.0);
  EXPECT_FALSE(c.vacuous);
}

TEST(DriftPenalty, ScalarLinearInstance) {
  const BoundConstant c = drift_penalty(1.0, TrendFunction::linear(vec({1.0})), kId1);
  EXPECT_NEAR(c.value, std::exp(-1.0), 1e-15);
  EXPECT_NEAR(c.value, 0.367879, 1e-6);
  EXPECT_EQ(c.argmin_t, 0.0);
  EXPECT_EQ(c.method, BoundMethod::closed_form);
}

TEST(DriftPenalty, GridMatchesClosedForm) {
  const std::vector<std::tuple<Vector, CovarianceModel, double>> cases = {
      {vec({1.0}), kId1, 1.0},
      {vec({0.5, 0.25}), equicorrelated_model(2, 0.5), 1.0},
      {vec({0.3, -0.2}), equicorrelated_model(2, -0.5), 2.5},
      {vec({0.2, 0.4, 0.1}), equicorrelated_model(3, 0.3), 0.7},
  };
  for (const auto& [c, m, T] : cases) {
    const BoundConstant grid = drift_penalty(T, TrendFunction::linear(c), m, grid_only());
    EXPECT_EQ(grid.method, BoundMethod::grid_refined);
    EXPECT_NEAR(grid.value / linear_penalty(T, c, m), 1.0, 1e-6);
    EXPECT_NEAR(grid.argmin_t, 0.0, 1e-3 * T);
  }
}

TEST(DriftPenalty, GridRefinementNeverIncreases) {
  const TrendFunction c = TrendFunction::power(vec({0.8, 0.5}), vec({0.7, 1.5}));
  const CovarianceModel m = equicorrelated_model(2, 0.2);
  const BoundConstant coarse = drift_penalty(1.0, c, m, grid_only(4096));
  const BoundConstant fine = drift_penalty(1.0, c, m, grid_only(8192));
  EXPECT_LE(fine.value, coarse.value * (1.0 + 1e-12));
  EXPECT_NEAR(fine.value / coarse.value, 1.0, 1e-4);
  EXPECT_GT(fine.value, 0.0);
  EXPECT_LE(fine.value, 1.0);
}

TEST(DriftPenalty, NonlinearAgainstBruteForce) {
  // q(t) = (c(T) - c(t))^2 / (T - t) for d = 1, Sigma = 1
  const TrendFunction c = TrendFunction::power(vec({1.0}), vec({2.0}));
  const double T = 1.5;
  double best = 0.0;
  for (int j = 0; j < 200000; ++j) {
    const double t = T * j / 200000.0;
    best = std::max(best, std::pow(T * T - t * t, 2) / (T - t));
  }
  const BoundConstant k = drift_penalty(T, c, kId1);
  EXPECT_NEAR(-k.log_value / best, 1.0, 1e-6);
}

TEST(DriftPenalty, HolderViolationAndOverflow) {
  PenaltyOptions tight;
  tight.holder_cap = 0.1;
  EXPECT_THROW(drift_penalty(1.0, TrendFunction::linear(vec({1.0})), kId1, tight), HolderViolation);
  const BoundConstant big = drift_penalty(1.0, TrendFunction::linear(vec({30.0})), kId1);
  EXPECT_TRUE(big.vacuous);
  EXPECT_NEAR(big.log_value, -900.0, 1e-9);
}

TEST(RuinBoundConstant, TrendFreeHalfLine) {
  const BoundConstant k = ruin_bound_constant(1.0, RuinSet::half_line(1.0), TrendFunction::zero(1), kId1);
  EXPECT_NEAR(k.value, 2.0 * std::numbers::sqrt2, 1e-12);
  EXPECT_NEAR(k.components.at("prefactor"), std::numbers::sqrt2, 1e-15);
  EXPECT_NEAR(k.components.at("epsilon"), 0.5, 1e-12);
  EXPECT_NEAR(k.components.at("penalty"), 1.0, 0.0);
}

TEST(RuinBoundConstant, IndependentPair) {
  const BoundConstant k =
      ruin_bound_constant(1.0, make_k_of_d(2, 2, vec({1.0, 1.0})), TrendFunction::zero(2), kId2);
  EXPECT_NEAR(k.value, 8.0, 1e-9);
}

TEST(RuinBoundConstant, LinearScalar) {
  const BoundConstant k = ruin_bound_constant(1.0, RuinSet::half_line(1.0), TrendFunction::linear(vec({1.0})), kId1);
  EXPECT_NEAR(k.value, std::numbers::sqrt2 * std::numbers::e / 0.5, 1e-9);
  EXPECT_NEAR(k.value, 7.689, 1e-3);
}

TEST(RuinBoundConstant, NeverBelowPrefactor) {
  for (int d = 1; d <= 3; ++d) {
    for (double rho : {-0.3, 0.0, 0.6}) {
      for (int k = 1; k <= d; ++k) {
        const BoundConstant K = ruin_bound_constant(1.3, make_k_of_d(d, k, Vector::Ones(d)),
                                                    TrendFunction::linear(Vector::Constant(d, 0.4)),
                                                    equicorrelated_model(d, rho));
        EXPECT_GE(K.value, std::pow(2.0, 0.5 * d));
        EXPECT_GT(K.components.at("penalty"), 0.0);
        EXPECT_LE(K.components.at("penalty"), 1.0);
      }
    }
  }
}

TEST(RuinBoundConstant, GrowingMapUsesOrthantCone) {
  const CovarianceModel m = equicorrelated_model(2, 0.5);
  const TrendFunction c = TrendFunction::linear(vec({0.2, 0.1}));
  const BoundConstant g = growing_map_bound_constant(1.0, c, m);
  const BoundConstant k = ruin_bound_constant(1.0, make_k_of_d(2, 1, vec({1.0, 1.0})), c, m);
  EXPECT_DOUBLE_EQ(g.value, k.value);
}

TEST(ConvolutionBound, SingleAxisIsExact) {
  const RuinSet s = make_k_of_d(2, 1, vec({1.0, 2.0}));
  const TrendFunction c = TrendFunction::linear(vec({0.3, 0.1}));
  const CovarianceModel m = equicorrelated_model(2, -0.2);
  const BoundConstant one = convolution_bound_constant({1.7}, s, {c}, {m});
  const BoundConstant ref = ruin_bound_constant(1.7, s, c, m);
  EXPECT_EQ(one.value, ref.value);
  EXPECT_EQ(one.log_value, ref.log_value);
}

TEST(ConvolutionBound, ProductOfAxes) {
  const RuinSet s = RuinSet::half_line(1.0);
  const BoundConstant zero = convolution_bound_constant({1.0, 1.0}, s, {TrendFunction::zero(1), TrendFunction::zero(1)},
                                                        {kId1, kId1});
  EXPECT_NEAR(zero.value, 8.0, 1e-9);
  const TrendFunction unit = TrendFunction::linear(vec({1.0}));
  const BoundConstant lin = convolution_bound_constant({1.0, 1.0}, s, {unit, unit}, {kId1, kId1});
  EXPECT_NEAR(lin.value, std::pow(std::numbers::sqrt2 * std::numbers::e / 0.5, 2), 1e-8);
  EXPECT_NEAR(lin.value, 59.12, 0.01);
}

TEST(DeltaCovariance, MinStructure) {
  Matrix sigma(2, 2);
  sigma << 2.0, 0.6, 0.6, 1.0;
  const Matrix s = delta_covariance(sigma, vec({1.0, 1.5}));
  EXPECT_DOUBLE_EQ(s(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(s(1, 1), 1.5);
  EXPECT_DOUBLE_EQ(s(0, 1), 0.6);
}

TEST(ClockPenalty, IdentityClocksZeroTrend) {
  const BoundConstant c = clock_drift_penalty(1.0, TrendFunction::zero(2), TimeTransform::linear(Vector::Ones(2)),
                                              equicorrelated_model(2, 0.4));
  EXPECT_EQ(c.value, 1.0);
}

TEST(ClockPenalty, ScalarPowerClock) {
  // delta = 1; q(t) = (c(T) - c(t))^2 / (T^{2H} - t^{2H})
  const double H = 0.7, T = 1.0;
  const TrendFunction c = TrendFunction::linear(vec({0.8}));
  const BoundConstant k = clock_drift_penalty(T, c, TimeTransform::power(vec({2 * H})), kId1);
  double best = 0.0;
  for (int j = 0; j < 400000; ++j) {
    const double t = T * j / 400000.0;
    best = std::max(best, std::pow(0.8 * (T - t), 2) / (std::pow(T, 2 * H) - std::pow(t, 2 * H)));
  }
  EXPECT_NEAR(-k.log_value / best, 1.0, 1e-6);
}

TEST(ClockPenalty, TwoClocksZeroTrend) {
  const BoundConstant c =
      clock_drift_penalty(1.0, TrendFunction::zero(2), TimeTransform::power(vec({1.2, 1.8})), kId2);
  EXPECT_EQ(c.value, 1.0);
}

TEST(ClockBound, IdentityClocksMatchSingleAxis) {
  const CovarianceModel m = equicorrelated_model(2, 0.5);
  const RuinSet s = make_k_of_d(2, 2, vec({1.0, 1.0}));
  const BoundConstant k = clock_bound_constant(1.0, s, TrendFunction::zero(2), TimeTransform::linear(Vector::Ones(2)), m);
  const BoundConstant ref = ruin_bound_constant(1.0, s, TrendFunction::zero(2), m);
  EXPECT_NEAR(k.value, ref.value, 1e-9 * ref.value);
  EXPECT_NEAR(k.value, 2.0 / (1.0 / 3.0), 1e-4);
}

TEST(ClockBound, SquareClockScalar) {
  const BoundConstant k = clock_bound_constant(1.0, RuinSet::half_line(1.0), TrendFunction::zero(1),
                                               TimeTransform::power(vec({2.0})), kId1);
  EXPECT_NEAR(k.value, 2.0 * std::numbers::sqrt2, 1e-12);
  EXPECT_NEAR(k.components.at("delta_min"), 1.0, 1e-12);
  EXPECT_NEAR(k.components.at("delta_max"), 1.0, 1e-12);
}

TEST(ClockBound, TwoPowerClocksRegression) {
  const BoundConstant k = clock_bound_constant(1.0, make_k_of_d(2, 2, vec({1.0, 1.0})), TrendFunction::zero(2),
                                               TimeTransform::power(vec({1.2, 1.8})), kId2);
  EXPECT_TRUE(std::isfinite(k.value));
  EXPECT_GE(k.value, 2.0);
  // delta_2 = (1 - t^1.8) / (1 - t^1.2) increases from 1 at t = 0 towards 1.5 at T
  EXPECT_DOUBLE_EQ(k.components.at("delta_min"), 1.0);
  EXPECT_LT(k.components.at("delta_max"), 1.5);
  EXPECT_NEAR(k.components.at("delta_max"), 1.5, 1e-3);
  EXPECT_NEAR(k.value, 11.99912, 1e-5);
}

TEST(ClockBound, DeltaLimit) {
  const TimeTransform f = TimeTransform::power(vec({1.2, 1.8}));
  const Vector limit = f.delta_limit(TimeGrid::uniform(1.0, 4096));
  EXPECT_DOUBLE_EQ(limit[0], 1.0);
  EXPECT_NEAR(limit[1], 1.5, 0.015);
}
