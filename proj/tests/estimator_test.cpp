#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "npc/estimator.hpp"
#include "npc/plant.hpp"

namespace npc {
namespace {

constexpr double T = 0.008;

struct Sample {
  double x2prev, u, x2;
};

// Noise-free regression data from constant parameters with a multi-sine input.
std::vector<Sample> exciting_samples(const PlantParams& p, int n) {
  std::vector<Sample> out;
  double x2 = 0.0;
  for (int k = 0; k < n; ++k) {
    const double t = k * T;
    const double u = std::sin(2 * std::numbers::pi * 0.7 * t) + 0.5 * std::sin(2 * std::numbers::pi * 3.1 * t + 1.0) +
                     0.3 * std::cos(2 * std::numbers::pi * 11.0 * t);
    const double next = p.theta1 * x2 + p.theta2 * u + p.theta3;
    out.push_back({x2, u, next});
    x2 = next;
  }
  return out;
}

Eigen::Vector3d batch_least_squares(const std::vector<Sample>& s) {
  Eigen::MatrixXd Phi(s.size(), 3);
  Eigen::VectorXd y(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    Phi.row(i) << s[i].x2prev, s[i].u, 1.0;
    y(i) = s[i].x2;
  }
  return Phi.colPivHouseholderQr().solve(y);
}

TEST(Rls, ZeroInnovationLeavesThetaUnchanged) {
  const EstimatorState e = EstimatorState::initial(T);
  const PlantParams th = e.theta;
  const EstimatorState n = estimator_update(e, 0.7, -1.3, th.theta1 * 0.7 + th.theta2 * -1.3 + th.theta3);
  EXPECT_NEAR(n.theta.theta1, th.theta1, 1e-15);
  EXPECT_NEAR(n.theta.theta2, th.theta2, 1e-15);
  EXPECT_NEAR(n.theta.theta3, th.theta3, 1e-15);
}

TEST(Rls, MatchesBatchLeastSquares) {
  const PlantParams truth{0.995, 0.0082, 0.0005};
  const auto samples = exciting_samples(truth, 500);
  EstimatorState e = EstimatorState::initial(T);
  for (const auto& s : samples) e = estimator_update(e, s.x2prev, s.u, s.x2);
  const Eigen::Vector3d oracle = batch_least_squares(samples);
  EXPECT_NEAR(e.theta.theta1, oracle(0), 1e-6);
  EXPECT_NEAR(e.theta.theta2, oracle(1), 1e-6);
  EXPECT_NEAR(e.theta.theta3, oracle(2), 1e-6);
  EXPECT_NEAR(oracle(0), truth.theta1, 1e-9);
}

TEST(Rls, UnitForgettingContractsTrace) {
  const PlantParams truth{0.99, 0.0085, -0.0003};
  EstimatorState e = EstimatorState::initial(T, 1.0);
  double trace = e.P.trace();
  for (const auto& s : exciting_samples(truth, 2000)) {
    e = estimator_update(e, s.x2prev, s.u, s.x2);
    ASSERT_LE(e.P.trace(), trace * (1.0 + 1e-12));
    trace = e.P.trace();
  }
  EXPECT_NEAR(e.theta.theta1, truth.theta1, 1e-6);
  EXPECT_NEAR(e.theta.theta2, truth.theta2, 1e-7);
  EXPECT_NEAR(e.theta.theta3, truth.theta3, 1e-7);
}

TEST(Rls, CovarianceStaysPositiveDefinite) {
  SeededRng rng = derive_stream(8, "rls-spd");
  EstimatorState e = EstimatorState::initial(T);
  for (int i = 0; i < 100000; ++i) {
    const double x2 = rng.normal();
    const double u = rng.normal(0.0, 3.0);
    e = estimator_update(e, x2, u, 0.999 * x2 + T * u + rng.normal(0.0, 1e-3));
    if (i % 1000 == 0) {
      ASSERT_TRUE(e.covariance_positive_definite()) << i;
      ASSERT_LT((e.P - e.P.transpose()).norm(), 1e-12 * e.P.norm());
    }
  }
  EXPECT_TRUE(e.covariance_positive_definite());
}

TEST(Rls, NonFiniteSampleSkipped) {
  const EstimatorState e = EstimatorState::initial(T);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& n : {estimator_update(e, nan, 1.0, 1.0), estimator_update(e, 1.0, INFINITY, 1.0),
                        estimator_update(e, 1.0, 1.0, nan)}) {
    EXPECT_EQ(n.theta, e.theta);
    EXPECT_EQ(n.P, e.P);
  }
}

TEST(Trend, ConvergesOnConstantParameters) {
  const PlantParams truth{0.997, 0.0088, 0.0004};
  const TrendEstimatorConfig cfg;
  TrendEstimatorState s = TrendEstimatorState::initial(T, cfg);
  const auto samples = exciting_samples(truth, 5000);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    s = trend_update(s, static_cast<std::int64_t>(k), samples[k].x2prev, samples[k].u, samples[k].x2, T, cfg);
  }
  EXPECT_NEAR(s.theta().theta1, truth.theta1, 1e-4);
  EXPECT_NEAR(s.theta().theta2, truth.theta2, 1e-5);
  EXPECT_NEAR(s.theta().theta3, truth.theta3, 1e-5);
  EXPECT_TRUE(s.covariance_positive_definite());
}

TEST(Trend, TracksDriftingParametersWithNoise) {
  PlantConfig pc;
  const TrendEstimatorConfig cfg;
  SeededRng rng = derive_stream(4, "trend-drift");
  TrendEstimatorState s = TrendEstimatorState::initial(T, cfg);
  const PlantParams amp = drift_amplitudes(pc);
  double x2 = 0.0, se[3] = {0, 0, 0};
  int n = 0;
  for (std::int64_t k = 0; k < 7500; ++k) {
    const double t = k * T;
    const PlantParams p = true_params(t, pc);
    const double u = 3.0 * std::sin(2 * std::numbers::pi * 0.4 * t) + rng.normal(0.0, 0.5);
    const double next = p.theta1 * x2 + p.theta2 * u + p.theta3;
    s = trend_update(s, k, x2 + rng.normal(0.0, 1e-3), u, next + rng.normal(0.0, 1e-3), T, cfg);
    x2 = next;
    if (t >= 5.0) {
      const PlantParams e = s.theta();
      se[0] += std::pow(e.theta1 - p.theta1, 2);
      se[1] += std::pow(e.theta2 - p.theta2, 2);
      se[2] += std::pow(e.theta3 - p.theta3, 2);
      ++n;
    }
  }
  EXPECT_LT(std::sqrt(se[1] / n), 0.5 * amp.theta2);
  EXPECT_LT(std::sqrt(se[2] / n), 0.5 * amp.theta3);
  EXPECT_TRUE(s.covariance_positive_definite());
}

TEST(Trend, SkippedTicksArePredicted) {
  const TrendEstimatorConfig cfg;
  TrendEstimatorState s = TrendEstimatorState::initial(T, cfg);
  s.x(5) = 1e-3;  // theta3 slope
  const double before = s.x(2);
  s = trend_update(s, 100, std::nan(""), 0.0, 0.0, T, cfg);
  EXPECT_EQ(s.tick, 100);
  EXPECT_NEAR(s.x(2), before + 100 * T * 1e-3, 1e-15);
  // A stale sample does not move the clock backwards.
  s = trend_update(s, 50, std::nan(""), 0.0, 0.0, T, cfg);
  EXPECT_EQ(s.tick, 100);
}

TEST(Trend, CovarianceStaysPositiveDefinite) {
  const TrendEstimatorConfig cfg;
  SeededRng rng = derive_stream(10, "trend-spd");
  TrendEstimatorState s = TrendEstimatorState::initial(T, cfg);
  for (std::int64_t k = 0; k < 100000; ++k) {
    const double x2 = rng.normal();
    const double u = rng.normal(0.0, 3.0);
    s = trend_update(s, k, x2, u, 0.999 * x2 + T * u + rng.normal(0.0, 1e-3), T, cfg);
    if (k % 1000 == 0) {
      ASSERT_TRUE(s.covariance_positive_definite()) << k;
    }
  }
}

TEST(Trend, ConfigValidation) {
  TrendEstimatorConfig c;
  EXPECT_NO_THROW(c.validate());
  c.measurementVar = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace npc
