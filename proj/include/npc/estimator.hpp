#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "npc/domain.hpp"

namespace npc {

/// Exponentially weighted recursive least squares on the velocity update
/// x2_now = theta1 * x2_prev + theta2 * u_prev + theta3.
struct EstimatorState {
  PlantParams theta{};
  Eigen::Matrix3d P = Eigen::Matrix3d::Identity() * 1e3;
  double lambda = 0.995;

  static EstimatorState initial(double period, double lambda = 0.995, double p0 = 1e3) {
    if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("estimator: lambda must lie in (0, 1]");
    if (!(p0 > 0.0)) throw ConfigError("estimator: initial covariance must be positive");
    return {PlantParams::nominal(period), Eigen::Matrix3d::Identity() * p0, lambda};
  }

  bool covariance_positive_definite() const {
    Eigen::LLT<Eigen::Matrix3d> llt(P);
    return llt.info() == Eigen::Success;
  }
};

inline Eigen::Vector3d to_vector(const PlantParams& p) { return {p.theta1, p.theta2, p.theta3}; }
inline PlantParams to_params(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }

/// One RLS step. Non-finite samples leave the state unchanged.
inline EstimatorState estimator_update(const EstimatorState& est, double x2_prev, double u_prev,
                                       double x2_now) {
  if (!std::isfinite(x2_prev) || !std::isfinite(u_prev) || !std::isfinite(x2_now)) return est;

  const Eigen::Vector3d phi(x2_prev, u_prev, 1.0);
  const Eigen::Vector3d theta = to_vector(est.theta);
  const Eigen::Vector3d Pphi = est.P * phi;
  const double denom = est.lambda + phi.dot(Pphi);
  const Eigen::Vector3d g = Pphi / denom;

  EstimatorState next = est;
  next.theta = to_params(theta + g * (x2_now - phi.dot(theta))).clamped();
  Eigen::Matrix3d P = (est.P - g * Pphi.transpose()) / est.lambda;
  next.P = (P + P.transpose()) / 2.0;
  return next;
}

}  // namespace npc

namespace npc {

/// Settings for the drift-tracking estimator. Each parameter is modelled as
/// an integrated random walk whose acceleration spectral density is set from
/// an expected excursion `scale` at frequency `bandwidth`.
struct TrendEstimatorConfig {
  Eigen::Vector3d scale{1e-3, 2e-3, 1e-3};
  double bandwidth = 0.05;        // Hz
  double measurementVar = 2e-6;   // residual variance of the velocity update
  double p0 = 1e3;                // initial variance of the parameter block

  void validate() const {
    if (!(scale.array() > 0.0).all() || !scale.allFinite())
      throw ConfigError("trend estimator: scales must be positive");
    if (!(bandwidth > 0.0)) throw ConfigError("trend estimator: bandwidth must be positive");
    if (!(measurementVar > 0.0)) throw ConfigError("trend estimator: measurement variance must be positive");
    if (!(p0 > 0.0)) throw ConfigError("trend estimator: initial variance must be positive");
  }
};

/// Kalman filter over (theta, d theta/dt). `tick` is the sample tick the
/// estimate refers to.
struct TrendEstimatorState {
  using Vector6d = Eigen::Matrix<double, 6, 1>;
  using Matrix6d = Eigen::Matrix<double, 6, 6>;

  Vector6d x = Vector6d::Zero();
  Matrix6d P = Matrix6d::Identity();
  std::int64_t tick = 0;

  static TrendEstimatorState initial(double period, const TrendEstimatorConfig& cfg) {
    cfg.validate();
    TrendEstimatorState s;
    s.x.head<3>() = to_vector(PlantParams::nominal(period));
    const double w = 2.0 * M_PI * cfg.bandwidth;
    s.P.setZero();
    for (int i = 0; i < 3; ++i) {
      s.P(i, i) = cfg.p0;
      s.P(i + 3, i + 3) = std::pow(cfg.scale(i) * w, 2);
    }
    return s;
  }

  PlantParams theta() const { return to_params(x.head<3>()); }
  Eigen::Vector3d rate() const { return x.tail<3>(); }

  bool covariance_positive_definite() const {
    Eigen::LLT<Matrix6d> llt(P);
    return llt.info() == Eigen::Success;
  }
};

/// Propagates the estimate by dt seconds.
inline TrendEstimatorState trend_predict(TrendEstimatorState s, double dt,
                                         const TrendEstimatorConfig& cfg) {
  if (dt <= 0.0) return s;
  using M = TrendEstimatorState::Matrix6d;
  M F = M::Identity();
  M Q = M::Zero();
  const double w = 2.0 * M_PI * cfg.bandwidth;
  for (int i = 0; i < 3; ++i) {
    F(i, i + 3) = dt;
    const double q = std::pow(cfg.scale(i) * w * w, 2) * dt;
    Q(i, i) = q * dt * dt / 3.0;
    Q(i, i + 3) = Q(i + 3, i) = q * dt / 2.0;
    Q(i + 3, i + 3) = q;
  }
  s.x = F * s.x;
  s.P = F * s.P * F.transpose() + Q;
  return s;
}

/// Measurement update with the regression pair observed at `sampleTick`
/// (x2 and u at that tick, x2 one tick later). Non-finite samples only
/// propagate the estimate.
inline TrendEstimatorState trend_update(TrendEstimatorState s, std::int64_t sampleTick,
                                        double x2_prev, double u_prev, double x2_now,
                                        double period, const TrendEstimatorConfig& cfg) {
  s = trend_predict(std::move(s), static_cast<double>(sampleTick - s.tick) * period, cfg);
  s.tick = std::max(s.tick, sampleTick);
  if (!std::isfinite(x2_prev) || !std::isfinite(u_prev) || !std::isfinite(x2_now)) return s;

  TrendEstimatorState::Vector6d h = TrendEstimatorState::Vector6d::Zero();
  h(0) = x2_prev;
  h(1) = u_prev;
  h(2) = 1.0;
  const TrendEstimatorState::Vector6d Ph = s.P * h;
  const TrendEstimatorState::Vector6d g = Ph / (cfg.measurementVar + h.dot(Ph));
  s.x += g * (x2_now - h.dot(s.x));
  const PlantParams c = to_params(s.x.head<3>()).clamped();
  s.x.head<3>() = to_vector(c);
  s.P -= g * Ph.transpose();
  s.P = (s.P + s.P.transpose()) / 2.0;
  return s;
}

}  // namespace npc
