#pragma once

#include <cmath>
#include <numbers>
#include <utility>

#include "npc/domain.hpp"

namespace npc {

struct PlantConfig {
  double T = kDefaultSamplePeriod;
  double noiseSigmaPos = 1e-3;
  double noiseSigmaVel = 1e-3;
  double driftAmplitude = 0.2;
  double driftFreq = 0.05;
  PlantState initial{};

  void validate() const {
    if (!(T > 0.0)) throw ConfigError("plant.T must be positive");
    if (noiseSigmaPos < 0.0 || noiseSigmaVel < 0.0) {
      throw ConfigError("plant noise sigmas must be non-negative");
    }
    if (driftAmplitude < 0.0 || driftAmplitude >= 1.0) {
      throw ConfigError("plant.driftAmplitude must lie in [0, 1)");
    }
    if (driftFreq < 0.0) throw ConfigError("plant.driftFreq must be non-negative");
  }
};

/// One sample of x2' = theta1*x2 + theta2*u + theta3 with a trapezoidal
/// position update. Nominal params reproduce the exact ZOH double integrator.
inline PlantState plant_step(const PlantState& s, ControlValue u, const PlantParams& p,
                             double T) {
  const double v = p.theta1 * s.x2 + p.theta2 * u + p.theta3;
  return {s.x1 + T * (s.x2 + v) / 2.0, v};
}

/// Ground-truth parameter schedule: slow sinusoidal drift around nominal.
inline PlantParams true_params(double t, const PlantConfig& cfg) {
  const double a = cfg.driftAmplitude;
  const double w = 2.0 * std::numbers::pi * cfg.driftFreq * t;
  const double s = std::sin(w);
  return {1.0 - a * 0.01 * (1.0 + s) / 2.0, cfg.T * (1.0 + a * s),
          a * cfg.T * 0.5 * std::sin(w + std::numbers::pi / 3.0)};
}

/// Per-parameter drift amplitude (half peak-to-peak) of true_params.
inline PlantParams drift_amplitudes(const PlantConfig& cfg) {
  const double a = cfg.driftAmplitude;
  return {a * 0.01 / 2.0, a * cfg.T, a * cfg.T * 0.5};
}

/// Noisy measurement of the full state. Consumes exactly two normal draws.
inline std::pair<double, double> measure(const PlantState& s, SeededRng& rng,
                                         const PlantConfig& cfg) {
  const double n1 = rng.normal();
  const double n2 = rng.normal();
  return {s.x1 + cfg.noiseSigmaPos * n1, s.x2 + cfg.noiseSigmaVel * n2};
}

}  // namespace npc
