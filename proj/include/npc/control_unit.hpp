#pragma once

// Controller side of the loop: control buffer, state predictor, RTT
// tracking, and the build step that turns a state packet into a window of
// future control values.

#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "npc/compensator.hpp"
#include "npc/domain.hpp"
#include "npc/estimator.hpp"
#include "npc/lqr.hpp"
#include "npc/plant.hpp"

namespace npc {

/// Control values the controller believes the plant applies at each tick.
/// Contiguous: writing past the end fills the gap with the last value.
class ControlBuffer {
 public:
  bool empty() const { return values_.empty(); }
  Tick first() const { return first_; }
  Tick end() const { return first_ + static_cast<std::int64_t>(values_.size()); }
  bool contains(Tick t) const { return !empty() && t >= first_ && t < end(); }

  /// Ticks before the span were never commanded (the plant applied 0);
  /// ticks past it hold the last value.
  ControlValue value(Tick t) const {
    if (empty() || t < first_) return 0.0;
    if (t >= end()) return values_.back();
    return values_[static_cast<std::size_t>(t - first_)];
  }

  void set(Tick t, ControlValue u) {
    if (empty()) {
      first_ = t;
      values_.push_back(u);
      return;
    }
    if (t < first_) {
      values_.insert(values_.begin(), static_cast<std::size_t>(first_ - t), 0.0);
      first_ = t;
    }
    while (t >= end()) values_.push_back(values_.back());
    values_[static_cast<std::size_t>(t - first_)] = u;
  }

  /// Drops ticks before `t`.
  void prune_before(Tick t) {
    while (!values_.empty() && first_ < t) {
      values_.pop_front();
      first_ = first_ + 1;
    }
  }

  std::size_t size() const { return values_.size(); }

 private:
  Tick first_{};
  std::deque<ControlValue> values_;
};

/// Thrown by predict when the buffer does not cover a required tick.
struct BufferGap : std::runtime_error {
  explicit BufferGap(Tick t)
      : std::runtime_error("control buffer has no value for tick " + std::to_string(t.k)),
        tick(t) {}
  Tick tick;
};

namespace detail {
inline void require_covered(const ControlBuffer& buffer, Tick from, Tick to) {
  if (to <= from) return;
  if (!buffer.contains(from)) throw BufferGap(from);
  if (!buffer.contains(to - 1)) throw BufferGap(buffer.end());
}
}  // namespace detail

/// Step-by-step model integration from `from` to `to` over buffered controls.
inline PlantState predict(const PlantState& initial, Tick from, Tick to,
                          const ControlBuffer& buffer, const PlantParams& theta, double T) {
  if (to < from) throw std::invalid_argument("predict: toTick precedes fromTick");
  detail::require_covered(buffer, from, to);
  PlantState x = initial;
  for (Tick t = from; t < to; t = t + 1) x = plant_step(x, buffer.value(t), theta, T);
  return x;
}

/// Same propagation with hold-last semantics for ticks outside the buffer.
inline PlantState predict_hold_last(const PlantState& initial, Tick from, Tick to,
                                    const ControlBuffer& buffer, const PlantParams& theta,
                                    double T) {
  PlantState x = initial;
  for (Tick t = from; t < to; t = t + 1) x = plant_step(x, buffer.value(t), theta, T);
  return x;
}

/// Closed-form propagation z(n) = M^n z0 + sum_j M^(n-1-j) b u_j on the
/// augmented state z = [x1, x2, 1].
inline PlantState predict_matrix(const PlantState& initial, Tick from, Tick to,
                                 const ControlBuffer& buffer, const PlantParams& theta,
                                 double T, bool holdLast = false) {
  if (to < from) throw std::invalid_argument("predict: toTick precedes fromTick");
  if (!holdLast) detail::require_covered(buffer, from, to);
  const auto n = static_cast<std::size_t>(to - from);
  Eigen::Matrix3d M;
  M << 1.0, T * (1.0 + theta.theta1) / 2.0, T * theta.theta3 / 2.0,  //
      0.0, theta.theta1, theta.theta3,                                //
      0.0, 0.0, 1.0;
  const Eigen::Vector3d b(T * theta.theta2 / 2.0, theta.theta2, 0.0);

  std::vector<Eigen::Matrix3d> powers(n + 1);
  powers[0].setIdentity();
  for (std::size_t i = 1; i <= n; ++i) powers[i] = M * powers[i - 1];

  Eigen::Vector3d z = powers[n] * Eigen::Vector3d(initial.x1, initial.x2, 1.0);
  for (std::size_t j = 0; j < n; ++j) {
    z += powers[n - 1 - j] * b * buffer.value(from + static_cast<std::int64_t>(j));
  }
  return {z(0), z(1)};
}

/// Sinusoidal position reference with its velocity.
struct Reference {
  double amplitude = 1.0;
  double frequency = 0.4;

  PlantState at(double t) const {
    const double w = 2.0 * std::numbers::pi * frequency;
    return {amplitude * std::sin(w * t), amplitude * w * std::cos(w * t)};
  }
};

struct RttEstimate {
  double srtt = 0.0;
  double latest = 0.0;
  std::uint64_t samples = 0;

  bool valid() const { return samples > 0; }
};

/// Controller clock (s) at which each control packet left.
using SendLog = std::map<std::uint32_t, double>;

/// Folds one echo into the smoothed RTT. Unknown sequence numbers are ignored.
inline RttEstimate rtt_update(const RttEstimate& rtt, std::uint32_t echoSeq, double echoHoldTime,
                              const SendLog& sendLog, double now) {
  const auto it = sendLog.find(echoSeq);
  if (it == sendLog.end()) return rtt;
  const double sample = std::max(0.0, now - it->second - echoHoldTime);
  RttEstimate next = rtt;
  next.latest = sample;
  next.srtt = rtt.valid() ? 0.875 * rtt.srtt + 0.125 * sample : sample;
  ++next.samples;
  return next;
}

enum class EstimatorModel { Rls, Trend };

inline EstimatorModel parse_estimator_model(const std::string& s) {
  if (s == "rls") return EstimatorModel::Rls;
  if (s == "trend") return EstimatorModel::Trend;
  throw ConfigError("estimator: unknown model '" + s + "' (rls, trend)");
}

inline const char* to_string(EstimatorModel m) { return m == EstimatorModel::Rls ? "rls" : "trend"; }

struct ControlUnitConfig {
  double T = kDefaultSamplePeriod;
  int horizon = 100;
  int delayMargin = 16;
  int preWindow = -1;  // < 0: delayMargin / 4
  int reuseGuard = 2;
  bool useIntegrator = true;
  bool useOldControl = true;
  bool useEstimator = true;
  bool usePredictor = true;
  double nominalRtt = 0.25;  // used until the first echo arrives
  double lambda = 0.995;
  double p0 = 1e3;
  EstimatorModel estimatorModel = EstimatorModel::Trend;
  TrendEstimatorConfig trend{};
  LqrWeights weights{};
  Reference reference{};

  int effective_pre_window() const { return preWindow >= 0 ? preWindow : delayMargin / 4; }

  void validate() const {
    if (!(T > 0.0)) throw ConfigError("control: T must be positive");
    if (delayMargin < 1) throw ConfigError("control: delayMargin must be at least 1");
    if (horizon < delayMargin) throw ConfigError("control: horizon must be >= delayMargin");
    if (effective_pre_window() >= delayMargin) {
      throw ConfigError("control: preWindow must be smaller than delayMargin");
    }
    if (reuseGuard < 0) throw ConfigError("control: reuseGuard must be non-negative");
    if (nominalRtt < 0.0) throw ConfigError("control: nominalRtt must be non-negative");
    if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("control: lambda must lie in (0, 1]");
    if (!(p0 > 0.0)) throw ConfigError("control: p0 must be positive");
    trend.validate();
    weights.validate();
  }
};

struct BuildResult {
  ControlSequence sequence;
  ControlBuffer buffer;
  Tick now{};
  Tick predictedArrival{};
  PlantState predictedNow{};
};

/// Predicts from the measured state to "now", rolls the model forward over the
/// horizon writing control values into the buffer, and cuts the window of
/// delayMargin values around the predicted arrival tick.
inline BuildResult build_control(const StatePacket& pkt, const PlantParams& theta,
                                 ControlBuffer buffer, const RttEstimate& rtt,
                                 const GainVector& K, const ControlUnitConfig& cfg) {
  const double T = cfg.T;
  const double rttSec = rtt.valid() ? rtt.srtt : cfg.nominalRtt;
  const Tick s = pkt.sampleTick;
  const PlantState measured{pkt.y1, pkt.y2};

  BuildResult out;
  if (cfg.usePredictor) {
    out.now = s + std::llround(rttSec / (2.0 * T));
    // First tick actuated after the packet lands.
    out.predictedArrival = s + static_cast<std::int64_t>(std::ceil(rttSec / T - 1e-6));
  } else {
    out.now = s;
    out.predictedArrival = s;
  }
  const Tick windowStart = out.predictedArrival - cfg.effective_pre_window();
  const Tick windowEnd = windowStart + cfg.delayMargin;

  PlantState x;
  try {
    x = cfg.useIntegrator ? predict(measured, s, out.now, buffer, theta, T)
                          : predict_matrix(measured, s, out.now, buffer, theta, T);
  } catch (const BufferGap&) {
    x = cfg.useIntegrator ? predict_hold_last(measured, s, out.now, buffer, theta, T)
                          : predict_matrix(measured, s, out.now, buffer, theta, T, true);
  }
  out.predictedNow = x;

  const Tick commitBoundary = out.predictedArrival + cfg.reuseGuard;
  const Tick rollEnd = std::max(out.now + cfg.horizon, windowEnd);
  for (Tick t = out.now; t < rollEnd; t = t + 1) {
    ControlValue u;
    if (cfg.useOldControl && t < commitBoundary) {
      u = buffer.value(t);  // governed by packets already in flight
    } else {
      u = control_law(x, cfg.reference.at(t.time(T)), K);
    }
    buffer.set(t, u);
    x = plant_step(x, u, theta, T);
  }

  out.sequence.startTick = windowStart;
  out.sequence.values.reserve(static_cast<std::size_t>(cfg.delayMargin));
  for (Tick t = windowStart; t < windowEnd; t = t + 1) out.sequence.values.push_back(buffer.value(t));

  buffer.prune_before(std::min(s, windowStart));
  out.buffer = std::move(buffer);
  return out;
}

/// Sequential controller state machine: one state packet in, at most one
/// control packet out.
class ControlUnit {
 public:
  explicit ControlUnit(ControlUnitConfig cfg)
      : cfg_(std::move(cfg)),
        K_(lqr_gain(cfg_.weights)),
        est_(EstimatorState::initial(cfg_.T, cfg_.lambda, cfg_.p0)),
        trend_(TrendEstimatorState::initial(cfg_.T, cfg_.trend)) {
    cfg_.validate();
  }

  /// `now` is the controller's local clock in seconds.
  std::optional<ControlPacket> on_state_packet(const StatePacket& pkt, double now) {
    if (lastState_ && pkt.seq <= lastState_->seq) {
      ++staleStates_;
      return std::nullopt;
    }
    lastRttSample_.reset();
    if (pkt.echoSeq != 0) {
      const auto before = rtt_.samples;
      rtt_ = rtt_update(rtt_, pkt.echoSeq, pkt.echoHoldTime, sendLog_, now);
      if (rtt_.samples != before) lastRttSample_ = rtt_.latest;
    }
    // The echo names the packet behind the plant's previous actuation, so the
    // value applied at sampleTick - 1 is known exactly whenever that packet
    // is still in the send log.
    const Tick prev = pkt.sampleTick - 1;
    ControlValue appliedPrev = buffer_.value(prev);
    if (pkt.echoSeq == 0) {
      appliedPrev = 0.0;
    } else if (const auto it = sent_.find(pkt.echoSeq); it != sent_.end()) {
      appliedPrev = select_from(it->second, prev, cfg_.T).u;
    }
    if (buffer_.contains(prev)) buffer_.set(prev, appliedPrev);

    if (cfg_.useEstimator && lastState_ && lastState_->sampleTick == prev) {
      if (cfg_.estimatorModel == EstimatorModel::Rls) {
        est_ = estimator_update(est_, lastState_->y2, appliedPrev, pkt.y2);
      } else {
        trend_ = trend_update(std::move(trend_), prev.k, lastState_->y2, appliedPrev, pkt.y2,
                              cfg_.T, cfg_.trend);
      }
    }
    const PlantParams theta = cfg_.useEstimator ? theta_estimate() : PlantParams::nominal(cfg_.T);

    BuildResult built = build_control(pkt, theta, std::move(buffer_), rtt_, K_, cfg_);
    buffer_ = std::move(built.buffer);
    lastState_ = pkt;

    ControlPacket out;
    out.seq = nextSeq_++;
    out.basedOnStateSeq = pkt.seq;
    out.sequence = std::move(built.sequence);
    out.sendTick = Tick{std::llround(now / cfg_.T)};
    sendLog_[out.seq] = now;
    sent_[out.seq] = out.sequence;
    while (sendLog_.size() > kSendLogCapacity) sendLog_.erase(sendLog_.begin());
    while (sent_.size() > kSendLogCapacity) sent_.erase(sent_.begin());
    return out;
  }

  const ControlUnitConfig& config() const { return cfg_; }
  const GainVector& gain() const { return K_; }
  const EstimatorState& estimator() const { return est_; }
  const TrendEstimatorState& trend_estimator() const { return trend_; }
  /// Current parameter estimate of the configured model.
  PlantParams theta_estimate() const {
    return cfg_.estimatorModel == EstimatorModel::Rls ? est_.theta : trend_.theta();
  }
  const RttEstimate& rtt() const { return rtt_; }
  const ControlBuffer& buffer() const { return buffer_; }
  std::optional<double> last_rtt_sample() const { return lastRttSample_; }
  std::uint64_t stale_states() const { return staleStates_; }

 private:
  static constexpr std::size_t kSendLogCapacity = 4096;

  ControlUnitConfig cfg_;
  GainVector K_;
  EstimatorState est_;
  TrendEstimatorState trend_;
  ControlBuffer buffer_;
  RttEstimate rtt_;
  SendLog sendLog_;
  std::map<std::uint32_t, ControlSequence> sent_;
  std::optional<StatePacket> lastState_;
  std::optional<double> lastRttSample_;
  std::uint32_t nextSeq_ = 1;
  std::uint64_t staleStates_ = 0;
};

}  // namespace npc
