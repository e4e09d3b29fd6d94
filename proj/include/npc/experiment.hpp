#pragma once

// Experiment configuration, its key = value text form, and the trajectory log
// shared by the offline and real-time runners.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "npc/channel.hpp"
#include "npc/control_unit.hpp"
#include "npc/plant.hpp"

namespace npc {

struct ExperimentConfig {
  double duration = 60.0;
  double warmupSkip = 5.0;
  std::uint64_t masterSeed = 1;

  PlantConfig plant{};
  LqrWeights weights{};
  Reference reference{};

  int horizon = 100;
  int delayMargin = 16;
  int preWindow = -1;
  int reuseGuard = 2;
  bool useIntegrator = true;
  bool useOldControl = true;
  bool useEstimator = true;
  bool usePredictor = true;
  double nominalRtt = -1.0;  // < 0: sum of the channel base delays
  double lambda = 0.995;
  double p0 = 1e3;
  EstimatorModel estimatorModel = EstimatorModel::Trend;
  TrendEstimatorConfig trend{};

  ChannelConfig forward{};
  ChannelConfig feedback{};

  double T() const { return plant.T; }
  std::int64_t ticks() const { return std::llround(duration / plant.T); }
  std::int64_t warmup_ticks() const { return std::llround(warmupSkip / plant.T); }

  void validate() const {
    if (!(duration > warmupSkip)) throw ConfigError("duration must exceed warmupSkip");
    if (warmupSkip < 0.0) throw ConfigError("warmupSkip must be non-negative");
    if (ticks() >= std::numeric_limits<std::uint32_t>::max() - 1) {
      throw ConfigError("duration too long for 32-bit sequence numbers");
    }
    plant.validate();
    forward.validate();
    feedback.validate();
    control_unit().validate();
  }

  ControlUnitConfig control_unit() const {
    ControlUnitConfig c;
    c.T = plant.T;
    c.horizon = horizon;
    c.delayMargin = delayMargin;
    c.preWindow = preWindow;
    c.reuseGuard = reuseGuard;
    c.useIntegrator = useIntegrator;
    c.useOldControl = useOldControl;
    c.useEstimator = useEstimator;
    c.usePredictor = usePredictor;
    c.nominalRtt = nominalRtt >= 0.0 ? nominalRtt : forward.delay.a0 + feedback.delay.a0;
    c.lambda = lambda;
    c.p0 = p0;
    c.estimatorModel = estimatorModel;
    c.trend = trend;
    c.weights = weights;
    c.reference = reference;
    return c;
  }

  /// Channels with phase seeds bound to the master seed.
  ChannelConfig forward_channel() const {
    ChannelConfig c = forward;
    c.delay.seed = masterSeed;
    return c;
  }
  ChannelConfig feedback_channel() const {
    ChannelConfig c = feedback;
    c.delay.seed = masterSeed;
    return c;
  }

  void set_both_channels(const std::function<void(ChannelConfig&)>& f) {
    f(forward);
    f(feedback);
  }
};

/// Settings for the paper's offline experiments: 125 ms base delay per leg
/// (250 ms mean RTT), +-50 ms variation per leg, 0.4 Hz, 20 sub-frequencies.
inline ExperimentConfig offline_defaults() { return ExperimentConfig{}; }

/// Real-time defaults: fixed 125 ms bottleneck delay per leg, no loss,
/// 25 Mbit/s.
inline ExperimentConfig realtime_defaults() {
  ExperimentConfig c;
  c.set_both_channels([](ChannelConfig& ch) {
    ch.delay.a0 = 0.125;
    ch.delay.dev = 0.0;
    ch.lossProb = 0.0;
    ch.capacityBps = 25e6;
  });
  return c;
}

/// Degenerate network: no delay, loss or serialization time.
inline void make_ideal_network(ExperimentConfig& c) {
  c.set_both_channels([](ChannelConfig& ch) {
    ch.delay.a0 = 0.0;
    ch.delay.dev = 0.0;
    ch.lossProb = 0.0;
    ch.capacityBps = 0.0;
  });
}

// ---------------------------------------------------------------------------
// Trajectory log

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct TickRecord {
  std::int64_t k = 0;
  double x1 = 0.0;
  double x2 = 0.0;
  double u = 0.0;
  double x1Ideal = kNaN;
  double x2Ideal = kNaN;
  double hold = 0.0;
  double rttSample = kNaN;  // from the state packet sampled at this tick
  double srtt = kNaN;
};

enum class Direction { Forward, Feedback };

inline const char* to_string(Direction d) { return d == Direction::Forward ? "forward" : "feedback"; }

struct PacketRecord {
  Direction direction = Direction::Feedback;
  std::uint32_t seq = 0;
  double sendTime = 0.0;
  std::optional<double> arrival;  // nullopt: lost
  std::size_t sizeBytes = 0;
  bool inFlight = false;  // still travelling when the run ended; not counted as lost
};

/// One entry per state packet processed by the controller.
struct ControllerRecord {
  std::uint32_t stateSeq = 0;
  Tick sampleTick{};
  double time = 0.0;  // controller clock
  double rttSample = kNaN;
  double srtt = kNaN;
  PlantParams theta{};
};

struct TrajectoryLog {
  double T = kDefaultSamplePeriod;
  double duration = 0.0;
  std::vector<TickRecord> ticks;
  std::vector<PacketRecord> packets;
  std::vector<ControllerRecord> controller;
  bool diverged = false;
  bool unstable = false;
  std::uint64_t missedDeadlines = 0;
  std::uint64_t staleControlPackets = 0;
  std::uint64_t holdTicks = 0;
};

/// Copies controller-side RTT figures onto the tick records by sample tick.
inline void merge_controller_records(TrajectoryLog& log) {
  for (const auto& c : log.controller) {
    const auto k = c.sampleTick.k;
    if (k < 0 || k >= static_cast<std::int64_t>(log.ticks.size())) continue;
    log.ticks[static_cast<std::size_t>(k)].rttSample = c.rttSample;
    log.ticks[static_cast<std::size_t>(k)].srtt = c.srtt;
  }
}

inline void attach_ideal(TrajectoryLog& log, const TrajectoryLog& ideal) {
  for (auto& r : log.ticks) {
    if (r.k < static_cast<std::int64_t>(ideal.ticks.size())) {
      r.x1Ideal = ideal.ticks[static_cast<std::size_t>(r.k)].x1;
      r.x2Ideal = ideal.ticks[static_cast<std::size_t>(r.k)].x2;
    }
  }
}

/// Diverged, or the position left 3x the reference amplitude after warmup.
inline bool judge_unstable(const TrajectoryLog& log, const ExperimentConfig& cfg) {
  if (log.diverged) return true;
  if (!(cfg.reference.amplitude > 0.0)) return false;
  const double bound = 3.0 * cfg.reference.amplitude;
  for (const auto& r : log.ticks) {
    if (r.k >= cfg.warmup_ticks() && std::abs(r.x1) > bound) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// key = value config text

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size()) throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return d;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "True" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "False" || v == "0" || v == "no") return false;
  throw ConfigError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

inline Setter num(double ExperimentConfig::*m) {
  return [m](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*m = parse_double(k, v); };
}

template <typename F>
Setter num_at(F access) {
  return [access](ExperimentConfig& c, const std::string& k, const std::string& v) {
    access(c) = parse_double(k, v);
  };
}

template <typename F>
Setter int_at(F access) {
  return [access](ExperimentConfig& c, const std::string& k, const std::string& v) {
    const double d = parse_double(k, v);
    if (d != std::floor(d)) throw ConfigError("config: '" + k + "' expects an integer");
    access(c) = static_cast<std::remove_reference_t<decltype(access(c))>>(d);
  };
}

inline Setter flag(bool ExperimentConfig::*m) {
  return [m](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*m = parse_bool(k, v); };
}

inline void add_channel_keys(std::map<std::string, Setter>& s, const std::string& prefix,
                             ChannelConfig ExperimentConfig::*ch) {
  s[prefix + ".baseDelay"] = num_at([ch](ExperimentConfig& c) -> double& { return (c.*ch).delay.a0; });
  s[prefix + ".deviation"] = num_at([ch](ExperimentConfig& c) -> double& { return (c.*ch).delay.dev; });
  s[prefix + ".baseFreq"] = num_at([ch](ExperimentConfig& c) -> double& { return (c.*ch).delay.f0; });
  s[prefix + ".subFrequencies"] = int_at([ch](ExperimentConfig& c) -> int& { return (c.*ch).delay.n; });
  s[prefix + ".loss"] = num_at([ch](ExperimentConfig& c) -> double& { return (c.*ch).lossProb; });
  s[prefix + ".capacityBps"] = num_at([ch](ExperimentConfig& c) -> double& { return (c.*ch).capacityBps; });
}

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> s;
    s["duration"] = num(&ExperimentConfig::duration);
    s["warmupSkip"] = num(&ExperimentConfig::warmupSkip);
    s["masterSeed"] = int_at([](ExperimentConfig& c) -> std::uint64_t& { return c.masterSeed; });
    s["horizon"] = int_at([](ExperimentConfig& c) -> int& { return c.horizon; });
    s["delayMargin"] = int_at([](ExperimentConfig& c) -> int& { return c.delayMargin; });
    s["preWindow"] = int_at([](ExperimentConfig& c) -> int& { return c.preWindow; });
    s["reuseGuard"] = int_at([](ExperimentConfig& c) -> int& { return c.reuseGuard; });
    s["useIntegrator"] = flag(&ExperimentConfig::useIntegrator);
    s["useOldControl"] = flag(&ExperimentConfig::useOldControl);
    s["useEstimator"] = flag(&ExperimentConfig::useEstimator);
    s["usePredictor"] = flag(&ExperimentConfig::usePredictor);
    s["nominalRtt"] = num(&ExperimentConfig::nominalRtt);
    s["estimator.lambda"] = num(&ExperimentConfig::lambda);
    s["estimator.p0"] = num(&ExperimentConfig::p0);
    s["estimator.model"] = [](ExperimentConfig& c, const std::string&, const std::string& v) {
      c.estimatorModel = parse_estimator_model(v);
    };
    for (int i = 0; i < 3; ++i) {
      s["estimator.trendScale" + std::to_string(i + 1)] =
          num_at([i](ExperimentConfig& c) -> double& { return c.trend.scale(i); });
    }
    s["estimator.trendBandwidth"] = num_at([](ExperimentConfig& c) -> double& { return c.trend.bandwidth; });
    s["estimator.trendNoiseVar"] = num_at([](ExperimentConfig& c) -> double& { return c.trend.measurementVar; });
    s["estimator.trendP0"] = num_at([](ExperimentConfig& c) -> double& { return c.trend.p0; });
    s["plant.T"] = num_at([](ExperimentConfig& c) -> double& { return c.plant.T; });
    s["plant.noiseSigmaPos"] = num_at([](ExperimentConfig& c) -> double& { return c.plant.noiseSigmaPos; });
    s["plant.noiseSigmaVel"] = num_at([](ExperimentConfig& c) -> double& { return c.plant.noiseSigmaVel; });
    s["plant.driftAmplitude"] = num_at([](ExperimentConfig& c) -> double& { return c.plant.driftAmplitude; });
    s["plant.driftFreq"] = num_at([](ExperimentConfig& c) -> double& { return c.plant.driftFreq; });
    s["plant.x1"] = num_at([](ExperimentConfig& c) -> double& { return c.plant.initial.x1; });
    s["plant.x2"] = num_at([](ExperimentConfig& c) -> double& { return c.plant.initial.x2; });
    s["lqr.q1"] = num_at([](ExperimentConfig& c) -> double& { return c.weights.q1; });
    s["lqr.q2"] = num_at([](ExperimentConfig& c) -> double& { return c.weights.q2; });
    s["lqr.r"] = num_at([](ExperimentConfig& c) -> double& { return c.weights.r; });
    s["reference.amplitude"] = num_at([](ExperimentConfig& c) -> double& { return c.reference.amplitude; });
    s["reference.frequency"] = num_at([](ExperimentConfig& c) -> double& { return c.reference.frequency; });
    add_channel_keys(s, "forward", &ExperimentConfig::forward);
    add_channel_keys(s, "feedback", &ExperimentConfig::feedback);
    return s;
  }();
  return table;
}

}  // namespace detail

/// Applies one `key = value` assignment. `channel.*` keys set both directions.
inline void apply_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  if (key.rfind("channel.", 0) == 0) {
    const std::string rest = key.substr(std::string("channel").size());
    apply_config_key(cfg, "forward" + rest, value);
    apply_config_key(cfg, "feedback" + rest, value);
    return;
  }
  const auto& table = detail::setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
  it->second(cfg, key, value);
}

/// Parses `key = value` lines on top of `base`. '#' starts a comment.
inline ExperimentConfig parse_config(std::istream& in, ExperimentConfig base = offline_defaults()) {
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineNo) + ": expected key = value");
    }
    apply_config_key(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  base.validate();
  return base;
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = offline_defaults()) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, std::move(base));
}

/// Round-trippable text form of every key.
inline std::string to_config_text(const ExperimentConfig& c) {
  std::ostringstream os;
  os.precision(17);
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << "duration = " << c.duration << "\n"
     << "warmupSkip = " << c.warmupSkip << "\n"
     << "masterSeed = " << c.masterSeed << "\n"
     << "horizon = " << c.horizon << "\n"
     << "delayMargin = " << c.delayMargin << "\n"
     << "preWindow = " << c.preWindow << "\n"
     << "reuseGuard = " << c.reuseGuard << "\n"
     << "useIntegrator = " << b(c.useIntegrator) << "\n"
     << "useOldControl = " << b(c.useOldControl) << "\n"
     << "useEstimator = " << b(c.useEstimator) << "\n"
     << "usePredictor = " << b(c.usePredictor) << "\n"
     << "nominalRtt = " << c.nominalRtt << "\n"
     << "estimator.lambda = " << c.lambda << "\n"
     << "estimator.p0 = " << c.p0 << "\n"
     << "estimator.model = " << to_string(c.estimatorModel) << "\n"
     << "estimator.trendScale1 = " << c.trend.scale(0) << "\n"
     << "estimator.trendScale2 = " << c.trend.scale(1) << "\n"
     << "estimator.trendScale3 = " << c.trend.scale(2) << "\n"
     << "estimator.trendBandwidth = " << c.trend.bandwidth << "\n"
     << "estimator.trendNoiseVar = " << c.trend.measurementVar << "\n"
     << "estimator.trendP0 = " << c.trend.p0 << "\n"
     << "plant.T = " << c.plant.T << "\n"
     << "plant.noiseSigmaPos = " << c.plant.noiseSigmaPos << "\n"
     << "plant.noiseSigmaVel = " << c.plant.noiseSigmaVel << "\n"
     << "plant.driftAmplitude = " << c.plant.driftAmplitude << "\n"
     << "plant.driftFreq = " << c.plant.driftFreq << "\n"
     << "plant.x1 = " << c.plant.initial.x1 << "\n"
     << "plant.x2 = " << c.plant.initial.x2 << "\n"
     << "lqr.q1 = " << c.weights.q1 << "\n"
     << "lqr.q2 = " << c.weights.q2 << "\n"
     << "lqr.r = " << c.weights.r << "\n"
     << "reference.amplitude = " << c.reference.amplitude << "\n"
     << "reference.frequency = " << c.reference.frequency << "\n";
  for (auto [name, ch] : {std::pair{"forward", &c.forward}, std::pair{"feedback", &c.feedback}}) {
    os << name << ".baseDelay = " << ch->delay.a0 << "\n"
       << name << ".deviation = " << ch->delay.dev << "\n"
       << name << ".baseFreq = " << ch->delay.f0 << "\n"
       << name << ".subFrequencies = " << ch->delay.n << "\n"
       << name << ".loss = " << ch->lossProb << "\n"
       << name << ".capacityBps = " << ch->capacityBps << "\n";
  }
  return os.str();
}

}  // namespace npc
