#pragma once

// Discrete-event offline runner and the local delay-free baseline.

#include <cstdint>
#include <queue>
#include <tuple>
#include <vector>

#include "npc/compensator.hpp"
#include "npc/control_unit.hpp"
#include "npc/experiment.hpp"
#include "npc/wire.hpp"

namespace npc {

/// Local loop without network, predictor or estimator. Shares the noise
/// stream and drift schedule with the networked run.
inline TrajectoryLog run_ideal(const ExperimentConfig& cfg) {
  cfg.validate();
  const double T = cfg.T();
  const GainVector K = lqr_gain(cfg.weights);
  SeededRng noise = derive_stream(cfg.masterSeed, streams::kNoise);

  TrajectoryLog log;
  log.T = T;
  log.duration = cfg.duration;
  const std::int64_t n = cfg.ticks();
  log.ticks.reserve(static_cast<std::size_t>(n));

  PlantState x = cfg.plant.initial;
  for (std::int64_t k = 0; k < n; ++k) {
    const Tick tick{k};
    const auto [y1, y2] = measure(x, noise, cfg.plant);
    const ControlValue u = control_law({y1, y2}, cfg.reference.at(tick.time(T)), K);
    TickRecord r;
    r.k = k;
    r.x1 = r.x1Ideal = x.x1;
    r.x2 = r.x2Ideal = x.x2;
    r.u = u;
    log.ticks.push_back(r);
    x = plant_step(x, u, true_params(tick.time(T), cfg.plant), T);
    if (x.diverged()) {
      log.diverged = true;
      break;
    }
  }
  log.unstable = judge_unstable(log, cfg);
  return log;
}

namespace detail {

struct Arrival {
  double time = 0.0;
  Direction direction = Direction::Feedback;
  std::uint32_t seq = 0;
  wire::Bytes bytes;

  // Earliest first; equal times ordered by seq, then direction.
  bool operator>(const Arrival& o) const {
    return std::tie(time, seq, direction) > std::tie(o.time, o.seq, o.direction);
  }
};

}  // namespace detail

/// Offline closed loop. Within one plant tick at time kT the order is:
/// arrivals before kT, sample and send the state packet, arrivals at kT
/// (including ones triggered by that packet on a zero-delay link), then
/// actuation over [kT, (k+1)T).
inline TrajectoryLog run_offline(const ExperimentConfig& cfg) {
  cfg.validate();
  const double T = cfg.T();
  const TrajectoryLog ideal = run_ideal(cfg);

  SeededRng noise = derive_stream(cfg.masterSeed, streams::kNoise);
  Channel forward(cfg.forward_channel(), streams::kDelayPhasesForward,
                  derive_stream(cfg.masterSeed, streams::kLossForward));
  Channel feedback(cfg.feedback_channel(), streams::kDelayPhasesFeedback,
                   derive_stream(cfg.masterSeed, streams::kLossFeedback));
  ControlUnit controller(cfg.control_unit());
  CompensatorState compensator;

  TrajectoryLog log;
  log.T = T;
  log.duration = cfg.duration;
  const std::int64_t n = cfg.ticks();
  log.ticks.reserve(static_cast<std::size_t>(n));

  std::priority_queue<detail::Arrival, std::vector<detail::Arrival>, std::greater<>> queue;

  auto send = [&](Direction dir, std::uint32_t seq, wire::Bytes bytes, double t) {
    Channel& ch = dir == Direction::Forward ? forward : feedback;
    const auto arrival = ch.transmit(bytes.size(), t);
    log.packets.push_back({dir, seq, t, arrival, bytes.size()});
    if (arrival) queue.push({*arrival, dir, seq, std::move(bytes)});
  };

  auto deliver = [&](const detail::Arrival& a) {
    if (a.direction == Direction::Feedback) {
      const auto pkt = wire::decode_state(a.bytes);
      if (!pkt) return;
      const auto out = controller.on_state_packet(*pkt, a.time);
      if (!out) return;
      ControllerRecord rec;
      rec.stateSeq = pkt->seq;
      rec.sampleTick = pkt->sampleTick;
      rec.time = a.time;
      rec.rttSample = controller.last_rtt_sample().value_or(kNaN);
      rec.srtt = controller.rtt().valid() ? controller.rtt().srtt : kNaN;
      rec.theta = controller.theta_estimate();
      log.controller.push_back(rec);
      send(Direction::Forward, out->seq, wire::encode(*out), a.time);
    } else {
      const auto pkt = wire::decode_control(a.bytes);
      if (!pkt) return;
      compensator = on_control_packet(std::move(compensator), *pkt, a.time);
    }
  };

  auto drain = [&](auto&& due) {
    while (!queue.empty() && due(queue.top().time)) {
      detail::Arrival a = queue.top();
      queue.pop();
      deliver(a);
    }
  };

  PlantState x = cfg.plant.initial;
  for (std::int64_t k = 0; k < n; ++k) {
    const Tick tick{k};
    const double t = tick.time(T);
    drain([t](double at) { return at < t; });

    const auto [echoSeq, echoHold] = echo_fields(compensator, t);
    const auto [y1, y2] = measure(x, noise, cfg.plant);
    StatePacket sp;
    sp.seq = static_cast<std::uint32_t>(k + 1);
    sp.sampleTick = tick;
    sp.y1 = y1;
    sp.y2 = y2;
    sp.echoSeq = echoSeq;
    sp.echoHoldTime = echoHold;
    send(Direction::Feedback, sp.seq, wire::encode(sp), t);

    drain([t](double at) { return at <= t; });

    const Selection sel = apply_tick(compensator, tick, T);
    TickRecord r;
    r.k = k;
    r.x1 = x.x1;
    r.x2 = x.x2;
    r.u = sel.u;
    r.hold = sel.holdTime;
    log.ticks.push_back(r);

    x = plant_step(x, sel.u, true_params(t, cfg.plant), T);
    if (x.diverged()) {
      log.diverged = true;
      break;
    }
  }

  log.staleControlPackets = compensator.stats.staleDiscarded;
  log.holdTicks = compensator.stats.holds;
  merge_controller_records(log);
  attach_ideal(log, ideal);
  log.unstable = judge_unstable(log, cfg);
  return log;
}

}  // namespace npc
