#pragma once

// Wall-clock roles: plant, controller and impairment relay over UDP.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <queue>
#include <thread>
#include <vector>

#include "npc/channel.hpp"
#include "npc/compensator.hpp"
#include "npc/control_unit.hpp"
#include "npc/experiment.hpp"
#include "npc/offline.hpp"
#include "npc/udp.hpp"
#include "npc/wire.hpp"

namespace npc::rt {

using Clock = std::chrono::steady_clock;

inline double seconds_between(Clock::time_point from, Clock::time_point to) {
  return std::chrono::duration<double>(to - from).count();
}

inline Clock::duration to_duration(double seconds) {
  return std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(seconds));
}

inline constexpr auto kPollInterval = std::chrono::milliseconds(20);

/// A late tick is one that starts more than this after its deadline.
inline constexpr double kDeadlineTolerance = 1e-3;

struct Receipt {
  std::uint32_t seq = 0;
  double time = 0.0;
  std::size_t sizeBytes = 0;
};

// ---------------------------------------------------------------------------
// Relay

struct RelayStats {
  std::uint64_t forwarded[2] = {0, 0};  // indexed by Direction
  std::uint64_t dropped[2] = {0, 0};
  double maxLateness = 0.0;  // s past the scheduled release
};

/// Two-port impairment relay. Datagrams arriving on the plant-side socket go
/// to `controller` through the feedback channel model; datagrams arriving on
/// the controller-side socket go back to the last seen plant address through
/// the forward model. Nothing is released before its scheduled time.
class Relay {
 public:
  Relay(ChannelConfig forward, ChannelConfig feedback, std::uint64_t seed, udp::Socket plantSide,
        udp::Socket controllerSide, udp::Endpoint controller)
      : forward_(bind_seed(forward, seed), streams::kDelayPhasesForward,
                 derive_stream(seed, streams::kLossForward)),
        feedback_(bind_seed(feedback, seed), streams::kDelayPhasesFeedback,
                  derive_stream(seed, streams::kLossFeedback)),
        plantSide_(std::move(plantSide)),
        controllerSide_(std::move(controllerSide)),
        controller_(controller) {}

  udp::Endpoint plant_side() const { return plantSide_.local(); }
  udp::Endpoint controller_side() const { return controllerSide_.local(); }

  /// Blocks until `stop` is set, or until `idle` seconds pass without traffic
  /// once traffic has started (idle <= 0 disables the idle exit).
  void run(const std::atomic<bool>& stop, double idle = 0.0) {
    start_ = Clock::now();
    lastTraffic_ = start_.time_since_epoch().count();
    std::atomic<bool> done{false};
    std::exception_ptr error;
    std::mutex errorMu;
    auto guarded = [&](auto&& body) {
      return [&, body] {
        try {
          body();
        } catch (...) {
          std::lock_guard lock(errorMu);
          if (!error) error = std::current_exception();
          done = true;
          cv_.notify_all();
        }
      };
    };

    std::thread up(guarded([&] { ingress(Direction::Feedback, done); }));
    std::thread down(guarded([&] { ingress(Direction::Forward, done); }));
    std::thread release(guarded([&] { release_loop(done); }));

    while (!stop && !done) {
      std::this_thread::sleep_for(kPollInterval);
      if (idle > 0.0 && sawTraffic_) {
        const auto last = Clock::time_point(Clock::duration(lastTraffic_.load()));
        if (seconds_between(last, Clock::now()) > idle) break;
      }
    }
    done = true;
    cv_.notify_all();
    up.join();
    down.join();
    release.join();
    if (error) std::rethrow_exception(error);
  }

  RelayStats stats() const {
    std::lock_guard lock(mu_);
    return stats_;
  }

 private:
  struct Pending {
    Clock::time_point at;
    std::uint64_t order = 0;
    Direction direction = Direction::Feedback;
    wire::Bytes bytes;

    bool operator>(const Pending& o) const {
      return at != o.at ? at > o.at : order > o.order;
    }
  };

  static ChannelConfig bind_seed(ChannelConfig c, std::uint64_t seed) {
    c.delay.seed = seed;
    return c;
  }

  void ingress(Direction dir, const std::atomic<bool>& done) {
    const udp::Socket& in = dir == Direction::Feedback ? plantSide_ : controllerSide_;
    Channel& channel = dir == Direction::Feedback ? feedback_ : forward_;
    const auto idx = static_cast<int>(dir);
    while (!done) {
      auto d = in.receive(kPollInterval);
      if (!d) continue;
      const auto now = Clock::now();
      lastTraffic_ = now.time_since_epoch().count();
      sawTraffic_ = true;
      if (dir == Direction::Feedback) {
        std::lock_guard lock(mu_);
        plant_ = d->from;
      }
      const double sendTime = seconds_between(start_, now);
      const auto arrival = channel.transmit(d->bytes.size(), sendTime);
      std::lock_guard lock(mu_);
      if (!arrival) {
        ++stats_.dropped[idx];
        continue;
      }
      queue_.push({start_ + to_duration(*arrival), nextOrder_++, dir, std::move(d->bytes)});
      cv_.notify_all();
    }
  }

  void release_loop(const std::atomic<bool>& done) {
    std::unique_lock lock(mu_);
    while (!done) {
      if (queue_.empty()) {
        cv_.wait_for(lock, kPollInterval);
        continue;
      }
      const auto due = queue_.top().at;
      if (Clock::now() < due) {
        cv_.wait_until(lock, due);
        continue;
      }
      Pending p = queue_.top();
      queue_.pop();
      const std::optional<udp::Endpoint> plant = plant_;
      lock.unlock();

      const double late = seconds_between(p.at, Clock::now());
      const auto idx = static_cast<int>(p.direction);
      bool sent = true;
      if (p.direction == Direction::Feedback) {
        controllerSide_.send_to(p.bytes, controller_);
      } else if (plant) {
        plantSide_.send_to(p.bytes, *plant);
      } else {
        sent = false;
      }

      lock.lock();
      stats_.maxLateness = std::max(stats_.maxLateness, late);
      ++(sent ? stats_.forwarded[idx] : stats_.dropped[idx]);
    }
  }

  Channel forward_;
  Channel feedback_;
  udp::Socket plantSide_;
  udp::Socket controllerSide_;
  udp::Endpoint controller_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue_;
  std::uint64_t nextOrder_ = 0;
  std::optional<udp::Endpoint> plant_;
  RelayStats stats_;
  Clock::time_point start_{};
  std::atomic<Clock::rep> lastTraffic_{0};
  std::atomic<bool> sawTraffic_{false};
};

// ---------------------------------------------------------------------------
// Plant

struct PlantRun {
  TrajectoryLog log;             // ticks and sent state packets
  std::vector<Receipt> received; // control packets, plant clock
};

/// Ticks the simulated plant every T seconds starting at `start`. Control
/// packets are ingested on a second thread. Returns after cfg.duration or
/// when `stop` is set.
inline PlantRun run_plant(const ExperimentConfig& cfg, const udp::Socket& sock, const udp::Endpoint& peer,
                          Clock::time_point start, const std::atomic<bool>* stop = nullptr) {
  cfg.validate();
  const double T = cfg.T();
  SeededRng noise = derive_stream(cfg.masterSeed, streams::kNoise);
  SharedCompensator compensator;

  PlantRun run;
  TrajectoryLog& log = run.log;
  log.T = T;
  log.duration = cfg.duration;
  const std::int64_t n = cfg.ticks();
  log.ticks.reserve(static_cast<std::size_t>(n));

  std::atomic<bool> done{false};
  std::mutex receiptMu;
  std::exception_ptr ingestError;
  std::atomic<bool> ingestFailed{false};
  std::thread ingest([&] {
    try {
      while (!done) {
        auto d = sock.receive(kPollInterval);
        if (!d) continue;
        const double at = seconds_between(start, Clock::now());
        auto pkt = wire::decode_control(d->bytes);
        if (!pkt) continue;
        {
          std::lock_guard lock(receiptMu);
          run.received.push_back({pkt->seq, at, d->bytes.size()});
        }
        compensator.ingest(std::move(*pkt), at);
      }
    } catch (...) {
      ingestError = std::current_exception();
      ingestFailed = true;
    }
  });

  PlantState x = cfg.plant.initial;
  for (std::int64_t k = 0; k < n; ++k) {
    if (stop && *stop) break;
    if (ingestFailed) break;
    const Tick tick{k};
    const double t = tick.time(T);
    const auto deadline = start + to_duration(t);
    std::this_thread::sleep_until(deadline);
    const auto woke = Clock::now();
    if (seconds_between(deadline, woke) > kDeadlineTolerance) ++log.missedDeadlines;
    const double plantNow = seconds_between(start, woke);

    const auto [echoSeq, echoHold] = compensator.echo(plantNow);
    const auto [y1, y2] = measure(x, noise, cfg.plant);
    StatePacket sp;
    sp.seq = static_cast<std::uint32_t>(k + 1);
    sp.sampleTick = tick;
    sp.y1 = y1;
    sp.y2 = y2;
    sp.echoSeq = echoSeq;
    sp.echoHoldTime = echoHold;
    const wire::Bytes bytes = wire::encode(sp);
    sock.send_to(bytes, peer);
    log.packets.push_back({Direction::Feedback, sp.seq, plantNow, std::nullopt, bytes.size()});

    const Selection sel = compensator.tick(tick, T);
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
  done = true;
  ingest.join();
  if (ingestError) std::rethrow_exception(ingestError);

  const CompensatorState snap = compensator.snapshot();
  log.staleControlPackets = snap.stats.staleDiscarded;
  log.holdTicks = snap.stats.holds;
  return run;
}

// ---------------------------------------------------------------------------
// Controller

struct ControllerRun {
  std::vector<ControllerRecord> records;
  std::vector<PacketRecord> sent;  // control packets, controller clock
  std::vector<Receipt> received;   // state packets, controller clock
  std::uint64_t staleStates = 0;
};

/// Serves state packets until `stop` is set or, once traffic has started, no
/// packet arrives for `idle` seconds (idle <= 0 disables the idle exit).
inline ControllerRun run_controller(const ExperimentConfig& cfg, const udp::Socket& sock,
                                    const udp::Endpoint& peer, Clock::time_point start,
                                    const std::atomic<bool>& stop, double idle = 0.0) {
  cfg.validate();
  ControlUnit controller(cfg.control_unit());
  ControllerRun run;
  std::optional<Clock::time_point> last;

  while (!stop) {
    auto d = sock.receive(kPollInterval);
    const auto wall = Clock::now();
    if (!d) {
      if (idle > 0.0 && last && seconds_between(*last, wall) > idle) break;
      continue;
    }
    last = wall;
    const double now = seconds_between(start, wall);
    const auto pkt = wire::decode_state(d->bytes);
    if (!pkt) continue;
    run.received.push_back({pkt->seq, now, d->bytes.size()});

    const auto out = controller.on_state_packet(*pkt, now);
    if (!out) continue;
    const wire::Bytes bytes = wire::encode(*out);
    sock.send_to(bytes, peer);

    ControllerRecord rec;
    rec.stateSeq = pkt->seq;
    rec.sampleTick = pkt->sampleTick;
    rec.time = now;
    rec.rttSample = controller.last_rtt_sample().value_or(kNaN);
    rec.srtt = controller.rtt().valid() ? controller.rtt().srtt : kNaN;
    rec.theta = controller.theta_estimate();
    run.records.push_back(rec);
    run.sent.push_back({Direction::Forward, out->seq, now, std::nullopt, bytes.size()});
  }
  run.staleStates = controller.stale_states();
  return run;
}

// ---------------------------------------------------------------------------
// Merge

/// Joins the plant-side log (authoritative) with the controller side by
/// sequence number and attaches the delay-free baseline. Arrival times stay
/// in the receiver's clock.
inline TrajectoryLog merge_runs(PlantRun plant, const ControllerRun& controller,
                                const ExperimentConfig& cfg) {
  TrajectoryLog log = std::move(plant.log);

  std::map<std::uint32_t, double> stateArrivals;
  for (const auto& r : controller.received) stateArrivals.emplace(r.seq, r.time);
  for (auto& p : log.packets) {
    if (const auto it = stateArrivals.find(p.seq); it != stateArrivals.end()) p.arrival = it->second;
  }

  std::map<std::uint32_t, double> controlArrivals;
  for (const auto& r : plant.received) controlArrivals.emplace(r.seq, r.time);
  for (PacketRecord p : controller.sent) {
    if (const auto it = controlArrivals.find(p.seq); it != controlArrivals.end()) p.arrival = it->second;
    log.packets.push_back(p);
  }

  // Undelivered packets sent after the last delivered one in their direction
  // were cut off by the end of the run.
  for (const Direction dir : {Direction::Forward, Direction::Feedback}) {
    double lastDelivered = -std::numeric_limits<double>::infinity();
    for (const auto& p : log.packets) {
      if (p.direction == dir && p.arrival) lastDelivered = std::max(lastDelivered, p.sendTime);
    }
    for (auto& p : log.packets) {
      if (p.direction == dir && !p.arrival && p.sendTime > lastDelivered) p.inFlight = true;
    }
  }

  log.controller = controller.records;
  merge_controller_records(log);
  attach_ideal(log, run_ideal(cfg));
  log.unstable = judge_unstable(log, cfg);
  return log;
}

// ---------------------------------------------------------------------------
// In-process run

struct RealtimeResult {
  TrajectoryLog log;
  RelayStats relay;
};

/// Runs relay, controller and plant as threads of this process over the
/// loopback interface on ephemeral ports. Takes cfg.duration of wall time.
inline RealtimeResult run_realtime(const ExperimentConfig& cfg) {
  cfg.validate();
  const udp::Endpoint loopback = udp::parse_endpoint("127.0.0.1:0");
  udp::Socket plantSock(loopback);
  udp::Socket controllerSock(loopback);
  udp::Socket relayPlantSide(loopback);
  udp::Socket relayControllerSide(loopback);

  const udp::Endpoint toRelayFromPlant = relayPlantSide.local();
  const udp::Endpoint toRelayFromController = relayControllerSide.local();
  Relay relay(cfg.forward, cfg.feedback, cfg.masterSeed, std::move(relayPlantSide),
              std::move(relayControllerSide), controllerSock.local());

  std::atomic<bool> stop{false};
  std::exception_ptr relayError;
  std::exception_ptr controllerError;
  ControllerRun controllerRun;

  // Common epoch; the roles never compare clocks, it only eases log reading.
  const auto start = Clock::now() + std::chrono::milliseconds(100);
  std::thread relayThread([&] {
    try {
      relay.run(stop);
    } catch (...) {
      relayError = std::current_exception();
      stop = true;
    }
  });
  std::thread controllerThread([&] {
    try {
      controllerRun = run_controller(cfg, controllerSock, toRelayFromController, start, stop);
    } catch (...) {
      controllerError = std::current_exception();
      stop = true;
    }
  });

  PlantRun plantRun;
  std::exception_ptr plantError;
  try {
    plantRun = run_plant(cfg, plantSock, toRelayFromPlant, start, &stop);
  } catch (...) {
    plantError = std::current_exception();
  }
  stop = true;
  relayThread.join();
  controllerThread.join();
  for (const auto& e : {plantError, relayError, controllerError}) {
    if (e) std::rethrow_exception(e);
  }

  RealtimeResult out;
  out.relay = relay.stats();
  out.log = merge_runs(std::move(plantRun), controllerRun, cfg);
  return out;
}

}  // namespace npc::rt
