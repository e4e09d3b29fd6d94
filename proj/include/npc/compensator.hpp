#pragma once

#include <algorithm>
#include <cstdint>
#include <mutex>
#include <optional>
#include <utility>

#include "npc/domain.hpp"

namespace npc {

struct CompensatorStats {
  std::uint64_t accepted = 0;
  std::uint64_t staleDiscarded = 0;
  std::uint64_t holds = 0;  // ticks served past the end of the current sequence
};

/// Plant-side buffer holding the newest control packet by sequence number.
struct CompensatorState {
  std::optional<ControlPacket> current;
  double receivedAt = 0.0;  // plant clock (s) when `current` arrived
  ControlValue lastApplied = 0.0;
  std::optional<Tick> holdStartTick;
  // Packet that drove the most recent actuation; echoed to the controller.
  std::uint32_t appliedSeq = 0;
  double appliedReceivedAt = 0.0;
  CompensatorStats stats;
};

struct Selection {
  ControlValue u = 0.0;
  double holdTime = 0.0;  // s past the last covered tick
};

/// Accepts pkt iff its seq is newer than the buffered packet; stale or
/// reordered packets only bump a counter.
inline CompensatorState on_control_packet(CompensatorState state, ControlPacket pkt,
                                          double receivedAt = 0.0) {
  if (state.current && pkt.seq <= state.current->seq) {
    ++state.stats.staleDiscarded;
    return state;
  }
  state.current = std::move(pkt);
  state.receivedAt = receivedAt;
  state.holdStartTick.reset();
  ++state.stats.accepted;
  return state;
}

/// Selection rule of one sequence for tick `now`: early ticks take the first
/// value, late ticks hold the last one.
inline Selection select_from(const ControlSequence& seq, Tick now, double T) {
  if (seq.values.empty()) return {0.0, 0.0};
  if (now < seq.startTick) return {seq.values.front(), 0.0};
  if (seq.covers(now)) return {seq.values[static_cast<std::size_t>(now - seq.startTick)], 0.0};
  const Tick lastCovered = seq.endTick() - 1;
  return {seq.values.back(), static_cast<double>(now - lastCovered) * T};
}

/// Total: u = 0 until the first packet arrives.
inline Selection select_control(const CompensatorState& state, Tick now, double T) {
  if (!state.current) return {0.0, 0.0};
  return select_from(state.current->sequence, now, T);
}

/// Selection plus bookkeeping; call exactly once per plant tick.
inline Selection apply_tick(CompensatorState& state, Tick now, double T) {
  const Selection sel = select_control(state, now, T);
  if (sel.holdTime > 0.0) {
    if (!state.holdStartTick) state.holdStartTick = now;
    ++state.stats.holds;
  }
  state.lastApplied = sel.u;
  if (state.current) {
    state.appliedSeq = state.current->seq;
    state.appliedReceivedAt = state.receivedAt;
  }
  return sel;
}

/// Echo fields for the next state packet: the packet used at the latest
/// actuation and how long it has dwelt at the plant.
inline std::pair<std::uint32_t, double> echo_fields(const CompensatorState& state,
                                                    double plantNow) {
  if (state.appliedSeq == 0) return {0, 0.0};
  return {state.appliedSeq, std::max(0.0, plantNow - state.appliedReceivedAt)};
}

/// Compensator shared between a datagram ingestion thread and the tick loop.
/// Ingestion decodes outside the lock and only swaps under it.
class SharedCompensator {
 public:
  void ingest(ControlPacket pkt, double receivedAt) {
    std::lock_guard lock(mu_);
    state_ = on_control_packet(std::move(state_), std::move(pkt), receivedAt);
  }

  std::pair<std::uint32_t, double> echo(double plantNow) const {
    std::lock_guard lock(mu_);
    return echo_fields(state_, plantNow);
  }

  Selection tick(Tick now, double T) {
    std::lock_guard lock(mu_);
    return apply_tick(state_, now, T);
  }

  CompensatorState snapshot() const {
    std::lock_guard lock(mu_);
    return state_;
  }

 private:
  mutable std::mutex mu_;
  CompensatorState state_;
};

}  // namespace npc
