#pragma once

// Frozen little-endian datagram layout, version 0x01.
//
//   StatePacket   = [u8 0x01][u32 seq][u64 sampleTick][f64 y1][f64 y2]
//                   [u32 echoSeq][f64 echoHoldTime]                     41 bytes
//   ControlPacket = [u8 0x01][u32 seq][u32 basedOnStateSeq][u64 startTick]
//                   [u64 sendTick][u16 count][count x f64]         27 + 8n bytes

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "npc/domain.hpp"

namespace npc::wire {

inline constexpr std::uint8_t kVersion = 0x01;
inline constexpr std::size_t kStatePacketSize = 1 + 4 + 8 + 8 + 8 + 4 + 8;
inline constexpr std::size_t kControlHeaderSize = 1 + 4 + 4 + 8 + 8 + 2;

inline constexpr std::size_t control_packet_size(std::size_t count) {
  return kControlHeaderSize + 8 * count;
}

using Bytes = std::vector<std::byte>;

namespace detail {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::array<std::byte, sizeof(T)> raw;
    std::memcpy(raw.data(), &v, sizeof(T));
    std::reverse(raw.begin(), raw.end());
    std::memcpy(&v, raw.data(), sizeof(T));
  }
  return v;
}

class Writer {
 public:
  explicit Writer(std::size_t reserve) { out_.reserve(reserve); }

  template <typename T>
  void put(T v) {
    v = to_little(v);
    const auto* p = reinterpret_cast<const std::byte*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }

  Bytes take() && { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> in) : in_(in) {}

  template <typename T>
  bool get(T& v) {
    if (in_.size() - pos_ < sizeof(T)) return false;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    v = to_little(v);
    pos_ += sizeof(T);
    return true;
  }

  bool at_end() const { return pos_ == in_.size(); }

 private:
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Bytes encode(const StatePacket& p) {
  detail::Writer w(kStatePacketSize);
  w.put(kVersion);
  w.put(p.seq);
  w.put(static_cast<std::uint64_t>(p.sampleTick.k));
  w.put(p.y1);
  w.put(p.y2);
  w.put(p.echoSeq);
  w.put(p.echoHoldTime);
  return std::move(w).take();
}

inline Bytes encode(const ControlPacket& p) {
  const auto& values = p.sequence.values;
  if (values.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw std::length_error("control sequence longer than 65535 values");
  }
  detail::Writer w(control_packet_size(values.size()));
  w.put(kVersion);
  w.put(p.seq);
  w.put(p.basedOnStateSeq);
  w.put(static_cast<std::uint64_t>(p.sequence.startTick.k));
  w.put(static_cast<std::uint64_t>(p.sendTick.k));
  w.put(static_cast<std::uint16_t>(values.size()));
  for (double v : values) w.put(v);
  return std::move(w).take();
}

/// Returns nullopt on version mismatch, truncation or trailing bytes.
inline std::optional<StatePacket> decode_state(std::span<const std::byte> in) {
  detail::Reader r(in);
  std::uint8_t version = 0;
  std::uint64_t tick = 0;
  StatePacket p;
  if (!r.get(version) || version != kVersion) return std::nullopt;
  if (!r.get(p.seq) || !r.get(tick) || !r.get(p.y1) || !r.get(p.y2) || !r.get(p.echoSeq) ||
      !r.get(p.echoHoldTime) || !r.at_end()) {
    return std::nullopt;
  }
  p.sampleTick = Tick{static_cast<std::int64_t>(tick)};
  return p;
}

inline std::optional<ControlPacket> decode_control(std::span<const std::byte> in) {
  detail::Reader r(in);
  std::uint8_t version = 0;
  std::uint64_t start = 0, send = 0;
  std::uint16_t count = 0;
  ControlPacket p;
  if (!r.get(version) || version != kVersion) return std::nullopt;
  if (!r.get(p.seq) || !r.get(p.basedOnStateSeq) || !r.get(start) || !r.get(send) ||
      !r.get(count)) {
    return std::nullopt;
  }
  p.sequence.values.resize(count);
  for (auto& v : p.sequence.values) {
    if (!r.get(v)) return std::nullopt;
  }
  if (!r.at_end()) return std::nullopt;
  p.sequence.startTick = Tick{static_cast<std::int64_t>(start)};
  p.sendTick = Tick{static_cast<std::int64_t>(send)};
  return p;
}

}  // namespace npc::wire
