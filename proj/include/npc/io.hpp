#pragma once

// CSV and JSON emission for runs and sweeps, and CSV readers for merging
// separately recorded real-time logs.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "npc/experiment.hpp"
#include "npc/metrics.hpp"
#include "npc/realtime.hpp"

namespace npc::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kTrajectoryHeader = "k,t,x1,x2,u,x1_ideal,x2_ideal,hold,rtt";
inline constexpr const char* kPacketHeader = "direction,seq,send_time,arrival,size_bytes,in_flight";
inline constexpr const char* kControllerHeader = "state_seq,sample_tick,time,rtt,srtt,theta1,theta2,theta3";
inline constexpr const char* kReceiptHeader = "seq,time,size_bytes";
inline constexpr const char* kSweepHeader = "value,rep,rss,bandwidth_bps,unstable";

namespace detail {

/// Shortest text that parses back to the same double; NaN prints empty.
inline std::string num(double v) {
  if (std::isnan(v)) return {};
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_num(const std::string& s) {
  if (s.empty()) return kNaN;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size()) throw FormatError("bad number '" + s + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Reads rows of a CSV whose first line must equal `header`.
inline std::vector<std::vector<std::string>> read_rows(std::istream& in, const char* header) {
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw FormatError(std::string("expected header '") + header + "'");
  }
  const std::size_t width = split(header).size();
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != width) throw FormatError("row has " + std::to_string(cells.size()) + " cells: " + line);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace detail

inline void write_trajectory_csv(std::ostream& os, const TrajectoryLog& log) {
  using detail::num;
  os << kTrajectoryHeader << '\n';
  for (const auto& r : log.ticks) {
    os << r.k << ',' << num(static_cast<double>(r.k) * log.T) << ',' << num(r.x1) << ',' << num(r.x2) << ','
       << num(r.u) << ',' << num(r.x1Ideal) << ',' << num(r.x2Ideal) << ',' << num(r.hold) << ','
       << num(r.rttSample) << '\n';
  }
}

inline void write_packets_csv(std::ostream& os, const TrajectoryLog& log) {
  using detail::num;
  os << kPacketHeader << '\n';
  for (const auto& p : log.packets) {
    os << to_string(p.direction) << ',' << p.seq << ',' << num(p.sendTime) << ','
       << (p.arrival ? num(*p.arrival) : std::string()) << ',' << p.sizeBytes << ',' << (p.inFlight ? 1 : 0)
       << '\n';
  }
}

inline void write_controller_csv(std::ostream& os, const std::vector<ControllerRecord>& records) {
  using detail::num;
  os << kControllerHeader << '\n';
  for (const auto& c : records) {
    os << c.stateSeq << ',' << c.sampleTick.k << ',' << num(c.time) << ',' << num(c.rttSample) << ','
       << num(c.srtt) << ',' << num(c.theta.theta1) << ',' << num(c.theta.theta2) << ','
       << num(c.theta.theta3) << '\n';
  }
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& r) {
  using detail::num;
  os << kSweepHeader << '\n';
  for (const auto& row : r.rows) {
    os << num(row.value) << ',' << row.rep << ',' << num(row.rss) << ',' << num(row.bandwidthBps) << ','
       << (row.unstable ? 1 : 0) << '\n';
  }
}

inline void write_receipts_csv(std::ostream& os, const std::vector<rt::Receipt>& receipts) {
  os << kReceiptHeader << '\n';
  for (const auto& r : receipts) os << r.seq << ',' << detail::num(r.time) << ',' << r.sizeBytes << '\n';
}

inline std::vector<rt::Receipt> read_receipts_csv(std::istream& in) {
  std::vector<rt::Receipt> out;
  for (const auto& c : detail::read_rows(in, kReceiptHeader)) {
    out.push_back({static_cast<std::uint32_t>(std::stoul(c[0])), detail::parse_num(c[1]),
                   static_cast<std::size_t>(std::stoull(c[2]))});
  }
  return out;
}

/// Trajectory ticks only; ideal columns and rtt are restored when present.
inline TrajectoryLog read_trajectory_csv(std::istream& in, double T) {
  TrajectoryLog log;
  log.T = T;
  for (const auto& c : detail::read_rows(in, kTrajectoryHeader)) {
    TickRecord r;
    r.k = std::stoll(c[0]);
    r.x1 = detail::parse_num(c[2]);
    r.x2 = detail::parse_num(c[3]);
    r.u = detail::parse_num(c[4]);
    r.x1Ideal = detail::parse_num(c[5]);
    r.x2Ideal = detail::parse_num(c[6]);
    r.hold = detail::parse_num(c[7]);
    r.rttSample = detail::parse_num(c[8]);
    log.ticks.push_back(r);
  }
  return log;
}

inline std::vector<PacketRecord> read_packets_csv(std::istream& in) {
  std::vector<PacketRecord> out;
  for (const auto& c : detail::read_rows(in, kPacketHeader)) {
    PacketRecord p;
    if (c[0] == "forward") {
      p.direction = Direction::Forward;
    } else if (c[0] == "feedback") {
      p.direction = Direction::Feedback;
    } else {
      throw FormatError("unknown direction '" + c[0] + "'");
    }
    p.seq = static_cast<std::uint32_t>(std::stoul(c[1]));
    p.sendTime = detail::parse_num(c[2]);
    if (!c[3].empty()) p.arrival = detail::parse_num(c[3]);
    p.sizeBytes = static_cast<std::size_t>(std::stoull(c[4]));
    p.inFlight = c[5] == "1";
    out.push_back(p);
  }
  return out;
}

inline std::vector<ControllerRecord> read_controller_csv(std::istream& in) {
  std::vector<ControllerRecord> out;
  for (const auto& c : detail::read_rows(in, kControllerHeader)) {
    ControllerRecord r;
    r.stateSeq = static_cast<std::uint32_t>(std::stoul(c[0]));
    r.sampleTick = Tick{std::stoll(c[1])};
    r.time = detail::parse_num(c[2]);
    r.rttSample = detail::parse_num(c[3]);
    r.srtt = detail::parse_num(c[4]);
    r.theta = {detail::parse_num(c[5]), detail::parse_num(c[6]), detail::parse_num(c[7])};
    out.push_back(r);
  }
  return out;
}

/// Summary document: rss, bandwidthBps, lossObserved, unstable and a few
/// diagnostics.
inline nlohmann::json summary_json(const TrajectoryLog& log, double warmupSkip) {
  const RunSummary s = summarize(log, warmupSkip);
  auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  nlohmann::json j;
  j["rss"] = finite_or_null(s.rss);
  j["bandwidthBps"] = s.bandwidthBps;
  j["feedbackBandwidthBps"] = s.feedbackBandwidthBps;
  j["lossObserved"] = s.lossObserved;
  j["unstable"] = s.unstable;
  j["diverged"] = log.diverged;
  j["medianSrtt"] = finite_or_null(s.medianSrtt);
  j["ticks"] = log.ticks.size();
  j["holdTicks"] = log.holdTicks;
  j["staleControlPackets"] = log.staleControlPackets;
  j["missedDeadlines"] = log.missedDeadlines;
  return j;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
  return os;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read '" + p.string() + "'");
  return in;
}

}  // namespace detail

/// Writes trajectory.csv, packets.csv, controller.csv and summary.json.
inline void write_run(const std::filesystem::path& dir, const TrajectoryLog& log, double warmupSkip) {
  std::filesystem::create_directories(dir);
  {
    auto os = detail::open_out(dir / "trajectory.csv");
    write_trajectory_csv(os, log);
  }
  {
    auto os = detail::open_out(dir / "packets.csv");
    write_packets_csv(os, log);
  }
  {
    auto os = detail::open_out(dir / "controller.csv");
    write_controller_csv(os, log.controller);
  }
  auto os = detail::open_out(dir / "summary.json");
  os << summary_json(log, warmupSkip).dump(2) << '\n';
}

/// Reads a directory written by write_run. Flags and counters not stored in
/// the CSVs are left at their defaults.
inline TrajectoryLog read_run(const std::filesystem::path& dir, double T, double duration) {
  auto traj = detail::open_in(dir / "trajectory.csv");
  TrajectoryLog log = read_trajectory_csv(traj, T);
  log.duration = duration;
  auto packets = detail::open_in(dir / "packets.csv");
  log.packets = read_packets_csv(packets);
  if (std::filesystem::exists(dir / "controller.csv")) {
    auto ctrl = detail::open_in(dir / "controller.csv");
    log.controller = read_controller_csv(ctrl);
  }
  return log;
}

/// Plant-role output: trajectory.csv, packets.csv (state packets sent),
/// received.csv (control packets) and plant.json (timing counters).
inline void write_plant_run(const std::filesystem::path& dir, const rt::PlantRun& run) {
  std::filesystem::create_directories(dir);
  {
    auto os = detail::open_out(dir / "trajectory.csv");
    write_trajectory_csv(os, run.log);
  }
  {
    auto os = detail::open_out(dir / "packets.csv");
    write_packets_csv(os, run.log);
  }
  {
    auto os = detail::open_out(dir / "received.csv");
    write_receipts_csv(os, run.received);
  }
  auto os = detail::open_out(dir / "plant.json");
  os << nlohmann::json{{"missedDeadlines", run.log.missedDeadlines}}.dump(2) << '\n';
}

/// Controller-role output: controller.csv, packets.csv (control packets
/// sent) and received.csv (state packets).
inline void write_controller_run(const std::filesystem::path& dir, const rt::ControllerRun& run) {
  std::filesystem::create_directories(dir);
  {
    auto os = detail::open_out(dir / "controller.csv");
    write_controller_csv(os, run.records);
  }
  {
    auto os = detail::open_out(dir / "packets.csv");
    TrajectoryLog tmp;
    tmp.packets = run.sent;
    write_packets_csv(os, tmp);
  }
  auto os = detail::open_out(dir / "received.csv");
  write_receipts_csv(os, run.received);
}

inline rt::PlantRun read_plant_run(const std::filesystem::path& dir, const ExperimentConfig& cfg) {
  rt::PlantRun run;
  auto traj = detail::open_in(dir / "trajectory.csv");
  run.log = read_trajectory_csv(traj, cfg.T());
  run.log.duration = cfg.duration;
  for (const auto& r : run.log.ticks) run.log.holdTicks += r.hold > 0.0 ? 1 : 0;
  auto packets = detail::open_in(dir / "packets.csv");
  run.log.packets = read_packets_csv(packets);
  auto rec = detail::open_in(dir / "received.csv");
  run.received = read_receipts_csv(rec);
  if (std::filesystem::exists(dir / "plant.json")) {
    auto in = detail::open_in(dir / "plant.json");
    run.log.missedDeadlines = nlohmann::json::parse(in).value("missedDeadlines", std::uint64_t{0});
  }
  return run;
}

inline rt::ControllerRun read_controller_run(const std::filesystem::path& dir) {
  rt::ControllerRun run;
  auto ctrl = detail::open_in(dir / "controller.csv");
  run.records = read_controller_csv(ctrl);
  auto packets = detail::open_in(dir / "packets.csv");
  run.sent = read_packets_csv(packets);
  auto rec = detail::open_in(dir / "received.csv");
  run.received = read_receipts_csv(rec);
  return run;
}

inline void write_sweep(const std::filesystem::path& dir, const SweepResult& r) {
  std::filesystem::create_directories(dir);
  auto os = detail::open_out(dir / (std::string("sweep_") + to_string(r.spec.param) + ".csv"));
  write_sweep_csv(os, r);
}

}  // namespace npc::io
