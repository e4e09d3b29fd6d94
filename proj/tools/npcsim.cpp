// npcsim: offline, real-time and sweep front end for the networked
// predictive control simulator.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "npc/npc.hpp"

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct CommonOpts {
  std::string config;
  std::vector<std::string> set;
};

void add_common(CLI::App* app, CommonOpts& o) {
  app->add_option("--config", o.config, "key = value configuration file")->check(CLI::ExistingFile);
  app->add_option("--set", o.set, "override one key (key=value), repeatable");
}

npc::ExperimentConfig load(const CommonOpts& o, npc::ExperimentConfig base) {
  npc::ExperimentConfig cfg = o.config.empty() ? base : npc::load_config(o.config, base);
  for (const auto& kv : o.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw npc::ConfigError("--set expects key=value, got '" + kv + "'");
    npc::apply_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void print_summary(const npc::TrajectoryLog& log, double warmup) {
  std::cout << npc::io::summary_json(log, warmup).dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Networked predictive control simulator"};
  app.require_subcommand(1);

  CommonOpts common;
  std::string out = "out";
  std::string listen;
  std::string peer;
  double idle = 3.0;

  auto* offline = app.add_subcommand("offline", "discrete-event run with the simulated network");
  add_common(offline, common);
  offline->add_option("--out", out, "output directory");

  auto* realtime = app.add_subcommand("realtime", "plant, controller and relay as threads over loopback");
  add_common(realtime, common);
  realtime->add_option("--out", out, "output directory");

  auto* plant = app.add_subcommand("plant", "wall-clock plant role");
  add_common(plant, common);
  plant->add_option("--listen", listen, "local address:port")->required();
  plant->add_option("--peer", peer, "relay plant-side address:port")->required();
  plant->add_option("--out", out, "output directory");

  auto* controller = app.add_subcommand("controller", "controller role");
  add_common(controller, common);
  controller->add_option("--listen", listen, "local address:port")->required();
  controller->add_option("--peer", peer, "relay controller-side address:port")->required();
  controller->add_option("--out", out, "output directory");
  controller->add_option("--idle", idle, "exit after this many seconds without packets");

  std::optional<double> baseDelayMs, deviationMs, loss, capacityMbps;
  std::optional<std::uint64_t> seed;
  std::optional<int> controllerPort;
  auto* relay = app.add_subcommand("relay", "impairment relay between plant and controller");
  add_common(relay, common);
  relay->add_option("--listen", listen, "plant-side address:port")->required();
  relay->add_option("--controller-port", controllerPort, "controller-side port (default: listen port + 1)");
  relay->add_option("--peer", peer, "controller address:port")->required();
  relay->add_option("--base-delay-ms", baseDelayMs, "base one-way delay per direction");
  relay->add_option("--deviation-ms", deviationMs, "maximum delay deviation per direction");
  relay->add_option("--loss", loss, "loss probability per direction")->check(CLI::Range(0.0, 1.0));
  relay->add_option("--capacity-mbps", capacityMbps, "link capacity, 0 for unlimited");
  relay->add_option("--seed", seed, "seed for delay phases and loss draws");
  relay->add_option("--idle", idle, "exit after this many seconds without traffic");

  std::string param;
  std::vector<double> values;
  int reps = 5;
  unsigned threads = 0;
  auto* sweep = app.add_subcommand("sweep", "offline parameter sweep");
  add_common(sweep, common);
  sweep->add_option("--param", param, "baseDelay, delayMargin or lossProb")->required();
  sweep->add_option("--values", values, "values to sweep (comma separated)")->required()->delimiter(',');
  sweep->add_option("--reps", reps, "repetitions per value");
  sweep->add_option("--threads", threads, "worker threads, 0 for all cores");
  sweep->add_option("--out", out, "output directory");

  std::string plantDir, controllerDir;
  auto* merge = app.add_subcommand("merge", "join plant and controller role outputs");
  add_common(merge, common);
  merge->add_option("--plant", plantDir, "plant role output directory")->required();
  merge->add_option("--controller", controllerDir, "controller role output directory")->required();
  merge->add_option("--out", out, "output directory");

  auto* show = app.add_subcommand("config", "print the effective configuration");
  add_common(show, common);
  bool showRealtime = false;
  show->add_flag("--realtime", showRealtime, "start from the real-time defaults");

  CLI11_PARSE(app, argc, argv);

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  try {
    using namespace npc;
    if (offline->parsed()) {
      const ExperimentConfig cfg = load(common, offline_defaults());
      const TrajectoryLog log = run_offline(cfg);
      io::write_run(out, log, cfg.warmupSkip);
      print_summary(log, cfg.warmupSkip);
    } else if (realtime->parsed()) {
      const ExperimentConfig cfg = load(common, realtime_defaults());
      const rt::RealtimeResult res = rt::run_realtime(cfg);
      io::write_run(out, res.log, cfg.warmupSkip);
      print_summary(res.log, cfg.warmupSkip);
    } else if (plant->parsed()) {
      const ExperimentConfig cfg = load(common, realtime_defaults());
      udp::Socket sock(udp::parse_endpoint(listen));
      rt::PlantRun run = rt::run_plant(cfg, sock, udp::parse_endpoint(peer),
                                       rt::Clock::now() + std::chrono::milliseconds(100), &g_stop);
      attach_ideal(run.log, run_ideal(cfg));
      io::write_plant_run(out, run);
      std::cerr << "plant: " << run.log.ticks.size() << " ticks, " << run.log.missedDeadlines
                << " missed deadlines\n";
    } else if (controller->parsed()) {
      const ExperimentConfig cfg = load(common, realtime_defaults());
      udp::Socket sock(udp::parse_endpoint(listen));
      const rt::ControllerRun run =
          rt::run_controller(cfg, sock, udp::parse_endpoint(peer), rt::Clock::now(), g_stop, idle);
      io::write_controller_run(out, run);
      std::cerr << "controller: " << run.records.size() << " state packets served\n";
    } else if (relay->parsed()) {
      ExperimentConfig cfg = load(common, realtime_defaults());
      cfg.set_both_channels([&](ChannelConfig& ch) {
        if (baseDelayMs) ch.delay.a0 = *baseDelayMs / 1000.0;
        if (deviationMs) ch.delay.dev = *deviationMs / 1000.0;
        if (loss) ch.lossProb = *loss;
        if (capacityMbps) ch.capacityBps = *capacityMbps * 1e6;
      });
      if (seed) cfg.masterSeed = *seed;
      cfg.validate();
      const udp::Endpoint plantSide = udp::parse_endpoint(listen);
      const auto ctrlPort = controllerPort ? *controllerPort : plantSide.port() + 1;
      if (ctrlPort < 0 || ctrlPort > 65535) throw ConfigError("relay: controller-side port out of range");
      rt::Relay r(cfg.forward, cfg.feedback, cfg.masterSeed, udp::Socket(plantSide),
                  udp::Socket(udp::with_port(plantSide, static_cast<std::uint16_t>(ctrlPort))),
                  udp::parse_endpoint(peer));
      std::cerr << "relay: plant side " << r.plant_side().to_string() << ", controller side "
                << r.controller_side().to_string() << '\n';
      r.run(g_stop, idle);
      const rt::RelayStats st = r.stats();
      std::cerr << "relay: forwarded " << st.forwarded[0] << " forward, " << st.forwarded[1]
                << " feedback; dropped " << st.dropped[0] << " forward, " << st.dropped[1]
                << " feedback; max release lateness " << st.maxLateness * 1e3 << " ms\n";
    } else if (sweep->parsed()) {
      const ExperimentConfig cfg = load(common, offline_defaults());
      SweepSpec spec;
      spec.param = parse_sweep_param(param);
      spec.values = values;
      spec.repetitions = reps;
      spec.threads = threads;
      const SweepResult res = run_sweep(cfg, spec);
      io::write_sweep(out, res);
      for (const auto& p : res.points) {
        std::printf("%s=%g median_rss=%.6g median_bandwidth_bps=%.1f unstable=%d\n", to_string(spec.param),
                    p.value, p.medianRss, p.medianBandwidthBps, p.unstableRuns);
      }
    } else if (merge->parsed()) {
      const ExperimentConfig cfg = load(common, realtime_defaults());
      const TrajectoryLog log =
          rt::merge_runs(io::read_plant_run(plantDir, cfg), io::read_controller_run(controllerDir), cfg);
      io::write_run(out, log, cfg.warmupSkip);
      print_summary(log, cfg.warmupSkip);
    } else if (show->parsed()) {
      std::cout << to_config_text(load(common, showRealtime ? realtime_defaults() : offline_defaults()));
    }
  } catch (const npc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
