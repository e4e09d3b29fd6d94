#include <cmath>

#include <gtest/gtest.h>

#include "npc/control_unit.hpp"

namespace npc {
namespace {

constexpr double T = 0.008;

ControlBuffer filled(Tick from, std::vector<double> values) {
  ControlBuffer b;
  for (std::size_t i = 0; i < values.size(); ++i) b.set(from + static_cast<std::int64_t>(i), values[i]);
  return b;
}

TEST(ControlBuffer, SetExtendsWithLastValue) {
  ControlBuffer b;
  b.set(Tick{10}, 1.0);
  b.set(Tick{13}, 4.0);
  EXPECT_EQ(b.first(), Tick{10});
  EXPECT_EQ(b.end(), Tick{14});
  EXPECT_EQ(b.value(Tick{11}), 1.0);
  EXPECT_EQ(b.value(Tick{13}), 4.0);
  EXPECT_EQ(b.value(Tick{50}), 4.0);
  EXPECT_EQ(b.value(Tick{9}), 0.0);
  b.set(Tick{8}, 2.0);
  EXPECT_EQ(b.first(), Tick{8});
  EXPECT_EQ(b.value(Tick{9}), 0.0);
  b.prune_before(Tick{11});
  EXPECT_EQ(b.first(), Tick{11});
  EXPECT_EQ(b.size(), 3u);
}

TEST(Predict, ZeroStepsIsIdentity) {
  const PlantState x{0.3, -0.7};
  const PlantState p = predict(x, Tick{5}, Tick{5}, ControlBuffer{}, PlantParams::nominal(T), T);
  EXPECT_EQ(p.x1, x.x1);
  EXPECT_EQ(p.x2, x.x2);
}

TEST(Predict, Coast) {
  const ControlBuffer b = filled(Tick{0}, std::vector<double>(10, 0.0));
  const PlantState p = predict({0.0, 1.0}, Tick{0}, Tick{10}, b, PlantParams::nominal(T), T);
  EXPECT_NEAR(p.x1, 0.08, 1e-15);
  EXPECT_EQ(p.x2, 1.0);
}

TEST(Predict, EqualsManualComposition) {
  const std::vector<double> u{0.5, -1.0, 2.0, 0.25, -0.75};
  const PlantParams th{0.993, 0.0085, 2e-4};
  const ControlBuffer b = filled(Tick{20}, u);
  PlantState manual{0.1, 0.2};
  for (double v : u) manual = plant_step(manual, v, th, T);
  const PlantState p = predict({0.1, 0.2}, Tick{20}, Tick{25}, b, th, T);
  EXPECT_EQ(p.x1, manual.x1);
  EXPECT_EQ(p.x2, manual.x2);
}

TEST(Predict, CompositionProperty) {
  SeededRng rng = derive_stream(21, "predict-compose");
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_u64() % 60);
    std::vector<double> u(n);
    for (auto& v : u) v = rng.normal(0.0, 5.0);
    const PlantParams th{rng.uniform(0.98, 1.0), rng.uniform(0.006, 0.01), rng.uniform(-1e-3, 1e-3)};
    const Tick from{static_cast<std::int64_t>(rng.next_u64() % 1000)};
    const PlantState x0{rng.normal(), rng.normal()};
    PlantState manual = x0;
    for (double v : u) manual = plant_step(manual, v, th, T);
    const PlantState p = predict(x0, from, from + n, filled(from, u), th, T);
    ASSERT_EQ(p.x1, manual.x1);
    ASSERT_EQ(p.x2, manual.x2);
  }
}

TEST(Predict, GapNamesFirstMissingTick) {
  const ControlBuffer b = filled(Tick{10}, {1.0, 2.0, 3.0});
  try {
    predict({}, Tick{10}, Tick{20}, b, PlantParams::nominal(T), T);
    FAIL() << "expected BufferGap";
  } catch (const BufferGap& g) {
    EXPECT_EQ(g.tick, Tick{13});
  }
  try {
    predict({}, Tick{7}, Tick{12}, b, PlantParams::nominal(T), T);
    FAIL() << "expected BufferGap";
  } catch (const BufferGap& g) {
    EXPECT_EQ(g.tick, Tick{7});
  }
  EXPECT_THROW(predict({}, Tick{12}, Tick{11}, b, PlantParams::nominal(T), T), std::invalid_argument);
}

TEST(Predict, MatrixFormAgreesWithIntegrator) {
  SeededRng rng = derive_stream(22, "predict-matrix");
  for (int trial = 0; trial < 200; ++trial) {
    const int n = static_cast<int>(rng.next_u64() % 120);
    std::vector<double> u(std::max(n, 1));
    for (auto& v : u) v = rng.normal(0.0, 3.0);
    const PlantParams th = trial % 2 ? PlantParams::nominal(T)
                                     : PlantParams{rng.uniform(0.98, 1.0), rng.uniform(0.006, 0.01),
                                                   rng.uniform(-1e-3, 1e-3)};
    const PlantState x0{rng.normal(), rng.normal()};
    const ControlBuffer b = filled(Tick{0}, u);
    const PlantState a = predict(x0, Tick{0}, Tick{n}, b, th, T);
    const PlantState m = predict_matrix(x0, Tick{0}, Tick{n}, b, th, T);
    ASSERT_NEAR(a.x1, m.x1, 1e-9);
    ASSERT_NEAR(a.x2, m.x2, 1e-9);
  }
}

ControlUnitConfig quiet_config() {
  ControlUnitConfig c;
  c.reference.amplitude = 0.0;
  return c;
}

TEST(BuildControl, EquilibriumGivesZeroWindow) {
  ControlUnitConfig cfg = quiet_config();
  cfg.nominalRtt = 0.0;
  const BuildResult r = build_control(StatePacket{1, Tick{100}, 0.0, 0.0, 0, 0.0}, PlantParams::nominal(T),
                                      ControlBuffer{}, RttEstimate{}, lqr_gain(cfg.weights), cfg);
  ASSERT_EQ(r.sequence.values.size(), 16u);
  for (double v : r.sequence.values) EXPECT_EQ(v, 0.0);
}

TEST(BuildControl, WindowSizeAndHorizon) {
  const ControlUnitConfig cfg;
  const BuildResult r = build_control(StatePacket{1, Tick{0}, 0.5, 0.0, 0, 0.0}, PlantParams::nominal(T),
                                      ControlBuffer{}, RttEstimate{}, lqr_gain(cfg.weights), cfg);
  EXPECT_EQ(r.sequence.values.size(), 16u);
  EXPECT_GE(r.buffer.end() - r.now, 100);
  // 250 ms at 8 ms ticks: now = s + 16, first actuated tick = s + 32.
  EXPECT_EQ(r.now, Tick{16});
  EXPECT_EQ(r.predictedArrival, Tick{32});
  EXPECT_EQ(r.sequence.startTick, Tick{28});
}

TEST(BuildControl, WindowEqualsBuffer) {
  const ControlUnitConfig cfg;
  SeededRng rng = derive_stream(23, "window");
  ControlBuffer buffer;
  RttEstimate rtt{0.26, 0.26, 3};
  for (std::int64_t s = 0; s < 300; ++s) {
    const StatePacket pkt{static_cast<std::uint32_t>(s + 1), Tick{s}, rng.normal(), rng.normal(), 0, 0.0};
    BuildResult r = build_control(pkt, PlantParams::nominal(T), std::move(buffer), rtt, lqr_gain(cfg.weights), cfg);
    for (std::size_t i = 0; i < r.sequence.values.size(); ++i) {
      ASSERT_EQ(r.sequence.values[i], r.buffer.value(r.sequence.startTick + static_cast<std::int64_t>(i)));
    }
    buffer = std::move(r.buffer);
  }
}

TEST(BuildControl, ReuseKeepsCommittedRegion) {
  const ControlUnitConfig cfg;
  const GainVector K = lqr_gain(cfg.weights);
  const RttEstimate rtt{0.25, 0.25, 5};
  const BuildResult first = build_control(StatePacket{1, Tick{200}, 0.3, 0.1, 0, 0.0}, PlantParams::nominal(T),
                                          ControlBuffer{}, rtt, K, cfg);
  const BuildResult second = build_control(StatePacket{2, Tick{201}, 0.35, 0.05, 0, 0.0}, PlantParams::nominal(T),
                                           first.buffer, rtt, K, cfg);
  const Tick boundary = second.predictedArrival + cfg.reuseGuard;
  ASSERT_LT(second.now, boundary);
  for (Tick t = second.now; t < boundary; t = t + 1) {
    EXPECT_EQ(second.buffer.value(t), first.buffer.value(t)) << t.k;
  }
  // Outside the committed region the new measurement changes the plan.
  EXPECT_NE(second.buffer.value(boundary + 5), first.buffer.value(boundary + 5));
}

TEST(BuildControl, NoPredictorPlansFromSampleTick) {
  ControlUnitConfig cfg;
  cfg.usePredictor = false;
  const BuildResult r = build_control(StatePacket{1, Tick{40}, 0.5, 0.0, 0, 0.0}, PlantParams::nominal(T),
                                      ControlBuffer{}, RttEstimate{}, lqr_gain(cfg.weights), cfg);
  EXPECT_EQ(r.now, Tick{40});
  EXPECT_EQ(r.sequence.startTick, Tick{40 - cfg.effective_pre_window()});
}

TEST(Rtt, Examples) {
  const SendLog log{{1, 0.0}, {2, 1.0}};
  RttEstimate r = rtt_update({}, 1, 0.0, log, 0.25);
  EXPECT_DOUBLE_EQ(r.srtt, 0.25);
  EXPECT_EQ(r.samples, 1u);

  r = rtt_update({0.2, 0.2, 4}, 2, 0.0, log, 1.3);
  EXPECT_DOUBLE_EQ(r.srtt, 0.2125);

  r = rtt_update({}, 1, 0.04, log, 0.29);
  EXPECT_NEAR(r.latest, 0.25, 1e-15);

  const RttEstimate before{0.3, 0.3, 2};
  r = rtt_update(before, 99, 0.0, log, 5.0);
  EXPECT_EQ(r.samples, 2u);
  EXPECT_EQ(r.srtt, 0.3);
}

TEST(ControlUnit, FirstPacketAndSequencing) {
  ControlUnit cu(ControlUnitConfig{});
  EXPECT_EQ(cu.gain().k1, lqr_gain({}).k1);
  const auto p1 = cu.on_state_packet({1, Tick{0}, 0.0, 0.0, 0, 0.0}, 0.0);
  ASSERT_TRUE(p1.has_value());
  EXPECT_EQ(p1->seq, 1u);
  EXPECT_EQ(p1->basedOnStateSeq, 1u);
  EXPECT_EQ(p1->sequence.values.size(), 16u);
  const auto p2 = cu.on_state_packet({3, Tick{2}, 0.0, 0.0, 0, 0.0}, 0.016);
  ASSERT_TRUE(p2.has_value());
  EXPECT_EQ(p2->seq, 2u);
}

TEST(ControlUnit, StaleStateDiscarded) {
  ControlUnit cu(ControlUnitConfig{});
  ASSERT_TRUE(cu.on_state_packet({5, Tick{4}, 0.0, 0.0, 0, 0.0}, 0.0));
  EXPECT_FALSE(cu.on_state_packet({4, Tick{3}, 0.0, 0.0, 0, 0.0}, 0.01));
  EXPECT_FALSE(cu.on_state_packet({5, Tick{4}, 0.0, 0.0, 0, 0.0}, 0.01));
  EXPECT_EQ(cu.stale_states(), 2u);
}

TEST(ControlUnit, RttFromEcho) {
  ControlUnit cu(ControlUnitConfig{});
  ASSERT_TRUE(cu.on_state_packet({1, Tick{0}, 0.0, 0.0, 0, 0.0}, 0.0));
  EXPECT_FALSE(cu.rtt().valid());
  ASSERT_TRUE(cu.on_state_packet({2, Tick{30}, 0.0, 0.0, 1, 0.02}, 0.27));
  ASSERT_TRUE(cu.last_rtt_sample().has_value());
  EXPECT_NEAR(*cu.last_rtt_sample(), 0.25, 1e-12);
  EXPECT_NEAR(cu.rtt().srtt, 0.25, 1e-12);
}

TEST(ControlUnit, EstimatorOffUsesNominal) {
  ControlUnitConfig cfg;
  cfg.useEstimator = false;
  ControlUnit cu(cfg);
  for (std::uint32_t i = 1; i < 50; ++i) {
    cu.on_state_packet({i, Tick{i}, 0.01 * i, 0.3, 0, 0.0}, i * T);
  }
  EXPECT_EQ(cu.trend_estimator().theta(), PlantParams::nominal(T));
}

TEST(ControlUnitConfig, Validation) {
  ControlUnitConfig c;
  EXPECT_NO_THROW(c.validate());
  c.horizon = 10;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.preWindow = 16;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.lambda = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_estimator_model("rls"), EstimatorModel::Rls);
  EXPECT_THROW(parse_estimator_model("kalman"), ConfigError);
}

}  // namespace
}  // namespace npc
