#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lrdq/queue_sim.hpp"
#include "lrdq/synth.hpp"

using namespace lrdq;

namespace {

FluidOnOffProcess process(double m, std::vector<OnOffCycle> cycles) {
  FluidOnOffProcess p;
  p.on_rate = m;
  p.cycles = std::move(cycles);
  return p;
}

PacketTrace trace_of(std::vector<PacketRecord> r) { return PacketTrace{std::move(r)}; }

// Test-only oracle: explicit time stepping of dQ/dt = A_t - 1 (clipped at 0).
double fluid_area_by_stepping(const FluidOnOffProcess& p, double dt) {
  double q = 0.0, area = 0.0;
  for (const auto& c : p.cycles) {
    const auto steps_on = static_cast<long>(std::llround(c.on / dt));
    for (long k = 0; k < steps_on; ++k) {
      const double next = q + (p.on_rate - 1.0) * dt;
      area += 0.5 * (q + next) * dt;
      q = next;
    }
    const auto steps_off = static_cast<long>(std::llround(c.off / dt));
    for (long k = 0; k < steps_off; ++k) {
      const double next = std::max(0.0, q - dt);
      area += q >= dt ? 0.5 * (q + next) * dt : 0.5 * q * q;
      q = next;
    }
  }
  return area;
}

// Test-only oracle: by Little's identity the queue integral equals the total sojourn time.
double sojourn_total(const PacketTrace& t, double b) {
  double dep = 0.0, total = 0.0;
  for (const auto& r : t) {
    dep = std::max(dep, r.timestamp) + r.size / b;
    total += dep - r.timestamp;
  }
  return total;
}

}  // namespace

TEST(FluidQueue, SingleCycleTriangle) {
  const auto run = fluid_queue(process(3.0, {{2.0, 6.0}}));
  EXPECT_DOUBLE_EQ(run.stats.peak_queue, 4.0);
  EXPECT_DOUBLE_EQ(run.stats.area, 12.0);
  EXPECT_DOUBLE_EQ(run.stats.horizon, 8.0);
  EXPECT_DOUBLE_EQ(run.stats.mean_queue, 1.5);
  // busy during the 2 s on period and the 4 s drain
  EXPECT_DOUBLE_EQ(run.stats.utilization, 0.75);
  EXPECT_DOUBLE_EQ(run.stats.empty_fraction, 0.25);
  EXPECT_FALSE(run.stats.no_queue);
  ASSERT_EQ(run.path.points.size(), 4u);
  EXPECT_DOUBLE_EQ(run.path.level_at(2.0), 4.0);
  EXPECT_DOUBLE_EQ(run.path.level_at(4.0), 2.0);
  EXPECT_DOUBLE_EQ(run.path.level_at(7.0), 0.0);
}

TEST(FluidQueue, ReorderedExample) {
  const std::vector<double> on{1.0, 2.0};
  const auto s = fluid_queue_stats(reorder_nonoverlap(on, 2.0, 0.5));
  EXPECT_DOUBLE_EQ(s.area, 5.0);
  EXPECT_DOUBLE_EQ(s.horizon, 12.0);
  EXPECT_NEAR(s.mean_queue, 5.0 / 12.0, 1e-15);
}

TEST(FluidQueue, HugeOffPeriodsEmptyTheQueue) {
  const auto s = fluid_queue_stats(process(2.0, {{1.0, 1e9}, {2.0, 1e9}}));
  EXPECT_NEAR(s.mean_queue, 5.0 / (3.0 + 2e9), 1e-20);
  EXPECT_GT(s.empty_fraction, 1.0 - 1e-8);
}

TEST(FluidQueue, OverlappingCyclesCarryQueue) {
  // m = 2: rise to 1, drain 0.5 during off, rise again to 2, drain to 0.
  const auto run = fluid_queue(process(2.0, {{1.0, 0.5}, {1.0, 3.0}}));
  EXPECT_DOUBLE_EQ(run.stats.peak_queue, 1.5);
  // 0.5 + (1*0.5 - 0.125) + (0.5*1 + 0.5) + 1.5^2/2
  EXPECT_DOUBLE_EQ(run.stats.area, 0.5 + 0.375 + 1.0 + 1.125);
  EXPECT_DOUBLE_EQ(run.path.points.back().level, 0.0);
}

TEST(FluidQueue, MatchesTimeSteppingOracle) {
  Rng rng{8};
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<OnOffCycle> cycles;
    for (int i = 0; i < 20; ++i)
      cycles.push_back({static_cast<double>(1 + rng.below(64)) / 16.0, static_cast<double>(rng.below(128)) / 16.0});
    const auto p = process(1.0 + static_cast<double>(1 + rng.below(32)) / 8.0, cycles);
    const double exact = fluid_queue_stats(p).area;
    EXPECT_NEAR(fluid_area_by_stepping(p, 1.0 / 1024.0), exact, 1e-9 * std::max(1.0, exact));
  }
}

TEST(FluidQueue, RateAtMostOneGivesNoQueue) {
  const auto s = fluid_queue_stats(process(0.8, {{1.0, 1.0}}));
  EXPECT_TRUE(s.no_queue);
  EXPECT_EQ(s.mean_queue, 0.0);
  EXPECT_EQ(s.peak_queue, 0.0);
  EXPECT_EQ(s.horizon, 2.0);
}

TEST(FluidQueue, ReorderingIdentityRandomSets) {
  Rng rng{31};
  const HeavyTailSpec tail{1.5, 1.0};
  for (int trial = 0; trial < 100; ++trial) {
    const double m = 1.0 + 9.0 * rng.uniform_open_closed();
    const double lambda = 0.01 + 0.98 * rng.uniform();
    std::vector<double> x(1 + rng.below(2000));
    for (auto& v : x) v = tail.sample(rng.uniform_open_closed());
    double s1 = 0, s2 = 0;
    for (double v : x) {
      s1 += v;
      s2 += v * v;
    }
    const double expect = lambda * (m - 1.0) * s2 / (2.0 * s1);
    const double got = fluid_queue_stats(reorder_nonoverlap(x, m, lambda)).mean_queue;
    EXPECT_NEAR(got / expect, 1.0, 1e-9);
  }
}

TEST(FluidQueue, PathInvariants) {
  GeneratorSpec spec;
  spec.n_cycles = 300;
  const auto run = fluid_queue(generate_onoff(spec, 4));
  const auto& pts = run.path.points;
  EXPECT_EQ(pts.front().time, 0.0);
  EXPECT_EQ(pts.front().level, 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    EXPECT_GE(pts[i].time, pts[i - 1].time);
    EXPECT_GE(pts[i].level, 0.0);
  }
  EXPECT_GE(run.stats.peak_queue, run.stats.mean_queue);
  EXPECT_NEAR(run.stats.mean_queue, run.stats.area / run.stats.horizon, 1e-15 * run.stats.mean_queue);
}

TEST(PacketFifo, SinglePacket) {
  const auto s = packet_fifo_stats(trace_of({{0.0, 100}}), 100.0);
  EXPECT_DOUBLE_EQ(s.area, 1.0);
  EXPECT_DOUBLE_EQ(s.horizon, 1.0);
  EXPECT_DOUBLE_EQ(s.mean_queue, 1.0);
  EXPECT_DOUBLE_EQ(s.utilization, 1.0);
}

TEST(PacketFifo, OverlappingPackets) {
  const auto run = packet_fifo(trace_of({{0.0, 100}, {0.5, 100}}), 100.0);
  EXPECT_DOUBLE_EQ(run.stats.area, 2.5);
  EXPECT_DOUBLE_EQ(run.stats.horizon, 2.0);
  EXPECT_DOUBLE_EQ(run.stats.mean_queue, 1.25);
  EXPECT_DOUBLE_EQ(run.stats.peak_queue, 2.0);
  EXPECT_EQ(run.path.shape, QueuePath::Shape::piecewise_constant);
  EXPECT_EQ(run.path.level_at(0.25), 1.0);
  EXPECT_EQ(run.path.level_at(0.75), 2.0);
  EXPECT_EQ(run.path.level_at(1.5), 1.0);
  EXPECT_EQ(run.path.level_at(2.0), 0.0);
}

TEST(PacketFifo, SeparatedPackets) {
  const auto s = packet_fifo_stats(trace_of({{0.0, 100}, {10.0, 100}}), 100.0);
  EXPECT_DOUBLE_EQ(s.horizon, 11.0);
  EXPECT_DOUBLE_EQ(s.mean_queue, 2.0 / 11.0);
  EXPECT_DOUBLE_EQ(s.utilization, 2.0 / 11.0);
  EXPECT_DOUBLE_EQ(s.empty_fraction, 9.0 / 11.0);
}

TEST(PacketFifo, DepartureBeforeArrivalAtSameInstant) {
  // Packet 1 departs at t = 1 exactly when packet 2 arrives: level never reaches 2.
  const auto s = packet_fifo_stats(trace_of({{0.0, 100}, {1.0, 100}}), 100.0);
  EXPECT_EQ(s.peak_queue, 1.0);
  EXPECT_DOUBLE_EQ(s.mean_queue, 1.0);
}

TEST(PacketFifo, Preconditions) {
  EXPECT_THROW(packet_fifo_stats(trace_of({{0.0, 100}}), 0.0), Error);
  EXPECT_THROW(packet_fifo_stats(PacketTrace{}, 10.0), Error);
}

TEST(PacketFifo, WorkConservationAndLittle) {
  Rng rng{12};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PacketRecord> r;
    double t = 0.0;
    const auto n = 1 + rng.below(3000);
    double work_bytes = 0.0;
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto size = static_cast<std::uint32_t>(40 + rng.below(1461));
      r.push_back({t, size});
      work_bytes += size;
      if (rng.below(10) != 0) t += rng.exponential(0.001);
    }
    const auto trace = trace_of(r);
    const double b = 1e6 * (0.2 + rng.uniform());
    const auto s = packet_fifo_stats(trace, b);
    const double busy = s.busy_time;
    EXPECT_NEAR(busy, work_bytes / b, 1e-9 * (work_bytes / b));
    EXPECT_NEAR(s.area, sojourn_total(trace, b), 1e-9 * s.area);
    EXPECT_GE(s.peak_queue, s.mean_queue);
    EXPECT_NEAR(s.utilization + s.empty_fraction, 1.0, 1e-12);
  }
}

TEST(PacketFifo, LindleyDeparturesFromPath) {
  // Departures read off the path (level decrements) follow max(arrival, prev) + l/b.
  const auto trace = trace_of({{0.0, 200}, {0.5, 100}, {0.6, 300}, {5.0, 100}, {5.0, 100}});
  const double b = 100.0;
  const auto run = packet_fifo(trace, b);
  std::vector<double> departures;
  for (std::size_t i = 1; i < run.path.points.size(); ++i)
    if (run.path.points[i].level < run.path.points[i - 1].level) departures.push_back(run.path.points[i].time);
  EXPECT_EQ(departures, (std::vector<double>{2.0, 3.0, 6.0, 7.0, 8.0}));
  EXPECT_EQ(run.stats.horizon, 8.0);
  EXPECT_EQ(run.stats.peak_queue, 3.0);

  double prev = 0.0;
  double area = 0.0;
  for (const auto& r : trace) {
    const double start = std::max(prev, r.timestamp);
    EXPECT_GE(start - r.timestamp, 0.0);
    prev = start + r.size / b;
    area += prev - r.timestamp;
  }
  EXPECT_DOUBLE_EQ(run.stats.area, area);
}

TEST(PrefixMeanQueue, FullSizeMatchesSimulation) {
  std::vector<PacketRecord> r;
  for (int i = 0; i < 100; ++i) r.push_back({i * 0.01, static_cast<std::uint32_t>(100 + (i * 37) % 900)});
  const auto trace = trace_of(r);
  const std::vector<std::size_t> sizes{100};
  const auto out = prefix_mean_queue(trace, sizes, 60000.0);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].mean_queue, packet_fifo_stats(trace, 60000.0).mean_queue);
}

TEST(PrefixMeanQueue, DeterministicArrivalsAreFlat) {
  std::vector<PacketRecord> r;
  for (int i = 0; i < 1000; ++i) r.push_back({i * 1.0, 50});
  const auto trace = trace_of(r);
  const std::vector<std::size_t> sizes{1, 10, 100, 1000};
  for (const auto& p : prefix_mean_queue(trace, sizes, 100.0)) {
    // each packet is alone in the system for 0.5 s of every 1 s slot, then the
    // horizon ends at the last departure
    const double n = static_cast<double>(p.size);
    EXPECT_NEAR(p.mean_queue, 0.5 * n / (n - 0.5), 1e-12);
  }
}

TEST(PrefixMeanQueue, Errors) {
  const auto trace = trace_of({{0.0, 1}, {1.0, 1}});
  const std::vector<std::size_t> too_big{3};
  const std::vector<std::size_t> decreasing{2, 1};
  EXPECT_THROW(prefix_mean_queue(trace, too_big, 1.0), Error);
  EXPECT_THROW(prefix_mean_queue(trace, decreasing, 1.0), Error);
}

TEST(PrefixMeanQueue, FluidPrefixes) {
  const std::vector<double> on{1.0, 2.0, 3.0};
  const auto p = reorder_nonoverlap(on, 2.0, 0.5);
  const std::vector<std::size_t> sizes{1, 2, 3};
  const auto out = prefix_mean_queue(p, sizes);
  EXPECT_DOUBLE_EQ(out[0].mean_queue, 1.0 / 4.0);
  EXPECT_DOUBLE_EQ(out[1].mean_queue, 5.0 / 12.0);
  EXPECT_DOUBLE_EQ(out[2].mean_queue, 14.0 / 24.0);
}

TEST(FluidPacketAgreement, DiscrepancyShrinksWithPacketSize) {
  // Work units map to bytes / server_rate, so packets * P / s tracks fluid work.
  GeneratorSpec spec;
  spec.tail = HeavyTailSpec{1.5, 0.05};
  spec.off_model = Reordered{};
  spec.n_cycles = 200;
  const auto p = generate_onoff(spec, 21);
  const double server_rate = 1e6;
  const double fluid_area = fluid_queue_stats(p).area;
  double previous_error = INFINITY;
  for (std::uint32_t size : {2000u, 200u}) {
    const auto trace = packetize(p, size, server_rate).trace;
    const auto s = packet_fifo_stats(trace, server_rate);
    const double packet_area = s.area * size / server_rate;
    const double err = std::fabs(packet_area - fluid_area) / fluid_area;
    EXPECT_LT(err, previous_error);
    previous_error = err;
  }
  EXPECT_LT(previous_error, 0.01);
}

TEST(LowerBound, ReorderedNeverExceedsOriginal) {
  Rng rng{55};
  GeneratorSpec spec;
  spec.tail = HeavyTailSpec{1.5, 1.0};
  for (int trial = 0; trial < 30; ++trial) {
    spec.on_rate = 1.5 + 3.0 * rng.uniform();
    spec.lambda_target = 0.2 + 0.6 * rng.uniform();
    spec.n_cycles = 50 + rng.below(500);
    const auto original = extend_to_drain(generate_onoff(spec, rng.next_u64()));
    const auto reordered = reorder_nonoverlap(original.on_lengths(), spec.on_rate, spec.lambda_target);
    const double horizon = std::max(original.horizon(), reordered.horizon());
    const auto qo = fluid_queue_stats(pad_to_horizon(original, horizon)).mean_queue;
    const auto qr = fluid_queue_stats(pad_to_horizon(reordered, horizon)).mean_queue;
    EXPECT_GE(qo, qr * (1 - 1e-12));
  }
}
