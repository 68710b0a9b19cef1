#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lrdq/experiments.hpp"

using namespace lrdq;

namespace {

PacketTrace trace_of(std::vector<PacketRecord> r) { return PacketTrace{std::move(r)}; }

PacketTrace poisson_trace(std::size_t n, std::uint64_t seed) { return generate_poisson(1000.0, 500, n, seed); }

template <class T>
std::vector<T> sorted(std::vector<T> v) {
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    if constexpr (std::is_same_v<T, GapRecord>)
      return a.gap != b.gap ? a.gap < b.gap : a.size < b.size;
    else
      return a < b;
  });
  return v;
}

}  // namespace

TEST(AggregateReplications, Examples) {
  const std::vector<double> same{2, 2, 2};
  auto s = aggregate_replications(same);
  EXPECT_EQ(s.mean, 2.0);
  EXPECT_EQ(s.std_dev, 0.0);

  const std::vector<double> pair{1, 3};
  s = aggregate_replications(pair);
  EXPECT_EQ(s.mean, 2.0);
  EXPECT_DOUBLE_EQ(s.std_dev, std::sqrt(2.0));

  const std::vector<double> one{4.5};
  s = aggregate_replications(one);
  EXPECT_EQ(s.mean, 4.5);
  EXPECT_EQ(s.std_dev, 0.0);

  EXPECT_THROW(aggregate_replications(std::vector<double>{}), Error);
}

TEST(BlockShuffle, SingleBlockIsIdentity) {
  const auto t = poisson_trace(100, 1);
  EXPECT_EQ(block_shuffle(t, 100, 5), t);
  EXPECT_EQ(block_shuffle(t, 1000, 5), t);
}

TEST(BlockShuffle, HandReassembly) {
  // gaps [0, 1, 2, 3], sizes [a, b, c, d] with the two blocks swapped
  const auto t = trace_of({{0, 10}, {1, 20}, {3, 30}, {6, 40}});
  const auto gaps = to_gaps(t);
  const std::vector<std::size_t> swap{1, 0};
  const auto out = from_gaps(assemble_blocks(gaps, 2, swap));
  ASSERT_EQ(out.size(), 4u);
  const double times[] = {0, 3, 3, 4};
  const std::uint32_t sizes[] = {30, 40, 10, 20};
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(out[i].timestamp, times[i]);
    EXPECT_EQ(out[i].size, sizes[i]);
  }
}

TEST(BlockShuffle, PartialFinalBlockParticipates) {
  const auto t = trace_of({{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}});
  const std::vector<std::size_t> order{2, 0, 1};
  const auto out = assemble_blocks(to_gaps(t), 2, order);
  ASSERT_EQ(out.size(), 5u);
  EXPECT_EQ(out[0].size, 5u);
  EXPECT_EQ(out[1].size, 1u);
  const std::vector<std::size_t> bad{0, 0, 1};
  EXPECT_THROW(assemble_blocks(to_gaps(t), 2, bad), Error);
}

TEST(BlockShuffle, ConservationProperty) {
  Rng rng{10};
  for (int trial = 0; trial < 40; ++trial) {
    const auto t = poisson_trace(1 + rng.below(2000), rng.next_u64());
    const std::size_t B = 1 + rng.below(300);
    const auto seed = rng.next_u64();
    const auto gaps = to_gaps(t);
    const auto shuffled_gaps = shuffle_blocks(gaps, B, Rng{seed});
    EXPECT_EQ(sorted(shuffled_gaps), sorted(gaps));

    const auto out = block_shuffle(t, B, seed);
    ASSERT_EQ(out.size(), t.size());
    EXPECT_EQ(out.total_bytes(), t.total_bytes());
    EXPECT_EQ(out, block_shuffle(t, B, seed));
    // Timestamps are re-accumulated, so trace-level gaps match up to rounding.
    if (B >= t.size()) continue;
    const auto back = to_gaps(out);
    for (std::size_t i = 1; i < back.size(); ++i)
      ASSERT_NEAR(back[i].gap, shuffled_gaps[i].gap, 1e-9 * std::max(1.0, t.duration()));
    EXPECT_NEAR(out.duration(), t.duration() - shuffled_gaps.front().gap, 1e-9 * std::max(1.0, t.duration()));
  }
}

TEST(BlockShuffle, ExactOnDyadicGrid) {
  Rng rng{11};
  std::vector<PacketRecord> r;
  double t = 0.0;
  for (int i = 0; i < 5000; ++i) {
    r.push_back({t, static_cast<std::uint32_t>(1 + rng.below(1500))});
    t += static_cast<double>(rng.below(1024)) / 1024.0;
  }
  const auto trace = trace_of(r);
  const auto gaps = to_gaps(trace);
  for (std::size_t B : {1u, 7u, 100u}) {
    // On a dyadic grid every timestamp sum is exact, so the shuffled trace
    // reproduces the shuffled gap sequence bit for bit (head gap becomes 0).
    auto expect = shuffle_blocks(gaps, B, Rng{3});
    const auto out = block_shuffle(trace, B, 3);
    EXPECT_EQ(sorted(expect), sorted(gaps));
    expect.front().gap = 0.0;
    EXPECT_EQ(to_gaps(out), expect);
  }
}

TEST(BlockShuffle, Preconditions) {
  const auto t = poisson_trace(10, 1);
  EXPECT_THROW(block_shuffle(t, 0, 1), Error);
  EXPECT_THROW(block_shuffle(PacketTrace{}, 2, 1), Error);
}

TEST(SampleSizeSweep, FullSizeHasNoSpread) {
  const auto t = poisson_trace(2000, 4);
  const std::vector<std::size_t> sizes{2000};
  ReplicationPlan plan{10, 1};
  const auto r = sample_size_sweep(t, sizes, ServiceRate::utilization(0.5), plan);
  ASSERT_EQ(r.points.size(), 1u);
  EXPECT_EQ(r.points[0].std_dev, 0.0);
  EXPECT_EQ(r.points[0].replication_means.size(), 10u);
  EXPECT_EQ(r.points[0].mean, packet_fifo_stats(t, r.bandwidth).mean_queue);
}

TEST(SampleSizeSweep, ConstantRateIsFlat) {
  std::vector<PacketRecord> rec;
  for (int i = 0; i < 10000; ++i) rec.push_back({i * 0.001, 100});
  const auto t = trace_of(rec);
  const std::vector<std::size_t> sizes{100, 1000, 10000};
  const auto r = sample_size_sweep(t, sizes, ServiceRate::bytes_per_second(200000.0), ReplicationPlan{5, 2});
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    // n packets, each in system 0.5 ms, over (n - 1) ms + 0.5 ms
    const double n = static_cast<double>(sizes[j]);
    EXPECT_NEAR(r.points[j].mean, 0.5 * n / (n - 0.5), 1e-9);
    EXPECT_LT(r.points[j].std_dev, 1e-9);
  }
}

TEST(SampleSizeSweep, Errors) {
  const auto t = poisson_trace(100, 4);
  const std::vector<std::size_t> sizes{101};
  EXPECT_THROW(sample_size_sweep(t, sizes, ServiceRate::utilization(0.5), ReplicationPlan{}), Error);
  EXPECT_THROW(ServiceRate::utilization(1.0), Error);
  EXPECT_THROW(ServiceRate::bytes_per_second(0.0), Error);
}

TEST(SampleSizeSweep, DeterministicAcrossThreadCounts) {
  const auto t = poisson_trace(20000, 8);
  const std::vector<std::size_t> sizes{100, 1000, 5000};
  ReplicationPlan one{6, 99, 1};
  ReplicationPlan four{6, 99, 4};
  const auto a = sample_size_sweep(t, sizes, ServiceRate::utilization(0.7), one);
  const auto b = sample_size_sweep(t, sizes, ServiceRate::utilization(0.7), four);
  std::ostringstream ca, cb;
  write_sweep_csv(ca, a);
  write_sweep_csv(cb, b);
  EXPECT_EQ(ca.str(), cb.str());
}

TEST(SampleSizeSweep, GeneratorSource) {
  PacketSource src = PoissonPacketSource{100.0, 1000};
  const std::vector<std::size_t> sizes{10, 100};
  const auto r = sample_size_sweep(src, sizes, ServiceRate::utilization(0.5), ReplicationPlan{4, 3});
  EXPECT_DOUBLE_EQ(r.bandwidth, 2e5);
  ASSERT_EQ(r.points.size(), 2u);
  EXPECT_GT(r.points[0].std_dev, 0.0);
  const auto again = sample_size_sweep(src, sizes, ServiceRate::utilization(0.5), ReplicationPlan{4, 3});
  EXPECT_EQ(r.points[1].replication_means, again.points[1].replication_means);
}

TEST(BlocksizeSweep, BaselineAndShape) {
  const auto t = poisson_trace(5000, 12);
  const std::vector<std::size_t> blocks{1, 10, 100, 5000};
  const auto r = blocksize_sweep(t, blocks, ServiceRate::utilization(0.6), ReplicationPlan{10, 5});
  ASSERT_TRUE(r.baseline);
  EXPECT_EQ(r.baseline->x, 5000.0);
  EXPECT_EQ(r.baseline->std_dev, 0.0);
  EXPECT_EQ(r.points.back().mean, r.baseline->mean);
  EXPECT_EQ(r.points.back().std_dev, 0.0);
  for (std::size_t j = 0; j + 1 < r.points.size(); ++j) EXPECT_GT(r.points[j].std_dev, 0.0);
}

TEST(SweepCsv, Format) {
  SweepResult r;
  r.axis = SweepAxis::blocksize_packets;
  r.points.push_back({10, 1.5, 0.5, {1.0, 2.0}});
  r.baseline = SweepPoint{100, 3.0, 0.0, {3.0, 3.0}};
  std::ostringstream out;
  write_sweep_csv(out, r, "abc123");
  EXPECT_EQ(out.str(), "# manifest: abc123\nx,mean,std,rep_1,rep_2\n10,1.5,0.5,1,2\n100,3,0,3,3\n");

  std::ostringstream gp;
  write_gnuplot_script(gp, r, "sweep.csv", "sweep.png");
  EXPECT_NE(gp.str().find("yerrorbars"), std::string::npos);
  EXPECT_NE(gp.str().find("Blocksize"), std::string::npos);
  EXPECT_NE(gp.str().find("every ::0::0"), std::string::npos);
}
