#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "lrdq/error.hpp"
#include "lrdq/numeric.hpp"
#include "lrdq/queue_sim.hpp"
#include "lrdq/rng.hpp"
#include "lrdq/synth.hpp"
#include "lrdq/trace.hpp"

namespace lrdq {

/// Replication i of a plan draws from Rng(master_seed).substream(i); the sweep
/// point j of that replication uses the further substream j. Results depend on
/// (plan, inputs) only, never on thread scheduling.
struct ReplicationPlan {
  std::size_t replications = 10;
  std::uint64_t master_seed = 0;
  unsigned threads = 1;

  Rng stream(std::size_t replication, std::size_t point) const {
    return Rng{master_seed}.substream(replication).substream(point);
  }
};

struct ReplicationSummary {
  double mean = 0.0;
  double std_dev = 0.0;
};

/// Arithmetic mean and sample standard deviation (n - 1); std is 0 for one value.
inline ReplicationSummary aggregate_replications(std::span<const double> means) {
  if (means.empty()) throw Error("no replications to aggregate");
  // Shifted by the first value: identical inputs give exactly that value and std 0.
  const double shift = means.front();
  CompensatedSum s;
  for (double x : means) s += x - shift;
  ReplicationSummary out;
  out.mean = shift + s.value() / static_cast<double>(means.size());
  if (means.size() > 1) {
    CompensatedSum sq;
    for (double x : means) sq += (x - out.mean) * (x - out.mean);
    out.std_dev = std::sqrt(sq.value() / static_cast<double>(means.size() - 1));
  }
  return out;
}

enum class SweepAxis { sample_size_packets, blocksize_packets };

inline const char* to_string(SweepAxis a) {
  return a == SweepAxis::sample_size_packets ? "sample_size_packets" : "blocksize_packets";
}

struct SweepPoint {
  double x = 0.0;
  double mean = 0.0;
  double std_dev = 0.0;
  std::vector<double> replication_means;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::sample_size_packets;
  std::vector<SweepPoint> points;
  /// Unshuffled reference for block sweeps; x is the trace's packet count.
  std::optional<SweepPoint> baseline;
  double bandwidth = 0.0;
};

/// Server rate for a sweep: either explicit, or derived once from the source
/// so that the offered load equals rho.
class ServiceRate {
public:
  static ServiceRate bytes_per_second(double b) {
    if (!(b > 0.0) || !std::isfinite(b)) throw Error("bandwidth must be positive");
    return ServiceRate{b, false};
  }

  static ServiceRate utilization(double rho) {
    if (!(rho > 0.0 && rho < 1.0)) throw Error("utilization must lie in (0, 1)");
    return ServiceRate{rho, true};
  }

  double resolve(const PacketTrace& trace) const {
    return is_rho_ ? bandwidth_for_utilization(trace, value_) : value_;
  }

  double resolve(const PacketSource& source) const {
    return is_rho_ ? nominal_byte_rate(source) / value_ : value_;
  }

private:
  ServiceRate(double v, bool rho) : value_{v}, is_rho_{rho} {}
  double value_;
  bool is_rho_;
};

namespace detail {

/// Evaluates task(point, replication) for every pair, optionally on several
/// threads, and stores results at fixed slots.
inline std::vector<double> run_grid(std::size_t points, std::size_t reps, unsigned threads,
                                    const std::function<double(std::size_t, std::size_t)>& task) {
  std::vector<double> out(points * reps);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < out.size(); k = next++) out[k] = task(k / reps, k % reps);
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(out.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  return out;
}

inline SweepPoint make_point(double x, std::vector<double> means) {
  const auto s = aggregate_replications(means);
  return {x, s.mean, s.std_dev, std::move(means)};
}

inline SweepResult collect(SweepAxis axis, std::span<const std::size_t> xs, std::size_t reps,
                           const std::vector<double>& grid, double bandwidth) {
  SweepResult r;
  r.axis = axis;
  r.bandwidth = bandwidth;
  for (std::size_t j = 0; j < xs.size(); ++j)
    r.points.push_back(make_point(static_cast<double>(xs[j]),
                                  {grid.begin() + j * reps, grid.begin() + (j + 1) * reps}));
  return r;
}

inline void check_plan(const ReplicationPlan& plan) {
  if (plan.replications < 1) throw Error("at least one replication is required");
}

}  // namespace detail

/// Mean queue versus sample size on a fixed trace. Each replication queues a
/// contiguous window at a seeded uniformly random offset.
inline SweepResult sample_size_sweep(const PacketTrace& trace, std::span<const std::size_t> sizes,
                                     const ServiceRate& rate, const ReplicationPlan& plan) {
  detail::check_plan(plan);
  for (auto s : sizes) {
    if (s < 1) throw Error("sample sizes must be >= 1");
    if (s > trace.size())
      throw Error("sample size " + std::to_string(s) + " exceeds the trace length " +
                  std::to_string(trace.size()));
  }
  const double b = rate.resolve(trace);
  const auto grid = detail::run_grid(sizes.size(), plan.replications, plan.threads, [&](std::size_t j, std::size_t i) {
    Rng rng = plan.stream(i, j);
    const std::size_t start = rng.below(trace.size() - sizes[j] + 1);
    return detail::simulate_packets(trace.records().subspan(start, sizes[j]), b, nullptr).mean_queue;
  });
  return detail::collect(SweepAxis::sample_size_packets, sizes, plan.replications, grid, b);
}

/// Mean queue versus sample size for a synthetic source; every replication
/// and size draws a fresh substream of exactly that many packets.
inline SweepResult sample_size_sweep(const PacketSource& source, std::span<const std::size_t> sizes,
                                     const ServiceRate& rate, const ReplicationPlan& plan) {
  detail::check_plan(plan);
  for (auto s : sizes)
    if (s < 1) throw Error("sample sizes must be >= 1");
  const double b = rate.resolve(source);
  const auto grid = detail::run_grid(sizes.size(), plan.replications, plan.threads, [&](std::size_t j, std::size_t i) {
    const auto trace = generate_packets(source, sizes[j], plan.stream(i, j));
    return packet_fifo_stats(trace, b).mean_queue;
  });
  return detail::collect(SweepAxis::sample_size_packets, sizes, plan.replications, grid, b);
}

/// A packet as (gap to the previous packet, size). The first gap is 0.
struct GapRecord {
  double gap = 0.0;
  std::uint32_t size = 1;

  friend bool operator==(const GapRecord&, const GapRecord&) = default;
};

inline std::vector<GapRecord> to_gaps(const PacketTrace& trace) {
  std::vector<GapRecord> out;
  out.reserve(trace.size());
  double previous = trace.empty() ? 0.0 : trace[0].timestamp;
  for (const auto& r : trace) {
    out.push_back({r.timestamp - previous, r.size});
    previous = r.timestamp;
  }
  return out;
}

/// Rebuilds timestamps from gaps; the first packet lands at t = 0 whatever its gap.
inline PacketTrace from_gaps(std::span<const GapRecord> gaps, std::string origin = {}) {
  std::vector<PacketRecord> out;
  out.reserve(gaps.size());
  CompensatedSum clock;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    if (i > 0) clock += gaps[i].gap;
    out.push_back({clock.value(), gaps[i].size});
  }
  return PacketTrace{std::move(out), std::move(origin)};
}

inline std::size_t block_count(std::size_t packets, std::size_t block_size) {
  return (packets + block_size - 1) / block_size;
}

/// Concatenates blocks of `block_size` consecutive records in the given block
/// order. The final partial block is a block like any other.
inline std::vector<GapRecord> assemble_blocks(std::span<const GapRecord> gaps, std::size_t block_size,
                                              std::span<const std::size_t> order) {
  if (block_size < 1) throw Error("block size must be >= 1");
  const std::size_t blocks = block_count(gaps.size(), block_size);
  if (order.size() != blocks) throw Error("block order has the wrong length");
  std::vector<bool> seen(blocks, false);
  std::vector<GapRecord> out;
  out.reserve(gaps.size());
  for (auto b : order) {
    if (b >= blocks || seen[b]) throw Error("block order is not a permutation");
    seen[b] = true;
    const std::size_t first = b * block_size;
    const std::size_t last = std::min(first + block_size, gaps.size());
    out.insert(out.end(), gaps.begin() + first, gaps.begin() + last);
  }
  return out;
}

inline std::vector<GapRecord> shuffle_blocks(std::span<const GapRecord> gaps, std::size_t block_size, Rng rng) {
  if (block_size < 1) throw Error("block size must be >= 1");
  std::vector<std::size_t> order;
  random_permutation(rng, order, block_count(gaps.size(), block_size));
  return assemble_blocks(gaps, block_size, order);
}

/// Randomly permutes blocks of B packets (with their inter-arrival gaps), so no
/// correlation survives beyond B packets. Sizes and gaps are preserved as multisets.
inline PacketTrace block_shuffle(const PacketTrace& trace, std::size_t block_size, const Rng& rng) {
  if (block_size < 1) throw Error("block size must be >= 1");
  if (trace.empty()) throw Error("cannot shuffle an empty trace");
  if (block_size >= trace.size()) return trace;
  const auto gaps = to_gaps(trace);
  return from_gaps(shuffle_blocks(gaps, block_size, rng),
                   trace.origin() + " shuffled B=" + std::to_string(block_size));
}

inline PacketTrace block_shuffle(const PacketTrace& trace, std::size_t block_size, std::uint64_t seed) {
  return block_shuffle(trace, block_size, Rng{seed});
}

/// Mean queue versus shuffle block size, plus the unshuffled baseline.
inline SweepResult blocksize_sweep(const PacketTrace& trace, std::span<const std::size_t> blocksizes,
                                   const ServiceRate& rate, const ReplicationPlan& plan) {
  detail::check_plan(plan);
  if (trace.empty()) throw Error("cannot sweep an empty trace");
  for (auto b : blocksizes)
    if (b < 1) throw Error("block sizes must be >= 1");
  const double bw = rate.resolve(trace);
  const auto gaps = to_gaps(trace);
  const auto grid = detail::run_grid(blocksizes.size(), plan.replications, plan.threads,
                                     [&](std::size_t j, std::size_t i) {
                                       if (blocksizes[j] >= trace.size())
                                         return packet_fifo_stats(trace, bw).mean_queue;
                                       const auto shuffled = from_gaps(shuffle_blocks(gaps, blocksizes[j], plan.stream(i, j)));
                                       return packet_fifo_stats(shuffled, bw).mean_queue;
                                     });
  auto result = detail::collect(SweepAxis::blocksize_packets, blocksizes, plan.replications, grid, bw);
  const double base = packet_fifo_stats(trace, bw).mean_queue;
  result.baseline = detail::make_point(static_cast<double>(trace.size()),
                                       std::vector<double>(plan.replications, base));
  return result;
}

namespace detail {

inline void put_number(std::ostream& out, double v) {
  char buf[40];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.write(buf, n);
}

inline void put_row(std::ostream& out, const SweepPoint& p) {
  put_number(out, p.x);
  out << ',';
  put_number(out, p.mean);
  out << ',';
  put_number(out, p.std_dev);
  for (double r : p.replication_means) {
    out << ',';
    put_number(out, r);
  }
  out << '\n';
}

}  // namespace detail

/// CSV: optional `# manifest: <digest>` line, a header, one row per point in
/// x order as given, and the baseline row (if any) last.
inline void write_sweep_csv(std::ostream& out, const SweepResult& result, const std::string& manifest_digest = {}) {
  if (!manifest_digest.empty()) out << "# manifest: " << manifest_digest << '\n';
  std::size_t reps = 0;
  if (!result.points.empty()) reps = result.points.front().replication_means.size();
  else if (result.baseline) reps = result.baseline->replication_means.size();
  out << "x,mean,std";
  for (std::size_t i = 1; i <= reps; ++i) out << ",rep_" << i;
  out << '\n';
  for (const auto& p : result.points) detail::put_row(out, p);
  if (result.baseline) detail::put_row(out, *result.baseline);
}

/// gnuplot script drawing mean +- 1 std error bars from a sweep CSV.
/// `header_lines` counts the lines before the first data row (manifest comment and column header).
inline void write_gnuplot_script(std::ostream& out, const SweepResult& result, const std::string& csv_path,
                                 const std::string& png_path, std::size_t header_lines = 2) {
  const bool blocks = result.axis == SweepAxis::blocksize_packets;
  const std::string skip = " skip " + std::to_string(header_lines);
  out << "set terminal pngcairo size 800,600\n"
      << "set output '" << png_path << "'\n"
      << "set datafile separator ','\n"
      << "set logscale x\n"
      << "set xlabel '" << (blocks ? "Blocksize (packets)" : "Number of packets") << "'\n"
      << "set ylabel 'Mean queue size (packets)'\n"
      << "set title '" << (blocks ? "Mean queue size versus blocksize" : "Mean queue size versus number of packets")
      << "'\n"
      << "set key off\n";
  std::string rows;
  if (blocks && result.baseline && !result.points.empty())
    rows = " every ::0::" + std::to_string(result.points.size() - 1);
  out << "plot '" << csv_path << "'" << skip << rows << " using 1:2:3 with yerrorbars pt 7, ''" << skip << rows
      << " using 1:2 with lines";
  if (blocks && result.baseline) {
    out << ", ";
    detail::put_number(out, result.baseline->mean);
    out << " with lines dt 2";
  }
  out << '\n';
}

}  // namespace lrdq
