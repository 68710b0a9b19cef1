#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lrdq/error.hpp"
#include "lrdq/numeric.hpp"
#include "lrdq/synth.hpp"
#include "lrdq/trace.hpp"

namespace lrdq {

struct QueueStats {
  double mean_queue = 0.0;
  double peak_queue = 0.0;
  double horizon = 0.0;
  double utilization = 0.0;
  double empty_fraction = 0.0;
  /// Exact integral of the queue level over [0, horizon].
  double area = 0.0;
  double busy_time = 0.0;
  /// Set by the fluid simulator when m <= 1: the queue can never leave zero.
  bool no_queue = false;
};

struct PathPoint {
  double time = 0.0;
  double level = 0.0;
};

/// Breakpoints of Q_t. Fluid paths interpolate linearly between points;
/// packet paths hold each level until the next point.
struct QueuePath {
  enum class Shape { piecewise_linear, piecewise_constant };

  Shape shape = Shape::piecewise_linear;
  std::vector<PathPoint> points{{0.0, 0.0}};

  void add(double time, double level) {
    // Collapse repeated instants, but keep the (0, 0) origin.
    if (points.size() > 1 && points.back().time == time)
      points.back().level = level;
    else
      points.push_back({time, level});
  }

  /// Q_t at time t. For piecewise-constant paths, the level after all events at t.
  double level_at(double t) const {
    auto it = std::upper_bound(points.begin(), points.end(), t,
                               [](double v, const PathPoint& p) { return v < p.time; });
    if (it == points.begin()) return 0.0;
    const auto& left = *(it - 1);
    if (shape == Shape::piecewise_constant || it == points.end()) return left.level;
    const auto& right = *it;
    if (right.time == left.time) return right.level;
    const double w = (t - left.time) / (right.time - left.time);
    return left.level + w * (right.level - left.level);
  }
};

struct QueueRun {
  QueueStats stats;
  QueuePath path;
};

namespace detail {

inline QueueStats finish_stats(double area, double peak, double horizon, double busy) {
  QueueStats s;
  s.area = area;
  s.peak_queue = peak;
  s.horizon = horizon;
  s.busy_time = busy;
  if (horizon > 0.0) {
    s.mean_queue = area / horizon;
    s.utilization = std::clamp(busy / horizon, 0.0, 1.0);
    s.empty_fraction = 1.0 - s.utilization;
  } else {
    s.empty_fraction = 1.0;
  }
  return s;
}

/// Fluid queue dQ/dt = A_t - 1 above zero with A_t in {m, 0}; integrated per
/// cycle from the rise/drain geometry.
inline QueueStats simulate_fluid(std::span<const OnOffCycle> cycles, double m, QueuePath* path) {
  if (path) *path = QueuePath{QueuePath::Shape::piecewise_linear};
  CompensatedSum clock;
  CompensatedSum area;
  CompensatedSum busy;
  for (const auto& c : cycles) {
    clock += c.on;
    clock += c.off;
  }
  const double horizon = clock.value();
  if (m <= 1.0) {
    if (path) path->add(horizon, 0.0);
    QueueStats s = finish_stats(0.0, 0.0, horizon, 0.0);
    s.no_queue = true;
    return s;
  }

  CompensatedSum t;
  double q = 0.0;
  double peak = 0.0;
  const double rise = m - 1.0;
  for (const auto& c : cycles) {
    const double start = t.value();
    const double top = q + rise * c.on;
    area += q * c.on + 0.5 * rise * c.on * c.on;
    busy += c.on;
    peak = std::max(peak, top);
    if (path) path->add(start + c.on, top);

    const double drain = std::min(c.off, top);
    area += top * drain - 0.5 * drain * drain;
    busy += drain;
    q = drain == top ? 0.0 : top - drain;
    if (path && drain < c.off) path->add(start + c.on + drain, 0.0);
    t += c.on;
    t += c.off;
    if (path) path->add(t.value(), q);
  }
  return finish_stats(area.value(), peak, horizon, busy.value());
}

/// Infinite-buffer FIFO at `bandwidth` bytes/second. The level counts packets
/// in system, the one in service included. Departures are processed before
/// arrivals at the same instant. Time is measured from the first arrival, so a
/// window taken from the middle of a trace starts with an empty queue at 0.
inline QueueStats simulate_packets(std::span<const PacketRecord> packets, double bandwidth, QueuePath* path) {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw Error("bandwidth must be positive");
  if (packets.empty()) throw Error("cannot queue an empty trace");
  if (path) *path = QueuePath{QueuePath::Shape::piecewise_constant};

  const double origin = packets.front().timestamp;
  std::vector<double> departures(packets.size());
  double previous = origin;
  for (std::size_t i = 0; i < packets.size(); ++i) {
    const double start = std::max(packets[i].timestamp, previous);
    previous = start + packets[i].size / bandwidth;
    departures[i] = previous;
  }

  CompensatedSum area;
  CompensatedSum busy;
  double level = 0.0;
  double peak = 0.0;
  double now = origin;
  std::size_t next_arrival = 0;
  std::size_t next_departure = 0;
  const std::size_t n = packets.size();
  while (next_departure < n) {
    const bool depart =
        next_arrival == n || departures[next_departure] <= packets[next_arrival].timestamp;
    const double t = depart ? departures[next_departure] : packets[next_arrival].timestamp;
    if (t > now) {
      area += level * (t - now);
      if (level > 0.0) busy += t - now;
      now = t;
    }
    if (depart) {
      level -= 1.0;
      ++next_departure;
    } else {
      level += 1.0;
      ++next_arrival;
      peak = std::max(peak, level);
    }
    if (path) path->add(now - origin, level);
  }
  return finish_stats(area.value(), peak, departures.back() - origin, busy.value());
}

}  // namespace detail

inline QueueRun fluid_queue(const FluidOnOffProcess& process) {
  QueueRun run;
  run.stats = detail::simulate_fluid(process.cycles, process.on_rate, &run.path);
  return run;
}

inline QueueStats fluid_queue_stats(const FluidOnOffProcess& process) {
  return detail::simulate_fluid(process.cycles, process.on_rate, nullptr);
}

inline QueueRun packet_fifo(const PacketTrace& trace, double bandwidth) {
  QueueRun run;
  run.stats = detail::simulate_packets(trace.records(), bandwidth, &run.path);
  return run;
}

inline QueueStats packet_fifo_stats(const PacketTrace& trace, double bandwidth) {
  return detail::simulate_packets(trace.records(), bandwidth, nullptr);
}

struct PrefixMean {
  std::size_t size = 0;
  double mean_queue = 0.0;
};

namespace detail {

inline void check_prefix_sizes(std::span<const std::size_t> sizes, std::size_t available, const char* unit) {
  std::size_t previous = 0;
  for (auto s : sizes) {
    if (s == 0) throw Error("prefix sizes must be >= 1");
    if (s < previous) throw Error("prefix sizes must be nondecreasing");
    if (s > available)
      throw Error("prefix of " + std::to_string(s) + " " + unit + " exceeds the available " +
                  std::to_string(available));
    previous = s;
  }
}

}  // namespace detail

/// Mean queue of each packet prefix, each simulated from an empty queue.
inline std::vector<PrefixMean> prefix_mean_queue(const PacketTrace& trace, std::span<const std::size_t> sizes,
                                                 double bandwidth) {
  detail::check_prefix_sizes(sizes, trace.size(), "packets");
  std::vector<PrefixMean> out;
  out.reserve(sizes.size());
  for (auto s : sizes)
    out.push_back({s, detail::simulate_packets(trace.records().first(s), bandwidth, nullptr).mean_queue});
  return out;
}

/// Mean queue of each cycle prefix of a fluid process.
inline std::vector<PrefixMean> prefix_mean_queue(const FluidOnOffProcess& process,
                                                 std::span<const std::size_t> sizes) {
  detail::check_prefix_sizes(sizes, process.cycles.size(), "cycles");
  std::vector<PrefixMean> out;
  out.reserve(sizes.size());
  const std::span<const OnOffCycle> cycles = process.cycles;
  for (auto s : sizes)
    out.push_back({s, detail::simulate_fluid(cycles.first(s), process.on_rate, nullptr).mean_queue});
  return out;
}

/// Extends the final off period of a process until its queue has fully drained.
inline FluidOnOffProcess extend_to_drain(FluidOnOffProcess process) {
  if (process.cycles.empty()) return process;
  const auto run = fluid_queue(process);
  const double residual = run.path.points.back().level;
  if (residual > 0.0) process.cycles.back().off += residual;
  return process;
}

/// Extends the final off period so the process spans `horizon` seconds.
inline FluidOnOffProcess pad_to_horizon(FluidOnOffProcess process, double horizon) {
  if (process.cycles.empty()) throw Error("cannot pad an empty process");
  const double current = process.horizon();
  if (horizon < current) throw Error("target horizon is shorter than the process");
  process.cycles.back().off += horizon - current;
  return process;
}

}  // namespace lrdq
