#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lrdq/error.hpp"
#include "lrdq/numeric.hpp"
#include "lrdq/rng.hpp"
#include "lrdq/trace.hpp"

namespace lrdq {

/// Pareto law P[X > x] = (x_min / x)^alpha for x >= x_min, optionally capped
/// at x_max. The constant of the power-law tail is C = x_min^alpha.
class HeavyTailSpec {
public:
  HeavyTailSpec(double tail_index, double x_min, std::optional<double> x_max = std::nullopt)
      : tail_index_{tail_index}, x_min_{x_min}, x_max_{x_max} {
    if (!(tail_index > 1.0 && tail_index < 2.0))
      throw Error("tail index must lie in (1, 2), got " + std::to_string(tail_index));
    if (!(x_min > 0.0) || !std::isfinite(x_min)) throw Error("x_min must be positive");
    if (x_max && !(*x_max > x_min)) throw Error("x_max must exceed x_min");
  }

  double tail_index() const noexcept { return tail_index_; }
  double x_min() const noexcept { return x_min_; }
  const std::optional<double>& x_max() const noexcept { return x_max_; }

  /// Inverse-CCDF transform of a variate u in (0, 1].
  double sample(double u) const {
    if (!(u > 0.0 && u <= 1.0)) throw Error("uniform variate must lie in (0, 1]");
    const double x = x_min_ * std::pow(u, -1.0 / tail_index_);
    return x_max_ ? std::min(x, *x_max_) : x;
  }

  /// Exact mean of sample(U), U ~ U(0, 1]; accounts for the cap when present.
  double mean() const noexcept {
    const double a = tail_index_;
    if (!x_max_) return a * x_min_ / (a - 1.0);
    return x_min_ + x_min_ / (a - 1.0) * (1.0 - std::pow(x_min_ / *x_max_, a - 1.0));
  }

private:
  double tail_index_;
  double x_min_;
  std::optional<double> x_max_;
};

inline double sample_heavy_tail(const HeavyTailSpec& spec, double u) { return spec.sample(u); }

struct OnOffCycle {
  double on = 0.0;
  double off = 0.0;
};

/// Alternating on/off rate process. Arrivals run at `on_rate` during on
/// periods and stop during off periods; the server drains at rate 1.
struct FluidOnOffProcess {
  std::vector<OnOffCycle> cycles;
  double on_rate = 2.0;

  double total_on() const noexcept {
    CompensatedSum s;
    for (const auto& c : cycles) s += c.on;
    return s.value();
  }

  double horizon() const noexcept {
    CompensatedSum s;
    for (const auto& c : cycles) {
      s += c.on;
      s += c.off;
    }
    return s.value();
  }

  /// Realized work arrival rate over the whole horizon.
  double arrival_rate() const noexcept {
    const double t = horizon();
    return t > 0.0 ? on_rate * total_on() / t : 0.0;
  }

  std::vector<double> on_lengths() const {
    std::vector<double> out;
    out.reserve(cycles.size());
    for (const auto& c : cycles) out.push_back(c.on);
    return out;
  }
};

inline void validate(const FluidOnOffProcess& p) {
  if (!std::isfinite(p.on_rate) || !(p.on_rate > 0.0)) throw Error("on rate must be positive");
  for (std::size_t i = 0; i < p.cycles.size(); ++i) {
    const auto& c = p.cycles[i];
    if (!(c.on > 0.0) || !std::isfinite(c.on))
      throw Error("cycle " + std::to_string(i) + ": on length must be positive");
    if (!(c.off >= 0.0) || !std::isfinite(c.off))
      throw Error("cycle " + std::to_string(i) + ": off length must be nonnegative");
  }
}

/// i.i.d. exponential off periods whose mean makes the long-run rate lambda_target.
struct IidMatchedMean {};
/// Off period X_i (m / lambda - 1) after each on period X_i.
struct Reordered {};
/// Off period max((m - 1) X_i, (m - 1) m X_i^2 / 2q - X_i); per-cycle mean queue <= q.
struct BoundedQueue {
  double q = 1.0;
};

using OffModel = std::variant<IidMatchedMean, Reordered, BoundedQueue>;

struct GeneratorSpec {
  double on_rate = 2.0;
  double lambda_target = 0.5;
  HeavyTailSpec tail{1.5, 1.0};
  std::size_t n_cycles = 1;
  OffModel off_model = IidMatchedMean{};
};

inline void validate(const GeneratorSpec& spec) {
  if (!(spec.on_rate > 1.0) || !std::isfinite(spec.on_rate))
    throw Error("on rate m must exceed the server rate 1");
  if (spec.n_cycles < 1) throw Error("at least one cycle is required");
  if (const auto* b = std::get_if<BoundedQueue>(&spec.off_model)) {
    if (!(b->q > 0.0) || !std::isfinite(b->q)) throw Error("queue bound q must be positive");
  } else if (!(spec.lambda_target > 0.0 && spec.lambda_target < 1.0)) {
    throw Error("lambda must lie in (0, 1), got " + std::to_string(spec.lambda_target));
  }
}

inline double reordered_off_length(double on_length, double m, double lambda) {
  return on_length * (m / lambda - 1.0);
}

inline double bounded_off_length(double on_length, double m, double q) {
  return std::max((m - 1.0) * on_length, (m - 1.0) * m * on_length * on_length / (2.0 * q) - on_length);
}

/// Mean of the i.i.d. exponential off law under IidMatchedMean.
inline double matched_off_mean(const GeneratorSpec& spec) {
  return spec.tail.mean() * (spec.on_rate / spec.lambda_target - 1.0);
}

inline FluidOnOffProcess reorder_nonoverlap(std::span<const double> on_lengths, double m, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw Error("lambda must lie in (0, 1)");
  if (!(m > 1.0)) throw Error("on rate m must exceed 1");
  FluidOnOffProcess p;
  p.on_rate = m;
  p.cycles.reserve(on_lengths.size());
  for (double x : on_lengths) p.cycles.push_back({x, reordered_off_length(x, m, lambda)});
  validate(p);
  return p;
}

inline FluidOnOffProcess bounded_queue_process(std::span<const double> on_lengths, double m, double q) {
  if (!(m > 1.0)) throw Error("on rate m must exceed 1");
  if (!(q > 0.0)) throw Error("queue bound q must be positive");
  FluidOnOffProcess p;
  p.on_rate = m;
  p.cycles.reserve(on_lengths.size());
  for (double x : on_lengths) p.cycles.push_back({x, bounded_off_length(x, m, q)});
  validate(p);
  return p;
}

/// Streams on/off cycles for a GeneratorSpec. On lengths come from substream 0
/// of the seed and i.i.d. off lengths from substream 1, so every off model sees
/// the same on-length sequence for a given seed.
class OnOffCycleSource {
public:
  OnOffCycleSource(const GeneratorSpec& spec, const Rng& rng)
      : spec_{spec}, on_rng_{rng.substream(0)}, off_rng_{rng.substream(1)} {
    validate(spec_);
    if (std::holds_alternative<IidMatchedMean>(spec_.off_model)) off_mean_ = matched_off_mean(spec_);
  }

  OnOffCycle next() {
    const double on = spec_.tail.sample(on_rng_.uniform_open_closed());
    return {on, off_for(on)};
  }

private:
  double off_for(double on) {
    const double m = spec_.on_rate;
    if (std::holds_alternative<IidMatchedMean>(spec_.off_model)) return off_rng_.exponential(off_mean_);
    if (std::holds_alternative<Reordered>(spec_.off_model))
      return reordered_off_length(on, m, spec_.lambda_target);
    return bounded_off_length(on, m, std::get<BoundedQueue>(spec_.off_model).q);
  }

  GeneratorSpec spec_;
  Rng on_rng_;
  Rng off_rng_;
  double off_mean_ = 0.0;
};

inline FluidOnOffProcess generate_onoff(const GeneratorSpec& spec, const Rng& rng) {
  OnOffCycleSource source{spec, rng};
  FluidOnOffProcess p;
  p.on_rate = spec.on_rate;
  p.cycles.reserve(spec.n_cycles);
  for (std::size_t i = 0; i < spec.n_cycles; ++i) p.cycles.push_back(source.next());
  return p;
}

inline FluidOnOffProcess generate_onoff(const GeneratorSpec& spec, std::uint64_t seed) {
  return generate_onoff(spec, Rng{seed});
}

struct PacketizationReport {
  std::size_t packets = 0;
  /// On periods too short to hold a single packet.
  std::size_t empty_on_periods = 0;
};

struct PacketizedTrace {
  PacketTrace trace;
  PacketizationReport report;
};

namespace detail {

/// Appends the packets of one on period starting at `start`. Returns the count.
inline std::size_t emit_on_period(std::vector<PacketRecord>& out, double start, double on_length,
                                  double on_rate, std::uint32_t packet_size, double server_rate,
                                  std::size_t limit) {
  const double bytes_per_second = on_rate * server_rate;
  const double spacing = packet_size / bytes_per_second;
  // The small offset absorbs rounding when L m s / P is an exact integer.
  auto count = static_cast<std::size_t>(std::floor(on_length * bytes_per_second / packet_size + 1e-9));
  count = std::min(count, limit);
  for (std::size_t k = 0; k < count; ++k)
    out.push_back({start + static_cast<double>(k) * spacing, packet_size});
  return count;
}

inline void check_packetize_args(std::uint32_t packet_size, double server_rate) {
  if (packet_size < 1) throw Error("packet size must be >= 1 byte");
  if (!(server_rate > 0.0) || !std::isfinite(server_rate)) throw Error("server rate must be positive");
}

}  // namespace detail

/// Converts a fluid process into packets. The fluid server rate 1 maps to
/// `server_rate` bytes/second, so on periods emit at on_rate * server_rate.
inline PacketizedTrace packetize(const FluidOnOffProcess& process, std::uint32_t packet_size,
                                 double server_rate) {
  detail::check_packetize_args(packet_size, server_rate);
  std::vector<PacketRecord> records;
  PacketizationReport report;
  CompensatedSum clock;
  for (const auto& c : process.cycles) {
    const auto n = detail::emit_on_period(records, clock.value(), c.on, process.on_rate, packet_size,
                                          server_rate, static_cast<std::size_t>(-1));
    if (n == 0) ++report.empty_on_periods;
    clock += c.on;
    clock += c.off;
  }
  report.packets = records.size();
  return {PacketTrace{std::move(records), "packetized on/off"}, report};
}

inline PacketTrace generate_poisson(double rate, std::uint32_t packet_size, std::size_t n, const Rng& seed_rng) {
  if (!(rate > 0.0) || !std::isfinite(rate)) throw Error("Poisson rate must be positive");
  if (n < 1) throw Error("at least one packet is required");
  if (packet_size < 1) throw Error("packet size must be >= 1 byte");
  Rng rng = seed_rng;
  std::vector<PacketRecord> records;
  records.reserve(n);
  CompensatedSum clock;
  // First draw is the first arrival instant, which rebasing maps to 0.
  rng.exponential(1.0 / rate);
  records.push_back({0.0, packet_size});
  for (std::size_t i = 1; i < n; ++i) {
    clock += rng.exponential(1.0 / rate);
    records.push_back({clock.value(), packet_size});
  }
  return PacketTrace{std::move(records), "poisson"};
}

inline PacketTrace generate_poisson(double rate, std::uint32_t packet_size, std::size_t n, std::uint64_t seed) {
  return generate_poisson(rate, packet_size, n, Rng{seed});
}

/// Merges traces onto one clock, keeping arrivals in [start, end). The result is
/// rebased so its first arrival is at 0; equal timestamps keep input order.
inline PacketTrace superpose(std::span<const PacketTrace> traces, double start, double end) {
  if (!(end > start)) throw Error("superpose window must have end > start");
  std::vector<PacketRecord> records;
  for (const auto& t : traces)
    for (const auto& r : t)
      if (r.timestamp >= start && r.timestamp < end) records.push_back(r);
  if (records.empty()) throw Error("no arrivals fall inside the superpose window");
  std::stable_sort(records.begin(), records.end(),
                   [](const PacketRecord& a, const PacketRecord& b) { return a.timestamp < b.timestamp; });
  const double t0 = records.front().timestamp;
  for (auto& r : records) r.timestamp -= t0;
  return PacketTrace{std::move(records), "superposed"};
}

/// Independent copies of one on/off source sharing a link. Every source starts
/// at the beginning of an on period, so a leading warm-up share of the common
/// span is discarded.
struct OnOffAggregateSpec {
  GeneratorSpec source;
  std::size_t sources = 1;
  std::uint32_t packet_size = 1000;
  double server_rate = 1e6;
  double warmup_fraction = 0.0;
};

/// Source k is driven by substream k of `rng`. The trace covers the span that
/// all sources reach.
inline PacketTrace generate_onoff_aggregate(const OnOffAggregateSpec& spec, const Rng& rng) {
  if (spec.sources < 1) throw Error("at least one source is required");
  if (!(spec.warmup_fraction >= 0.0 && spec.warmup_fraction < 1.0))
    throw Error("warm-up fraction must lie in [0, 1)");
  std::vector<PacketTrace> traces;
  traces.reserve(spec.sources);
  double horizon = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < spec.sources; ++k) {
    const auto p = generate_onoff(spec.source, rng.substream(k));
    horizon = std::min(horizon, p.horizon());
    traces.push_back(packetize(p, spec.packet_size, spec.server_rate).trace);
  }
  return superpose(traces, spec.warmup_fraction * horizon, horizon);
}

/// Packet-level on/off source: a GeneratorSpec (n_cycles ignored) plus packetization.
struct OnOffPacketSource {
  GeneratorSpec spec;
  std::uint32_t packet_size = 1000;
  double server_rate = 1e6;

  /// Long-run byte rate of the packetized stream.
  double nominal_byte_rate() const {
    const double m = spec.on_rate;
    const double on = spec.tail.mean();
    double off = 0.0;
    if (std::holds_alternative<IidMatchedMean>(spec.off_model) ||
        std::holds_alternative<Reordered>(spec.off_model))
      off = on * (m / spec.lambda_target - 1.0);
    else
      throw Error("the bounded-queue model has no finite long-run rate");
    return m * server_rate * on / (on + off);
  }
};

struct PoissonPacketSource {
  double rate = 100.0;
  std::uint32_t packet_size = 1000;

  double nominal_byte_rate() const { return rate * packet_size; }
};

using PacketSource = std::variant<OnOffPacketSource, PoissonPacketSource>;

inline double nominal_byte_rate(const PacketSource& source) {
  return std::visit([](const auto& s) { return s.nominal_byte_rate(); }, source);
}

/// Exactly `n` packets from the source, rebased to start at t = 0.
inline PacketTrace generate_packets(const PacketSource& source, std::size_t n, const Rng& rng) {
  if (n < 1) throw Error("at least one packet is required");
  if (const auto* p = std::get_if<PoissonPacketSource>(&source))
    return generate_poisson(p->rate, p->packet_size, n, rng);

  const auto& s = std::get<OnOffPacketSource>(source);
  detail::check_packetize_args(s.packet_size, s.server_rate);
  OnOffCycleSource cycles{s.spec, rng};
  std::vector<PacketRecord> records;
  records.reserve(n);
  CompensatedSum clock;
  while (records.size() < n) {
    const auto c = cycles.next();
    detail::emit_on_period(records, clock.value(), c.on, s.spec.on_rate, s.packet_size, s.server_rate,
                           n - records.size());
    clock += c.on;
    clock += c.off;
  }
  const double t0 = records.front().timestamp;
  if (t0 != 0.0)
    for (auto& r : records) r.timestamp -= t0;
  return PacketTrace{std::move(records), "on/off source"};
}

}  // namespace lrdq
