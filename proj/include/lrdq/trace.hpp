#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lrdq/error.hpp"

namespace lrdq {

/// One packet arrival: seconds since trace start and length in bytes.
struct PacketRecord {
  double timestamp = 0.0;
  std::uint32_t size = 1;

  friend bool operator==(const PacketRecord&, const PacketRecord&) = default;
};

/// Ordered packet arrivals. Immutable once built; the constructor checks
/// finiteness, nonnegative timestamps, nondecreasing order and size >= 1.
class PacketTrace {
public:
  PacketTrace() = default;

  explicit PacketTrace(std::vector<PacketRecord> records, std::string origin = {})
      : records_{std::move(records)}, origin_{std::move(origin)} {
    double previous = 0.0;
    total_bytes_ = 0;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      if (!std::isfinite(r.timestamp) || r.timestamp < 0.0)
        throw Error("packet " + std::to_string(i) + ": timestamp must be finite and >= 0");
      if (r.size == 0) throw Error("packet " + std::to_string(i) + ": size must be >= 1");
      if (i > 0 && r.timestamp < previous)
        throw Error("packet " + std::to_string(i) + ": timestamps must be nondecreasing");
      previous = r.timestamp;
      total_bytes_ += r.size;
    }
  }

  std::span<const PacketRecord> records() const noexcept { return records_; }
  const PacketRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  auto begin() const noexcept { return records_.begin(); }
  auto end() const noexcept { return records_.end(); }

  const std::string& origin() const noexcept { return origin_; }

  double duration() const noexcept {
    return records_.empty() ? 0.0 : records_.back().timestamp - records_.front().timestamp;
  }

  std::uint64_t total_bytes() const noexcept { return total_bytes_; }

  friend bool operator==(const PacketTrace& a, const PacketTrace& b) {
    return a.records_ == b.records_;
  }

private:
  std::vector<PacketRecord> records_;
  std::string origin_;
  std::uint64_t total_bytes_ = 0;
};

struct TraceSummary {
  std::size_t packet_count = 0;
  double duration = 0.0;
  std::uint64_t total_bytes = 0;
  /// Bytes per second; absent when the trace spans zero time.
  std::optional<double> mean_rate;
};

enum class TraceFormat { csv_ts_bytes, two_column_text };

inline std::optional<TraceFormat> parse_trace_format(std::string_view name) {
  if (name == "csv" || name == "csv_ts_bytes") return TraceFormat::csv_ts_bytes;
  if (name == "text" || name == "two_column_text") return TraceFormat::two_column_text;
  return std::nullopt;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline double parse_timestamp(std::string_view field, std::size_t line) {
  double value = 0.0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc{} || ptr != end)
    throw ParseError(line, "invalid timestamp '" + std::string(field) + "'");
  if (!std::isfinite(value)) throw ParseError(line, "timestamp is not finite");
  return value;
}

inline std::uint32_t parse_size(std::string_view field, std::size_t line) {
  if (!field.empty() && field.front() == '-')
    throw ParseError(line, "packet size must be positive, got '" + std::string(field) + "'");
  // Accept integral values written as reals ("1500.0"), as some trace dumps do.
  double value = 0.0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc{} || ptr != end)
    throw ParseError(line, "invalid packet size '" + std::string(field) + "'");
  if (value < 1.0) throw ParseError(line, "packet size must be positive, got '" + std::string(field) + "'");
  if (value != std::floor(value) || value > 4294967295.0)
    throw ParseError(line, "packet size must be an integer byte count, got '" + std::string(field) + "'");
  return static_cast<std::uint32_t>(value);
}

}  // namespace detail

/// Parses a trace from a stream. Blank lines and lines starting with '#' are
/// skipped in both formats. Timestamps are rebased so the first arrival is at 0.
inline PacketTrace read_trace(std::istream& in, TraceFormat format, std::string origin = {}) {
  std::vector<PacketRecord> records;
  std::string line;
  std::size_t line_no = 0;
  double first = 0.0;
  double previous = 0.0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;

    std::string_view ts_field;
    std::string_view size_field;
    if (format == TraceFormat::csv_ts_bytes) {
      const auto comma = body.find(',');
      if (comma == std::string_view::npos)
        throw ParseError(line_no, "expected '<timestamp>,<bytes>'");
      ts_field = detail::trim(body.substr(0, comma));
      size_field = detail::trim(body.substr(comma + 1));
      if (size_field.find(',') != std::string_view::npos)
        throw ParseError(line_no, "expected exactly two fields");
    } else {
      const auto gap = body.find_first_of(" \t");
      if (gap == std::string_view::npos)
        throw ParseError(line_no, "expected '<timestamp> <bytes>'");
      ts_field = body.substr(0, gap);
      size_field = detail::trim(body.substr(gap));
      if (size_field.find_first_of(" \t") != std::string_view::npos)
        throw ParseError(line_no, "expected exactly two fields");
    }

    const double ts = detail::parse_timestamp(ts_field, line_no);
    const std::uint32_t size = detail::parse_size(size_field, line_no);
    if (records.empty()) {
      first = ts;
    } else if (ts < previous) {
      throw ParseError(line_no, "decreasing timestamps");
    }
    previous = ts;
    records.push_back({ts - first, size});
  }
  if (in.bad()) throw Error("read error");
  return PacketTrace{std::move(records), std::move(origin)};
}

inline PacketTrace load_trace(const std::string& path, TraceFormat format) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trace '" + path + "'");
  return read_trace(in, format, path);
}

/// Writes csv_ts_bytes with 9 fractional digits per timestamp.
inline void write_trace_csv(std::ostream& out, const PacketTrace& trace) {
  char buf[64];
  for (const auto& r : trace) {
    const int n = std::snprintf(buf, sizeof buf, "%.9f,%u\n", r.timestamp, r.size);
    out.write(buf, n);
  }
}

inline TraceSummary summarize(const PacketTrace& trace) {
  if (trace.empty()) throw Error("cannot summarize an empty trace");
  TraceSummary s;
  s.packet_count = trace.size();
  s.duration = trace.duration();
  s.total_bytes = trace.total_bytes();
  if (s.duration > 0.0) s.mean_rate = static_cast<double>(s.total_bytes) / s.duration;
  return s;
}

/// Server rate (bytes/second) at which the trace's offered load equals rho.
inline double bandwidth_for_utilization(const PacketTrace& trace, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw Error("utilization must lie in (0, 1)");
  if (trace.size() < 2 || !(trace.duration() > 0.0))
    throw Error("trace must span a positive duration to derive a bandwidth");
  return static_cast<double>(trace.total_bytes()) / (trace.duration() * rho);
}

/// Contiguous sub-trace of `count` packets from `start`, rebased to t = 0.
inline PacketTrace window(const PacketTrace& trace, std::size_t start, std::size_t count) {
  if (count == 0 || start > trace.size() || count > trace.size() - start)
    throw Error("window [" + std::to_string(start) + ", +" + std::to_string(count) +
                ") is outside a trace of " + std::to_string(trace.size()) + " packets");
  const auto src = trace.records().subspan(start, count);
  const double origin_time = src.front().timestamp;
  std::vector<PacketRecord> out;
  out.reserve(count);
  for (const auto& r : src) out.push_back({r.timestamp - origin_time, r.size});
  return PacketTrace{std::move(out), trace.origin() + "[" + std::to_string(start) + ":+" +
                                         std::to_string(count) + "]"};
}

}  // namespace lrdq
