#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lrdq/estimators.hpp"
#include "lrdq/experiments.hpp"
#include "lrdq/queue_sim.hpp"
#include "lrdq/synth.hpp"
#include "lrdq/trace.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

using json = nlohmann::json;
using lrdq::Error;

std::string to_hex(const unsigned char* p, unsigned n) {
  static const char digits[] = "0123456789abcdef";
  std::string s;
  s.reserve(2 * n);
  for (unsigned i = 0; i < n; ++i) {
    s += digits[p[i] >> 4];
    s += digits[p[i] & 15];
  }
  return s;
}

class Sha256 {
public:
  Sha256() : ctx_{EVP_MD_CTX_new(), EVP_MD_CTX_free} {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
  }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw Error("sha256 update failed");
  }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md, &len) != 1) throw Error("sha256 final failed");
    return to_hex(md, len);
  }

private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

std::string sha256_of(const std::string& s) {
  Sha256 h;
  h.update(s.data(), s.size());
  return h.hex();
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Options that name files or only affect scheduling are recorded but kept out
// of the digest, so the digest identifies the data rather than where it went.
bool outside_digest(const std::string& name) {
  return name == "out" || name == "trace" || name == "samples" || name == "threads";
}

struct Manifest {
  std::string subcommand;
  json parameters = json::object();
  json inputs = json::array();
  json derived = json::object();
  std::vector<std::string> outputs;

  void capture(const CLI::App& sub) {
    for (const CLI::Option* opt : sub.get_options()) {
      if (opt->get_lnames().empty()) continue;
      const std::string& name = opt->get_lnames().front();
      if (name == "help") continue;
      if (opt->count() > 0) {
        const auto& r = opt->results();
        parameters[name] = r.size() == 1 ? json(r.front()) : json(r);
      } else if (!opt->get_default_str().empty()) {
        parameters[name] = opt->get_default_str();
      }
    }
  }

  void add_input(const std::string& path) { inputs.push_back({{"path", path}, {"sha256", sha256_file(path)}}); }

  std::string digest() const {
    json params = json::object();
    for (const auto& [k, v] : parameters.items())
      if (!outside_digest(k)) params[k] = v;
    json digests = json::array();
    for (const auto& in : inputs) digests.push_back(in["sha256"]);
    const json core{{"subcommand", subcommand}, {"version", kVersion}, {"parameters", params}, {"inputs", digests}};
    return sha256_of(core.dump());
  }

  void write(const std::string& csv_path) const {
    const json doc{{"tool", "lrdq"},     {"version", kVersion}, {"subcommand", subcommand},
                   {"parameters", parameters}, {"inputs", inputs},    {"derived", derived},
                   {"outputs", outputs}, {"digest", digest()}};
    std::ofstream out(csv_path + ".manifest.json");
    if (!out) throw Error("cannot write '" + csv_path + ".manifest.json'");
    out << doc.dump(2) << '\n';
  }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
  if (!out) throw Error("write to '" + path + "' failed");
}

// A one-row CSV either to stdout or to a file with its manifest.
void emit_table(Manifest& m, const std::optional<std::string>& out, const std::string& header,
                const std::string& row) {
  if (!out) {
    std::cout << header << '\n' << row << '\n';
    return;
  }
  m.outputs.push_back(*out);
  write_file(*out, "# manifest: " + m.digest() + "\n" + header + "\n" + row + "\n");
  m.write(*out);
}

struct TraceFlags {
  std::string path;
  std::string format = "csv";

  void add(CLI::App* sub, bool required) {
    auto* t = sub->add_option("--trace", path, "input trace file");
    if (required) t->required();
    sub->add_option("--format", format, "trace format: csv or text");
  }

  lrdq::PacketTrace load(Manifest& m) const {
    const auto f = lrdq::parse_trace_format(format);
    if (!f) throw Error("unknown trace format '" + format + "' (expected csv or text)");
    auto trace = lrdq::load_trace(path, *f);
    m.add_input(path);
    return trace;
  }
};

struct GenFlags {
  std::string model;
  double alpha = 1.5;
  double xmin = 0.01;
  std::optional<double> xmax;
  double m = 2.0;
  double lambda = 0.5;
  std::size_t cycles = 1000;
  std::string off = "iid";
  std::optional<double> q;
  std::uint32_t packet_size = 1000;
  std::optional<double> rate;
  std::size_t n = 10000;
  std::size_t sources = 1;
  double warmup = 0.0;

  CLI::Option* add(CLI::App* sub) {
    auto* opt = sub->add_option("--model", model, "generator: onoff or poisson")
                    ->check(CLI::IsMember({"onoff", "poisson"}));
    sub->add_option("--alpha", alpha, "tail index of on periods, in (1, 2)");
    sub->add_option("--xmin", xmin, "minimum on-period length (s)");
    sub->add_option("--xmax", xmax, "cap on on-period length (s)");
    sub->add_option("--m", m, "on rate in units of the server rate");
    sub->add_option("--lambda", lambda, "long-run arrival rate, in (0, 1)");
    sub->add_option("--cycles", cycles, "on/off cycles per source");
    sub->add_option("--off", off, "off-period model: iid, reordered or bounded")
        ->check(CLI::IsMember({"iid", "reordered", "bounded"}));
    sub->add_option("--q", q, "queue bound for --off bounded");
    sub->add_option("--packet-size", packet_size, "packet size (bytes)");
    sub->add_option("--rate", rate, "onoff: server rate in bytes/s (default 1e6); poisson: packets/s (default 100)");
    sub->add_option("--n", n, "packet count (poisson, or a generated trace for sweep-blocks)");
    sub->add_option("--sources", sources, "independent on/off sources to superpose");
    sub->add_option("--warmup", warmup, "leading share of a superposed trace to drop, in [0, 1)");
    return opt;
  }

  lrdq::GeneratorSpec spec() const {
    lrdq::GeneratorSpec s;
    s.on_rate = m;
    s.lambda_target = lambda;
    s.tail = lrdq::HeavyTailSpec{alpha, xmin, xmax};
    s.n_cycles = cycles;
    if (off == "reordered") {
      s.off_model = lrdq::Reordered{};
    } else if (off == "bounded") {
      if (!q) throw Error("--off bounded needs --q");
      s.off_model = lrdq::BoundedQueue{*q};
    }
    lrdq::validate(s);
    return s;
  }

  lrdq::PacketSource source() const {
    if (model == "poisson") return lrdq::PoissonPacketSource{rate.value_or(100.0), packet_size};
    if (sources != 1) throw Error("--sources is only supported by gen");
    return lrdq::OnOffPacketSource{spec(), packet_size, rate.value_or(1e6)};
  }
};

struct RateFlags {
  std::optional<double> bandwidth;
  std::optional<double> rho;

  void add(CLI::App* sub) {
    auto* b = sub->add_option("--bandwidth", bandwidth, "server rate (bytes/s)");
    auto* r = sub->add_option("--rho", rho, "target utilization in (0, 1); derives the bandwidth");
    b->excludes(r);
    r->excludes(b);
  }

  lrdq::ServiceRate get() const {
    if (bandwidth) return lrdq::ServiceRate::bytes_per_second(*bandwidth);
    if (rho) return lrdq::ServiceRate::utilization(*rho);
    throw Error("one of --bandwidth or --rho is required");
  }
};

void run_gen(GenFlags& g, std::uint64_t seed, const std::string& out, Manifest& m) {
  lrdq::PacketTrace trace;
  if (g.model == "poisson") {
    trace = lrdq::generate_poisson(g.rate.value_or(100.0), g.packet_size, g.n, seed);
  } else {
    const auto spec = g.spec();
    const lrdq::Rng rng{seed};
    const double server = g.rate.value_or(1e6);
    if (g.sources == 1 && g.warmup == 0.0) {
      const auto p = lrdq::packetize(lrdq::generate_onoff(spec, rng.substream(0)), g.packet_size, server);
      if (p.report.empty_on_periods > 0)
        std::cerr << "warning: " << p.report.empty_on_periods
                  << " on periods were too short to hold a packet (raise --rate or --xmin)\n";
      m.derived["empty_on_periods"] = p.report.empty_on_periods;
      trace = p.trace;
    } else {
      trace = lrdq::generate_onoff_aggregate({spec, g.sources, g.packet_size, server, g.warmup}, rng);
    }
  }
  std::ostringstream body;
  body << "# manifest: " << m.digest() << '\n';
  lrdq::write_trace_csv(body, trace);
  m.outputs.push_back(out);
  write_file(out, body.str());
  m.write(out);

  const auto s = lrdq::summarize(trace);
  std::cout << "packet_count,duration,total_bytes,mean_rate\n"
            << s.packet_count << ',' << num(s.duration) << ',' << s.total_bytes << ','
            << (s.mean_rate ? num(*s.mean_rate) : "") << '\n';
}

void write_sweep(const lrdq::SweepResult& r, const std::string& prefix, Manifest& m) {
  const std::string csv = prefix + ".csv";
  const std::string gp = prefix + ".gp";
  m.derived["bandwidth"] = r.bandwidth;
  m.outputs = {csv, gp};
  std::ostringstream body;
  lrdq::write_sweep_csv(body, r, m.digest());
  write_file(csv, body.str());
  std::ostringstream script;
  lrdq::write_gnuplot_script(script, r, csv, prefix + ".png");
  write_file(gp, script.str());
  m.write(csv);
  std::cerr << "wrote " << csv << " and " << gp << " (bandwidth " << num(r.bandwidth) << " B/s)\n";
}

std::vector<double> read_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::vector<double> xs;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto s = lrdq::detail::trim(line);
    if (s.empty() || s.front() == '#') continue;
    double v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || !(v > 0.0) || !std::isfinite(v))
      throw lrdq::ParseError(no, "expected a positive number, got '" + std::string(s) + "'");
    xs.push_back(v);
  }
  return xs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Queueing experiments with heavy-tailed and long-range dependent traffic"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  Manifest manifest;
  std::function<void()> action;
  std::uint64_t seed = 0;
  std::optional<std::string> out_file;
  std::string out_path;
  TraceFlags tf;
  GenFlags gf;
  RateFlags rf;

  auto* gen = app.add_subcommand("gen", "generate a synthetic trace");
  gf.add(gen)->required();
  gen->add_option("--seed", seed, "random seed")->required();
  gen->add_option("--out", out_path, "output trace (csv)")->default_val("trace.csv");
  gen->callback([&] { action = [&] { run_gen(gf, seed, out_path, manifest); }; });

  auto* summ = app.add_subcommand("summarize", "packet count, duration, bytes and mean rate");
  tf.add(summ, true);
  summ->add_option("--out", out_file, "output csv (default stdout)");
  summ->callback([&] {
    action = [&] {
      const auto s = lrdq::summarize(tf.load(manifest));
      emit_table(manifest, out_file, "packet_count,duration,total_bytes,mean_rate",
                 std::to_string(s.packet_count) + ',' + num(s.duration) + ',' + std::to_string(s.total_bytes) +
                     ',' + (s.mean_rate ? num(*s.mean_rate) : ""));
    };
  });

  auto* queue = app.add_subcommand("queue", "FIFO queue statistics of a trace");
  tf.add(queue, true);
  rf.add(queue);
  queue->add_option("--out", out_file, "output csv (default stdout)");
  queue->callback([&] {
    action = [&] {
      const auto trace = tf.load(manifest);
      const double b = rf.get().resolve(trace);
      manifest.derived["bandwidth"] = b;
      const auto s = lrdq::packet_fifo_stats(trace, b);
      emit_table(manifest, out_file, "bandwidth,mean_queue,peak_queue,horizon,utilization,empty_fraction",
                 num(b) + ',' + num(s.mean_queue) + ',' + num(s.peak_queue) + ',' + num(s.horizon) + ',' +
                     num(s.utilization) + ',' + num(s.empty_fraction));
    };
  });

  std::size_t block = 1;
  auto* shuffle = app.add_subcommand("shuffle", "block-shuffle a trace");
  tf.add(shuffle, true);
  shuffle->add_option("--block", block, "block size (packets)")->required();
  shuffle->add_option("--seed", seed, "random seed")->required();
  shuffle->add_option("--out", out_path, "output trace (csv)")->default_val("shuffled.csv");
  shuffle->callback([&] {
    action = [&] {
      const auto shuffled = lrdq::block_shuffle(tf.load(manifest), block, seed);
      std::ostringstream body;
      body << "# manifest: " << manifest.digest() << '\n';
      lrdq::write_trace_csv(body, shuffled);
      manifest.outputs.push_back(out_path);
      write_file(out_path, body.str());
      manifest.write(out_path);
    };
  });

  std::vector<std::size_t> xs;
  lrdq::ReplicationPlan plan;
  auto add_sweep = [&](const char* name, const char* help, const char* list_flag, const char* list_help) {
    auto* sub = app.add_subcommand(name, help);
    tf.add(sub, false);
    auto* model = gf.add(sub);
    sub->get_option("--trace")->excludes(model);
    model->excludes(sub->get_option("--trace"));
    rf.add(sub);
    sub->add_option(list_flag, xs, list_help)->required()->delimiter(',');
    sub->add_option("--reps", plan.replications, "replications per point");
    sub->add_option("--seed", seed, "random seed")->required();
    sub->add_option("--threads", plan.threads, "worker threads");
    sub->add_option("--out", out_path, "output prefix (writes <prefix>.csv and <prefix>.gp)")->default_val("sweep");
    return sub;
  };

  auto* sweep_samples = add_sweep("sweep-samples", "mean queue versus sample size", "--sizes",
                                  "comma-separated sample sizes (packets)");
  sweep_samples->callback([&] {
    action = [&] {
      plan.master_seed = seed;
      if (!tf.path.empty())
        write_sweep(lrdq::sample_size_sweep(tf.load(manifest), xs, rf.get(), plan), out_path, manifest);
      else if (!gf.model.empty())
        write_sweep(lrdq::sample_size_sweep(gf.source(), xs, rf.get(), plan), out_path, manifest);
      else
        throw Error("one of --trace or --model is required");
    };
  });

  auto* sweep_blocks = add_sweep("sweep-blocks", "mean queue versus shuffle block size", "--blocks",
                                 "comma-separated block sizes (packets)");
  sweep_blocks->callback([&] {
    action = [&] {
      lrdq::PacketTrace trace;
      if (!tf.path.empty()) {
        trace = tf.load(manifest);
        plan.master_seed = seed;
      } else if (!gf.model.empty()) {
        // The generated trace and the shuffles draw from disjoint seeds.
        trace = lrdq::generate_packets(gf.source(), gf.n, lrdq::Rng{seed});
        plan.master_seed = lrdq::splitmix64(seed);
      } else {
        throw Error("one of --trace or --model is required");
      }
      write_sweep(lrdq::blocksize_sweep(trace, xs, rf.get(), plan), out_path, manifest);
    };
  });

  std::optional<double> bin_width;
  std::size_t bins = 4096;
  std::string unit = "packets";
  std::vector<std::size_t> levels;
  auto* hurst = app.add_subcommand("hurst", "Hurst parameter by aggregated variance");
  tf.add(hurst, true);
  auto* bw_opt = hurst->add_option("--bin-width", bin_width, "bin width (s)");
  hurst->add_option("--bins", bins, "number of bins when --bin-width is not given")->excludes(bw_opt);
  hurst->add_option("--unit", unit, "count packets or bytes")->check(CLI::IsMember({"packets", "bytes"}));
  hurst->add_option("--levels", levels, "comma-separated aggregation levels (default powers of 2)")
      ->delimiter(',');
  hurst->add_option("--out", out_file, "output csv (default stdout)");
  hurst->callback([&] {
    action = [&] {
      const auto trace = tf.load(manifest);
      if (bins < 1) throw Error("--bins must be >= 1");
      const double w = bin_width.value_or(trace.duration() / static_cast<double>(bins));
      const auto series =
          lrdq::bin_counts(trace, w, unit == "bytes" ? lrdq::CountUnit::bytes : lrdq::CountUnit::packets);
      const auto est = levels.empty() ? lrdq::hurst_aggregated_variance(series)
                                      : lrdq::hurst_aggregated_variance(series, levels);
      if (est.status != lrdq::EstimateStatus::ok)
        std::cerr << "warning: estimate flagged " << lrdq::to_string(est.status) << '\n';
      std::string used;
      for (auto a : est.levels_used) used += (used.empty() ? "" : " ") + std::to_string(a);
      emit_table(manifest, out_file, "H,slope,fit_r2,status,bin_width,bins,levels",
                 num(est.H) + ',' + num(est.slope) + ',' + num(est.fit_r2) + ',' + lrdq::to_string(est.status) +
                     ',' + num(w) + ',' + std::to_string(series.counts.size()) + ',' + used);
    };
  });

  std::string samples_path;
  std::string field = "gaps";
  std::optional<double> lo, hi;
  auto* tailfit = app.add_subcommand("tailfit", "power-law tail index from the empirical CCDF");
  tf.add(tailfit, false);
  auto* samples_opt = tailfit->add_option("--samples", samples_path, "file of positive samples, one per line");
  samples_opt->excludes(tailfit->get_option("--trace"));
  tailfit->add_option("--field", field, "trace field to fit: gaps or sizes")
      ->check(CLI::IsMember({"gaps", "sizes"}));
  tailfit->add_option("--lo", lo, "lower end of the fit range (default 90th percentile)");
  tailfit->add_option("--hi", hi, "upper end of the fit range (default 99.9th percentile)");
  tailfit->add_option("--out", out_file, "output csv (default stdout)");
  tailfit->callback([&] {
    action = [&] {
      std::vector<double> xs_fit;
      if (!samples_path.empty()) {
        xs_fit = read_samples(samples_path);
        manifest.add_input(samples_path);
      } else if (!tf.path.empty()) {
        const auto trace = tf.load(manifest);
        if (field == "sizes") {
          for (const auto& r : trace) xs_fit.push_back(r.size);
        } else {
          for (std::size_t i = 1; i < trace.size(); ++i) {
            const double g = trace[i].timestamp - trace[i - 1].timestamp;
            if (g > 0.0) xs_fit.push_back(g);
          }
        }
      } else {
        throw Error("one of --trace or --samples is required");
      }
      if (xs_fit.empty()) throw Error("no positive samples to fit");
      const double x_lo = lo.value_or(lrdq::empirical_quantile(xs_fit, 0.9));
      const double x_hi = hi.value_or(lrdq::empirical_quantile(xs_fit, 0.999));
      const auto fit = lrdq::fit_tail_index(xs_fit, x_lo, x_hi);
      if (fit.unstable) std::cerr << "warning: no stable power law over the fit range\n";
      emit_table(manifest, out_file,
                 "alpha_hat,x_lo,x_hi,fit_r2,samples_in_range,alpha_lower_half,alpha_upper_half,unstable",
                 num(fit.alpha_hat) + ',' + num(fit.x_lo) + ',' + num(fit.x_hi) + ',' + num(fit.fit_r2) + ',' +
                     std::to_string(fit.samples_in_range) + ',' + num(fit.alpha_lower_half) + ',' +
                     num(fit.alpha_upper_half) + ',' + (fit.unstable ? "1" : "0"));
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const auto* sub = app.get_subcommands().front();
    manifest.subcommand = sub->get_name();
    manifest.capture(*sub);
    action();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
