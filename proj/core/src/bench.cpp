#include "edgeseg/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "edgeseg/profiler.hpp"
#include "edgeseg/rng.hpp"
#include "edgeseg/runtime.hpp"

namespace edgeseg {

DerivedMetrics derived_metrics(double latency_mean_s, double power_watts,
                               double macs_per_frame) {
  if (!(latency_mean_s > 0.0)) {
    throw std::invalid_argument("bench: latency must be positive, got " +
                                std::to_string(latency_mean_s));
  }
  if (power_watts < 0.0) {
    throw std::invalid_argument("bench: power must be non-negative, got " +
                                std::to_string(power_watts));
  }
  if (macs_per_frame < 0.0) {
    throw std::invalid_argument("bench: MACs per frame must be non-negative");
  }
  DerivedMetrics d;
  d.fps = 1.0 / latency_mean_s;
  if (power_watts > 0.0) {
    d.fps_per_watt = d.fps / power_watts;
    d.gop_per_joule = 2.0 * macs_per_frame * d.fps_per_watt / 1e9;
  }
  return d;
}

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (const double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

BenchReport run_bench(Model& m, const BenchConfig& cfg) {
  if (cfg.frames_per_round < 1) throw std::invalid_argument("bench: frames must be >= 1");
  if (cfg.rounds < 1) throw std::invalid_argument("bench: rounds must be >= 1");
  if (cfg.warmup_frames < 0) throw std::invalid_argument("bench: warmup must be >= 0");
  if (cfg.threads < 1) throw std::invalid_argument("bench: threads must be >= 1");
  if (cfg.power_watts < 0.0) throw std::invalid_argument("bench: power must be >= 0");

  BenchReport r;
  r.config = cfg;
  // static shape validation and the analytic MAC figure, before any timing
  const ModelProfile prof = profile_model(m.graph, cfg.input);
  const std::int64_t stride = model_stride(m.config);
  if (cfg.input.h % stride != 0 || cfg.input.w % stride != 0) {
    throw std::invalid_argument("bench: input " + cfg.input.str() +
                                " is not divisible by the required stride " +
                                std::to_string(stride));
  }
  r.macs_per_frame = prof.total_macs;
  r.ops_per_frame = 2 * prof.total_macs;
  r.timer_resolution_ns = runtime::timer_resolution_ns();

  runtime::set_num_threads(cfg.threads);
  Rng rng(0);
  Tensor input(cfg.input);
  for (float& v : input.data) v = static_cast<float>(rng.uniform());

  using clock = std::chrono::steady_clock;
  const auto time_frame = [&]() {
    const auto t0 = clock::now();
    model_logits(m, input, ExecMode::eval);
    const auto t1 = clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
  };

  std::vector<double> warmup;
  warmup.reserve(static_cast<std::size_t>(cfg.warmup_frames));
  for (std::int64_t i = 0; i < cfg.warmup_frames; ++i) warmup.push_back(time_frame());
  if (!warmup.empty()) r.warmup_mean_latency = mean_of(warmup);

  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(cfg.rounds) *
                  static_cast<std::size_t>(cfg.frames_per_round));
  for (int round = 0; round < cfg.rounds; ++round) {
    std::vector<double> frames;
    frames.reserve(static_cast<std::size_t>(cfg.frames_per_round));
    for (std::int64_t f = 0; f < cfg.frames_per_round; ++f) frames.push_back(time_frame());
    r.round_mean_latency.push_back(mean_of(frames));
    samples.insert(samples.end(), frames.begin(), frames.end());
  }

  r.latency_mean = mean_of(samples);
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  r.latency_median =
      n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  r.latency_p95 = samples[std::max<std::size_t>(rank, 1) - 1];

  const DerivedMetrics d =
      derived_metrics(r.latency_mean, cfg.power_watts, static_cast<double>(r.macs_per_frame));
  r.fps = d.fps;
  r.has_power = cfg.power_watts > 0.0;
  r.fps_per_watt = d.fps_per_watt;
  r.gop_per_joule = d.gop_per_joule;
  return r;
}

std::string bench_to_json(const BenchReport& r, const ModelConfig& cfg,
                          const std::string& timestamp) {
  nlohmann::ordered_json doc;
  nlohmann::ordered_json c;
  c["model"] = model_kind_name(cfg.kind);
  c["classes"] = cfg.num_classes;
  c["input"] = {r.config.input.n, r.config.input.c, r.config.input.h, r.config.input.w};
  c["frames_per_round"] = r.config.frames_per_round;
  c["rounds"] = r.config.rounds;
  c["warmup_frames"] = r.config.warmup_frames;
  c["threads"] = r.config.threads;
  if (r.has_power) c["power_watts"] = r.config.power_watts;
  doc["config"] = std::move(c);
  if (!timestamp.empty()) doc["timestamp"] = timestamp;
  doc["macs_per_frame"] = r.macs_per_frame;
  doc["ops_per_frame"] = r.ops_per_frame;
  doc["rounds"] = r.round_mean_latency;
  doc["latency"] = {{"mean", r.latency_mean},
                    {"median", r.latency_median},
                    {"p95", r.latency_p95}};
  doc["fps"] = r.fps;
  if (r.has_power) {
    doc["fps_per_watt"] = r.fps_per_watt;
    doc["gop_per_joule"] = r.gop_per_joule;
  }
  doc["warmup"] = {{"frames", r.config.warmup_frames},
                   {"mean_latency", r.warmup_mean_latency}};
  doc["timer_resolution_ns"] = r.timer_resolution_ns;
  return doc.dump(2) + "\n";
}

std::string bench_table(const BenchReport& r, const ModelConfig& cfg) {
  std::ostringstream os;
  os << model_kind_name(cfg.kind) << "  input " << r.config.input.str() << "  threads "
     << r.config.threads << "\n";
  os << "frames " << r.config.frames_per_round << " x " << r.config.rounds
     << " rounds, warmup " << r.config.warmup_frames << "  (timer resolution "
     << r.timer_resolution_ns << " ns)\n";
  os << std::fixed << std::setprecision(3);
  os << "latency  mean " << r.latency_mean * 1e3 << " ms   median " << r.latency_median * 1e3
     << " ms   p95 " << r.latency_p95 * 1e3 << " ms\n";
  if (r.warmup_mean_latency > 0.0) {
    os << "warmup   mean " << r.warmup_mean_latency * 1e3 << " ms\n";
  }
  os << "compute  " << r.macs_per_frame << " MACs/frame = "
     << 2.0 * static_cast<double>(r.macs_per_frame) / 1e9 << " GOP/frame (2 ops per MAC)\n";
  os << "fps      " << r.fps;
  os << "   GOP/s " << 2.0 * static_cast<double>(r.macs_per_frame) * r.fps / 1e9 << "\n";
  if (r.has_power) {
    os << "power    " << r.config.power_watts << " W   fps/W " << r.fps_per_watt
       << "   GOP/J " << r.gop_per_joule << "\n";
  }
  return os.str();
}

}  // namespace edgeseg
