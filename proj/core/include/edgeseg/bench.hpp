#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edgeseg/model.hpp"

namespace edgeseg {

struct BenchConfig {
  std::int64_t frames_per_round = 1000;
  int rounds = 20;
  std::int64_t warmup_frames = 20;  // timed separately, excluded from stats
  Shape4 input{1, 3, 512, 512};
  double power_watts = 0.0;  // 0 means no power figure is available
  int threads = 1;
};

struct DerivedMetrics {
  double fps = 0.0;
  double fps_per_watt = 0.0;   // 0 when power is unknown
  double gop_per_joule = 0.0;  // 2 * MACs * (fps/W) / 1e9; 0 without power
};

/// Throughput figures from a mean frame latency. fps is the exact
/// reciprocal, so fps * latency == 1 holds by construction; the energy
/// figure counts two operations per multiply-accumulate.
DerivedMetrics derived_metrics(double latency_mean_s, double power_watts,
                               double macs_per_frame);

struct BenchReport {
  BenchConfig config;
  std::vector<double> round_mean_latency;  // seconds, one entry per round
  double latency_mean = 0.0;               // over every steady-state frame
  double latency_median = 0.0;
  double latency_p95 = 0.0;  // nearest-rank percentile
  double fps = 0.0;
  bool has_power = false;
  double fps_per_watt = 0.0;
  double gop_per_joule = 0.0;
  double warmup_mean_latency = 0.0;  // 0 when no warmup frames ran
  std::uint64_t macs_per_frame = 0;  // analytic, from the layer profile
  std::uint64_t ops_per_frame = 0;   // 2 * macs_per_frame
  std::uint64_t timer_resolution_ns = 0;
};

/// Times eval-mode forward passes over a fixed random input. Frames are
/// timed one by one; per-round means are kept alongside the pooled
/// mean/median/p95.
BenchReport run_bench(Model& m, const BenchConfig& cfg);

/// timestamp is copied verbatim when non-empty.
std::string bench_to_json(const BenchReport& r, const ModelConfig& cfg,
                          const std::string& timestamp = "");

/// Aligned summary for terminals, milliseconds for latency.
std::string bench_table(const BenchReport& r, const ModelConfig& cfg);

}  // namespace edgeseg
