#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "edgeseg/bench.hpp"
#include "edgeseg/profiler.hpp"
#include "json.hpp"

using namespace edgeseg;

namespace {

Model small_model() {
  ModelConfig cfg;
  cfg.kind = ModelKind::unet_baseline;
  cfg.num_classes = 2;
  cfg.base_width = 4;
  cfg.depth = 2;
  Model m = build_model(cfg);
  init_weights(m, 0);
  return m;
}

}  // namespace

TEST_CASE("throughput figures from a worked numerical example") {
  // 6.19 s per frame at 2.3 W on a 3.45 GMAC workload
  const DerivedMetrics d = derived_metrics(6.19, 2.3, 3.45e9);
  CHECK(d.fps == doctest::Approx(0.1616).epsilon(0.003));
  CHECK(d.fps_per_watt == doctest::Approx(0.0702).epsilon(0.007));
  CHECK(d.gop_per_joule == doctest::Approx(0.4847).epsilon(0.01));
}

TEST_CASE("at one watt the per-watt figure is the frame rate itself") {
  const DerivedMetrics d = derived_metrics(0.02, 1.0, 1e9);
  CHECK(d.fps_per_watt == d.fps);
  CHECK(d.gop_per_joule == doctest::Approx(2.0 * 1e9 * d.fps / 1e9).epsilon(1e-12));
}

TEST_CASE("halving the latency doubles every throughput figure") {
  const DerivedMetrics slow = derived_metrics(0.4, 2.0, 5e9);
  const DerivedMetrics fast = derived_metrics(0.2, 2.0, 5e9);
  CHECK(fast.fps == doctest::Approx(2.0 * slow.fps).epsilon(1e-12));
  CHECK(fast.fps_per_watt == doctest::Approx(2.0 * slow.fps_per_watt).epsilon(1e-12));
  CHECK(fast.gop_per_joule == doctest::Approx(2.0 * slow.gop_per_joule).epsilon(1e-12));
}

TEST_CASE("without a power figure the energy columns stay at zero") {
  const DerivedMetrics d = derived_metrics(0.1, 0.0, 1e9);
  CHECK(d.fps == doctest::Approx(10.0));
  CHECK(d.fps_per_watt == 0.0);
  CHECK(d.gop_per_joule == 0.0);
}

TEST_CASE("impossible measurement inputs are rejected") {
  CHECK_THROWS_WITH_AS(derived_metrics(0.0, 1.0, 1e9), doctest::Contains("latency"),
                       std::invalid_argument);
  CHECK_THROWS_AS(derived_metrics(-0.5, 1.0, 1e9), std::invalid_argument);
  CHECK_THROWS_WITH_AS(derived_metrics(0.1, -1.0, 1e9), doctest::Contains("power"),
                       std::invalid_argument);
  CHECK_THROWS_AS(derived_metrics(0.1, 1.0, -1.0), std::invalid_argument);
}

TEST_CASE("the default protocol is a thousand frames, twenty rounds, twenty warmups") {
  BenchConfig cfg;
  CHECK(cfg.frames_per_round == 1000);
  CHECK(cfg.rounds == 20);
  CHECK(cfg.warmup_frames == 20);
  CHECK(cfg.input == Shape4{1, 3, 512, 512});
  CHECK(cfg.power_watts == 0.0);
  CHECK(cfg.threads == 1);
}

TEST_CASE("configuration errors surface before any timing") {
  Model m = small_model();
  BenchConfig cfg;
  cfg.frames_per_round = 0;
  CHECK_THROWS_WITH_AS(run_bench(m, cfg), doctest::Contains("frames"), std::invalid_argument);
  cfg = BenchConfig{};
  cfg.rounds = 0;
  CHECK_THROWS_WITH_AS(run_bench(m, cfg), doctest::Contains("rounds"), std::invalid_argument);
  cfg = BenchConfig{};
  cfg.warmup_frames = -1;
  CHECK_THROWS_AS(run_bench(m, cfg), std::invalid_argument);
  cfg = BenchConfig{};
  cfg.threads = 0;
  CHECK_THROWS_AS(run_bench(m, cfg), std::invalid_argument);
  cfg = BenchConfig{};
  cfg.input = Shape4{1, 3, 30, 30};  // depth-2 encoder needs multiples of 4
  CHECK_THROWS_WITH_AS(run_bench(m, cfg), doctest::Contains("divisible"),
                       std::invalid_argument);
}

TEST_CASE("a short measured run reports consistent, positive figures") {
  Model m = small_model();
  BenchConfig cfg;
  cfg.frames_per_round = 5;
  cfg.rounds = 3;
  cfg.warmup_frames = 2;
  cfg.input = Shape4{1, 3, 16, 16};
  cfg.power_watts = 2.5;
  BenchReport r = run_bench(m, cfg);

  REQUIRE(r.round_mean_latency.size() == 3);
  for (double lat : r.round_mean_latency) CHECK(lat > 0.0);
  CHECK(r.latency_mean > 0.0);
  CHECK(r.latency_median > 0.0);
  CHECK(r.latency_p95 >= r.latency_median);
  CHECK(r.warmup_mean_latency > 0.0);
  CHECK(r.timer_resolution_ns > 0);

  // identities, not approximations
  CHECK(r.fps == 1.0 / r.latency_mean);
  CHECK(r.has_power);
  CHECK(r.fps_per_watt == r.fps / 2.5);
  CHECK(r.gop_per_joule == 2.0 * static_cast<double>(r.macs_per_frame) * r.fps_per_watt / 1e9);
  CHECK(r.ops_per_frame == 2 * r.macs_per_frame);

  // the analytic figure matches the layer profile at this input
  const ModelProfile prof = profile_model(m.graph, cfg.input);
  CHECK(r.macs_per_frame == prof.total_macs);

  // pooled mean equals the mean of round means when rounds are equal-sized
  double pooled = 0.0;
  for (double lat : r.round_mean_latency) pooled += lat;
  pooled /= 3.0;
  CHECK(r.latency_mean == doctest::Approx(pooled).epsilon(1e-9));
}

TEST_CASE("zero warmup frames leave the warmup column at zero") {
  Model m = small_model();
  BenchConfig cfg;
  cfg.frames_per_round = 2;
  cfg.rounds = 1;
  cfg.warmup_frames = 0;
  cfg.input = Shape4{1, 3, 16, 16};
  BenchReport r = run_bench(m, cfg);
  CHECK(r.warmup_mean_latency == 0.0);
  CHECK(!r.has_power);
  CHECK(r.fps_per_watt == 0.0);
}

TEST_CASE("the json report round-trips the numbers") {
  Model m = small_model();
  BenchConfig cfg;
  cfg.frames_per_round = 3;
  cfg.rounds = 2;
  cfg.warmup_frames = 1;
  cfg.input = Shape4{1, 3, 16, 16};
  cfg.power_watts = 2.0;
  BenchReport r = run_bench(m, cfg);

  auto doc = nlohmann::json::parse(bench_to_json(r, m.config));
  CHECK(doc["config"]["model"] == "unet");
  CHECK(doc["config"]["frames_per_round"] == 3);
  CHECK(doc["config"]["rounds"] == 2);
  CHECK(doc["config"]["power_watts"].get<double>() == 2.0);
  CHECK(!doc.contains("timestamp"));
  CHECK(doc["rounds"].size() == 2);
  CHECK(doc["latency"]["mean"].get<double>() == r.latency_mean);
  CHECK(doc["fps"].get<double>() == r.fps);
  CHECK(doc["fps_per_watt"].get<double>() == r.fps_per_watt);
  CHECK(doc["gop_per_joule"].get<double>() == r.gop_per_joule);
  CHECK(doc["macs_per_frame"].get<std::uint64_t>() == r.macs_per_frame);
  CHECK(doc["ops_per_frame"].get<std::uint64_t>() == r.ops_per_frame);
  CHECK(doc["timer_resolution_ns"].get<std::uint64_t>() == r.timer_resolution_ns);

  auto stamped = nlohmann::json::parse(bench_to_json(r, m.config, "2026-02-02T00:00:00Z"));
  CHECK(stamped["timestamp"] == "2026-02-02T00:00:00Z");

  const std::string table = bench_table(r, m.config);
  CHECK(table.find("latency") != std::string::npos);
  CHECK(table.find("GOP/frame") != std::string::npos);
  CHECK(table.find("fps/W") != std::string::npos);
}

TEST_CASE("without power the json omits the energy keys") {
  Model m = small_model();
  BenchConfig cfg;
  cfg.frames_per_round = 1;
  cfg.rounds = 1;
  cfg.warmup_frames = 0;
  cfg.input = Shape4{1, 3, 16, 16};
  BenchReport r = run_bench(m, cfg);
  auto doc = nlohmann::json::parse(bench_to_json(r, m.config));
  CHECK(!doc.contains("fps_per_watt"));
  CHECK(!doc.contains("gop_per_joule"));
  CHECK(!doc["config"].contains("power_watts"));
}
