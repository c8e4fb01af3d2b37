#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <string>
#include <vector>

#include "doctest.h"
#include "edgeseg/graph.hpp"
#include "edgeseg/model.hpp"
#include "edgeseg/profiler.hpp"
#include "edgeseg/rng.hpp"
#include "json.hpp"
#include "oracles.hpp"

using namespace edgeseg;

namespace {

Params default_params(const Graph& g) {
  Params params;
  for (const ParamSpec& ps : graph_params(g)) {
    Param p;
    p.t = Tensor(ps.shape);
    p.logical_rank = ps.logical_rank;
    if (ps.name.ends_with(".gamma") || ps.name.ends_with(".running_var"))
      for (auto& v : p.t.data) v = 1.0f;
    params[ps.name] = std::move(p);
  }
  return params;
}

std::uint64_t run_and_count(const Graph& g, Params& params, const Shape4& in_shape) {
  Rng rng(1);
  Tensor x(in_shape);
  for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  std::uint64_t macs = 0;
  graph_forward<float>(g, params, x, ExecMode::eval, nullptr, &macs);
  return macs;
}

// learned values only; running statistics live in the registry but are
// tracked, not trained, so the size/params columns exclude them
std::int64_t learnable_numel(const Graph& g) {
  std::int64_t total = 0;
  for (const ParamSpec& ps : graph_params(g))
    if (!ps.name.ends_with(".running_mean") && !ps.name.ends_with(".running_var"))
      total += ps.shape.numel();
  return total;
}

std::int64_t registry_numel(const Graph& g) {
  std::int64_t total = 0;
  for (const ParamSpec& ps : graph_params(g)) total += ps.shape.numel();
  return total;
}

}  // namespace

TEST_CASE("single convolution layers: analytical count == executed count == formula") {
  struct Case {
    std::int64_t c_in, c_out;
    ConvParams p;
  };
  const Case cases[] = {
      {3, 5, {3, 3, 1, 1, 1}},   // stride 1, padded
      {3, 5, {3, 3, 2, 1, 1}},   // stride 2
      {6, 6, {3, 3, 1, 1, 6}},   // depthwise
      {7, 4, {1, 1, 1, 0, 1}},   // pointwise
      {4, 8, {5, 5, 1, 2, 1}},   // larger window
      {4, 6, {3, 3, 1, 1, 2}},   // grouped
  };
  for (const Case& c : cases) {
    GraphBuilder b;
    int out = b.conv("only", b.input(c.c_in), c.c_out, c.p, /*has_bias=*/false);
    Graph g = b.finish(out);
    Params params = default_params(g);
    const Shape4 in_shape{2, c.c_in, 8, 8};
    CAPTURE(c.c_in);
    CAPTURE(c.c_out);
    CAPTURE(c.p.groups);

    ModelProfile prof = profile_model(g, in_shape);
    const std::uint64_t expected = testref::conv_macs_naive(in_shape, c.c_out, c.p);
    CHECK(prof.total_macs == expected);
    CHECK(run_and_count(g, params, in_shape) == expected);
    CHECK(prof.total_params ==
          c.p.kh * c.p.kw * (c.c_in / c.p.groups) * c.c_out);
    CHECK(prof.layers.back().cio ==
          static_cast<std::uint64_t>(in_shape.numel() +
                                     prof.layers.back().out_shape.numel()));
  }
}

TEST_CASE("a biased convolution adds one parameter per output channel") {
  GraphBuilder b;
  int out = b.conv("only", b.input(3), 5, ConvParams{3, 3, 1, 1, 1}, /*has_bias=*/true);
  Graph g = b.finish(out);
  ModelProfile prof = profile_model(g, {1, 3, 8, 8});
  CHECK(prof.total_params == 3 * 3 * 3 * 5 + 5);
}

TEST_CASE("the learned upsampler: analytical count == executed count") {
  GraphBuilder b;
  int out = b.tconv("up", b.input(6), 4);
  Graph g = b.finish(out);
  Params params = default_params(g);
  const Shape4 in_shape{1, 6, 5, 5};

  ModelProfile prof = profile_model(g, in_shape);
  // every output pixel receives exactly one tap per (input, output) channel pair
  const std::uint64_t expected = 6ull * (1 * 4 * 10 * 10);
  CHECK(prof.total_macs == expected);
  CHECK(run_and_count(g, params, in_shape) == expected);
  CHECK(prof.total_params == 4 * 6 * 4);
  CHECK(prof.layers.back().out_shape == Shape4{1, 4, 10, 10});
}

TEST_CASE("whole models report exactly the multiply-accumulates they execute") {
  {
    ModelConfig cfg;
    cfg.kind = ModelKind::unet_baseline;
    cfg.num_classes = 3;
    cfg.base_width = 4;
    cfg.depth = 2;
    Model m = build_model(cfg);
    init_weights(m, 2);
    ModelProfile prof = profile_model(m.graph, {1, 3, 16, 16});
    CHECK(run_and_count(m.graph, m.params, {1, 3, 16, 16}) == prof.total_macs);
  }
  for (ModelKind kind : {ModelKind::unet_mbv2, ModelKind::unet_mbv3}) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.num_classes = 3;
    Model m = build_model(cfg);
    init_weights(m, 2);
    CAPTURE(model_kind_name(kind));
    ModelProfile prof = profile_model(m.graph, {1, 3, 64, 64});
    CHECK(run_and_count(m.graph, m.params, {1, 3, 64, 64}) == prof.total_macs);
  }
}

TEST_CASE("parameter counts ignore resolution; compute scales with pixels") {
  ModelConfig cfg;
  cfg.kind = ModelKind::unet_mbv2;
  cfg.num_classes = 9;
  Model m = build_model(cfg);
  ModelProfile lo = profile_model(m.graph, {1, 3, 64, 64});
  ModelProfile hi = profile_model(m.graph, {1, 3, 128, 128});
  CHECK(lo.total_params == hi.total_params);
  CHECK(hi.total_macs == 4 * lo.total_macs);  // 2x per side, exactly
  CHECK(lo.model_size_bytes == 4 * lo.total_params);
}

TEST_CASE("the nine-class mobilenet-v2 variant sits in the few-million band") {
  ModelConfig cfg;
  cfg.kind = ModelKind::unet_mbv2;
  cfg.num_classes = 9;
  Model m = build_model(cfg);
  ModelProfile prof = profile_model(m.graph, {1, 3, 64, 64});
  CHECK(prof.total_params >= 4'000'000);
  CHECK(prof.total_params <= 9'000'000);
  CHECK(prof.total_params == learnable_numel(m.graph));
}

TEST_CASE("totals are the column sums over layers") {
  ModelConfig cfg;
  cfg.kind = ModelKind::unet_mbv3;
  cfg.num_classes = 5;
  Model m = build_model(cfg);
  ModelProfile prof = profile_model(m.graph, {1, 3, 32, 32});
  std::int64_t params = 0;
  std::uint64_t macs = 0, cio = 0;
  for (const LayerProfile& lp : prof.layers) {
    params += lp.params;
    macs += lp.macs;
    cio += lp.cio;
  }
  CHECK(params == prof.total_params);
  CHECK(macs == prof.total_macs);
  CHECK(cio == prof.total_cio);
  CHECK(prof.model_size_bytes == 4 * prof.total_params);
  CHECK(prof.total_params == learnable_numel(m.graph));
}

TEST_CASE("normalization layers carry two learned values per channel, no compute") {
  GraphBuilder b;
  int x = b.conv("c", b.input(3), 10, ConvParams{3, 3, 1, 1, 1}, false);
  x = b.bn("c.bn", x);
  Graph g = b.finish(x);
  ModelProfile prof = profile_model(g, {1, 3, 8, 8});
  const LayerProfile& bnp = prof.layers.back();
  REQUIRE(bnp.kind == std::string("bn"));
  CHECK(bnp.params == 20);
  CHECK(bnp.macs == 0);
  CHECK(bnp.cio == 0);
}

TEST_CASE("pooling, activation and merge layers report no parameters or MACs") {
  ModelConfig cfg;
  cfg.kind = ModelKind::unet_baseline;
  cfg.num_classes = 2;
  cfg.base_width = 4;
  cfg.depth = 1;
  Model m = build_model(cfg);
  ModelProfile prof = profile_model(m.graph, {1, 3, 8, 8});
  for (const LayerProfile& lp : prof.layers) {
    if (lp.kind == std::string("act") || lp.kind == std::string("maxpool") ||
        lp.kind == std::string("concat") || lp.kind == std::string("input")) {
      CHECK(lp.params == 0);
      CHECK(lp.macs == 0);
      CHECK(lp.cio == 0);
    }
  }
}

TEST_CASE("a textbook inverted residual block budget, counted two ways") {
  GraphBuilder b;
  MBConvSpec spec;
  spec.expand = 6;
  spec.c_out = 16;
  spec.stride = 1;
  int out = append_mbconv(b, "blk", b.input(16), spec);
  Graph g = b.finish(out);
  // expand 16*96, depthwise 9*96, project 96*16, plus 2 values per
  // normalized channel: 3936 + 416
  ModelProfile prof = profile_model(g, {1, 16, 8, 8});
  CHECK(prof.total_params == 4352);
  CHECK(registry_numel(g) == 4352 + 2 * (96 + 96 + 16));  // running stats ride along
}

TEST_CASE("the json report carries the layer table and totals") {
  ModelConfig cfg;
  cfg.kind = ModelKind::unet_baseline;
  cfg.num_classes = 3;
  cfg.base_width = 4;
  cfg.depth = 1;
  Model m = build_model(cfg);
  ModelProfile prof = profile_model(m.graph, {1, 3, 16, 16});

  auto doc = nlohmann::json::parse(profile_to_json(prof, cfg));
  CHECK(doc["model"] == "unet");
  CHECK(doc["classes"] == 3);
  CHECK(doc["input"] == nlohmann::json({1, 3, 16, 16}));
  CHECK(!doc.contains("timestamp"));
  CHECK(doc["layers"].size() == prof.layers.size());
  CHECK(doc["totals"]["params"].get<std::int64_t>() == prof.total_params);
  CHECK(doc["totals"]["macs"].get<std::uint64_t>() == prof.total_macs);
  CHECK(doc["totals"]["cio"].get<std::uint64_t>() == prof.total_cio);
  CHECK(doc["totals"]["model_size_bytes"].get<std::int64_t>() == prof.model_size_bytes);

  auto stamped = nlohmann::json::parse(profile_to_json(prof, cfg, "2026-01-01T00:00:00Z"));
  CHECK(stamped["timestamp"] == "2026-01-01T00:00:00Z");
}

TEST_CASE("the human table names every layer and the operation total") {
  ModelConfig cfg;
  cfg.kind = ModelKind::unet_baseline;
  cfg.num_classes = 3;
  cfg.base_width = 4;
  cfg.depth = 1;
  Model m = build_model(cfg);
  ModelProfile prof = profile_model(m.graph, {1, 3, 16, 16});
  const std::string table = profile_table(prof, cfg);
  CHECK(table.find("GOP/frame") != std::string::npos);
  CHECK(table.find("totals:") != std::string::npos);
  CHECK(table.find("encoder.stage1.conv1") != std::string::npos);
  CHECK(table.find("head") != std::string::npos);
}
