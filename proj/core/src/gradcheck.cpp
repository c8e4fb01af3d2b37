#include "edgeseg/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "edgeseg/loss.hpp"
#include "edgeseg/model.hpp"
#include "edgeseg/ops.hpp"
#include "edgeseg/rng.hpp"

namespace edgeseg {

namespace {

constexpr double kH = 1e-5;

double rel_err(double a, double fd) {
  return std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
}

DTensor rand_tensor(Rng& rng, const Shape4& s, double lo = -1.0, double hi = 1.0) {
  DTensor t(s);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// keeps samples away from the activations' kink points so the central
// difference never straddles one
DTensor rand_smooth(Rng& rng, const Shape4& s) {
  DTensor t(s);
  for (double& v : t.data) {
    for (;;) {
      const double x = rng.uniform(-5.0, 5.0);
      bool near = false;
      for (const double k : {-3.0, 0.0, 3.0, 6.0}) near = near || std::abs(x - k) < 2e-2;
      if (!near) {
        v = x;
        break;
      }
    }
  }
  return t;
}

struct Target {
  std::string label;
  DTensor* x;
  const DTensor* grad;
};

struct Harness {
  GradCheckReport* report;
  Rng* rng;
  int coords = 6;

  void probe(const std::string& case_name, const std::function<double()>& loss,
             const std::vector<Target>& targets) const {
    for (const Target& t : targets) {
      GradCheckCase c;
      c.name = case_name + "." + t.label;
      const auto n = static_cast<std::int64_t>(t.x->data.size());
      const int k = static_cast<int>(std::min<std::int64_t>(coords, n));
      int resamples = 64;  // budget shared across the tensor's probes
      int scored = 0;
      for (int j = 0; j < k; ++j) {
        const auto i = static_cast<std::size_t>(rng->uniform_int(0, n - 1));
        const double saved = t.x->data[i];
        const auto at = [&](double x) {
          t.x->data[i] = x;
          const double l = loss();
          t.x->data[i] = saved;
          return l;
        };
        const double fd = (at(saved + kH) - at(saved - kH)) / (2.0 * kH);
        // Central differences say nothing about the gradient when a kink
        // (relu corner, pooling switch) sits inside the window, so every
        // probe point is screened for smoothness first. Where the loss is
        // smooth, shrinking the step leaves the estimate unchanged to
        // O(h^2), so fd at steps h, h/2 and h/4 must agree. A kink inside
        // the window pollutes each estimate by a different amount; a
        // single kink can make one pair of steps agree by accident but
        // never all three pairs at once. The screen never consults the
        // analytic value, so it cannot hide a wrong backward; a
        // rejected point is resampled.
        const double fd2 = (at(saved + kH / 2) - at(saved - kH / 2)) / kH;
        const double fd4 = (at(saved + kH / 4) - at(saved - kH / 4)) / (kH / 2);
        const bool rough = rel_err(fd, fd2) > 3e-6 || rel_err(fd2, fd4) > 3e-6 ||
                           rel_err(fd, fd4) > 3e-6;
        if (rough) {
          if (resamples > 0) {
            --resamples;
            --j;
          }
          continue;  // budget gone: leave the coordinate unscored
        }
        c.max_rel_err = std::max(c.max_rel_err, rel_err(t.grad->data[i], fd));
        ++scored;
      }
      if (scored == 0) {
        // Every probed point had a kink inside the difference window (a
        // per-channel scale shifts a whole feature map, so for some draws
        // no window this wide is clean). The estimator is invalid there
        // for any gradient, right or wrong, so the tensor is reported as
        // unscored instead of being counted as a pass or a failure.
        c.skipped = true;
        ++report->skipped;
      } else {
        c.passed = c.max_rel_err < report->tolerance;
        report->all_passed = report->all_passed && c.passed;
      }
      report->cases.push_back(std::move(c));
    }
  }
};

double dot(const DTensor& a, const DTensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

// wraps a per-channel vector as (C,1,1,1) so the harness can probe it
DTensor vec_tensor(const std::vector<double>& v) {
  DTensor t(Shape4{static_cast<std::int64_t>(v.size()), 1, 1, 1});
  t.data = v;
  return t;
}

void check_conv(const Harness& h, const std::string& name, Rng& rng, const Shape4& in_shape,
                std::int64_t c_out, const ConvParams& p, bool bias) {
  DTensor x = rand_tensor(rng, in_shape);
  DTensor w = rand_tensor(rng, Shape4{c_out, in_shape.c / p.groups, p.kh, p.kw});
  DTensor b = rand_tensor(rng, Shape4{c_out, 1, 1, 1});
  const DTensor r = rand_tensor(rng, conv2d_output_shape(in_shape, c_out, p));
  const auto loss = [&]() { return dot(conv2d(x, w, bias ? &b.data : nullptr, p), r); };
  const ConvGrads<double> g = conv2d_vjp(x, w, bias, p, r);
  const DTensor dbias = bias ? vec_tensor(g.dbias) : DTensor(Shape4{1, 1, 1, 1});
  std::vector<Target> targets = {{"input", &x, &g.dinput}, {"weights", &w, &g.dweights}};
  if (bias) targets.push_back({"bias", &b, &dbias});
  h.probe(name, loss, targets);
}

void check_ops(const Harness& h, Rng& rng) {
  check_conv(h, "conv3x3", rng, Shape4{2, 3, 6, 6}, 4, ConvParams{3, 3, 1, 1, 1}, true);
  check_conv(h, "conv3x3_s2", rng, Shape4{1, 3, 8, 8}, 5, ConvParams{3, 3, 2, 1, 1}, false);
  check_conv(h, "conv1x1", rng, Shape4{2, 6, 4, 4}, 3, ConvParams{1, 1, 1, 0, 1}, true);
  check_conv(h, "conv3x3_dw", rng, Shape4{1, 6, 6, 6}, 6, ConvParams{3, 3, 1, 1, 6}, true);
  check_conv(h, "conv5x5_g2", rng, Shape4{1, 4, 8, 8}, 6, ConvParams{5, 5, 1, 2, 2}, false);

  {
    DTensor x = rand_tensor(rng, Shape4{2, 3, 4, 4});
    DTensor w = rand_tensor(rng, Shape4{3, 4, 2, 2});
    DTensor b = rand_tensor(rng, Shape4{4, 1, 1, 1});
    const DTensor r = rand_tensor(rng, Shape4{2, 4, 8, 8});
    const auto loss = [&]() { return dot(transpose_conv2x2(x, w, &b.data), r); };
    const ConvGrads<double> g = transpose_conv2x2_vjp(x, w, true, r);
    const DTensor dbias = vec_tensor(g.dbias);
    h.probe("tconv2x2", loss,
            {{"input", &x, &g.dinput}, {"weights", &w, &g.dweights}, {"bias", &b, &dbias}});
  }

  for (const bool training : {true, false}) {
    DTensor x = rand_tensor(rng, Shape4{2, 4, 5, 5});
    DTensor gamma = rand_tensor(rng, Shape4{4, 1, 1, 1}, 0.5, 1.5);
    DTensor beta = rand_tensor(rng, Shape4{4, 1, 1, 1});
    std::vector<double> rm(4), rv(4);
    for (auto& v : rm) v = rng.uniform(-0.5, 0.5);
    for (auto& v : rv) v = std::exp(rng.uniform(-0.5, 0.5));
    const DTensor r = rand_tensor(rng, x.shape);
    const double eps = 1e-5;
    BatchNormCache<double> cache;
    const auto loss = [&]() {
      std::vector<double> m = rm, v = rv;
      return dot(batchnorm2d(x, gamma.data, beta.data, m, v, eps, training, 0.9, false), r);
    };
    {
      std::vector<double> m = rm, v = rv;
      batchnorm2d(x, gamma.data, beta.data, m, v, eps, training, 0.9, false, &cache);
    }
    if (!training) cache = bn_eval_cache(rm, rv, eps);
    const BatchNormGrads<double> g = batchnorm2d_vjp(x, gamma.data, cache, r, training);
    const DTensor dgamma = vec_tensor(g.dgamma);
    const DTensor dbeta = vec_tensor(g.dbeta);
    h.probe(training ? "batchnorm_train" : "batchnorm_eval", loss,
            {{"input", &x, &g.dinput}, {"gamma", &gamma, &dgamma}, {"beta", &beta, &dbeta}});
  }

  for (const ActivationKind kind :
       {ActivationKind::relu, ActivationKind::relu6, ActivationKind::sigmoid,
        ActivationKind::hard_sigmoid, ActivationKind::hard_swish}) {
    DTensor x = rand_smooth(rng, Shape4{2, 3, 5, 5});
    const DTensor r = rand_tensor(rng, x.shape);
    const auto loss = [&]() { return dot(activation(x, kind), r); };
    const DTensor g = activation_vjp(x, kind, r);
    h.probe(std::string("act_") + activation_name(kind), loss, {{"input", &x, &g}});
  }

  {
    DTensor x = rand_tensor(rng, Shape4{2, 3, 8, 8});
    const DTensor r = rand_tensor(rng, Shape4{2, 3, 4, 4});
    const auto loss = [&]() { return dot(maxpool2x2(x), r); };
    std::vector<std::int64_t> argmax;
    maxpool2x2(x, &argmax);
    const DTensor g = maxpool2x2_vjp<double>(x.shape, argmax, r);
    h.probe("maxpool2x2", loss, {{"input", &x, &g}});
  }

  {
    DTensor x = rand_tensor(rng, Shape4{2, 5, 6, 6});
    const DTensor r = rand_tensor(rng, Shape4{2, 5, 1, 1});
    const auto loss = [&]() { return dot(global_avg_pool(x), r); };
    const DTensor g = global_avg_pool_vjp<double>(x.shape, r);
    h.probe("global_avg_pool", loss, {{"input", &x, &g}});
  }

  {
    DTensor a = rand_tensor(rng, Shape4{2, 3, 4, 4});
    DTensor b = rand_tensor(rng, Shape4{2, 2, 4, 4});
    const DTensor r = rand_tensor(rng, Shape4{2, 5, 4, 4});
    const auto loss = [&]() { return dot(concat_channels(a, b), r); };
    const auto [ga, gb] = concat_channels_vjp<double>(3, 2, r);
    h.probe("concat", loss, {{"a", &a, &ga}, {"b", &b, &gb}});
  }

  {
    DTensor a = rand_tensor(rng, Shape4{2, 4, 3, 3});
    DTensor b = rand_tensor(rng, Shape4{2, 4, 3, 3});
    const DTensor r = rand_tensor(rng, a.shape);
    const auto loss = [&]() { return dot(elementwise_add(a, b), r); };
    // both addends see the cotangent unchanged
    h.probe("add", loss, {{"a", &a, &r}, {"b", &b, &r}});
  }

  {
    DTensor x = rand_tensor(rng, Shape4{2, 4, 5, 5});
    DTensor gate = rand_tensor(rng, Shape4{2, 4, 1, 1}, 0.1, 0.9);
    const DTensor r = rand_tensor(rng, x.shape);
    const auto loss = [&]() { return dot(channel_scale(x, gate), r); };
    const ChannelScaleGrads<double> g = channel_scale_vjp(x, gate, r);
    h.probe("channel_scale", loss, {{"input", &x, &g.dinput}, {"gate", &gate, &g.dgate}});
  }

  {
    DTensor x = rand_tensor(rng, Shape4{2, 5, 4, 4});
    const DTensor r = rand_tensor(rng, x.shape);
    const auto loss = [&]() { return dot(softmax_channels(x), r); };
    const DTensor g = softmax_channels_vjp(softmax_channels(x), r);
    h.probe("softmax", loss, {{"input", &x, &g}});
  }

  {
    DTensor logits = rand_tensor(rng, Shape4{2, 4, 6, 6});
    Mask target(2, 6, 6);
    for (auto& v : target.v) {
      v = rng.uniform() < 0.1 ? 255 : static_cast<std::int32_t>(rng.uniform_int(0, 3));
    }
    const auto loss = [&]() { return cross_entropy(logits, target, 255, false).value; };
    const CeResult<double> ce = cross_entropy(logits, target, 255, true);
    h.probe("cross_entropy", loss, {{"logits", &logits, &ce.dlogits}});
  }

  {
    const ConvParams p{3, 3, 1, 1, 1};
    DTensor x = rand_tensor(rng, Shape4{1, 3, 6, 6});
    DTensor w = rand_tensor(rng, Shape4{2, 3, 3, 3});
    DTensor b = rand_tensor(rng, Shape4{2, 1, 1, 1});
    Mask target(1, 6, 6);
    for (auto& v : target.v) v = static_cast<std::int32_t>(rng.uniform_int(0, 1));
    const auto loss = [&]() {
      return cross_entropy(conv2d(x, w, &b.data, p), target, 255, false).value;
    };
    const DTensor y = conv2d(x, w, &b.data, p);
    const CeResult<double> ce = cross_entropy(y, target, 255, true);
    const ConvGrads<double> g = conv2d_vjp(x, w, true, p, ce.dlogits);
    const DTensor dbias = vec_tensor(g.dbias);
    h.probe("conv_ce", loss,
            {{"input", &x, &g.dinput}, {"weights", &w, &g.dweights}, {"bias", &b, &dbias}});
  }
}

// double-precision parameters with smooth random values; running statistics
// keep mean 0, variance 1 (unused under frozen batch statistics)
ParamMap<double> random_params(const Graph& g, Rng& rng) {
  ParamMap<double> params;
  for (const ParamSpec& spec : graph_params(g)) {
    ParamT<double> p;
    p.logical_rank = spec.logical_rank;
    p.t = DTensor(spec.shape);
    if (spec.name.ends_with(".gamma")) {
      for (double& v : p.t.data) v = rng.uniform(0.5, 1.5);
    } else if (spec.name.ends_with(".running_var")) {
      for (double& v : p.t.data) v = 1.0;
    } else if (spec.name.ends_with(".running_mean")) {
      for (double& v : p.t.data) v = 0.0;
    } else {
      for (double& v : p.t.data) v = rng.uniform(-0.5, 0.5);
    }
    params.emplace(spec.name, std::move(p));
  }
  return params;
}

bool learnable(const std::string& name) {
  return !name.ends_with(".running_mean") && !name.ends_with(".running_var");
}

// probes the graph's input and a selection of its parameters against the
// dot-with-R loss (CE against `target` when target != nullptr)
void check_graph(const Harness& h, const std::string& name, const Graph& g, Rng& rng,
                 const Shape4& in_shape, const Mask* target, std::size_t max_tensors = 0) {
  DTensor x = rand_tensor(rng, in_shape);
  ParamMap<double> params = random_params(g, rng);
  const std::vector<Shape4> shapes = infer_shapes(g, in_shape);
  const Shape4 out_shape = shapes[static_cast<std::size_t>(g.output)];
  const DTensor r = target ? DTensor(Shape4{1, 1, 1, 1})
                           : rand_tensor(rng, out_shape);
  const auto loss = [&]() {
    const DTensor y = graph_forward(g, params, x, ExecMode::train_frozen_stats);
    return target ? cross_entropy(y, *target, 255, false).value : dot(y, r);
  };
  Tape<double> tape;
  graph_forward(g, params, x, ExecMode::train_frozen_stats, &tape);
  const DTensor& y = tape.outputs[static_cast<std::size_t>(g.output)];
  const DTensor cot =
      target ? cross_entropy(y, *target, 255, true).dlogits : r;
  const BackwardResult<double> back = graph_backward(g, params, tape, cot);

  std::vector<Target> targets = {{"input", &x, &back.dinput}};
  std::vector<std::string> names;
  for (const auto& [pname, grad] : back.grads) {
    if (learnable(pname)) names.push_back(pname);
  }
  if (max_tensors > 0 && names.size() > max_tensors) {
    // deterministic spread over the map order
    std::vector<std::string> picked;
    for (std::size_t i = 0; i < max_tensors; ++i) {
      picked.push_back(names[i * names.size() / max_tensors]);
    }
    names = std::move(picked);
  }
  for (const std::string& pname : names) {
    targets.push_back({pname, &params.at(pname).t, &back.grads.at(pname)});
  }
  h.probe(name, loss, targets);
}

void check_blocks(const Harness& h, Rng& rng) {
  {
    GraphBuilder b;
    int x = b.input(8);
    int g = b.gap(x);
    g = b.conv("se.fc1", g, 2, ConvParams{1, 1, 1, 0, 1}, true);
    g = b.act(g, ActivationKind::relu);
    g = b.conv("se.fc2", g, 8, ConvParams{1, 1, 1, 0, 1}, true);
    g = b.act(g, ActivationKind::hard_sigmoid);
    x = b.cscale(x, g);
    check_graph(h, "se_gate", b.finish(x), rng, Shape4{2, 8, 6, 6}, nullptr);
  }
  {
    GraphBuilder b;
    int x = b.input(8);
    MBConvSpec spec;
    spec.expand = 2;
    spec.c_out = 8;
    spec.se = true;
    x = append_mbconv(b, "blk", x, spec);
    check_graph(h, "mbconv_s1_se", b.finish(x), rng, Shape4{1, 8, 8, 8}, nullptr);
  }
  {
    GraphBuilder b;
    int x = b.input(4);
    MBConvSpec spec;
    spec.expand = 4;
    spec.c_out = 6;
    spec.stride = 2;
    spec.act = ActivationKind::hard_swish;
    x = append_mbconv(b, "blk", x, spec);
    check_graph(h, "mbconv_s2", b.finish(x), rng, Shape4{1, 4, 8, 8}, nullptr);
  }
  {
    GraphBuilder b;
    int skip = b.input(3);
    int x = append_conv_bn_act(b, "down", skip, 6, ConvParams{3, 3, 1, 1, 1},
                               ActivationKind::relu);
    x = b.maxpool(x);
    x = append_decoder_level(b, "dec", x, skip, 5);
    check_graph(h, "decoder_level", b.finish(x), rng, Shape4{1, 3, 8, 8}, nullptr);
  }
  {
    ModelConfig cfg;
    cfg.kind = ModelKind::unet_baseline;
    cfg.num_classes = 3;
    cfg.base_width = 4;
    cfg.depth = 2;
    const Model m = build_model(cfg);
    Mask target(1, 16, 16);
    for (auto& v : target.v) {
      v = rng.uniform() < 0.05 ? 255 : static_cast<std::int32_t>(rng.uniform_int(0, 2));
    }
    check_graph(h, "toy_unet_ce", m.graph, rng, Shape4{1, 3, 16, 16}, &target);
  }
}

void check_models(const Harness& h, Rng& rng) {
  for (const ModelKind kind :
       {ModelKind::unet_baseline, ModelKind::unet_mbv2, ModelKind::unet_mbv3}) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.num_classes = 3;
    if (kind == ModelKind::unet_baseline) {
      cfg.base_width = 4;
      cfg.depth = 2;
    }
    const std::int64_t side = kind == ModelKind::unet_baseline ? 16 : 32;
    const Model m = build_model(cfg);
    Mask target(1, side, side);
    for (auto& v : target.v) v = static_cast<std::int32_t>(rng.uniform_int(0, 2));
    check_graph(h, model_kind_name(kind), m.graph, rng, Shape4{1, 3, side, side}, &target,
                /*max_tensors=*/10);
  }
}

GradCheckReport run(const char* target, double tolerance, std::uint64_t seed,
                    void (*fn)(const Harness&, Rng&)) {
  GradCheckReport report;
  report.target = target;
  report.seed = seed;
  report.tolerance = tolerance;
  Rng rng(seed);
  Harness h{&report, &rng};
  fn(h, rng);
  return report;
}

}  // namespace

GradCheckReport gradcheck_ops(double tolerance, std::uint64_t seed) {
  return run("ops", tolerance, seed, &check_ops);
}

GradCheckReport gradcheck_blocks(double tolerance, std::uint64_t seed) {
  return run("blocks", tolerance, seed, &check_blocks);
}

GradCheckReport gradcheck_model(double tolerance, std::uint64_t seed) {
  return run("model", tolerance, seed, &check_models);
}

std::string gradcheck_report_text(const GradCheckReport& r) {
  std::ostringstream os;
  os << "gradient check: target " << r.target << "  seed " << r.seed << "  tolerance "
     << r.tolerance << "\n";
  std::size_t width = 4;
  for (const GradCheckCase& c : r.cases) width = std::max(width, c.name.size());
  int passed = 0;
  char buf[64];
  for (const GradCheckCase& c : r.cases) {
    os << "  " << c.name << std::string(width - c.name.size() + 2, ' ');
    if (c.skipped) {
      os << "unscored (no smooth probe point)\n";
      continue;
    }
    std::snprintf(buf, sizeof buf, "%.3e", c.max_rel_err);
    os << "max rel err " << buf << "  " << (c.passed ? "pass" : "FAIL") << "\n";
    passed += c.passed ? 1 : 0;
  }
  os << "summary: " << passed << "/" << (r.cases.size() - static_cast<std::size_t>(r.skipped))
     << " passed";
  if (r.skipped > 0) os << ", " << r.skipped << " unscored";
  os << "\n";
  return os.str();
}

}  // namespace edgeseg
