#include "edgeseg/model.hpp"

#include <cmath>
#include <stdexcept>

#include "edgeseg/rng.hpp"

namespace edgeseg {

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::unet_baseline: return "unet";
    case ModelKind::unet_mbv2: return "umbv2";
    case ModelKind::unet_mbv3: return "umbv3";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& s) {
  if (s == "unet") return ModelKind::unet_baseline;
  if (s == "umbv2") return ModelKind::unet_mbv2;
  if (s == "umbv3") return ModelKind::unet_mbv3;
  throw std::invalid_argument("model: unknown kind '" + s + "' (expected unet, umbv2 or umbv3)");
}

namespace {

constexpr ConvParams kConv1x1{1, 1, 1, 0, 1};

ConvParams conv3x3(int stride = 1) { return ConvParams{3, 3, stride, 1, 1}; }

}  // namespace

int append_conv_bn_act(GraphBuilder& b, const std::string& name, int in, std::int64_t c_out,
                       const ConvParams& p, ActivationKind act) {
  int x = b.conv(name, in, c_out, p, /*has_bias=*/false);
  x = b.bn(name + ".bn", x);
  if (act != ActivationKind::identity) x = b.act(x, act);
  return x;
}

int append_mbconv(GraphBuilder& b, const std::string& name, int in, const MBConvSpec& spec) {
  const std::int64_t c_in = b.channels(in);
  const std::int64_t mid = c_in * spec.expand;
  int x = in;
  if (spec.expand != 1) x = append_conv_bn_act(b, name + ".expand", x, mid, kConv1x1, spec.act);
  ConvParams dw{spec.kernel, spec.kernel, spec.stride, (spec.kernel - 1) / 2,
                static_cast<int>(mid)};
  x = append_conv_bn_act(b, name + ".dwconv", x, mid, dw, spec.act);
  if (spec.se) {
    if (mid % 4 != 0) {
      throw std::invalid_argument("model: block '" + name + "' squeeze width " +
                                  std::to_string(mid) + " is not divisible by the reduction 4");
    }
    int g = b.gap(x);
    g = b.conv(name + ".se.fc1", g, mid / 4, kConv1x1, /*has_bias=*/true);
    g = b.act(g, ActivationKind::relu);
    g = b.conv(name + ".se.fc2", g, mid, kConv1x1, /*has_bias=*/true);
    g = b.act(g, ActivationKind::hard_sigmoid);
    x = b.cscale(x, g);
  }
  x = append_conv_bn_act(b, name + ".project", x, spec.c_out, kConv1x1, ActivationKind::identity);
  if (spec.stride == 1 && c_in == spec.c_out) x = b.add(in, x);
  return x;
}

int append_decoder_level(GraphBuilder& b, const std::string& name, int in, int skip,
                         std::int64_t width) {
  int x = b.tconv(name + ".up", in, width);
  if (skip >= 0) x = b.concat(x, skip);
  x = append_conv_bn_act(b, name + ".conv1", x, width, conv3x3(), ActivationKind::relu);
  x = append_conv_bn_act(b, name + ".conv2", x, width, conv3x3(), ActivationKind::relu);
  return x;
}

namespace {

// Decoder shared by both mobile encoders: five upsampling levels back to
// full resolution, the first four concatenating an encoder tap.
int mobile_decoder(GraphBuilder& b, int x, const std::vector<int>& taps,
                   const std::vector<std::int64_t>& widths, int num_classes) {
  for (int level = 1; level <= 5; ++level) {
    int skip = level <= 4 ? taps[4 - level] : -1;
    x = append_decoder_level(b, "decoder.level" + std::to_string(level), x, skip,
                             widths[level - 1]);
  }
  return b.conv("head", x, num_classes, kConv1x1, /*has_bias=*/true);
}

Graph build_baseline(const ModelConfig& cfg) {
  GraphBuilder b;
  int x = b.input(cfg.in_channels);
  std::vector<int> taps;
  std::int64_t width = cfg.base_width;
  for (int i = 1; i <= cfg.depth; ++i) {
    const std::string name = "encoder.stage" + std::to_string(i);
    x = append_conv_bn_act(b, name + ".conv1", x, width, conv3x3(), ActivationKind::relu);
    x = append_conv_bn_act(b, name + ".conv2", x, width, conv3x3(), ActivationKind::relu);
    taps.push_back(x);
    x = b.maxpool(x);
    width *= 2;
  }
  x = append_conv_bn_act(b, "bottleneck.conv1", x, width, conv3x3(), ActivationKind::relu);
  x = append_conv_bn_act(b, "bottleneck.conv2", x, width, conv3x3(), ActivationKind::relu);
  for (int i = 1; i <= cfg.depth; ++i) {
    width /= 2;
    const std::string name = "decoder.stage" + std::to_string(i);
    x = append_decoder_level(b, name, x, taps[cfg.depth - i], width);
  }
  x = b.conv("head", x, cfg.num_classes, kConv1x1, /*has_bias=*/true);
  return b.finish(x);
}

Graph build_umbv2(const ModelConfig& cfg) {
  GraphBuilder b;
  int x = b.input(cfg.in_channels);
  x = append_conv_bn_act(b, "encoder.stem", x, 32, conv3x3(2), ActivationKind::relu6);
  struct Stage {
    int expand;
    std::int64_t c_out;
    int repeats;
    int stride;
  };
  const Stage stages[] = {
      {1, 16, 1, 1}, {6, 24, 2, 2}, {6, 32, 3, 2}, {6, 64, 4, 2},
      {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1},
  };
  std::vector<int> taps;
  int s = 0;
  for (const Stage& st : stages) {
    ++s;
    if (st.stride == 2) taps.push_back(x);
    for (int i = 0; i < st.repeats; ++i) {
      MBConvSpec spec;
      spec.expand = st.expand;
      spec.c_out = st.c_out;
      spec.stride = i == 0 ? st.stride : 1;
      spec.act = ActivationKind::relu6;
      const std::string name =
          "encoder.stage" + std::to_string(s) + ".block" + std::to_string(i + 1);
      x = append_mbconv(b, name, x, spec);
    }
  }
  x = mobile_decoder(b, x, taps, cfg.decoder_widths, cfg.num_classes);
  return b.finish(x);
}

Graph build_umbv3(const ModelConfig& cfg) {
  GraphBuilder b;
  int x = b.input(cfg.in_channels);
  x = append_conv_bn_act(b, "encoder.stem", x, 16, conv3x3(2), ActivationKind::hard_swish);
  struct Block {
    int kernel;
    int expand;
    std::int64_t c_out;
    int stride;
    bool se;
    ActivationKind act;
  };
  constexpr ActivationKind RE = ActivationKind::relu;
  constexpr ActivationKind HS = ActivationKind::hard_swish;
  const Block blocks[] = {
      {3, 1, 16, 1, true, RE},  {3, 4, 24, 2, false, RE}, {3, 3, 24, 1, false, RE},
      {5, 4, 40, 2, true, HS},  {5, 6, 40, 1, true, HS},  {5, 6, 40, 1, true, HS},
      {5, 3, 48, 2, true, HS},  {5, 3, 48, 1, true, HS},  {5, 6, 96, 1, true, HS},
      {5, 6, 96, 1, true, HS},  {5, 6, 96, 2, true, HS},
  };
  std::vector<int> taps;
  int i = 0;
  for (const Block& bl : blocks) {
    ++i;
    if (bl.stride == 2) taps.push_back(x);
    MBConvSpec spec;
    spec.kernel = bl.kernel;
    spec.expand = bl.expand;
    spec.c_out = bl.c_out;
    spec.stride = bl.stride;
    spec.se = bl.se;
    spec.act = bl.act;
    x = append_mbconv(b, "encoder.block" + std::to_string(i), x, spec);
  }
  x = append_conv_bn_act(b, "encoder.tail", x, 576, kConv1x1, ActivationKind::hard_swish);
  x = mobile_decoder(b, x, taps, cfg.decoder_widths, cfg.num_classes);
  return b.finish(x);
}

void validate_config(const ModelConfig& cfg) {
  if (cfg.num_classes < 2) {
    throw std::invalid_argument("model: num_classes must be at least 2, got " +
                                std::to_string(cfg.num_classes));
  }
  if (cfg.in_channels < 1) {
    throw std::invalid_argument("model: in_channels must be positive, got " +
                                std::to_string(cfg.in_channels));
  }
  if (cfg.kind == ModelKind::unet_baseline) {
    if (cfg.depth < 1 || cfg.depth > 6) {
      throw std::invalid_argument("model: depth must lie in [1, 6], got " +
                                  std::to_string(cfg.depth));
    }
    if (cfg.base_width < 1) {
      throw std::invalid_argument("model: base_width must be positive, got " +
                                  std::to_string(cfg.base_width));
    }
  } else {
    if (cfg.decoder_widths.size() != 5) {
      throw std::invalid_argument("model: decoder_widths needs exactly 5 entries, got " +
                                  std::to_string(cfg.decoder_widths.size()));
    }
    for (std::int64_t w : cfg.decoder_widths) {
      if (w < 1) {
        throw std::invalid_argument("model: decoder width must be positive, got " +
                                    std::to_string(w));
      }
    }
  }
}

}  // namespace

Model build_model(const ModelConfig& cfg) {
  validate_config(cfg);
  Model m;
  m.config = cfg;
  switch (cfg.kind) {
    case ModelKind::unet_baseline: m.graph = build_baseline(cfg); break;
    case ModelKind::unet_mbv2: m.graph = build_umbv2(cfg); break;
    case ModelKind::unet_mbv3: m.graph = build_umbv3(cfg); break;
  }
  for (const ParamSpec& spec : graph_params(m.graph)) {
    Param p;
    p.logical_rank = spec.logical_rank;
    const bool ones =
        spec.name.ends_with(".gamma") || spec.name.ends_with(".running_var");
    p.t = Tensor::full(spec.shape, ones ? 1.0f : 0.0f);
    m.params.emplace(spec.name, std::move(p));
  }
  return m;
}

void init_weights(Model& m, std::uint64_t seed) {
  Rng rng(seed);
  // graph_params order matches node construction order, so one generator
  // stream makes the whole initialization a pure function of the seed
  for (const ParamSpec& spec : graph_params(m.graph)) {
    Param& p = m.params.at(spec.name);
    if (spec.name.ends_with(".weight")) {
      const Shape4& s = p.t.shape;
      // conv kernels are (C_out, C_in/groups, Kh, Kw); transposed kernels
      // are (C_in, C_out, 2, 2), so the receiving fan is the leading dim
      const double fan_in = spec.name.ends_with(".up.weight")
                                ? static_cast<double>(s.n)
                                : static_cast<double>(s.c * s.h * s.w);
      const double stddev = std::sqrt(2.0 / fan_in);
      for (float& v : p.t.data) v = static_cast<float>(rng.gaussian() * stddev);
    } else if (spec.name.ends_with(".bias")) {
      std::fill(p.t.data.begin(), p.t.data.end(), 0.0f);
    }
    // batchnorm tensors keep their build_model defaults
  }
}

std::int64_t model_stride(const ModelConfig& cfg) {
  if (cfg.kind == ModelKind::unet_baseline) return std::int64_t{1} << cfg.depth;
  return 32;
}

Tensor model_logits(Model& m, const Tensor& input, ExecMode mode, Tape<float>* tape,
                    std::uint64_t* mac_count) {
  const std::int64_t stride = model_stride(m.config);
  if (input.shape.h % stride != 0 || input.shape.w % stride != 0) {
    throw std::invalid_argument("model: input " + input.shape.str() +
                                " is not divisible by the required stride " +
                                std::to_string(stride));
  }
  return graph_forward(m.graph, m.params, input, mode, tape, mac_count);
}

}  // namespace edgeseg
