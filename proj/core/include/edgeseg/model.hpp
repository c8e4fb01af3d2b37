#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edgeseg/graph.hpp"

namespace edgeseg {

enum class ModelKind { unet_baseline, unet_mbv2, unet_mbv3 };

const char* model_kind_name(ModelKind kind);

/// Accepts "unet", "umbv2" or "umbv3".
ModelKind parse_model_kind(const std::string& s);

struct ModelConfig {
  ModelKind kind = ModelKind::unet_mbv2;
  int num_classes = 2;
  std::int64_t in_channels = 3;
  std::int64_t base_width = 64;  // baseline encoder width at full resolution
  int depth = 4;                 // baseline pooling steps
  // umbv2/umbv3 decoder channel widths, deepest level first; one entry per
  // upsampling level (four skip levels plus the final skipless one)
  std::vector<std::int64_t> decoder_widths = {256, 128, 64, 32, 16};
};

struct Model {
  ModelConfig config;
  Graph graph;
  Params params;  // allocated by build_model, randomized by init_weights
};

/// Builds the layer graph and allocates every parameter at its default value
/// (zero kernels, identity batchnorm). Weights come from init_weights or a
/// weight file afterwards.
Model build_model(const ModelConfig& cfg);

/// He-normal kernels (std = sqrt(2 / fan_in)), zero biases, identity
/// batchnorm. One generator walks the graph in construction order, so a seed
/// pins every value.
void init_weights(Model& m, std::uint64_t seed);

/// Total downsampling factor; input H and W must be divisible by it.
std::int64_t model_stride(const ModelConfig& cfg);

/// Forward to per-class logits (N, K, H, W). Validates the input size
/// against model_stride first.
Tensor model_logits(Model& m, const Tensor& input, ExecMode mode, Tape<float>* tape = nullptr,
                    std::uint64_t* mac_count = nullptr);

/// Block-level builders, shared with the gradient checker and block tests.

struct MBConvSpec {
  int kernel = 3;      // 3 or 5
  int expand = 6;      // expanded channels = expand * C_in; 1 skips the stage
  std::int64_t c_out = 0;
  int stride = 1;      // 1 or 2
  bool se = false;     // squeeze-excitation with reduction 4
  ActivationKind act = ActivationKind::relu6;
};

/// conv -> bn -> activation.
int append_conv_bn_act(GraphBuilder& b, const std::string& name, int in, std::int64_t c_out,
                       const ConvParams& p, ActivationKind act);

/// Inverted residual block; the residual add appears iff stride is 1 and
/// the width is preserved.
int append_mbconv(GraphBuilder& b, const std::string& name, int in, const MBConvSpec& spec);

/// Upsampling level: 2x2 transposed conv to `width` channels, concat with
/// `skip` (pass -1 for none), then two 3x3 conv -> bn -> relu units.
int append_decoder_level(GraphBuilder& b, const std::string& name, int in, int skip,
                         std::int64_t width);

}  // namespace edgeseg
