#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edgeseg/model.hpp"

namespace edgeseg {

/// Static cost of one layer. macs counts multiply-accumulates of the two
/// kernel kinds that dominate (convolution and transposed convolution);
/// cio is their input plus output element traffic. Parameter counts cover
/// learnable tensors only, so batchnorm contributes scale and shift but not
/// its running statistics.
struct LayerProfile {
  std::string name;
  std::string kind;
  std::int64_t params = 0;
  std::uint64_t macs = 0;
  std::uint64_t cio = 0;
  Shape4 out_shape{};
};

struct ModelProfile {
  Shape4 input{};
  std::vector<LayerProfile> layers;
  std::int64_t total_params = 0;
  std::uint64_t total_macs = 0;
  std::uint64_t total_cio = 0;
  std::int64_t model_size_bytes = 0;  // 4 bytes per learnable parameter
};

/// Walks the graph analytically; nothing executes.
ModelProfile profile_model(const Graph& g, const Shape4& input);

/// Model-level wrapper: additionally rejects inputs whose spatial dims the
/// architecture cannot consume (H or W not divisible by its total stride).
ModelProfile profile_model(const Model& m, const Shape4& input);

/// timestamp is copied verbatim into the report when non-empty; leave it
/// empty for byte-reproducible output.
std::string profile_to_json(const ModelProfile& p, const ModelConfig& cfg,
                            const std::string& timestamp = "");

/// Aligned per-layer table plus totals, for terminals.
std::string profile_table(const ModelProfile& p, const ModelConfig& cfg);

}  // namespace edgeseg
