#include "edgeseg/profiler.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace edgeseg {

ModelProfile profile_model(const Graph& g, const Shape4& input) {
  const std::vector<Shape4> shapes = infer_shapes(g, input);
  ModelProfile p;
  p.input = input;
  p.layers.reserve(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const Node& n = g.nodes[i];
    LayerProfile lp;
    lp.name = n.name;
    lp.kind = layer_kind_name(n.kind);
    lp.out_shape = shapes[i];
    const Shape4 in_shape = n.in0 >= 0 ? shapes[static_cast<std::size_t>(n.in0)] : Shape4{};
    switch (n.kind) {
      case LayerKind::conv: {
        const std::int64_t patch =
            static_cast<std::int64_t>(n.conv.kh) * n.conv.kw * (n.in_channels / n.conv.groups);
        lp.params = patch * n.out_channels + (n.has_bias ? n.out_channels : 0);
        lp.macs = static_cast<std::uint64_t>(patch) *
                  static_cast<std::uint64_t>(lp.out_shape.numel());
        lp.cio = static_cast<std::uint64_t>(in_shape.numel() + lp.out_shape.numel());
        break;
      }
      case LayerKind::tconv: {
        lp.params = 4 * n.in_channels * n.out_channels + (n.has_bias ? n.out_channels : 0);
        lp.macs = static_cast<std::uint64_t>(n.in_channels) *
                  static_cast<std::uint64_t>(lp.out_shape.numel());
        lp.cio = static_cast<std::uint64_t>(in_shape.numel() + lp.out_shape.numel());
        break;
      }
      case LayerKind::bn:
        lp.params = 2 * n.out_channels;
        break;
      default:
        break;
    }
    p.total_params += lp.params;
    p.total_macs += lp.macs;
    p.total_cio += lp.cio;
    p.layers.push_back(std::move(lp));
  }
  p.model_size_bytes = 4 * p.total_params;
  return p;
}

ModelProfile profile_model(const Model& m, const Shape4& input) {
  const std::int64_t stride = model_stride(m.config);
  if (input.h % stride != 0 || input.w % stride != 0) {
    throw std::invalid_argument("profile: input " + input.str() +
                                " is not divisible by the required stride " +
                                std::to_string(stride));
  }
  return profile_model(m.graph, input);
}

std::string profile_to_json(const ModelProfile& p, const ModelConfig& cfg,
                            const std::string& timestamp) {
  nlohmann::ordered_json doc;
  doc["model"] = model_kind_name(cfg.kind);
  doc["classes"] = cfg.num_classes;
  doc["input"] = {p.input.n, p.input.c, p.input.h, p.input.w};
  if (!timestamp.empty()) doc["timestamp"] = timestamp;
  auto layers = nlohmann::ordered_json::array();
  for (const LayerProfile& lp : p.layers) {
    nlohmann::ordered_json l;
    l["name"] = lp.name;
    l["kind"] = lp.kind;
    l["params"] = lp.params;
    l["macs"] = lp.macs;
    l["cio"] = lp.cio;
    l["out_shape"] = {lp.out_shape.n, lp.out_shape.c, lp.out_shape.h, lp.out_shape.w};
    layers.push_back(std::move(l));
  }
  doc["layers"] = std::move(layers);
  doc["totals"] = {{"params", p.total_params},
                   {"macs", p.total_macs},
                   {"cio", p.total_cio},
                   {"model_size_bytes", p.model_size_bytes}};
  return doc.dump(2) + "\n";
}

std::string profile_table(const ModelProfile& p, const ModelConfig& cfg) {
  std::size_t name_w = 5;
  for (const LayerProfile& lp : p.layers) name_w = std::max(name_w, lp.name.size());
  std::ostringstream os;
  os << model_kind_name(cfg.kind) << "  classes " << cfg.num_classes << "  input "
     << p.input.str() << "\n";
  os << std::left << std::setw(static_cast<int>(name_w) + 2) << "layer" << std::setw(10)
     << "kind" << std::right << std::setw(12) << "params" << std::setw(16) << "MACs"
     << std::setw(14) << "CIO" << "  out\n";
  os << std::string(name_w + 2 + 10 + 12 + 16 + 14 + 12, '-') << "\n";
  for (const LayerProfile& lp : p.layers) {
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << lp.name << std::setw(10)
       << lp.kind << std::right << std::setw(12) << lp.params << std::setw(16) << lp.macs
       << std::setw(14) << lp.cio << "  " << lp.out_shape.str() << "\n";
  }
  os << std::string(name_w + 2 + 10 + 12 + 16 + 14 + 12, '-') << "\n";
  os << "totals: params " << p.total_params << "  MACs " << p.total_macs << "  CIO "
     << p.total_cio << "  size " << p.model_size_bytes << " bytes ("
     << std::fixed << std::setprecision(2)
     << static_cast<double>(p.model_size_bytes) / (1024.0 * 1024.0) << " MiB)\n";
  os << "GOP/frame " << std::setprecision(3)
     << 2.0 * static_cast<double>(p.total_macs) / 1e9 << " (2 ops per MAC)\n";
  return os.str();
}

}  // namespace edgeseg
