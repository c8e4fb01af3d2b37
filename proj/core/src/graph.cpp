#include "edgeseg/graph.hpp"

#include <set>
#include <stdexcept>
#include <utility>

namespace edgeseg {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::input: return "input";
    case LayerKind::conv: return "conv";
    case LayerKind::tconv: return "tconv";
    case LayerKind::bn: return "bn";
    case LayerKind::act: return "act";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::gap: return "gap";
    case LayerKind::concat: return "concat";
    case LayerKind::add: return "add";
    case LayerKind::cscale: return "cscale";
  }
  return "unknown";
}

void GraphBuilder::claim_name(const std::string& name, const char* kind) {
  if (name.empty()) {
    throw std::invalid_argument(std::string("graph: ") + kind + " needs a name");
  }
  if (!names_.insert(name).second) {
    throw std::invalid_argument("graph: duplicate layer name '" + name + "'");
  }
}

int GraphBuilder::push(Node n) {
  g_.nodes.push_back(std::move(n));
  return static_cast<int>(g_.nodes.size()) - 1;
}

void GraphBuilder::check_index(int idx, const char* what) const {
  if (idx < 0 || idx >= static_cast<int>(g_.nodes.size())) {
    throw std::invalid_argument(std::string("graph: ") + what + " index " +
                                std::to_string(idx) + " out of range");
  }
}

std::int64_t GraphBuilder::channels(int node) const {
  check_index(node, "node");
  return g_.nodes[static_cast<std::size_t>(node)].out_channels;
}

int GraphBuilder::input(std::int64_t channels) {
  if (!g_.nodes.empty()) throw std::invalid_argument("graph: input must be the first node");
  if (channels < 1) throw std::invalid_argument("graph: input channels must be >= 1");
  g_.in_channels = channels;
  Node n;
  n.kind = LayerKind::input;
  n.name = "input";
  n.out_channels = channels;
  n.in_channels = channels;
  return push(std::move(n));
}

int GraphBuilder::conv(const std::string& name, int in, std::int64_t c_out, const ConvParams& p,
                       bool has_bias) {
  check_index(in, "conv input");
  claim_name(name, "conv");
  const std::int64_t c_in = channels(in);
  if (p.groups <= 0 || c_in % p.groups != 0 || c_out % p.groups != 0) {
    throw std::invalid_argument("graph: conv '" + name + "' groups " +
                                std::to_string(p.groups) + " do not divide channels " +
                                std::to_string(c_in) + "->" + std::to_string(c_out));
  }
  Node n;
  n.kind = LayerKind::conv;
  n.name = name;
  n.in0 = in;
  n.conv = p;
  n.in_channels = c_in;
  n.out_channels = c_out;
  n.has_bias = has_bias;
  return push(std::move(n));
}

int GraphBuilder::tconv(const std::string& name, int in, std::int64_t c_out, bool has_bias) {
  check_index(in, "tconv input");
  claim_name(name, "tconv");
  Node n;
  n.kind = LayerKind::tconv;
  n.name = name;
  n.in0 = in;
  n.in_channels = channels(in);
  n.out_channels = c_out;
  n.has_bias = has_bias;
  return push(std::move(n));
}

int GraphBuilder::bn(const std::string& name, int in, double eps, double momentum) {
  check_index(in, "bn input");
  claim_name(name, "bn");
  if (eps <= 0) throw std::invalid_argument("graph: bn '" + name + "' eps must be positive");
  Node n;
  n.kind = LayerKind::bn;
  n.name = name;
  n.in0 = in;
  n.in_channels = n.out_channels = channels(in);
  n.bn_eps = eps;
  n.bn_momentum = momentum;
  return push(std::move(n));
}

int GraphBuilder::act(int in, ActivationKind kind) {
  check_index(in, "act input");
  Node n;
  n.kind = LayerKind::act;
  n.act = kind;
  n.in0 = in;
  n.in_channels = n.out_channels = channels(in);
  n.name = std::string(activation_name(kind)) + "@" + std::to_string(g_.nodes.size());
  return push(std::move(n));
}

int GraphBuilder::maxpool(int in) {
  check_index(in, "maxpool input");
  Node n;
  n.kind = LayerKind::maxpool;
  n.in0 = in;
  n.in_channels = n.out_channels = channels(in);
  n.name = "maxpool@" + std::to_string(g_.nodes.size());
  return push(std::move(n));
}

int GraphBuilder::gap(int in) {
  check_index(in, "gap input");
  Node n;
  n.kind = LayerKind::gap;
  n.in0 = in;
  n.in_channels = n.out_channels = channels(in);
  n.name = "gap@" + std::to_string(g_.nodes.size());
  return push(std::move(n));
}

int GraphBuilder::concat(int a, int b) {
  check_index(a, "concat input");
  check_index(b, "concat input");
  Node n;
  n.kind = LayerKind::concat;
  n.in0 = a;
  n.in1 = b;
  n.in_channels = channels(a);
  n.out_channels = channels(a) + channels(b);
  n.name = "concat@" + std::to_string(g_.nodes.size());
  return push(std::move(n));
}

int GraphBuilder::add(int a, int b) {
  check_index(a, "add input");
  check_index(b, "add input");
  if (channels(a) != channels(b)) {
    throw std::invalid_argument("graph: add inputs carry " + std::to_string(channels(a)) +
                                " and " + std::to_string(channels(b)) + " channels");
  }
  Node n;
  n.kind = LayerKind::add;
  n.in0 = a;
  n.in1 = b;
  n.in_channels = n.out_channels = channels(a);
  n.name = "add@" + std::to_string(g_.nodes.size());
  return push(std::move(n));
}

int GraphBuilder::cscale(int in, int gate) {
  check_index(in, "cscale input");
  check_index(gate, "cscale gate");
  if (channels(in) != channels(gate)) {
    throw std::invalid_argument("graph: cscale gate carries " + std::to_string(channels(gate)) +
                                " channels for a " + std::to_string(channels(in)) +
                                " channel input");
  }
  Node n;
  n.kind = LayerKind::cscale;
  n.in0 = in;
  n.in1 = gate;
  n.in_channels = n.out_channels = channels(in);
  n.name = "cscale@" + std::to_string(g_.nodes.size());
  return push(std::move(n));
}

Graph GraphBuilder::finish(int output) {
  check_index(output, "output");
  g_.output = output;
  return std::move(g_);
}

std::vector<ParamSpec> node_params(const Node& node) {
  std::vector<ParamSpec> out;
  switch (node.kind) {
    case LayerKind::conv: {
      out.push_back({node.name + ".weight",
                     Shape4{node.out_channels, node.in_channels / node.conv.groups,
                            node.conv.kh, node.conv.kw},
                     4});
      if (node.has_bias) out.push_back({node.name + ".bias", Shape4{node.out_channels, 1, 1, 1}, 1});
      break;
    }
    case LayerKind::tconv: {
      out.push_back({node.name + ".weight", Shape4{node.in_channels, node.out_channels, 2, 2}, 4});
      if (node.has_bias) out.push_back({node.name + ".bias", Shape4{node.out_channels, 1, 1, 1}, 1});
      break;
    }
    case LayerKind::bn: {
      const Shape4 s{node.out_channels, 1, 1, 1};
      out.push_back({node.name + ".gamma", s, 1});
      out.push_back({node.name + ".beta", s, 1});
      out.push_back({node.name + ".running_mean", s, 1});
      out.push_back({node.name + ".running_var", s, 1});
      break;
    }
    default: break;
  }
  return out;
}

std::vector<ParamSpec> graph_params(const Graph& g) {
  std::vector<ParamSpec> out;
  for (const Node& n : g.nodes) {
    auto ps = node_params(n);
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

std::vector<Shape4> infer_shapes(const Graph& g, const Shape4& input) {
  if (g.nodes.empty() || g.nodes[0].kind != LayerKind::input) {
    throw std::invalid_argument("graph: first node must be the input");
  }
  if (input.c != g.in_channels) {
    throw std::invalid_argument("graph: input has " + std::to_string(input.c) +
                                " channels, graph expects " + std::to_string(g.in_channels));
  }
  if (input.n < 1 || input.h < 1 || input.w < 1) {
    throw std::invalid_argument("graph: degenerate input shape " + input.str());
  }
  std::vector<Shape4> shapes(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const Node& n = g.nodes[i];
    const auto in_shape = [&](int idx) -> const Shape4& {
      return shapes[static_cast<std::size_t>(idx)];
    };
    try {
      switch (n.kind) {
        case LayerKind::input:
          shapes[i] = input;
          break;
        case LayerKind::conv:
          shapes[i] = conv2d_output_shape(in_shape(n.in0), n.out_channels, n.conv);
          break;
        case LayerKind::tconv: {
          const Shape4& s = in_shape(n.in0);
          shapes[i] = Shape4{s.n, n.out_channels, s.h * 2, s.w * 2};
          break;
        }
        case LayerKind::bn:
        case LayerKind::act:
          shapes[i] = in_shape(n.in0);
          break;
        case LayerKind::maxpool: {
          const Shape4& s = in_shape(n.in0);
          if (s.h % 2 != 0 || s.w % 2 != 0) {
            throw std::invalid_argument("spatial dims " + s.str() + " not divisible by 2");
          }
          shapes[i] = Shape4{s.n, s.c, s.h / 2, s.w / 2};
          break;
        }
        case LayerKind::gap: {
          const Shape4& s = in_shape(n.in0);
          shapes[i] = Shape4{s.n, s.c, 1, 1};
          break;
        }
        case LayerKind::concat: {
          const Shape4& a = in_shape(n.in0);
          const Shape4& b = in_shape(n.in1);
          if (a.n != b.n || a.h != b.h || a.w != b.w) {
            throw std::invalid_argument("cannot concat " + a.str() + " with " + b.str());
          }
          shapes[i] = Shape4{a.n, a.c + b.c, a.h, a.w};
          break;
        }
        case LayerKind::add: {
          const Shape4& a = in_shape(n.in0);
          const Shape4& b = in_shape(n.in1);
          if (!(a == b)) {
            throw std::invalid_argument("cannot add " + a.str() + " with " + b.str());
          }
          shapes[i] = a;
          break;
        }
        case LayerKind::cscale: {
          const Shape4& a = in_shape(n.in0);
          const Shape4& gate = in_shape(n.in1);
          if (gate.n != a.n || gate.c != a.c || gate.h != 1 || gate.w != 1) {
            throw std::invalid_argument("gate " + gate.str() + " does not fit input " + a.str());
          }
          shapes[i] = a;
          break;
        }
      }
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("node '" + n.name + "': " + e.what());
    }
  }
  return shapes;
}

namespace {

template <class T>
const ParamT<T>& find_param(const ParamMap<T>& params, const std::string& name) {
  const auto it = params.find(name);
  if (it == params.end()) {
    throw std::invalid_argument("graph: missing parameter '" + name + "'");
  }
  return it->second;
}

template <class T>
ParamT<T>& find_param(ParamMap<T>& params, const std::string& name) {
  const auto it = params.find(name);
  if (it == params.end()) {
    throw std::invalid_argument("graph: missing parameter '" + name + "'");
  }
  return it->second;
}

template <class T>
void accumulate_grad(std::map<std::string, TensorT<T>>& grads, const std::string& name,
                     TensorT<T> g) {
  auto it = grads.find(name);
  if (it == grads.end()) {
    grads.emplace(name, std::move(g));
  } else {
    for (std::size_t i = 0; i < g.data.size(); ++i) it->second.data[i] += g.data[i];
  }
}

template <class T>
TensorT<T> vector_as_tensor(std::vector<T> v) {
  const auto c = static_cast<std::int64_t>(v.size());
  return TensorT<T>(Shape4{c, 1, 1, 1}, std::move(v));
}

}  // namespace

template <class T>
TensorT<T> graph_forward(const Graph& g, ParamMap<T>& params, const TensorT<T>& input,
                         ExecMode mode, Tape<T>* tape, std::uint64_t* mac_count) {
  if (g.output < 0) throw std::invalid_argument("graph: no output node set");
  infer_shapes(g, input.shape);  // full validation up front
  if (mac_count) *mac_count = 0;

  const std::size_t count = g.nodes.size();
  std::vector<TensorT<T>> outputs(count);
  std::vector<int> pending;  // consumers left, eval-mode buffer release
  if (!tape) {
    pending.assign(count, 0);
    for (const Node& n : g.nodes) {
      if (n.in0 >= 0) ++pending[static_cast<std::size_t>(n.in0)];
      if (n.in1 >= 0) ++pending[static_cast<std::size_t>(n.in1)];
    }
    ++pending[static_cast<std::size_t>(g.output)];
  } else {
    tape->mode = mode;
    tape->outputs.clear();
    tape->argmax.assign(count, {});
    tape->bn_cache.assign(count, {});
  }

  const bool training = mode != ExecMode::eval;
  const bool update_running = mode == ExecMode::train;

  for (std::size_t i = 0; i < count; ++i) {
    const Node& n = g.nodes[i];
    const auto in = [&](int idx) -> const TensorT<T>& {
      return outputs[static_cast<std::size_t>(idx)];
    };
    std::uint64_t node_macs = 0;
    switch (n.kind) {
      case LayerKind::input:
        outputs[i] = input;
        break;
      case LayerKind::conv: {
        const auto& w = find_param(params, n.name + ".weight");
        const std::vector<T>* bias =
            n.has_bias ? &find_param(params, n.name + ".bias").t.data : nullptr;
        outputs[i] = conv2d(in(n.in0), w.t, bias, n.conv, mac_count ? &node_macs : nullptr);
        break;
      }
      case LayerKind::tconv: {
        const auto& w = find_param(params, n.name + ".weight");
        const std::vector<T>* bias =
            n.has_bias ? &find_param(params, n.name + ".bias").t.data : nullptr;
        outputs[i] = transpose_conv2x2(in(n.in0), w.t, bias, mac_count ? &node_macs : nullptr);
        break;
      }
      case LayerKind::bn: {
        const auto& gamma = find_param(params, n.name + ".gamma");
        const auto& beta = find_param(params, n.name + ".beta");
        auto& rm = find_param(params, n.name + ".running_mean");
        auto& rv = find_param(params, n.name + ".running_var");
        BatchNormCache<T>* cache = tape ? &tape->bn_cache[i] : nullptr;
        outputs[i] = batchnorm2d(in(n.in0), gamma.t.data, beta.t.data, rm.t.data, rv.t.data,
                                 static_cast<T>(n.bn_eps), training,
                                 static_cast<T>(n.bn_momentum), update_running, cache);
        if (tape && !training) {
          tape->bn_cache[i] = bn_eval_cache(rm.t.data, rv.t.data, static_cast<T>(n.bn_eps));
        }
        break;
      }
      case LayerKind::act:
        outputs[i] = activation(in(n.in0), n.act);
        break;
      case LayerKind::maxpool:
        outputs[i] = maxpool2x2(in(n.in0), tape ? &tape->argmax[i] : nullptr);
        break;
      case LayerKind::gap:
        outputs[i] = global_avg_pool(in(n.in0));
        break;
      case LayerKind::concat:
        outputs[i] = concat_channels(in(n.in0), in(n.in1));
        break;
      case LayerKind::add:
        outputs[i] = elementwise_add(in(n.in0), in(n.in1));
        break;
      case LayerKind::cscale:
        outputs[i] = channel_scale(in(n.in0), in(n.in1));
        break;
    }
    if (mac_count) *mac_count += node_macs;
    if (!tape) {
      const auto release = [&](int idx) {
        if (idx < 0) return;
        if (--pending[static_cast<std::size_t>(idx)] == 0) {
          outputs[static_cast<std::size_t>(idx)] = TensorT<T>();
        }
      };
      release(n.in0);
      release(n.in1);
    }
  }

  TensorT<T> result = outputs[static_cast<std::size_t>(g.output)];
  if (tape) tape->outputs = std::move(outputs);
  return result;
}

template <class T>
BackwardResult<T> graph_backward(const Graph& g, const ParamMap<T>& params, const Tape<T>& tape,
                                 const TensorT<T>& cotangent) {
  if (tape.outputs.size() != g.nodes.size()) {
    throw std::invalid_argument("graph: tape does not match graph (" +
                                std::to_string(tape.outputs.size()) + " records, " +
                                std::to_string(g.nodes.size()) + " nodes)");
  }
  const std::size_t count = g.nodes.size();
  std::vector<TensorT<T>> cot(count);
  std::vector<bool> has_cot(count, false);
  const auto add_cot = [&](int idx, TensorT<T> v) {
    const auto i = static_cast<std::size_t>(idx);
    if (!has_cot[i]) {
      cot[i] = std::move(v);
      has_cot[i] = true;
    } else {
      for (std::size_t k = 0; k < v.data.size(); ++k) cot[i].data[k] += v.data[k];
    }
  };
  add_cot(g.output, cotangent);

  const bool training = tape.mode != ExecMode::eval;
  BackwardResult<T> result;

  for (std::size_t ri = count; ri-- > 0;) {
    if (!has_cot[ri]) continue;
    const Node& n = g.nodes[ri];
    const TensorT<T>& ct = cot[ri];
    const auto taped = [&](int idx) -> const TensorT<T>& {
      return tape.outputs[static_cast<std::size_t>(idx)];
    };
    switch (n.kind) {
      case LayerKind::input:
        result.dinput = ct;
        break;
      case LayerKind::conv: {
        const auto& w = find_param(params, n.name + ".weight");
        ConvGrads<T> cg = conv2d_vjp(taped(n.in0), w.t, n.has_bias, n.conv, ct);
        accumulate_grad(result.grads, n.name + ".weight", std::move(cg.dweights));
        if (n.has_bias) {
          accumulate_grad(result.grads, n.name + ".bias", vector_as_tensor(std::move(cg.dbias)));
        }
        add_cot(n.in0, std::move(cg.dinput));
        break;
      }
      case LayerKind::tconv: {
        const auto& w = find_param(params, n.name + ".weight");
        ConvGrads<T> cg = transpose_conv2x2_vjp(taped(n.in0), w.t, n.has_bias, ct);
        accumulate_grad(result.grads, n.name + ".weight", std::move(cg.dweights));
        if (n.has_bias) {
          accumulate_grad(result.grads, n.name + ".bias", vector_as_tensor(std::move(cg.dbias)));
        }
        add_cot(n.in0, std::move(cg.dinput));
        break;
      }
      case LayerKind::bn: {
        const auto& gamma = find_param(params, n.name + ".gamma");
        BatchNormGrads<T> bg =
            batchnorm2d_vjp(taped(n.in0), gamma.t.data, tape.bn_cache[ri], ct, training);
        accumulate_grad(result.grads, n.name + ".gamma", vector_as_tensor(std::move(bg.dgamma)));
        accumulate_grad(result.grads, n.name + ".beta", vector_as_tensor(std::move(bg.dbeta)));
        add_cot(n.in0, std::move(bg.dinput));
        break;
      }
      case LayerKind::act:
        add_cot(n.in0, activation_vjp(taped(n.in0), n.act, ct));
        break;
      case LayerKind::maxpool:
        add_cot(n.in0, maxpool2x2_vjp(taped(n.in0).shape, tape.argmax[ri], ct));
        break;
      case LayerKind::gap:
        add_cot(n.in0, global_avg_pool_vjp(taped(n.in0).shape, ct));
        break;
      case LayerKind::concat: {
        auto [da, db] = concat_channels_vjp(taped(n.in0).shape.c, taped(n.in1).shape.c, ct);
        add_cot(n.in0, std::move(da));
        add_cot(n.in1, std::move(db));
        break;
      }
      case LayerKind::add:
        add_cot(n.in0, ct);
        add_cot(n.in1, ct);
        break;
      case LayerKind::cscale: {
        ChannelScaleGrads<T> sg = channel_scale_vjp(taped(n.in0), taped(n.in1), ct);
        add_cot(n.in0, std::move(sg.dinput));
        add_cot(n.in1, std::move(sg.dgate));
        break;
      }
    }
  }
  return result;
}

ParamMap<double> params_to_double(const Params& p) {
  ParamMap<double> out;
  for (const auto& [name, param] : p) {
    out.emplace(name, ParamT<double>{to_double(param.t), param.logical_rank});
  }
  return out;
}

Params params_to_float(const ParamMap<double>& p) {
  Params out;
  for (const auto& [name, param] : p) {
    out.emplace(name, Param{to_float(param.t), param.logical_rank});
  }
  return out;
}

template TensorT<float> graph_forward<float>(const Graph&, ParamMap<float>&,
                                             const TensorT<float>&, ExecMode, Tape<float>*,
                                             std::uint64_t*);
template TensorT<double> graph_forward<double>(const Graph&, ParamMap<double>&,
                                               const TensorT<double>&, ExecMode, Tape<double>*,
                                               std::uint64_t*);
template BackwardResult<float> graph_backward<float>(const Graph&, const ParamMap<float>&,
                                                     const Tape<float>&, const TensorT<float>&);
template BackwardResult<double> graph_backward<double>(const Graph&, const ParamMap<double>&,
                                                       const Tape<double>&,
                                                       const TensorT<double>&);

}  // namespace edgeseg
