#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "edgeseg/ops.hpp"
#include "edgeseg/tensor.hpp"

namespace edgeseg {

/// A named parameter. Per-channel vectors (bias, batchnorm terms) are stored
/// as (C, 1, 1, 1) tensors with logical_rank 1; kernels keep logical_rank 4.
template <class T>
struct ParamT {
  TensorT<T> t;
  int logical_rank = 4;
};

template <class T>
using ParamMap = std::map<std::string, ParamT<T>>;

using Param = ParamT<float>;
using Params = ParamMap<float>;

enum class LayerKind { input, conv, tconv, bn, act, maxpool, gap, concat, add, cscale };

const char* layer_kind_name(LayerKind kind);

/// One layer in a static feed-forward graph. in0/in1 index earlier nodes;
/// binary ops (concat, add, cscale) use both. Parameterized nodes own the
/// weights named "<name>.weight" etc. in the model's parameter map.
struct Node {
  LayerKind kind = LayerKind::input;
  std::string name;
  int in0 = -1;
  int in1 = -1;
  ConvParams conv{};
  ActivationKind act = ActivationKind::identity;
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  bool has_bias = false;
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;
};

struct Graph {
  std::vector<Node> nodes;
  int output = -1;
  std::int64_t in_channels = 0;
};

/// Incrementally builds a graph in topological order; every method returns
/// the new node's index. Channel bookkeeping happens here so mismatches fail
/// at construction, not at execution.
class GraphBuilder {
 public:
  int input(std::int64_t channels);
  int conv(const std::string& name, int in, std::int64_t c_out, const ConvParams& p,
           bool has_bias);
  int tconv(const std::string& name, int in, std::int64_t c_out, bool has_bias = false);
  int bn(const std::string& name, int in, double eps = 1e-5, double momentum = 0.9);
  int act(int in, ActivationKind kind);
  int maxpool(int in);
  int gap(int in);
  int concat(int a, int b);
  int add(int a, int b);
  int cscale(int in, int gate);

  /// Marks the output node and hands the graph over.
  Graph finish(int output);

  std::int64_t channels(int node) const;

 private:
  int push(Node n);
  void check_index(int idx, const char* what) const;
  void claim_name(const std::string& name, const char* kind);

  Graph g_;
  std::set<std::string> names_;
};

/// Parameter slot owned by one node: its map key, expected tensor shape and
/// the rank it round-trips through serialization with.
struct ParamSpec {
  std::string name;
  Shape4 shape;
  int logical_rank = 4;
};

std::vector<ParamSpec> node_params(const Node& node);
std::vector<ParamSpec> graph_params(const Graph& g);

/// Output shape of every node for the given input. Throws with the offending
/// node's name when a spatial constraint fails.
std::vector<Shape4> infer_shapes(const Graph& g, const Shape4& input);

enum class ExecMode {
  eval,               // running statistics, buffers freed eagerly
  train,              // batch statistics, running statistics updated
  train_frozen_stats  // batch statistics, running statistics untouched
};

/// Everything backward needs from a forward pass.
template <class T>
struct Tape {
  ExecMode mode = ExecMode::train;
  std::vector<TensorT<T>> outputs;                   // per node
  std::vector<std::vector<std::int64_t>> argmax;     // per node, maxpool only
  std::vector<BatchNormCache<T>> bn_cache;           // per node, bn only
};

/// Runs the graph. Parameters are looked up by node name; batchnorm running
/// statistics mutate in train mode. With a tape, every intermediate is kept;
/// without one, buffers are released after their last consumer. mac_count
/// accumulates literal multiply-accumulate executions of conv/tconv nodes.
template <class T>
TensorT<T> graph_forward(const Graph& g, ParamMap<T>& params, const TensorT<T>& input,
                         ExecMode mode, Tape<T>* tape = nullptr,
                         std::uint64_t* mac_count = nullptr);

template <class T>
struct BackwardResult {
  std::map<std::string, TensorT<T>> grads;  // keyed like the parameter map
  TensorT<T> dinput;
};

/// Reverse pass over a taped forward. The cotangent is w.r.t. the output
/// node's tensor.
template <class T>
BackwardResult<T> graph_backward(const Graph& g, const ParamMap<T>& params, const Tape<T>& tape,
                                 const TensorT<T>& cotangent);

/// Float parameters re-expressed in double, for the finite-difference harness.
ParamMap<double> params_to_double(const Params& p);
Params params_to_float(const ParamMap<double>& p);

}  // namespace edgeseg
