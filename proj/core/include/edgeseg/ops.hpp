#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "edgeseg/tensor.hpp"

namespace edgeseg {

enum class ActivationKind { identity, relu, relu6, sigmoid, hard_sigmoid, hard_swish };

const char* activation_name(ActivationKind kind);

/// Spatial convolution parameters. groups == C_in == C_out expresses a
/// depthwise convolution.
struct ConvParams {
  int kh = 1;
  int kw = 1;
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

/// Output shape for conv2d: floor((H + 2*pad - Kh)/stride) + 1, same for W.
/// Throws when the parameters or channel counts are inconsistent.
Shape4 conv2d_output_shape(const Shape4& input, std::int64_t c_out, const ConvParams& p);

/// Direct convolution over a zero-padded copy of the input. Every output
/// element accumulates exactly Kh*Kw*(C_in/groups) products, so the literal
/// MAC count equals the analytical formula; pass mac_count to read it.
/// weights: (C_out, C_in/groups, Kh, Kw); bias: length C_out or null.
template <class T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weights,
                  const std::vector<T>* bias, const ConvParams& p,
                  std::uint64_t* mac_count = nullptr);

template <class T>
struct ConvGrads {
  TensorT<T> dinput;
  TensorT<T> dweights;
  std::vector<T> dbias;  // empty when the op had no bias
};

template <class T>
ConvGrads<T> conv2d_vjp(const TensorT<T>& input, const TensorT<T>& weights, bool has_bias,
                        const ConvParams& p, const TensorT<T>& cotangent);

/// Stride-2 2x2 transposed convolution; each input pixel scatters into a
/// disjoint 2x2 output block. weights: (C_in, C_out, 2, 2).
template <class T>
TensorT<T> transpose_conv2x2(const TensorT<T>& input, const TensorT<T>& weights,
                             const std::vector<T>* bias = nullptr,
                             std::uint64_t* mac_count = nullptr);

template <class T>
ConvGrads<T> transpose_conv2x2_vjp(const TensorT<T>& input, const TensorT<T>& weights,
                                   bool has_bias, const TensorT<T>& cotangent);

/// Per-channel statistics saved by a training-mode batchnorm forward, needed
/// to run its backward.
template <class T>
struct BatchNormCache {
  std::vector<T> mean;
  std::vector<T> inv_std;
};

/// Batch normalization over (N, H, W) per channel. In training mode batch
/// statistics normalize and, when update_running is set, running statistics
/// are blended as r <- momentum*r + (1-momentum)*batch. Inference mode uses
/// the running statistics and never mutates them.
template <class T>
TensorT<T> batchnorm2d(const TensorT<T>& input, const std::vector<T>& gamma,
                       const std::vector<T>& beta, std::vector<T>& running_mean,
                       std::vector<T>& running_var, T eps, bool training,
                       T momentum = T(0.9), bool update_running = true,
                       BatchNormCache<T>* cache = nullptr);

template <class T>
struct BatchNormGrads {
  TensorT<T> dinput;
  std::vector<T> dgamma;
  std::vector<T> dbeta;
};

/// Backward for training mode (pass the forward's cache) or inference mode
/// (pass running statistics re-packed as a cache via bn_eval_cache).
template <class T>
BatchNormGrads<T> batchnorm2d_vjp(const TensorT<T>& input, const std::vector<T>& gamma,
                                  const BatchNormCache<T>& cache, const TensorT<T>& cotangent,
                                  bool training);

template <class T>
BatchNormCache<T> bn_eval_cache(const std::vector<T>& running_mean,
                                const std::vector<T>& running_var, T eps);

template <class T>
TensorT<T> activation(const TensorT<T>& input, ActivationKind kind);

template <class T>
TensorT<T> activation_vjp(const TensorT<T>& input, ActivationKind kind,
                          const TensorT<T>& cotangent);

/// 2x2 max pooling with stride 2. Requires even H and W. When argmax is
/// given, the flat input index of each window maximum is recorded; ties break
/// toward the first element in row-major order.
template <class T>
TensorT<T> maxpool2x2(const TensorT<T>& input, std::vector<std::int64_t>* argmax = nullptr);

template <class T>
TensorT<T> maxpool2x2_vjp(const Shape4& input_shape, const std::vector<std::int64_t>& argmax,
                          const TensorT<T>& cotangent);

/// Spatial mean per channel, output (N, C, 1, 1).
template <class T>
TensorT<T> global_avg_pool(const TensorT<T>& input);

template <class T>
TensorT<T> global_avg_pool_vjp(const Shape4& input_shape, const TensorT<T>& cotangent);

/// Channel concatenation, a's channels first. N/H/W must agree.
template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b);

template <class T>
std::pair<TensorT<T>, TensorT<T>> concat_channels_vjp(std::int64_t c_a, std::int64_t c_b,
                                                      const TensorT<T>& cotangent);

/// Channel slice [c_begin, c_end) of the input.
template <class T>
TensorT<T> slice_channels(const TensorT<T>& input, std::int64_t c_begin, std::int64_t c_end);

/// Per-pixel softmax over channels, stabilized by max subtraction.
template <class T>
TensorT<T> softmax_channels(const TensorT<T>& input);

/// Takes the forward output y, not the input.
template <class T>
TensorT<T> softmax_channels_vjp(const TensorT<T>& y, const TensorT<T>& cotangent);

template <class T>
TensorT<T> elementwise_add(const TensorT<T>& a, const TensorT<T>& b);

/// Scales each (n, c) plane of input by gate(n, c, 0, 0). Used by the
/// squeeze-excitation gate.
template <class T>
TensorT<T> channel_scale(const TensorT<T>& input, const TensorT<T>& gate);

template <class T>
struct ChannelScaleGrads {
  TensorT<T> dinput;
  TensorT<T> dgate;
};

template <class T>
ChannelScaleGrads<T> channel_scale_vjp(const TensorT<T>& input, const TensorT<T>& gate,
                                       const TensorT<T>& cotangent);

template <class T>
bool all_finite_values(const std::vector<T>& v);

}  // namespace edgeseg
