#pragma once

#include "edgeseg/tensor.hpp"

namespace edgeseg {

template <class T>
struct CeResult {
  T value = T(0);
  std::int64_t counted = 0;  // pixels that scored
  TensorT<T> dlogits;        // empty unless requested
};

/// Softmax cross-entropy averaged over pixels whose target is not the
/// ignore label, stabilized by log-sum-exp. The gradient w.r.t. the logits
/// is (softmax - onehot) / counted on scored pixels and zero elsewhere.
/// Throws std::runtime_error when every pixel is ignored.
template <class T>
CeResult<T> cross_entropy(const TensorT<T>& logits, const Mask& target, int ignore_label,
                          bool with_grad);

}  // namespace edgeseg
