#include "edgeseg/loss.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace edgeseg {

template <class T>
CeResult<T> cross_entropy(const TensorT<T>& logits, const Mask& target, int ignore_label,
                          bool with_grad) {
  if (logits.shape.n != target.n || logits.shape.h != target.h || logits.shape.w != target.w) {
    throw std::invalid_argument("loss: logits " + logits.shape.str() +
                                " do not cover a " + std::to_string(target.n) + "x" +
                                std::to_string(target.h) + "x" + std::to_string(target.w) +
                                " label grid");
  }
  const std::int64_t k = logits.shape.c;
  CeResult<T> r;
  if (with_grad) r.dlogits = TensorT<T>(logits.shape);

  double total = 0.0;
  for (std::int64_t n = 0; n < target.n; ++n) {
    for (std::int64_t y = 0; y < target.h; ++y) {
      for (std::int64_t x = 0; x < target.w; ++x) {
        const std::int32_t t = target.at(n, y, x);
        if (t == ignore_label) continue;
        if (t < 0 || t >= k) {
          throw std::invalid_argument("loss: label " + std::to_string(t) + " at (" +
                                      std::to_string(n) + ", " + std::to_string(y) + ", " +
                                      std::to_string(x) + ") outside [0, " + std::to_string(k) +
                                      ")");
        }
        T m = logits.at(n, 0, y, x);
        for (std::int64_t c = 1; c < k; ++c) m = std::max(m, logits.at(n, c, y, x));
        T z = 0;
        for (std::int64_t c = 0; c < k; ++c) z += std::exp(logits.at(n, c, y, x) - m);
        const T lse = m + std::log(z);
        total += static_cast<double>(lse - logits.at(n, t, y, x));
        ++r.counted;
        if (with_grad) {
          const T inv_z = T(1) / z;
          for (std::int64_t c = 0; c < k; ++c) {
            const T p = std::exp(logits.at(n, c, y, x) - m) * inv_z;
            r.dlogits.at(n, c, y, x) = p - (c == t ? T(1) : T(0));
          }
        }
      }
    }
  }
  if (r.counted == 0) {
    throw std::runtime_error("loss: every pixel carries the ignore label");
  }
  r.value = static_cast<T>(total / static_cast<double>(r.counted));
  if (with_grad) {
    const T inv = T(1) / static_cast<T>(r.counted);
    for (auto& v : r.dlogits.data) v *= inv;
  }
  return r;
}

template CeResult<float> cross_entropy<float>(const TensorT<float>&, const Mask&, int, bool);
template CeResult<double> cross_entropy<double>(const TensorT<double>&, const Mask&, int, bool);

}  // namespace edgeseg
