#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace edgeseg {

/// Dense NCHW shape. All tensors in the library are rank-4; vectors are
/// carried as std::vector<T> where an op needs per-channel parameters.
struct Shape4 {
  std::int64_t n = 0;
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  std::int64_t numel() const { return n * c * h * w; }
  bool operator==(const Shape4&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << n << "x" << c << "x" << h << "x" << w;
    return os.str();
  }
};

/// Row-major rank-4 tensor. Float for execution, double inside the
/// gradient-check harness; everything else is instantiated on both.
template <class T>
struct TensorT {
  Shape4 shape{};
  std::vector<T> data;

  TensorT() = default;

  explicit TensorT(Shape4 s) : shape(s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
      throw std::invalid_argument("tensor: negative dimension in shape " + s.str());
    }
    data.assign(static_cast<std::size_t>(s.numel()), T(0));
  }

  TensorT(Shape4 s, std::vector<T> values) : shape(s), data(std::move(values)) {
    if (static_cast<std::int64_t>(data.size()) != s.numel()) {
      throw std::invalid_argument("tensor: data length " + std::to_string(data.size()) +
                                  " does not match shape " + s.str());
    }
  }

  static TensorT full(Shape4 s, T value) {
    TensorT t(s);
    for (auto& v : t.data) v = value;
    return t;
  }

  std::int64_t numel() const { return shape.numel(); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return ((n * shape.c + c) * shape.h + h) * shape.w + w;
  }

  T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data[static_cast<std::size_t>(index(n, c, h, w))];
  }
  const T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data[static_cast<std::size_t>(index(n, c, h, w))];
  }

  bool same_shape(const TensorT& other) const { return shape == other.shape; }
};

using Tensor = TensorT<float>;
using DTensor = TensorT<double>;

/// Integer label grid (N, H, W). Values are class ids or an ignore label.
struct Mask {
  std::int64_t n = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::vector<std::int32_t> v;

  Mask() = default;
  Mask(std::int64_t n_, std::int64_t h_, std::int64_t w_)
      : n(n_), h(h_), w(w_), v(static_cast<std::size_t>(n_ * h_ * w_), 0) {}

  std::int64_t numel() const { return n * h * w; }

  std::int32_t& at(std::int64_t i, std::int64_t y, std::int64_t x) {
    return v[static_cast<std::size_t>((i * h + y) * w + x)];
  }
  std::int32_t at(std::int64_t i, std::int64_t y, std::int64_t x) const {
    return v[static_cast<std::size_t>((i * h + y) * w + x)];
  }
};

template <class T>
TensorT<double> to_double(const TensorT<T>& t) {
  TensorT<double> out(t.shape);
  for (std::size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<double>(t.data[i]);
  return out;
}

inline Tensor to_float(const DTensor& t) {
  Tensor out(t.shape);
  for (std::size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<float>(t.data[i]);
  return out;
}

template <class T>
bool all_finite(const TensorT<T>& t);

}  // namespace edgeseg
