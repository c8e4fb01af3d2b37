#pragma once

// Reference implementations written independently of the library kernels:
// plain nested loops with explicit bounds checks, no padded copies, no
// shared helpers. Tests compare library output against these.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "edgeseg/ops.hpp"
#include "edgeseg/tensor.hpp"

namespace testref {

template <class T>
edgeseg::TensorT<T> conv_naive(const edgeseg::TensorT<T>& in, const edgeseg::TensorT<T>& w,
                               const std::vector<T>* bias, const edgeseg::ConvParams& p) {
  const auto& s = in.shape;
  const std::int64_t c_out = w.shape.n;
  const std::int64_t cpg_in = s.c / p.groups;
  const std::int64_t cpg_out = c_out / p.groups;
  const std::int64_t oh = (s.h + 2 * p.padding - p.kh) / p.stride + 1;
  const std::int64_t ow = (s.w + 2 * p.padding - p.kw) / p.stride + 1;
  edgeseg::TensorT<T> out(edgeseg::Shape4{s.n, c_out, oh, ow});
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t oc = 0; oc < c_out; ++oc) {
      const std::int64_t g = oc / cpg_out;
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          T acc = bias ? (*bias)[static_cast<std::size_t>(oc)] : T(0);
          for (std::int64_t ic = 0; ic < cpg_in; ++ic) {
            for (std::int64_t ky = 0; ky < p.kh; ++ky) {
              for (std::int64_t kx = 0; kx < p.kw; ++kx) {
                const std::int64_t iy = oy * p.stride - p.padding + ky;
                const std::int64_t ix = ox * p.stride - p.padding + kx;
                if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
                acc += in.at(n, g * cpg_in + ic, iy, ix) * w.at(oc, ic, ky, kx);
              }
            }
          }
          out.at(n, oc, oy, ox) = acc;
        }
      }
    }
  }
  return out;
}

template <class T>
edgeseg::TensorT<T> tconv_naive(const edgeseg::TensorT<T>& in, const edgeseg::TensorT<T>& w,
                                const std::vector<T>* bias) {
  const auto& s = in.shape;
  const std::int64_t c_out = w.shape.c;
  edgeseg::TensorT<T> out(edgeseg::Shape4{s.n, c_out, 2 * s.h, 2 * s.w});
  if (bias) {
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t oc = 0; oc < c_out; ++oc)
        for (std::int64_t y = 0; y < 2 * s.h; ++y)
          for (std::int64_t x = 0; x < 2 * s.w; ++x)
            out.at(n, oc, y, x) = (*bias)[static_cast<std::size_t>(oc)];
  }
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t ic = 0; ic < s.c; ++ic)
      for (std::int64_t oc = 0; oc < c_out; ++oc)
        for (std::int64_t y = 0; y < s.h; ++y)
          for (std::int64_t x = 0; x < s.w; ++x)
            for (std::int64_t ky = 0; ky < 2; ++ky)
              for (std::int64_t kx = 0; kx < 2; ++kx)
                out.at(n, oc, 2 * y + ky, 2 * x + kx) += in.at(n, ic, y, x) * w.at(ic, oc, ky, kx);
  return out;
}

template <class T>
edgeseg::TensorT<T> maxpool_naive(const edgeseg::TensorT<T>& in) {
  const auto& s = in.shape;
  edgeseg::TensorT<T> out(edgeseg::Shape4{s.n, s.c, s.h / 2, s.w / 2});
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c)
      for (std::int64_t y = 0; y < s.h / 2; ++y)
        for (std::int64_t x = 0; x < s.w / 2; ++x)
          out.at(n, c, y, x) =
              std::max({in.at(n, c, 2 * y, 2 * x), in.at(n, c, 2 * y, 2 * x + 1),
                        in.at(n, c, 2 * y + 1, 2 * x), in.at(n, c, 2 * y + 1, 2 * x + 1)});
  return out;
}

template <class T>
edgeseg::TensorT<T> gap_naive(const edgeseg::TensorT<T>& in) {
  const auto& s = in.shape;
  edgeseg::TensorT<T> out(edgeseg::Shape4{s.n, s.c, 1, 1});
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      T acc = T(0);
      for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x) acc += in.at(n, c, y, x);
      out.at(n, c, 0, 0) = acc / static_cast<T>(s.h * s.w);
    }
  }
  return out;
}

/// Closed-form tap count per convolution: Kh*Kw*(C_in/groups) for each of
/// the N*C_out*H_out*W_out outputs, taps over the zero padding included
/// (the library kernel multiplies against a materialized padded copy, so
/// this is exactly the number of multiply-accumulates it executes).
inline std::uint64_t conv_macs_naive(const edgeseg::Shape4& in, std::int64_t c_out,
                                     const edgeseg::ConvParams& p) {
  const std::int64_t oh = (in.h + 2 * p.padding - p.kh) / p.stride + 1;
  const std::int64_t ow = (in.w + 2 * p.padding - p.kw) / p.stride + 1;
  return static_cast<std::uint64_t>(in.n * c_out * oh * ow * (in.c / p.groups) * p.kh * p.kw);
}

template <class T>
T max_abs_diff(const edgeseg::TensorT<T>& a, const edgeseg::TensorT<T>& b) {
  T worst = T(0);
  for (std::size_t i = 0; i < a.data.size(); ++i)
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
  return worst;
}

}  // namespace testref
