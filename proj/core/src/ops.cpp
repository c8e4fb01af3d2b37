#include "edgeseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "edgeseg/runtime.hpp"

namespace edgeseg {

const char* activation_name(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::identity: return "identity";
    case ActivationKind::relu: return "relu";
    case ActivationKind::relu6: return "relu6";
    case ActivationKind::sigmoid: return "sigmoid";
    case ActivationKind::hard_sigmoid: return "hard_sigmoid";
    case ActivationKind::hard_swish: return "hard_swish";
  }
  return "unknown";
}

template <class T>
bool all_finite_values(const std::vector<T>& v) {
  for (const T x : v) {
    if (!std::isfinite(static_cast<double>(x))) return false;
  }
  return true;
}

Shape4 conv2d_output_shape(const Shape4& input, std::int64_t c_out, const ConvParams& p) {
  if (p.kh <= 0 || p.kw <= 0) {
    throw std::invalid_argument("conv2d: kernel must be positive, got " +
                                std::to_string(p.kh) + "x" + std::to_string(p.kw));
  }
  if (p.stride <= 0) throw std::invalid_argument("conv2d: stride must be positive");
  if (p.padding < 0) throw std::invalid_argument("conv2d: padding must be non-negative");
  if (p.groups <= 0) throw std::invalid_argument("conv2d: groups must be positive");
  if (input.c % p.groups != 0) {
    throw std::invalid_argument("conv2d: input channels " + std::to_string(input.c) +
                                " not divisible by groups " + std::to_string(p.groups));
  }
  if (c_out % p.groups != 0) {
    throw std::invalid_argument("conv2d: output channels " + std::to_string(c_out) +
                                " not divisible by groups " + std::to_string(p.groups));
  }
  const std::int64_t h_out = (input.h + 2 * p.padding - p.kh) / p.stride + 1;
  const std::int64_t w_out = (input.w + 2 * p.padding - p.kw) / p.stride + 1;
  if (input.h + 2 * p.padding < p.kh || input.w + 2 * p.padding < p.kw) {
    throw std::invalid_argument("conv2d: kernel " + std::to_string(p.kh) + "x" +
                                std::to_string(p.kw) + " larger than padded input " +
                                input.str());
  }
  return Shape4{input.n, c_out, h_out, w_out};
}

namespace {

template <class T>
void check_conv_inputs(const TensorT<T>& input, const TensorT<T>& weights,
                       const std::vector<T>* bias, const ConvParams& p) {
  if (weights.shape.h != p.kh || weights.shape.w != p.kw) {
    throw std::invalid_argument("conv2d: weight spatial dims " + weights.shape.str() +
                                " disagree with kernel " + std::to_string(p.kh) + "x" +
                                std::to_string(p.kw));
  }
  if (weights.shape.c != input.shape.c / p.groups) {
    throw std::invalid_argument(
        "conv2d: weight channel dim " + std::to_string(weights.shape.c) +
        " does not equal input channels / groups = " +
        std::to_string(input.shape.c / p.groups));
  }
  if (bias && static_cast<std::int64_t>(bias->size()) != weights.shape.n) {
    throw std::invalid_argument("conv2d: bias length " + std::to_string(bias->size()) +
                                " does not equal output channels " +
                                std::to_string(weights.shape.n));
  }
}

/// Zero-padded copy of one (n) image, all channels.
template <class T>
std::vector<T> pad_image(const TensorT<T>& x, std::int64_t n, int pad) {
  const std::int64_t c = x.shape.c, h = x.shape.h, w = x.shape.w;
  const std::int64_t hp = h + 2 * pad, wp = w + 2 * pad;
  std::vector<T> out(static_cast<std::size_t>(c * hp * wp), T(0));
  for (std::int64_t ci = 0; ci < c; ++ci) {
    for (std::int64_t y = 0; y < h; ++y) {
      const T* src = x.ptr() + x.index(n, ci, y, 0);
      T* dst = out.data() + (ci * hp + (y + pad)) * wp + pad;
      std::copy(src, src + w, dst);
    }
  }
  return out;
}

template <class T, bool Count>
std::uint64_t conv2d_kernel(const TensorT<T>& x, const TensorT<T>& w, const std::vector<T>* bias,
                            const ConvParams& p, TensorT<T>& y) {
  const std::int64_t c_in = x.shape.c;
  const std::int64_t c_out = y.shape.c;
  const std::int64_t h_out = y.shape.h, w_out = y.shape.w;
  const std::int64_t cpg_in = c_in / p.groups;
  const std::int64_t cpg_out = c_out / p.groups;
  const std::int64_t hp = x.shape.h + 2 * p.padding;
  const std::int64_t wp = x.shape.w + 2 * p.padding;
  std::uint64_t macs = 0;

  for (std::int64_t n = 0; n < x.shape.n; ++n) {
    const std::vector<T> padded = pad_image(x, n, p.padding);
    const T* xp = padded.data();
    std::uint64_t image_macs = 0;
    auto run = [&](std::int64_t oc_begin, std::int64_t oc_end) {
      std::uint64_t local = 0;
      for (std::int64_t oc = oc_begin; oc < oc_end; ++oc) {
        const std::int64_t g = oc / cpg_out;
        const T b = bias ? (*bias)[static_cast<std::size_t>(oc)] : T(0);
        for (std::int64_t oh = 0; oh < h_out; ++oh) {
          for (std::int64_t ow = 0; ow < w_out; ++ow) {
            T acc = b;
            for (std::int64_t ic = 0; ic < cpg_in; ++ic) {
              const T* xplane = xp + ((g * cpg_in + ic) * hp + oh * p.stride) * wp + ow * p.stride;
              const T* wrow = w.ptr() + w.index(oc, ic, 0, 0);
              for (int kh = 0; kh < p.kh; ++kh) {
                const T* xrow = xplane + kh * wp;
                for (int kw = 0; kw < p.kw; ++kw) {
                  acc += xrow[kw] * wrow[kw];
                  if constexpr (Count) ++local;
                }
                wrow += p.kw;
              }
            }
            y.at(n, oc, oh, ow) = acc;
          }
        }
      }
      return local;
    };
    if (runtime::num_threads() > 1 && !Count) {
      runtime::parallel_for(c_out, [&](std::int64_t b, std::int64_t e) { run(b, e); });
    } else {
      image_macs = run(0, c_out);
    }
    macs += image_macs;
  }
  return macs;
}

}  // namespace

template <class T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weights, const std::vector<T>* bias,
                  const ConvParams& p, std::uint64_t* mac_count) {
  check_conv_inputs(input, weights, bias, p);
  const Shape4 out_shape = conv2d_output_shape(input.shape, weights.shape.n, p);
  TensorT<T> y(out_shape);
  if (mac_count) {
    *mac_count = conv2d_kernel<T, true>(input, weights, bias, p, y);
  } else {
    conv2d_kernel<T, false>(input, weights, bias, p, y);
  }
  return y;
}

template <class T>
ConvGrads<T> conv2d_vjp(const TensorT<T>& input, const TensorT<T>& weights, bool has_bias,
                        const ConvParams& p, const TensorT<T>& cotangent) {
  check_conv_inputs<T>(input, weights, nullptr, p);
  const Shape4 out_shape = conv2d_output_shape(input.shape, weights.shape.n, p);
  if (!(cotangent.shape == out_shape)) {
    throw std::invalid_argument("conv2d_vjp: cotangent shape " + cotangent.shape.str() +
                                " does not match output shape " + out_shape.str());
  }
  ConvGrads<T> g;
  g.dinput = TensorT<T>(input.shape);
  g.dweights = TensorT<T>(weights.shape);
  if (has_bias) g.dbias.assign(static_cast<std::size_t>(out_shape.c), T(0));

  const std::int64_t cpg_in = input.shape.c / p.groups;
  const std::int64_t cpg_out = out_shape.c / p.groups;

  for (std::int64_t n = 0; n < input.shape.n; ++n) {
    for (std::int64_t oc = 0; oc < out_shape.c; ++oc) {
      const std::int64_t gi = oc / cpg_out;
      for (std::int64_t oh = 0; oh < out_shape.h; ++oh) {
        for (std::int64_t ow = 0; ow < out_shape.w; ++ow) {
          const T ct = cotangent.at(n, oc, oh, ow);
          if (has_bias) g.dbias[static_cast<std::size_t>(oc)] += ct;
          for (std::int64_t ic = 0; ic < cpg_in; ++ic) {
            const std::int64_t c_abs = gi * cpg_in + ic;
            for (int kh = 0; kh < p.kh; ++kh) {
              const std::int64_t ih = oh * p.stride + kh - p.padding;
              if (ih < 0 || ih >= input.shape.h) continue;
              for (int kw = 0; kw < p.kw; ++kw) {
                const std::int64_t iw = ow * p.stride + kw - p.padding;
                if (iw < 0 || iw >= input.shape.w) continue;
                g.dinput.at(n, c_abs, ih, iw) += ct * weights.at(oc, ic, kh, kw);
                g.dweights.at(oc, ic, kh, kw) += ct * input.at(n, c_abs, ih, iw);
              }
            }
          }
        }
      }
    }
  }
  return g;
}

template <class T>
TensorT<T> transpose_conv2x2(const TensorT<T>& input, const TensorT<T>& weights,
                             const std::vector<T>* bias, std::uint64_t* mac_count) {
  if (weights.shape.n != input.shape.c) {
    throw std::invalid_argument("transpose_conv2x2: weight input-channel dim " +
                                std::to_string(weights.shape.n) + " does not match input channels " +
                                std::to_string(input.shape.c));
  }
  if (weights.shape.h != 2 || weights.shape.w != 2) {
    throw std::invalid_argument("transpose_conv2x2: kernel must be 2x2, got " +
                                weights.shape.str());
  }
  const std::int64_t c_in = input.shape.c;
  const std::int64_t c_out = weights.shape.c;
  if (bias && static_cast<std::int64_t>(bias->size()) != c_out) {
    throw std::invalid_argument("transpose_conv2x2: bias length mismatch");
  }
  TensorT<T> y(Shape4{input.shape.n, c_out, input.shape.h * 2, input.shape.w * 2});
  std::uint64_t macs = 0;

  auto run = [&](std::int64_t n, std::int64_t oc_begin, std::int64_t oc_end, std::uint64_t* cnt) {
    for (std::int64_t oc = oc_begin; oc < oc_end; ++oc) {
      const T b = bias ? (*bias)[static_cast<std::size_t>(oc)] : T(0);
      for (std::int64_t h = 0; h < input.shape.h; ++h) {
        for (std::int64_t w = 0; w < input.shape.w; ++w) {
          for (int kh = 0; kh < 2; ++kh) {
            for (int kw = 0; kw < 2; ++kw) {
              T acc = b;
              for (std::int64_t ic = 0; ic < c_in; ++ic) {
                acc += input.at(n, ic, h, w) * weights.at(ic, oc, kh, kw);
                if (cnt) ++*cnt;
              }
              y.at(n, oc, 2 * h + kh, 2 * w + kw) = acc;
            }
          }
        }
      }
    }
  };

  for (std::int64_t n = 0; n < input.shape.n; ++n) {
    if (runtime::num_threads() > 1 && !mac_count) {
      runtime::parallel_for(c_out, [&](std::int64_t b, std::int64_t e) { run(n, b, e, nullptr); });
    } else {
      run(n, 0, c_out, mac_count ? &macs : nullptr);
    }
  }
  if (mac_count) *mac_count = macs;
  return y;
}

template <class T>
ConvGrads<T> transpose_conv2x2_vjp(const TensorT<T>& input, const TensorT<T>& weights,
                                   bool has_bias, const TensorT<T>& cotangent) {
  const Shape4 out_shape{input.shape.n, weights.shape.c, input.shape.h * 2, input.shape.w * 2};
  if (!(cotangent.shape == out_shape)) {
    throw std::invalid_argument("transpose_conv2x2_vjp: cotangent shape " +
                                cotangent.shape.str() + " does not match output shape " +
                                out_shape.str());
  }
  ConvGrads<T> g;
  g.dinput = TensorT<T>(input.shape);
  g.dweights = TensorT<T>(weights.shape);
  if (has_bias) g.dbias.assign(static_cast<std::size_t>(out_shape.c), T(0));

  for (std::int64_t n = 0; n < input.shape.n; ++n) {
    for (std::int64_t oc = 0; oc < out_shape.c; ++oc) {
      for (std::int64_t h = 0; h < input.shape.h; ++h) {
        for (std::int64_t w = 0; w < input.shape.w; ++w) {
          for (int kh = 0; kh < 2; ++kh) {
            for (int kw = 0; kw < 2; ++kw) {
              const T ct = cotangent.at(n, oc, 2 * h + kh, 2 * w + kw);
              for (std::int64_t ic = 0; ic < input.shape.c; ++ic) {
                g.dinput.at(n, ic, h, w) += ct * weights.at(ic, oc, kh, kw);
                g.dweights.at(ic, oc, kh, kw) += ct * input.at(n, ic, h, w);
              }
            }
          }
        }
      }
      if (has_bias) {
        T s = 0;
        for (std::int64_t oh = 0; oh < out_shape.h; ++oh)
          for (std::int64_t ow = 0; ow < out_shape.w; ++ow) s += cotangent.at(n, oc, oh, ow);
        g.dbias[static_cast<std::size_t>(oc)] += s;
      }
    }
  }
  return g;
}

template <class T>
TensorT<T> batchnorm2d(const TensorT<T>& input, const std::vector<T>& gamma,
                       const std::vector<T>& beta, std::vector<T>& running_mean,
                       std::vector<T>& running_var, T eps, bool training, T momentum,
                       bool update_running, BatchNormCache<T>* cache) {
  const std::int64_t c = input.shape.c;
  if (eps <= T(0)) throw std::invalid_argument("batchnorm2d: eps must be positive");
  auto check_len = [c](const std::vector<T>& v, const char* what) {
    if (static_cast<std::int64_t>(v.size()) != c) {
      throw std::invalid_argument(std::string("batchnorm2d: ") + what + " length " +
                                  std::to_string(v.size()) + " does not equal channels " +
                                  std::to_string(c));
    }
  };
  check_len(gamma, "gamma");
  check_len(beta, "beta");
  check_len(running_mean, "running_mean");
  check_len(running_var, "running_var");

  const std::int64_t reduce = input.shape.n * input.shape.h * input.shape.w;
  std::vector<T> mean(static_cast<std::size_t>(c)), var(static_cast<std::size_t>(c));
  if (training) {
    if (reduce == 0) throw std::invalid_argument("batchnorm2d: empty batch in training mode");
    for (std::int64_t ci = 0; ci < c; ++ci) {
      T s = 0;
      for (std::int64_t n = 0; n < input.shape.n; ++n)
        for (std::int64_t h = 0; h < input.shape.h; ++h)
          for (std::int64_t w = 0; w < input.shape.w; ++w) s += input.at(n, ci, h, w);
      const T m = s / static_cast<T>(reduce);
      T v = 0;
      for (std::int64_t n = 0; n < input.shape.n; ++n)
        for (std::int64_t h = 0; h < input.shape.h; ++h)
          for (std::int64_t w = 0; w < input.shape.w; ++w) {
            const T d = input.at(n, ci, h, w) - m;
            v += d * d;
          }
      mean[static_cast<std::size_t>(ci)] = m;
      var[static_cast<std::size_t>(ci)] = v / static_cast<T>(reduce);  // biased
    }
    if (update_running) {
      for (std::int64_t ci = 0; ci < c; ++ci) {
        const auto i = static_cast<std::size_t>(ci);
        running_mean[i] = momentum * running_mean[i] + (T(1) - momentum) * mean[i];
        running_var[i] = momentum * running_var[i] + (T(1) - momentum) * var[i];
      }
    }
  } else {
    mean = running_mean;
    var = running_var;
  }

  TensorT<T> y(input.shape);
  std::vector<T> inv_std(static_cast<std::size_t>(c));
  for (std::int64_t ci = 0; ci < c; ++ci) {
    const auto i = static_cast<std::size_t>(ci);
    inv_std[i] = T(1) / std::sqrt(var[i] + eps);
    const T g = gamma[i] * inv_std[i];
    const T b = beta[i] - mean[i] * g;
    for (std::int64_t n = 0; n < input.shape.n; ++n)
      for (std::int64_t h = 0; h < input.shape.h; ++h)
        for (std::int64_t w = 0; w < input.shape.w; ++w)
          y.at(n, ci, h, w) = input.at(n, ci, h, w) * g + b;
  }
  if (cache) {
    cache->mean = std::move(mean);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <class T>
BatchNormCache<T> bn_eval_cache(const std::vector<T>& running_mean,
                                const std::vector<T>& running_var, T eps) {
  BatchNormCache<T> c;
  c.mean = running_mean;
  c.inv_std.resize(running_var.size());
  for (std::size_t i = 0; i < running_var.size(); ++i)
    c.inv_std[i] = T(1) / std::sqrt(running_var[i] + eps);
  return c;
}

template <class T>
BatchNormGrads<T> batchnorm2d_vjp(const TensorT<T>& input, const std::vector<T>& gamma,
                                  const BatchNormCache<T>& cache, const TensorT<T>& cotangent,
                                  bool training) {
  if (!(cotangent.shape == input.shape)) {
    throw std::invalid_argument("batchnorm2d_vjp: cotangent shape mismatch");
  }
  const std::int64_t c = input.shape.c;
  const std::int64_t reduce = input.shape.n * input.shape.h * input.shape.w;
  BatchNormGrads<T> g;
  g.dinput = TensorT<T>(input.shape);
  g.dgamma.assign(static_cast<std::size_t>(c), T(0));
  g.dbeta.assign(static_cast<std::size_t>(c), T(0));

  for (std::int64_t ci = 0; ci < c; ++ci) {
    const auto i = static_cast<std::size_t>(ci);
    const T m = cache.mean[i];
    const T is = cache.inv_std[i];
    T sum_ct = 0, sum_ct_xhat = 0;
    for (std::int64_t n = 0; n < input.shape.n; ++n)
      for (std::int64_t h = 0; h < input.shape.h; ++h)
        for (std::int64_t w = 0; w < input.shape.w; ++w) {
          const T ct = cotangent.at(n, ci, h, w);
          const T xhat = (input.at(n, ci, h, w) - m) * is;
          sum_ct += ct;
          sum_ct_xhat += ct * xhat;
        }
    g.dbeta[i] = sum_ct;
    g.dgamma[i] = sum_ct_xhat;
    const T inv_n = T(1) / static_cast<T>(reduce);
    for (std::int64_t n = 0; n < input.shape.n; ++n)
      for (std::int64_t h = 0; h < input.shape.h; ++h)
        for (std::int64_t w = 0; w < input.shape.w; ++w) {
          const T ct = cotangent.at(n, ci, h, w);
          if (training) {
            const T xhat = (input.at(n, ci, h, w) - m) * is;
            g.dinput.at(n, ci, h, w) =
                gamma[i] * is * (ct - sum_ct * inv_n - xhat * sum_ct_xhat * inv_n);
          } else {
            g.dinput.at(n, ci, h, w) = gamma[i] * is * ct;
          }
        }
  }
  return g;
}

namespace {

template <class T>
T apply_activation(T x, ActivationKind kind) {
  switch (kind) {
    case ActivationKind::identity: return x;
    case ActivationKind::relu: return x > T(0) ? x : T(0);
    case ActivationKind::relu6: return std::min(std::max(x, T(0)), T(6));
    case ActivationKind::sigmoid: return T(1) / (T(1) + std::exp(-x));
    case ActivationKind::hard_sigmoid:
      return std::min(std::max(x + T(3), T(0)), T(6)) / T(6);
    case ActivationKind::hard_swish:
      return x * (std::min(std::max(x + T(3), T(0)), T(6)) / T(6));
  }
  throw std::invalid_argument("activation: unknown kind");
}

template <class T>
T activation_grad(T x, ActivationKind kind) {
  switch (kind) {
    case ActivationKind::identity: return T(1);
    case ActivationKind::relu: return x > T(0) ? T(1) : T(0);  // subgradient 0 at x == 0
    case ActivationKind::relu6: return (x > T(0) && x < T(6)) ? T(1) : T(0);
    case ActivationKind::sigmoid: {
      const T y = T(1) / (T(1) + std::exp(-x));
      return y * (T(1) - y);
    }
    case ActivationKind::hard_sigmoid: return (x > T(-3) && x < T(3)) ? T(1) / T(6) : T(0);
    case ActivationKind::hard_swish:
      if (x <= T(-3)) return T(0);
      if (x >= T(3)) return T(1);
      return (T(2) * x + T(3)) / T(6);
  }
  throw std::invalid_argument("activation: unknown kind");
}

}  // namespace

template <class T>
TensorT<T> activation(const TensorT<T>& input, ActivationKind kind) {
  TensorT<T> y(input.shape);
  for (std::size_t i = 0; i < input.data.size(); ++i)
    y.data[i] = apply_activation(input.data[i], kind);
  return y;
}

template <class T>
TensorT<T> activation_vjp(const TensorT<T>& input, ActivationKind kind,
                          const TensorT<T>& cotangent) {
  if (!(cotangent.shape == input.shape)) {
    throw std::invalid_argument("activation_vjp: cotangent shape mismatch");
  }
  TensorT<T> dx(input.shape);
  for (std::size_t i = 0; i < input.data.size(); ++i)
    dx.data[i] = cotangent.data[i] * activation_grad(input.data[i], kind);
  return dx;
}

template <class T>
TensorT<T> maxpool2x2(const TensorT<T>& input, std::vector<std::int64_t>* argmax) {
  if (input.shape.h % 2 != 0 || input.shape.w % 2 != 0) {
    throw std::invalid_argument("maxpool2x2: spatial dims must be even, got " +
                                input.shape.str());
  }
  TensorT<T> y(Shape4{input.shape.n, input.shape.c, input.shape.h / 2, input.shape.w / 2});
  if (argmax) argmax->assign(static_cast<std::size_t>(y.numel()), 0);
  std::int64_t oi = 0;
  for (std::int64_t n = 0; n < input.shape.n; ++n)
    for (std::int64_t c = 0; c < input.shape.c; ++c)
      for (std::int64_t oh = 0; oh < y.shape.h; ++oh)
        for (std::int64_t ow = 0; ow < y.shape.w; ++ow, ++oi) {
          T best = input.at(n, c, 2 * oh, 2 * ow);
          std::int64_t best_idx = input.index(n, c, 2 * oh, 2 * ow);
          for (int dh = 0; dh < 2; ++dh)
            for (int dw = 0; dw < 2; ++dw) {
              const T v = input.at(n, c, 2 * oh + dh, 2 * ow + dw);
              if (v > best) {  // strict: ties keep the first row-major element
                best = v;
                best_idx = input.index(n, c, 2 * oh + dh, 2 * ow + dw);
              }
            }
          y.data[static_cast<std::size_t>(oi)] = best;
          if (argmax) (*argmax)[static_cast<std::size_t>(oi)] = best_idx;
        }
  return y;
}

template <class T>
TensorT<T> maxpool2x2_vjp(const Shape4& input_shape, const std::vector<std::int64_t>& argmax,
                          const TensorT<T>& cotangent) {
  if (static_cast<std::int64_t>(argmax.size()) != cotangent.numel()) {
    throw std::invalid_argument("maxpool2x2_vjp: argmax length does not match cotangent");
  }
  TensorT<T> dx(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i)
    dx.data[static_cast<std::size_t>(argmax[i])] += cotangent.data[i];
  return dx;
}

template <class T>
TensorT<T> global_avg_pool(const TensorT<T>& input) {
  if (input.shape.h < 1 || input.shape.w < 1) {
    throw std::invalid_argument("global_avg_pool: spatial dims must be >= 1");
  }
  TensorT<T> y(Shape4{input.shape.n, input.shape.c, 1, 1});
  const T inv = T(1) / static_cast<T>(input.shape.h * input.shape.w);
  for (std::int64_t n = 0; n < input.shape.n; ++n)
    for (std::int64_t c = 0; c < input.shape.c; ++c) {
      T s = 0;
      for (std::int64_t h = 0; h < input.shape.h; ++h)
        for (std::int64_t w = 0; w < input.shape.w; ++w) s += input.at(n, c, h, w);
      y.at(n, c, 0, 0) = s * inv;
    }
  return y;
}

template <class T>
TensorT<T> global_avg_pool_vjp(const Shape4& input_shape, const TensorT<T>& cotangent) {
  TensorT<T> dx(input_shape);
  const T inv = T(1) / static_cast<T>(input_shape.h * input_shape.w);
  for (std::int64_t n = 0; n < input_shape.n; ++n)
    for (std::int64_t c = 0; c < input_shape.c; ++c) {
      const T v = cotangent.at(n, c, 0, 0) * inv;
      for (std::int64_t h = 0; h < input_shape.h; ++h)
        for (std::int64_t w = 0; w < input_shape.w; ++w) dx.at(n, c, h, w) = v;
    }
  return dx;
}

template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape.n != b.shape.n || a.shape.h != b.shape.h || a.shape.w != b.shape.w) {
    throw std::invalid_argument("concat_channels: N/H/W mismatch between " + a.shape.str() +
                                " and " + b.shape.str());
  }
  TensorT<T> y(Shape4{a.shape.n, a.shape.c + b.shape.c, a.shape.h, a.shape.w});
  for (std::int64_t n = 0; n < y.shape.n; ++n) {
    for (std::int64_t c = 0; c < a.shape.c; ++c)
      for (std::int64_t h = 0; h < y.shape.h; ++h)
        for (std::int64_t w = 0; w < y.shape.w; ++w) y.at(n, c, h, w) = a.at(n, c, h, w);
    for (std::int64_t c = 0; c < b.shape.c; ++c)
      for (std::int64_t h = 0; h < y.shape.h; ++h)
        for (std::int64_t w = 0; w < y.shape.w; ++w)
          y.at(n, a.shape.c + c, h, w) = b.at(n, c, h, w);
  }
  return y;
}

template <class T>
std::pair<TensorT<T>, TensorT<T>> concat_channels_vjp(std::int64_t c_a, std::int64_t c_b,
                                                      const TensorT<T>& cotangent) {
  if (cotangent.shape.c != c_a + c_b) {
    throw std::invalid_argument("concat_channels_vjp: channel split mismatch");
  }
  return {slice_channels(cotangent, 0, c_a), slice_channels(cotangent, c_a, c_a + c_b)};
}

template <class T>
TensorT<T> slice_channels(const TensorT<T>& input, std::int64_t c_begin, std::int64_t c_end) {
  if (c_begin < 0 || c_end > input.shape.c || c_begin > c_end) {
    throw std::invalid_argument("slice_channels: range [" + std::to_string(c_begin) + ", " +
                                std::to_string(c_end) + ") out of bounds for " +
                                std::to_string(input.shape.c) + " channels");
  }
  TensorT<T> y(Shape4{input.shape.n, c_end - c_begin, input.shape.h, input.shape.w});
  for (std::int64_t n = 0; n < input.shape.n; ++n)
    for (std::int64_t c = c_begin; c < c_end; ++c)
      for (std::int64_t h = 0; h < input.shape.h; ++h)
        for (std::int64_t w = 0; w < input.shape.w; ++w)
          y.at(n, c - c_begin, h, w) = input.at(n, c, h, w);
  return y;
}

template <class T>
TensorT<T> softmax_channels(const TensorT<T>& input) {
  if (input.shape.c < 1) throw std::invalid_argument("softmax_channels: needs C >= 1");
  TensorT<T> y(input.shape);
  for (std::int64_t n = 0; n < input.shape.n; ++n)
    for (std::int64_t h = 0; h < input.shape.h; ++h)
      for (std::int64_t w = 0; w < input.shape.w; ++w) {
        T m = input.at(n, 0, h, w);
        for (std::int64_t c = 1; c < input.shape.c; ++c)
          m = std::max(m, input.at(n, c, h, w));
        T z = 0;
        for (std::int64_t c = 0; c < input.shape.c; ++c) {
          const T e = std::exp(input.at(n, c, h, w) - m);
          y.at(n, c, h, w) = e;
          z += e;
        }
        const T inv = T(1) / z;
        for (std::int64_t c = 0; c < input.shape.c; ++c) y.at(n, c, h, w) *= inv;
      }
  return y;
}

template <class T>
TensorT<T> softmax_channels_vjp(const TensorT<T>& y, const TensorT<T>& cotangent) {
  if (!(cotangent.shape == y.shape)) {
    throw std::invalid_argument("softmax_channels_vjp: cotangent shape mismatch");
  }
  TensorT<T> dx(y.shape);
  for (std::int64_t n = 0; n < y.shape.n; ++n)
    for (std::int64_t h = 0; h < y.shape.h; ++h)
      for (std::int64_t w = 0; w < y.shape.w; ++w) {
        T dot = 0;
        for (std::int64_t c = 0; c < y.shape.c; ++c)
          dot += cotangent.at(n, c, h, w) * y.at(n, c, h, w);
        for (std::int64_t c = 0; c < y.shape.c; ++c)
          dx.at(n, c, h, w) = y.at(n, c, h, w) * (cotangent.at(n, c, h, w) - dot);
      }
  return dx;
}

template <class T>
TensorT<T> elementwise_add(const TensorT<T>& a, const TensorT<T>& b) {
  if (!(a.shape == b.shape)) {
    throw std::invalid_argument("elementwise_add: shapes " + a.shape.str() + " and " +
                                b.shape.str() + " differ");
  }
  TensorT<T> y(a.shape);
  for (std::size_t i = 0; i < a.data.size(); ++i) y.data[i] = a.data[i] + b.data[i];
  return y;
}

template <class T>
TensorT<T> channel_scale(const TensorT<T>& input, const TensorT<T>& gate) {
  if (gate.shape.n != input.shape.n || gate.shape.c != input.shape.c || gate.shape.h != 1 ||
      gate.shape.w != 1) {
    throw std::invalid_argument("channel_scale: gate shape " + gate.shape.str() +
                                " must be (N, C, 1, 1) matching input " + input.shape.str());
  }
  TensorT<T> y(input.shape);
  for (std::int64_t n = 0; n < input.shape.n; ++n)
    for (std::int64_t c = 0; c < input.shape.c; ++c) {
      const T s = gate.at(n, c, 0, 0);
      for (std::int64_t h = 0; h < input.shape.h; ++h)
        for (std::int64_t w = 0; w < input.shape.w; ++w)
          y.at(n, c, h, w) = input.at(n, c, h, w) * s;
    }
  return y;
}

template <class T>
ChannelScaleGrads<T> channel_scale_vjp(const TensorT<T>& input, const TensorT<T>& gate,
                                       const TensorT<T>& cotangent) {
  ChannelScaleGrads<T> g;
  g.dinput = TensorT<T>(input.shape);
  g.dgate = TensorT<T>(gate.shape);
  for (std::int64_t n = 0; n < input.shape.n; ++n)
    for (std::int64_t c = 0; c < input.shape.c; ++c) {
      const T s = gate.at(n, c, 0, 0);
      T acc = 0;
      for (std::int64_t h = 0; h < input.shape.h; ++h)
        for (std::int64_t w = 0; w < input.shape.w; ++w) {
          const T ct = cotangent.at(n, c, h, w);
          g.dinput.at(n, c, h, w) = ct * s;
          acc += ct * input.at(n, c, h, w);
        }
      g.dgate.at(n, c, 0, 0) = acc;
    }
  return g;
}

// The library executes in float; the gradient-check harness instantiates the
// same kernels in double.
#define EDGESEG_INSTANTIATE_OPS(T)                                                              \
  template bool all_finite_values<T>(const std::vector<T>&);                                    \
  template TensorT<T> conv2d<T>(const TensorT<T>&, const TensorT<T>&, const std::vector<T>*,    \
                                const ConvParams&, std::uint64_t*);                             \
  template ConvGrads<T> conv2d_vjp<T>(const TensorT<T>&, const TensorT<T>&, bool,               \
                                      const ConvParams&, const TensorT<T>&);                    \
  template TensorT<T> transpose_conv2x2<T>(const TensorT<T>&, const TensorT<T>&,                \
                                           const std::vector<T>*, std::uint64_t*);              \
  template ConvGrads<T> transpose_conv2x2_vjp<T>(const TensorT<T>&, const TensorT<T>&, bool,    \
                                                 const TensorT<T>&);                            \
  template TensorT<T> batchnorm2d<T>(const TensorT<T>&, const std::vector<T>&,                  \
                                     const std::vector<T>&, std::vector<T>&, std::vector<T>&,   \
                                     T, bool, T, bool, BatchNormCache<T>*);                     \
  template BatchNormCache<T> bn_eval_cache<T>(const std::vector<T>&, const std::vector<T>&, T); \
  template BatchNormGrads<T> batchnorm2d_vjp<T>(const TensorT<T>&, const std::vector<T>&,       \
                                                const BatchNormCache<T>&, const TensorT<T>&,    \
                                                bool);                                          \
  template TensorT<T> activation<T>(const TensorT<T>&, ActivationKind);                         \
  template TensorT<T> activation_vjp<T>(const TensorT<T>&, ActivationKind, const TensorT<T>&);  \
  template TensorT<T> maxpool2x2<T>(const TensorT<T>&, std::vector<std::int64_t>*);             \
  template TensorT<T> maxpool2x2_vjp<T>(const Shape4&, const std::vector<std::int64_t>&,        \
                                        const TensorT<T>&);                                     \
  template TensorT<T> global_avg_pool<T>(const TensorT<T>&);                                    \
  template TensorT<T> global_avg_pool_vjp<T>(const Shape4&, const TensorT<T>&);                 \
  template TensorT<T> concat_channels<T>(const TensorT<T>&, const TensorT<T>&);                 \
  template std::pair<TensorT<T>, TensorT<T>> concat_channels_vjp<T>(std::int64_t, std::int64_t, \
                                                                    const TensorT<T>&);         \
  template TensorT<T> slice_channels<T>(const TensorT<T>&, std::int64_t, std::int64_t);         \
  template TensorT<T> softmax_channels<T>(const TensorT<T>&);                                   \
  template TensorT<T> softmax_channels_vjp<T>(const TensorT<T>&, const TensorT<T>&);            \
  template TensorT<T> elementwise_add<T>(const TensorT<T>&, const TensorT<T>&);                 \
  template TensorT<T> channel_scale<T>(const TensorT<T>&, const TensorT<T>&);                   \
  template ChannelScaleGrads<T> channel_scale_vjp<T>(const TensorT<T>&, const TensorT<T>&,      \
                                                     const TensorT<T>&);

EDGESEG_INSTANTIATE_OPS(float)
EDGESEG_INSTANTIATE_OPS(double)

#undef EDGESEG_INSTANTIATE_OPS

}  // namespace edgeseg
