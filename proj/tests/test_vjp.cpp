#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "edgeseg/gradcheck.hpp"
#include "edgeseg/loss.hpp"
#include "edgeseg/ops.hpp"
#include "edgeseg/rng.hpp"
#include "edgeseg/tensor.hpp"

using namespace edgeseg;

namespace {

DTensor rand_dtensor(Rng& rng, Shape4 s, double lo = -1.0, double hi = 1.0) {
  DTensor t(s);
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// plain central difference of a scalar function, the convention every
// backward in the library is judged against
double central_fd(const std::function<double(double)>& f, double x, double h = 1e-5) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

}  // namespace

TEST_CASE("the finite-difference convention recovers a known derivative") {
  const double fd = central_fd([](double t) { return t * t; }, 1.0);
  CHECK(std::abs(fd - 2.0) < 1e-7);
}

TEST_CASE("relu vjp passes the cotangent where the input is positive") {
  DTensor x({1, 1, 1, 4}, {2.0, -3.0, 0.5, -0.1});
  DTensor cot = DTensor::full({1, 1, 1, 4}, 1.0);
  DTensor dx = activation_vjp(x, ActivationKind::relu, cot);
  CHECK(dx.data[0] == 1.0);
  CHECK(dx.data[1] == 0.0);
  CHECK(dx.data[2] == 1.0);
  CHECK(dx.data[3] == 0.0);
}

TEST_CASE("conv vjp through an identity kernel is the identity on cotangents") {
  Rng rng(1);
  DTensor x = rand_dtensor(rng, {1, 3, 4, 4});
  DTensor w({3, 3, 1, 1});
  for (std::int64_t c = 0; c < 3; ++c) w.at(c, c, 0, 0) = 1.0;
  DTensor cot = rand_dtensor(rng, {1, 3, 4, 4});
  auto g = conv2d_vjp(x, w, /*has_bias=*/false, ConvParams{1, 1, 1, 0, 1}, cot);
  for (std::size_t i = 0; i < cot.data.size(); ++i) CHECK(g.dinput.data[i] == cot.data[i]);
}

TEST_CASE("maxpool vjp routes the cotangent to each window's argmax") {
  DTensor x({1, 1, 2, 2}, {1.0, 9.0, 3.0, 4.0});
  std::vector<std::int64_t> argmax;
  maxpool2x2(x, &argmax);
  DTensor cot = DTensor::full({1, 1, 1, 1}, 5.0);
  DTensor dx = maxpool2x2_vjp(x.shape, argmax, cot);
  CHECK(dx.data[0] == 0.0);
  CHECK(dx.data[1] == 5.0);
  CHECK(dx.data[2] == 0.0);
  CHECK(dx.data[3] == 0.0);
}

TEST_CASE("concat vjp splits the cotangent at the channel seam") {
  Rng rng(2);
  DTensor cot = rand_dtensor(rng, {1, 5, 2, 2});
  auto [da, db] = concat_channels_vjp<double>(2, 3, cot);
  REQUIRE(da.shape == Shape4{1, 2, 2, 2});
  REQUIRE(db.shape == Shape4{1, 3, 2, 2});
  for (std::int64_t c = 0; c < 2; ++c)
    for (std::int64_t i = 0; i < 4; ++i)
      CHECK(da.at(0, c, i / 2, i % 2) == cot.at(0, c, i / 2, i % 2));
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t i = 0; i < 4; ++i)
      CHECK(db.at(0, c, i / 2, i % 2) == cot.at(0, c + 2, i / 2, i % 2));
}

TEST_CASE("conv weight gradient agrees with central differences") {
  Rng rng(3);
  DTensor x = rand_dtensor(rng, {1, 2, 5, 5});
  DTensor w = rand_dtensor(rng, {3, 2, 3, 3}, -0.5, 0.5);
  DTensor cot = rand_dtensor(rng, {1, 3, 5, 5});
  const ConvParams p{3, 3, 1, 1, 1};
  auto g = conv2d_vjp(x, w, false, p, cot);
  // scalar J = <cot, conv(x, w)>; dJ/dw[i] probed at 6 coordinates
  for (int probe = 0; probe < 6; ++probe) {
    const auto i = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(w.data.size()) - 1));
    const double fd = central_fd(
        [&](double v) {
          DTensor wp = w;
          wp.data[i] = v;
          DTensor y = conv2d<double>(x, wp, nullptr, p);
          double s = 0.0;
          for (std::size_t j = 0; j < y.data.size(); ++j) s += y.data[j] * cot.data[j];
          return s;
        },
        w.data[i]);
    CHECK(rel_err(g.dweights.data[i], fd) < 1e-4);
  }
}

TEST_CASE("softmax vjp agrees with central differences") {
  Rng rng(4);
  DTensor x = rand_dtensor(rng, {1, 3, 2, 2}, -2.0, 2.0);
  DTensor cot = rand_dtensor(rng, {1, 3, 2, 2});
  DTensor y = softmax_channels(x);
  DTensor dx = softmax_channels_vjp(y, cot);
  for (int probe = 0; probe < 6; ++probe) {
    const auto i = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(x.data.size()) - 1));
    const double fd = central_fd(
        [&](double v) {
          DTensor xp = x;
          xp.data[i] = v;
          DTensor yp = softmax_channels(xp);
          double s = 0.0;
          for (std::size_t j = 0; j < yp.data.size(); ++j) s += yp.data[j] * cot.data[j];
          return s;
        },
        x.data[i]);
    CHECK(rel_err(dx.data[i], fd) < 1e-4);
  }
}

TEST_CASE("cross-entropy logits gradient agrees with central differences") {
  Rng rng(5);
  DTensor logits = rand_dtensor(rng, {1, 3, 4, 4}, -2.0, 2.0);
  Mask target(1, 4, 4);
  for (auto& v : target.v) v = static_cast<std::int32_t>(rng.uniform_int(0, 2));
  target.at(0, 1, 1) = 255;  // one ignored pixel
  auto res = cross_entropy(logits, target, 255, /*with_grad=*/true);
  CHECK(res.counted == 15);
  CHECK(res.dlogits.at(0, 0, 1, 1) == 0.0);  // ignored pixels carry no gradient
  for (int probe = 0; probe < 8; ++probe) {
    const auto i = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(logits.data.size()) - 1));
    const double fd = central_fd(
        [&](double v) {
          DTensor lp = logits;
          lp.data[i] = v;
          return cross_entropy(lp, target, 255, false).value;
        },
        logits.data[i]);
    CHECK(rel_err(res.dlogits.data[i], fd) < 1e-4);
  }
}

TEST_CASE("every op backward passes finite-difference checks across five seeds") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    GradCheckReport r = gradcheck_ops(1e-4, seed);
    CAPTURE(seed);
    CHECK(r.all_passed);
    CHECK(r.skipped == 0);
    CHECK(r.cases.size() >= 20);  // one per op backward, several per conv variant
  }
}
