#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "vnas/ops.hpp"

using namespace vnas;
using testutil::check_grads;
using testutil::random_tensor;
using testutil::rel_err;

TEST_CASE("elementwise forward values") {
  auto a = Tensor::from_data({4}, {1.0, -2.0, 0.5, 0.0});
  auto b = Tensor::from_data({4}, {3.0, 1.0, -1.0, 2.0});
  auto s = ops::add(a, b);
  CHECK(s.data()[0] == 4.0);
  CHECK(s.data()[1] == -1.0);
  auto d = ops::sub(a, b);
  CHECK(d.data()[2] == 1.5);
  auto m = ops::mul(a, b);
  CHECK(m.data()[1] == -2.0);
  auto r = ops::relu(a);
  CHECK(r.data()[0] == 1.0);
  CHECK(r.data()[1] == 0.0);
  auto g = ops::sigmoid(Tensor::from_data({3}, {0.0, 1000.0, -1000.0}));
  CHECK(g.data()[0] == doctest::Approx(0.5));
  CHECK(g.data()[1] == doctest::Approx(1.0));
  CHECK(g.data()[2] == doctest::Approx(0.0));
  CHECK(all_finite(g.data(), 3));
}

TEST_CASE("finite differences: elementwise, reductions, reshape, select") {
  Rng rng(101);
  auto a = random_tensor({3, 4}, rng, 1.0, true);
  auto b = random_tensor({3, 4}, rng, 1.0, true);
  auto probe = random_tensor({3, 4}, rng);
  CHECK(check_grads(
            [&]() {
              auto v = ops::mul(ops::add(a, b), ops::sub(a, b));
              return ops::mean_all(ops::mul(v, probe));
            },
            {a, b}) < 1e-7);

  auto c = random_tensor({6}, rng, 1.0, true);
  CHECK(check_grads(
            [&]() {
              auto v = ops::relu(c);
              return ops::sum_all(ops::mul(v, v));
            },
            {c}) < 1e-6);

  CHECK(check_grads(
            [&]() {
              auto v = ops::sigmoid(ops::reshape(c, {2, 3}));
              return ops::mean_all(ops::mul(v, v));
            },
            {c}) < 1e-7);

  auto w = random_tensor({5}, rng, 2.0, true);
  CHECK(check_grads(
            [&]() {
              return ops::mul(ops::select(w, 2), ops::select(w, 4));
            },
            {w}) < 1e-7);
}

TEST_CASE("softmax: stabilized, rows sum to one, gradient correct") {
  auto big = Tensor::from_data({2, 3},
                               {1000.0, 999.0, 998.0, -1000.0, -999.0, 0.0});
  auto y = ops::softmax_lastdim(big);
  CHECK(all_finite(y.data(), y.numel()));
  for (int r = 0; r < 2; ++r) {
    double s = 0.0;
    for (int j = 0; j < 3; ++j) s += y.data()[r * 3 + j];
    CHECK(std::abs(s - 1.0) < 1e-12);
  }

  Rng rng(7);
  auto x = random_tensor({2, 5}, rng, 2.0, true);
  auto probe = random_tensor({2, 5}, rng);
  CHECK(check_grads(
            [&]() {
              return ops::sum_all(
                  ops::mul(ops::softmax_lastdim(x), probe));
            },
            {x}) < 1e-7);
}

TEST_CASE("linear matches naive and its gradients check out") {
  Rng rng(13);
  const std::int64_t bsz = 4, in = 7, out = 3;
  auto x = random_tensor({bsz, in}, rng, 1.0, true);
  auto w = random_tensor({out, in}, rng, 1.0, true);
  auto b = random_tensor({out}, rng, 1.0, true);
  auto y = ops::linear(x, w, b);
  REQUIRE(y.shape() == Shape{bsz, out});
  for (std::int64_t r = 0; r < bsz; ++r)
    for (std::int64_t j = 0; j < out; ++j) {
      double acc = b.data()[j];
      for (std::int64_t l = 0; l < in; ++l)
        acc += x.data()[r * in + l] * w.data()[j * in + l];
      CHECK(rel_err(y.data()[r * out + j], acc) < 1e-13);
    }
  auto probe = random_tensor({bsz, out}, rng);
  CHECK(check_grads(
            [&]() {
              return ops::sum_all(ops::mul(ops::linear(x, w, b), probe));
            },
            {x, w, b}) < 1e-7);

  CHECK_THROWS_AS(ops::linear(x, random_tensor({out, in + 1}, rng), b),
                  ShapeError);
  CHECK_THROWS_AS(ops::linear(x, w, random_tensor({out + 2}, rng)),
                  ShapeError);
}

TEST_CASE("conv2d matches the direct convolution oracle") {
  Rng rng(17);
  struct Case {
    int n, h, w, ci, co, k, stride, dilation;
  };
  for (const auto& cs : {Case{2, 8, 8, 3, 4, 3, 1, 1},
                         Case{1, 8, 8, 2, 3, 3, 2, 1},
                         Case{2, 9, 7, 3, 2, 5, 2, 1},
                         Case{1, 16, 16, 3, 2, 3, 4, 2},
                         Case{1, 32, 32, 3, 2, 3, 8, 4}}) {
    auto x = random_tensor({cs.n, cs.h, cs.w, cs.ci}, rng);
    auto w = random_tensor({cs.co, cs.k, cs.k, cs.ci}, rng);
    auto b = random_tensor({cs.co}, rng);
    auto y = ops::conv2d(x, w, b, cs.stride, cs.dilation);
    auto ref = testutil::naive_conv2d(
        std::vector<double>(x.data(), x.data() + x.numel()), cs.n, cs.h, cs.w,
        cs.ci, std::vector<double>(w.data(), w.data() + w.numel()), cs.co,
        cs.k, cs.stride, cs.dilation,
        std::vector<double>(b.data(), b.data() + b.numel()));
    REQUIRE(static_cast<std::size_t>(y.numel()) == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i)
      CHECK(rel_err(y.data()[i], ref[i]) < 1e-12);
  }
}

TEST_CASE("conv2d gradients, including stride and dilation") {
  Rng rng(19);
  auto x = random_tensor({2, 6, 6, 2}, rng, 1.0, true);
  auto w = random_tensor({3, 3, 3, 2}, rng, 1.0, true);
  auto b = random_tensor({3}, rng, 1.0, true);
  auto probe = random_tensor({2, 3, 3, 3}, rng);
  CHECK(check_grads(
            [&]() {
              return ops::sum_all(
                  ops::mul(ops::conv2d(x, w, b, 2, 1), probe));
            },
            {x, w, b}) < 1e-6);

  auto probe2 = random_tensor({2, 6, 6, 3}, rng);
  CHECK(check_grads(
            [&]() {
              return ops::sum_all(
                  ops::mul(ops::conv2d(x, w, b, 1, 2), probe2));
            },
            {x, w, b}) < 1e-6);

  CHECK_THROWS_AS(ops::conv2d(x, random_tensor({3, 3, 3, 5}, rng), b, 1, 1),
                  ShapeError);
  CHECK_THROWS_AS(ops::conv2d(random_tensor({6, 6, 2}, rng), w, b, 1, 1),
                  ShapeError);
}

TEST_CASE("gap equals the spatial mean and backpropagates evenly") {
  Rng rng(23);
  auto x = random_tensor({2, 3, 3, 4}, rng, 1.0, true);
  auto y = ops::gap(x);
  REQUIRE(y.shape() == Shape{2, 4});
  for (int e = 0; e < 2; ++e)
    for (int c = 0; c < 4; ++c) {
      double acc = 0.0;
      for (int p = 0; p < 9; ++p) acc += x.data()[e * 36 + p * 4 + c];
      CHECK(rel_err(y.data()[e * 4 + c], acc / 9.0) < 1e-13);
    }
  auto probe = random_tensor({2, 4}, rng);
  CHECK(check_grads(
            [&]() { return ops::sum_all(ops::mul(ops::gap(x), probe)); },
            {x}) < 1e-7);
}

TEST_CASE("concat and broadcast_to: values and gradients") {
  Rng rng(29);
  auto a = random_tensor({2, 2, 2, 3}, rng, 1.0, true);
  auto b = random_tensor({2, 2, 2, 2}, rng, 1.0, true);
  auto y = ops::concat_lastdim(a, b);
  REQUIRE(y.shape() == Shape{2, 2, 2, 5});
  CHECK(y.data()[3] == b.data()[0]);
  CHECK(y.data()[0] == a.data()[0]);
  auto probe = random_tensor({2, 2, 2, 5}, rng);
  CHECK(check_grads(
            [&]() {
              return ops::sum_all(ops::mul(ops::concat_lastdim(a, b), probe));
            },
            {a, b}) < 1e-7);
  CHECK_THROWS_AS(ops::concat_lastdim(a, random_tensor({2, 2, 3, 2}, rng)),
                  ShapeError);

  auto v = random_tensor({2, 1, 1, 3}, rng, 1.0, true);
  auto probe2 = random_tensor({2, 4, 4, 3}, rng);
  CHECK(check_grads(
            [&]() {
              return ops::sum_all(
                  ops::mul(ops::broadcast_to(v, {2, 4, 4, 3}), probe2));
            },
            {v}) < 1e-7);
  CHECK_THROWS_AS(ops::broadcast_to(v, {2, 4, 4, 5}), ShapeError);
}

TEST_CASE("channel_mix gradients") {
  Rng rng(31);
  auto x = random_tensor({2, 3, 3, 4}, rng, 1.0, true);
  auto f = random_tensor({2, 4, 3}, rng, 1.0, true);
  auto probe = random_tensor({2, 3, 3, 3}, rng);
  CHECK(check_grads(
            [&]() {
              return ops::sum_all(ops::mul(ops::channel_mix(x, f), probe));
            },
            {x, f}) < 1e-6);
  CHECK_THROWS_AS(ops::channel_mix(x, random_tensor({2, 5, 3}, rng)),
                  ShapeError);
}

TEST_CASE("non-broadcastable elementwise shapes raise") {
  Rng rng(37);
  auto a = random_tensor({2, 3}, rng);
  auto b = random_tensor({3, 2}, rng);
  CHECK_THROWS_AS(ops::add(a, b), ShapeError);
  CHECK_THROWS_AS(ops::mul(a, b), ShapeError);
}
