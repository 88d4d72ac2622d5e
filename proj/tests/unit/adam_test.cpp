#include <doctest.h>

#include <cmath>

#include "csiqa/errors.hpp"
#include "csiqa/numerics/adam.hpp"
#include "csiqa/numerics/ops.hpp"

using namespace csiqa;
using nn::Tensor;

TEST_CASE("zero gradient without decay leaves parameters unchanged") {
  std::vector<Tensor> p{Tensor::from({3}, {1, -2, 3})};
  const std::vector<std::vector<double>> g{{0, 0, 0}};
  nn::AdamState s;
  for (int i = 0; i < 5; ++i) nn::adam_step(p, g, s, {.lr = 0.1});
  CHECK(p[0][0] == 1.0);
  CHECK(p[0][1] == -2.0);
  CHECK(p[0][2] == 3.0);
}

TEST_CASE("one scalar step matches the hand-computed update") {
  std::vector<Tensor> p{Tensor::scalar(1.0)};
  const std::vector<std::vector<double>> g{{0.5}};
  nn::AdamState s;
  nn::adam_step(p, g, s, {.lr = 0.1});
  // m = 0.1 * 0.5, v = 0.001 * 0.25; bias-corrected: 0.5 and 0.25
  const double expected = 1.0 - 0.1 * 0.5 / (std::sqrt(0.25) + 1e-8);
  CHECK(std::abs(p[0].item() - expected) <= 1e-12);
  // second step with the same gradient: m = 0.095, v = 0.0004997500
  nn::adam_step(p, g, s, {.lr = 0.1});
  const double m = 0.9 * 0.05 + 0.1 * 0.5, v = 0.999 * 0.00025 + 0.001 * 0.25;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.998001);
  CHECK(std::abs(p[0].item() - (expected - 0.1 * mhat / (std::sqrt(vhat) + 1e-8))) <= 1e-12);
}

TEST_CASE("coupled weight decay adds wd * p to the gradient") {
  std::vector<Tensor> a{Tensor::scalar(2.0)}, b{Tensor::scalar(2.0)};
  nn::AdamState sa, sb;
  nn::adam_step(a, std::vector<std::vector<double>>{{0.3}}, sa, {.lr = 0.01, .weight_decay = 0.1});
  nn::adam_step(b, std::vector<std::vector<double>>{{0.3 + 0.1 * 2.0}}, sb, {.lr = 0.01});
  CHECK(a[0].item() == b[0].item());
}

TEST_CASE("identical parameters with identical grads follow identical trajectories") {
  std::vector<Tensor> p{Tensor::from({2}, {0.7, 0.7}), Tensor::from({2}, {0.7, 0.7})};
  nn::AdamState s;
  for (int i = 0; i < 10; ++i) {
    const double g = std::sin(i + 1.0);
    nn::adam_step(p, std::vector<std::vector<double>>{{g, g}, {g, g}}, s, {.lr = 0.05});
  }
  CHECK(p[0][0] == p[1][0]);
  CHECK(p[0][1] == p[1][1]);
  CHECK(p[0][0] == p[0][1]);
}

TEST_CASE("moment buffers must match parameter sizes") {
  std::vector<Tensor> p{Tensor::from({2}, {1, 2})};
  nn::AdamState s;
  nn::adam_step(p, std::vector<std::vector<double>>{{1, 1}}, s, {});
  std::vector<Tensor> q{Tensor::from({3}, {1, 2, 3})};
  CHECK_THROWS_AS(nn::adam_step(q, std::vector<std::vector<double>>{{1, 1, 1}}, s, {}), ContractError);
  CHECK_THROWS_AS(nn::adam_step(p, std::vector<std::vector<double>>{{1}}, s, {}), ContractError);
}

TEST_CASE("tape-based overload uses accumulated gradients, missing ones as zero") {
  Tensor w = Tensor::scalar(1.0).set_requires_grad(true);
  Tensor unused = Tensor::scalar(5.0).set_requires_grad(true);
  {
    nn::GradTape tape;
    tape.backward(nn::mul(w, w));
  }
  std::vector<Tensor> p{w, unused};
  nn::AdamState s;
  nn::adam_step(p, s, {.lr = 0.1});
  CHECK(std::abs(w.item() - (1.0 - 0.1 * 2.0 / (2.0 + 1e-8))) <= 1e-12);
  CHECK(unused.item() == 5.0);
}
