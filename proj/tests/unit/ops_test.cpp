#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "csiqa/errors.hpp"
#include "csiqa/numerics/init.hpp"
#include "csiqa/numerics/ops.hpp"
#include "gradcheck.hpp"

using namespace csiqa;
using nn::Shape;
using nn::Tensor;

namespace {

using Op = std::function<Tensor(const std::vector<Tensor>&)>;

// max relative error of d/d(inputs) sum(op(inputs) * R) for a fixed random R
double op_grad_error(const Op& op, std::vector<Tensor> inputs, nn::Rng& rng) {
  std::vector<csm::NamedTensor> named;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    inputs[i].set_requires_grad(true);
    named.emplace_back("in" + std::to_string(i), inputs[i]);
  }
  Tensor proj;
  auto loss = [&] {
    const Tensor y = op(inputs);
    if (!proj.defined()) proj = nn::normal(y.shape(), 1.0, rng);
    return nn::sum(nn::mul(y, proj));
  };
  const auto r = testing::gradcheck(loss, named, 1e-5);
  INFO("worst " << r.worst << " abs " << r.max_abs_err);
  return r.max_rel_err;
}

Tensor away_from_zero(Shape s, nn::Rng& rng) {
  Tensor t = nn::uniform(std::move(s), -1.0, 1.0, rng);
  for (auto& v : t.mutable_data()) v = (v < 0 ? -0.1 : 0.1) + v;
  return t;
}

}  // namespace

TEST_CASE("matmul examples") {
  const Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  const Tensor i = nn::matmul(Tensor::eye(2), m);
  for (std::size_t k = 0; k < 4; ++k) CHECK(i[k] == m[k]);
  CHECK(nn::matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4})).item() == 11.0);
  CHECK_THROWS_AS(nn::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST_CASE("matmul gradient 4x5 by 5x3 within 1e-6") {
  nn::Rng rng(1);
  Tensor a = nn::normal({4, 5}, 1.0, rng).set_requires_grad(true);
  const Tensor b = nn::normal({5, 3}, 1.0, rng);
  const auto r = testing::gradcheck([&] { return nn::sum(nn::matmul(a, b)); }, {{"a", a}}, 1e-5);
  CHECK(r.max_rel_err <= 1e-6);
}

TEST_CASE("softmax examples") {
  const Tensor u = nn::softmax(Tensor::from({3}, {0, 0, 0}), 0);
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const Tensor big = nn::softmax(Tensor::from({2}, {1000, 1000}), 0);
  CHECK(big[0] == 0.5);
  CHECK(big[1] == 0.5);
  const Tensor s = nn::softmax(Tensor::from({3}, {1, 2, 3}), 0);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(std::abs(s[0] - std::exp(1.0) / z) <= 1e-12);
  CHECK(std::abs(s[1] - std::exp(2.0) / z) <= 1e-12);
  CHECK(std::abs(s[2] - std::exp(3.0) / z) <= 1e-12);
}

TEST_CASE("softmax rows sum to one for any finite input") {
  nn::Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = nn::normal({5, 7}, trial * 30.0 + 1.0, rng);
    for (std::size_t axis : {0u, 1u}) {
      const Tensor s = nn::softmax(x, axis);
      const std::size_t outer = axis == 0 ? 7 : 5, inner = axis == 0 ? 5 : 7;
      for (std::size_t o = 0; o < outer; ++o) {
        double total = 0;
        for (std::size_t i = 0; i < inner; ++i) total += axis == 0 ? s.at(i, o) : s.at(o, i);
        CHECK(std::abs(total - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("layer_norm examples") {
  const Tensor one = Tensor::full({3}, 1.0), zero = Tensor::zeros({3});
  const Tensor flat = nn::layer_norm(Tensor::full({3}, 4.2), one, zero);
  for (double v : flat.data()) CHECK(v == 0.0);
  const Tensor two = nn::layer_norm(Tensor::from({2}, {1, 3}), Tensor::full({2}, 1.0), Tensor::zeros({2}), 1e-300);
  CHECK(two[0] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(two[1] == doctest::Approx(1.0).epsilon(1e-15));
  nn::Rng rng(3);
  const Tensor x = nn::normal({1, 64}, 3.0, rng);
  const Tensor y = nn::layer_norm(x, Tensor::full({64}, 1.0), Tensor::zeros({64}));
  double mean = 0, var = 0;
  for (double v : y.data()) mean += v / 64;
  for (double v : y.data()) var += (v - mean) * (v - mean) / 64;
  CHECK(std::abs(mean) <= 1e-12);
  CHECK(std::abs(var - 1.0) <= 1e-6);
}

TEST_CASE("gelu examples (tanh form)") {
  CHECK(nn::gelu(Tensor::scalar(0.0)).item() == 0.0);
  CHECK(nn::gelu(Tensor::scalar(20.0)).item() == doctest::Approx(20.0).epsilon(1e-12));
  const double c = std::sqrt(2.0 / std::numbers::pi);
  const double expected = 0.5 * (1.0 + std::tanh(c * (1.0 + 0.044715)));
  CHECK(std::abs(nn::gelu(Tensor::scalar(1.0)).item() - expected) <= 1e-12);
}

TEST_CASE("matmul with identity is exact") {
  nn::Rng rng(4);
  const Tensor x = nn::normal({6, 4}, 1.0, rng);
  const Tensor y = nn::matmul(Tensor::eye(6), x);
  CHECK(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(y[i] - x[i]) <= 1e-15);
}

TEST_CASE("conv2d matches a direct loop") {
  nn::Rng rng(5);
  const Tensor x = nn::normal({2, 5, 6}, 1.0, rng);
  const Tensor w = nn::normal({3, 2, 3, 3}, 1.0, rng);
  const Tensor b = nn::normal({3}, 1.0, rng);
  const Tensor y = nn::conv2d(x, w, b, 2, 1);
  REQUIRE(y.shape() == Shape{3, 3, 3});
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t oy = 0; oy < 3; ++oy)
      for (std::size_t ox = 0; ox < 3; ++ox) {
        double acc = b[o];
        for (std::size_t c = 0; c < 2; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const long iy = static_cast<long>(oy * 2) + ky - 1, ix = static_cast<long>(ox * 2) + kx - 1;
              if (iy < 0 || ix < 0 || iy >= 5 || ix >= 6) continue;
              acc += w[((o * 2 + c) * 3 + ky) * 3 + kx] * x[(c * 5 + iy) * 6 + ix];
            }
        CHECK(std::abs(y[(o * 3 + oy) * 3 + ox] - acc) <= 1e-12);
      }
}

TEST_CASE("every differentiable op passes finite differences on three shapes") {
  nn::Rng rng(6);
  const std::vector<std::pair<std::size_t, std::size_t>> shapes{{1, 1}, {3, 4}, {5, 2}};
  const double tol = 1e-4;
  for (auto [m, n] : shapes) {
    CAPTURE(m);
    CAPTURE(n);
    auto r = [&](Shape s) { return nn::normal(std::move(s), 1.0, rng); };
    CHECK(op_grad_error([](auto& in) { return nn::matmul(in[0], in[1]); }, {r({m, n}), r({n, m + 1})}, rng) <= tol);
    CHECK(op_grad_error([](auto& in) { return nn::transpose(in[0]); }, {r({m, n})}, rng) <= tol);
    CHECK(op_grad_error([](auto& in) { return nn::add(in[0], in[1]); }, {r({m, n}), r({m, n})}, rng) <= tol);
    CHECK(op_grad_error([](auto& in) { return nn::sub(in[0], in[1]); }, {r({m, n}), r({m, n})}, rng) <= tol);
    CHECK(op_grad_error([](auto& in) { return nn::mul(in[0], in[1]); }, {r({m, n}), r({m, n})}, rng) <= tol);
    CHECK(op_grad_error([](auto& in) { return nn::div(in[0], in[1]); },
                        {r({m, n}), nn::uniform({m, n}, 0.5, 2.0, rng)}, rng) <= tol);
    CHECK(op_grad_error([](auto& in) { return nn::add_bias(in[0], in[1]); }, {r({m, n}), r({n})}, rng) <= tol);
    CHECK(op_grad_error([](auto& in) { return nn::scale(in[0], -1.7); }, {r({m, n})}, rng) <= tol);
    CHECK(op_grad_error([](auto& in) { return nn::add_scalar(in[0], 0.3); }, {r({m, n})}, rng) <= tol);
    CHECK(op_grad_error([](auto& in) { return nn::scale_by(in[0], in[1]); }, {r({m, n}), r({1})}, rng) <= tol);
    CHECK(op_grad_error([](auto& in) { return nn::sum(in[0]); }, {r({m, n})}, rng) <= tol);
    CHECK(op_grad_error([](auto& in) { return nn::mean(in[0]); }, {r({m, n})}, rng) <= tol);
    CHECK(op_grad_error([](auto& in) { return nn::softmax(in[0], 0); }, {r({m, n})}, rng) <= tol);
    CHECK(op_grad_error([](auto& in) { return nn::softmax(in[0], 1); }, {r({m, n})}, rng) <= tol);
    CHECK(op_grad_error([](auto& in) { return nn::layer_norm(in[0], in[1], in[2]); },
                        {r({m, n + 1}), r({n + 1}), r({n + 1})}, rng) <= tol);
    CHECK(op_grad_error([](auto& in) { return nn::gelu(in[0]); }, {r({m, n})}, rng) <= tol);
    CHECK(op_grad_error([](auto& in) { return nn::sigmoid(in[0]); }, {r({m, n})}, rng) <= tol);
    CHECK(op_grad_error([](auto& in) { return nn::relu(in[0]); }, {away_from_zero({m, n}, rng)}, rng) <= tol);
    CHECK(op_grad_error([&](auto& in) { return nn::reshape(in[0], {n, m}); }, {r({m, n})}, rng) <= tol);
    CHECK(op_grad_error([&](auto& in) { return nn::narrow(in[0], 1, n / 2, n - n / 2); }, {r({m, n})}, rng) <= tol);
    CHECK(op_grad_error(
              [](auto& in) {
                const std::vector<Tensor> parts{in[0], in[1]};
                return nn::concat(parts, 0);
              },
              {r({m, n}), r({m + 1, n})}, rng) <= tol);
    CHECK(op_grad_error([&](auto& in) { return nn::gather(in[0], {0, 0, m * n - 1, 0}, {2, 2}); }, {r({m, n})},
                        rng) <= tol);
    CHECK(op_grad_error([&](auto& in) { return nn::conv2d(in[0], in[1], in[2], 1, 1); },
                        {r({2, m + 2, n + 2}), r({3, 2, 3, 3}), r({3})}, rng) <= tol);
    CHECK(op_grad_error([&](auto& in) { return nn::conv2d(in[0], in[1], Tensor(), 2, 0); },
                        {r({1, m + 3, n + 3}), r({2, 1, 2, 2})}, rng) <= tol);
    CHECK(op_grad_error([](auto& in) { return nn::mse(in[0], in[1]); }, {r({m, n}), r({m, n})}, rng) <= tol);
  }
}
