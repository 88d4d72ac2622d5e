#include <doctest.h>

#include "csiqa/errors.hpp"
#include "csiqa/numerics/ops.hpp"
#include "csiqa/numerics/tensor.hpp"

using namespace csiqa;
using nn::Tensor;

TEST_CASE("tensor shape invariants") {
  const Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.at(1, 2) == 6);
  CHECK_THROWS_AS(Tensor::from({2, 3}, {1, 2}), ContractError);
  CHECK_THROWS_AS(Tensor::from({2, 0}, {}), ContractError);
  CHECK_THROWS_AS(Tensor::zeros({}), ContractError);
}

TEST_CASE("backward of sum(w*w)") {
  Tensor w = Tensor::from({2}, {1, 2});
  w.set_requires_grad(true);
  nn::GradTape tape;
  tape.backward(nn::sum(nn::mul(w, w)));
  CHECK(w.grad()[0] == 2.0);
  CHECK(w.grad()[1] == 4.0);
}

TEST_CASE("parameter off the tape gets zero gradient") {
  Tensor w = Tensor::from({2}, {1, 2}).set_requires_grad(true);
  Tensor p = Tensor::from({2}, {5, 6}).set_requires_grad(true);
  nn::GradTape tape;
  tape.backward(nn::sum(nn::mul(w, w)));
  CHECK_FALSE(p.has_grad());
  CHECK(p.grad().empty());
}

TEST_CASE("non-scalar loss is a contract error") {
  Tensor w = Tensor::from({2}, {1, 2}).set_requires_grad(true);
  nn::GradTape tape;
  const Tensor y = nn::mul(w, w);
  CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("backward is bitwise deterministic") {
  auto run = [] {
    Tensor a = Tensor::from({2, 3}, {0.1, -0.4, 0.3, 0.9, -1.2, 0.5}).set_requires_grad(true);
    Tensor b = Tensor::from({3, 2}, {0.7, 0.2, -0.3, 0.8, 0.05, -0.6}).set_requires_grad(true);
    nn::GradTape tape;
    tape.backward(nn::sum(nn::softmax(nn::gelu(nn::matmul(a, b)), 1)));
    return std::vector<double>(a.grad().begin(), a.grad().end());
  };
  CHECK(run() == run());
}

TEST_CASE("no tape, no recording") {
  Tensor w = Tensor::from({2}, {1, 2}).set_requires_grad(true);
  const Tensor y = nn::sum(nn::mul(w, w));
  CHECK(y.item() == 5.0);
  CHECK_FALSE(w.has_grad());
  nn::GradTape tape;
  CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("gradients accumulate across tapes until zeroed") {
  Tensor w = Tensor::from({1}, {3}).set_requires_grad(true);
  for (int i = 0; i < 2; ++i) {
    nn::GradTape tape;
    tape.backward(nn::sum(nn::mul(w, w)));
  }
  CHECK(w.grad()[0] == 12.0);
  w.zero_grad();
  CHECK(w.grad()[0] == 0.0);
}
