#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "csiqa/head.hpp"
#include "csiqa/numerics/ops.hpp"

using namespace csiqa;
using nn::Tensor;

TEST_CASE("uniform weights give the mean score") {
  const Tensor s = Tensor::from({4, 1}, {1.0, -2.0, 0.5, 7.25});
  const Tensor w = Tensor::full({4, 1}, 0.3);
  CHECK(std::abs(head::weighted_pool(s, w).item() - 6.75 / 4.0) <= 1e-12);
}

TEST_CASE("single token returns its score") {
  const Tensor s = Tensor::from({1, 1}, {3.0});
  const Tensor w = Tensor::from({1, 1}, {0.5});
  CHECK(std::abs(head::weighted_pool(s, w).item() - 3.0) <= 1e-8 * 3.0);
}

TEST_CASE("hand-evaluated weighted average") {
  const Tensor s = Tensor::from({2, 1}, {1.0, 3.0});
  const Tensor w = Tensor::from({2, 1}, {0.25, 0.75});
  CHECK(head::weighted_pool(s, w, 0.0).item() == 2.5);
}

TEST_CASE("pooled score is a convex combination") {
  nn::Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 9;
    const Tensor s = nn::normal({n, 1}, 2.0, rng);
    const Tensor w = nn::uniform({n, 1}, 1e-3, 1.0, rng);
    const double v = head::weighted_pool(s, w).item();
    const auto [lo, hi] = std::minmax_element(s.data().begin(), s.data().end());
    CHECK(v >= *lo - 1e-6);
    CHECK(v <= *hi + 1e-6);
    // scale equivariance at eps = 0
    CHECK(std::abs(head::weighted_pool(s, nn::scale(w, 3.7), 0.0).item() - head::weighted_pool(s, w, 0.0).item()) <=
          1e-12);
  }
}

TEST_CASE("weight branch is strictly inside (0, 1); score branch is linear at the end") {
  nn::Rng rng(2);
  const auto p = head::BranchParams::create(8, rng);
  CHECK(p.score.fc1.weight.shape() == nn::Shape{8, 4});
  CHECK(p.weight.fc2.weight.shape() == nn::Shape{4, 1});
  const Tensor f = nn::normal({6, 8}, 3.0, rng);
  const auto r = head::score(f, p);
  for (double w : r.token_weights.data()) {
    CHECK(w > 0.0);
    CHECK(w < 1.0);
  }
  const Tensor manual = p.score.fc2(nn::gelu(p.score.fc1(f)));
  for (std::size_t i = 0; i < 6; ++i) CHECK(r.token_scores[i] == manual[i]);
}

TEST_CASE("weight map normalization") {
  const auto grid12 = csm::make_grid(4, 8, 4);
  const std::vector<double> w{0.1, 0.9};
  const Tensor m = head::weight_map(w, grid12);
  CHECK(m.shape() == nn::Shape{1, 1, 2});
  CHECK(m[0] == 0.0);
  CHECK(m[1] == 1.0);
  const std::vector<double> flat{0.4, 0.4, 0.4, 0.4};
  const Tensor constant = head::weight_map(flat, csm::make_grid(8, 8, 4));
  for (double v : constant.data()) CHECK(v == 0.5);
  nn::Rng rng(3);
  const Tensor r = nn::uniform({12}, 0.0, 1.0, rng);
  const Tensor map = head::weight_map(r.data(), csm::make_grid(12, 16, 4));
  for (double v : map.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}
