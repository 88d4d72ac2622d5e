#pragma once

#include <span>
#include <string>
#include <vector>

#include "csiqa/csm.hpp"
#include "csiqa/encoder.hpp"
#include "csiqa/numerics/tensor.hpp"

// Dual-branch scoring: per-token quality scores s_i and positive weights w_i
// pooled into one score as sum(s_i w_i) / max(sum(w_i), eps).
namespace csiqa::head {

using nn::Tensor;

inline constexpr double kPoolEps = 1e-8;

// d -> d/2 -> 1 with GELU in between; the scoring branch ends linear, the
// weighting branch in a sigmoid.
struct Branch {
  encoder::Linear fc1;
  encoder::Linear fc2;

  static Branch create(std::size_t dim, nn::Rng& rng);
};

struct BranchParams {
  Branch score;
  Branch weight;

  static BranchParams create(std::size_t dim, nn::Rng& rng);
  void append_named(const std::string& prefix, std::vector<csm::NamedTensor>& out) const;
};

struct ScoreResult {
  Tensor score;          // [1]
  Tensor token_scores;   // [L x 1]
  Tensor token_weights;  // [L x 1], each in (0, 1)
};

Tensor score_branch(const Tensor& features, const Branch& branch);
Tensor weight_branch(const Tensor& features, const Branch& branch);

// Weighted average of per-token scores; both inputs [L x 1] (or any equal shape).
// eps only bounds the denominator away from zero, so the result stays an exact
// convex combination whenever sum(w) >= eps.
Tensor weighted_pool(const Tensor& scores, const Tensor& weights, double eps = kPoolEps);

ScoreResult score(const Tensor& features, const BranchParams& params, double eps = kPoolEps);

// Per-token weights laid out on the block grid, min-max normalized to [0, 1].
// A constant map becomes 0.5 everywhere. Returns [1 x blocks_h x blocks_w].
Tensor weight_map(std::span<const double> weights, const csm::BlockGrid& grid);

}  // namespace csiqa::head
