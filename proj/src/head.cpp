#include "csiqa/head.hpp"

#include <algorithm>
#include <string>

#include "csiqa/errors.hpp"
#include "csiqa/numerics/ops.hpp"

namespace csiqa::head {

Branch Branch::create(std::size_t dim, nn::Rng& rng) {
  const std::size_t hidden = std::max<std::size_t>(dim / 2, 1);
  return {encoder::Linear::create(dim, hidden, rng), encoder::Linear::create(hidden, 1, rng)};
}

BranchParams BranchParams::create(std::size_t dim, nn::Rng& rng) {
  BranchParams p;
  p.score = Branch::create(dim, rng);
  p.weight = Branch::create(dim, rng);
  return p;
}

void BranchParams::append_named(const std::string& prefix, std::vector<csm::NamedTensor>& out) const {
  out.emplace_back(prefix + ".score.fc1.weight", score.fc1.weight);
  out.emplace_back(prefix + ".score.fc1.bias", score.fc1.bias);
  out.emplace_back(prefix + ".score.fc2.weight", score.fc2.weight);
  out.emplace_back(prefix + ".score.fc2.bias", score.fc2.bias);
  out.emplace_back(prefix + ".weight.fc1.weight", weight.fc1.weight);
  out.emplace_back(prefix + ".weight.fc1.bias", weight.fc1.bias);
  out.emplace_back(prefix + ".weight.fc2.weight", weight.fc2.weight);
  out.emplace_back(prefix + ".weight.fc2.bias", weight.fc2.bias);
}

Tensor score_branch(const Tensor& features, const Branch& branch) {
  return branch.fc2(nn::gelu(branch.fc1(features)));
}

Tensor weight_branch(const Tensor& features, const Branch& branch) {
  return nn::sigmoid(branch.fc2(nn::gelu(branch.fc1(features))));
}

Tensor weighted_pool(const Tensor& scores, const Tensor& weights, double eps) {
  if (scores.numel() == 0) throw ContractError("weighted_pool: no tokens");
  const Tensor num = nn::sum(nn::mul(scores, weights));
  const Tensor total = nn::sum(weights);
  const Tensor den = total.item() >= eps ? total : Tensor::scalar(eps);
  return nn::div(num, den);
}

ScoreResult score(const Tensor& features, const BranchParams& params, double eps) {
  if (features.rank() != 2 || features.dim(0) == 0) {
    throw DimensionError("score expects [L x d] features, got " + nn::shape_str(features.shape()));
  }
  ScoreResult r;
  r.token_scores = score_branch(features, params.score);
  r.token_weights = weight_branch(features, params.weight);
  r.score = weighted_pool(r.token_scores, r.token_weights, eps);
  return r;
}

Tensor weight_map(std::span<const double> weights, const csm::BlockGrid& grid) {
  if (weights.size() != grid.count()) {
    throw DimensionError("weight_map: " + std::to_string(weights.size()) + " weights for a grid of " +
                         std::to_string(grid.count()));
  }
  const auto [lo, hi] = std::minmax_element(weights.begin(), weights.end());
  std::vector<double> out(weights.size(), 0.5);
  if (*hi > *lo) {
    const double range = *hi - *lo;
    for (std::size_t i = 0; i < weights.size(); ++i) out[i] = (weights[i] - *lo) / range;
  }
  return Tensor::from({1, grid.blocks_h, grid.blocks_w}, std::move(out));
}

}  // namespace csiqa::head
