#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "csiqa/numerics/tensor.hpp"

namespace csiqa::nn {

struct AdamOptions {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Coupled L2: added to the gradient before the moment updates (classic
  // Adam). Decoupled decay (AdamW) would instead shrink the parameter
  // directly by lr * weight_decay.
  double weight_decay = 0.0;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

// One Adam update of every parameter using its accumulated gradient (missing
// gradients count as zero). Moment buffers are allocated on the first call
// and must match parameter sizes afterwards.
void adam_step(std::span<Tensor> params, AdamState& state, const AdamOptions& options);

// Same update with gradients supplied explicitly.
void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
               AdamState& state, const AdamOptions& options);

}  // namespace csiqa::nn
