#pragma once

#include <random>

#include "csiqa/numerics/tensor.hpp"

namespace csiqa::nn {

using Rng = std::mt19937_64;

Tensor normal(Shape shape, double stddev, Rng& rng);
// Normal samples redrawn until they fall within two standard deviations.
Tensor truncated_normal(Shape shape, double stddev, Rng& rng);
Tensor uniform(Shape shape, double lo, double hi, Rng& rng);
// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);
// n x n matrix with orthonormal rows (Gram-Schmidt on a Gaussian draw), times factor.
Tensor orthogonal(std::size_t n, double factor, Rng& rng);

}  // namespace csiqa::nn
