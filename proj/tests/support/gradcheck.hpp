#pragma once

#include <functional>
#include <string>
#include <vector>

#include "csiqa/csm.hpp"
#include "csiqa/numerics/tensor.hpp"

namespace csiqa::testing {

struct GradCheckResult {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::string worst;  // "name[index]" of the largest relative error
  std::size_t checked = 0;
};

// Compares tape gradients of `loss` with central differences
//   (f(x + h) - f(x - h)) / 2h
// for every element of every named tensor. Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradCheckResult gradcheck(const std::function<nn::Tensor()>& loss, const std::vector<csm::NamedTensor>& params,
                          double h = 1e-6, double floor = 1e-6);

}  // namespace csiqa::testing
