#include "csiqa/numerics/adam.hpp"

#include <cmath>
#include <string>

#include "csiqa/errors.hpp"

namespace csiqa::nn {

void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
               AdamState& state, const AdamOptions& options) {
  if (grads.size() != params.size()) {
    throw ContractError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                        std::to_string(params.size()) + " parameters");
  }
  if (state.first_moment.empty() && state.second_moment.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.numel(), 0.0);
      state.second_moment.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ContractError("adam_step: optimizer state tracks " +
                        std::to_string(state.first_moment.size()) + " parameters, got " +
                        std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto n = params[i].numel();
    if (state.first_moment[i].size() != n || state.second_moment[i].size() != n ||
        (!grads[i].empty() && grads[i].size() != n)) {
      throw ContractError("adam_step: buffer size mismatch for parameter " + std::to_string(i) +
                          " of shape " + shape_str(params[i].shape()));
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(options.beta1, t);
  const double bc2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].mutable_data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double grad = (g.empty() ? 0.0 : g[j]) + options.weight_decay * theta[j];
      m[j] = options.beta1 * m[j] + (1.0 - options.beta1) * grad;
      v[j] = options.beta2 * v[j] + (1.0 - options.beta2) * grad * grad;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      theta[j] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
}

void adam_step(std::span<Tensor> params, AdamState& state, const AdamOptions& options) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    const auto g = p.grad();
    grads.emplace_back(g.begin(), g.end());
  }
  adam_step(params, grads, state, options);
}

}  // namespace csiqa::nn
