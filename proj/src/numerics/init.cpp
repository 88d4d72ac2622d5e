#include "csiqa/numerics/init.hpp"

#include <cmath>

namespace csiqa::nn {

Tensor normal(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor truncated_normal(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) {
    do {
      x = dist(rng);
    } while (std::abs(x) > 2.0 * stddev);
  }
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor uniform(Shape shape, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform(std::move(shape), -a, a, rng);
}

Tensor orthogonal(std::size_t n, double factor, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> m(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = m.data() + i * n;
    double norm = 0.0;
    // A Gaussian row is linearly dependent on the previous ones with
    // probability zero; redraw if rounding says otherwise.
    do {
      for (std::size_t j = 0; j < n; ++j) row[j] = dist(rng);
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < i; ++k) {
          const double* prev = m.data() + k * n;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += row[j] * prev[j];
          for (std::size_t j = 0; j < n; ++j) row[j] -= dot * prev[j];
        }
      }
      norm = 0.0;
      for (std::size_t j = 0; j < n; ++j) norm += row[j] * row[j];
      norm = std::sqrt(norm);
    } while (norm < 1e-8);
    for (std::size_t j = 0; j < n; ++j) row[j] /= norm;
  }
  for (auto& x : m) x *= factor;
  return Tensor::from({n, n}, std::move(m));
}

}  // namespace csiqa::nn
