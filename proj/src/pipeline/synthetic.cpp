#include "csiqa/pipeline/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "csiqa/csm.hpp"
#include "csiqa/errors.hpp"

namespace csiqa::pipeline {

const std::vector<double>& noise_snr_levels() {
  static const std::vector<double> levels{300.0, 100.0, 30.0, 10.0, 3.0, 1.0, 0.3, 0.1};
  return levels;
}

const std::vector<double>& blur_sigma_levels() {
  static const std::vector<double> levels{0.3, 0.6, 0.9, 1.3, 1.8, 2.4, 3.2, 4.2};
  return levels;
}

double mos_for_snr(double snr) { return std::clamp((std::log10(snr) + 1.0) / 3.5, 0.0, 1.0); }

namespace {

void normalize(std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  for (auto& x : v) x = sd > 0 ? 0.5 + 0.2 * (x - mean) / sd : 0.5;
}

double variance(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return var / n;
}

}  // namespace

nn::Tensor clean_pattern(std::size_t side, std::size_t kind, nn::Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  constexpr double pi = std::numbers::pi;
  std::vector<double> v(side * side);
  const double s = static_cast<double>(side);
  switch (kind % 4) {
    case 0: {
      const double theta = u(rng) * pi;
      const double freq = 2.0 + 4.0 * u(rng);
      const double phase = u(rng) * 2.0 * pi;
      for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
          const double t = (std::cos(theta) * x + std::sin(theta) * y) / s;
          v[y * side + x] = std::sin(2.0 * pi * freq * t + phase);
        }
      break;
    }
    case 1: {
      const double cell = 4.0 + 8.0 * u(rng);
      const double ox = u(rng) * cell, oy = u(rng) * cell;
      for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x)
          v[y * side + x] = std::tanh(3.0 * std::sin(pi * (x + ox) / cell)) *
                            std::tanh(3.0 * std::sin(pi * (y + oy) / cell));
      break;
    }
    case 2: {
      const int blobs = 3 + static_cast<int>(u(rng) * 4.0);
      for (int b = 0; b < blobs; ++b) {
        const double cx = u(rng) * s, cy = u(rng) * s;
        const double r = s * (0.08 + 0.2 * u(rng));
        const double sign = u(rng) < 0.5 ? -1.0 : 1.0;
        for (std::size_t y = 0; y < side; ++y)
          for (std::size_t x = 0; x < side; ++x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            v[y * side + x] += sign * std::exp(-d2 / (2.0 * r * r));
          }
      }
      break;
    }
    default: {
      const double gx = u(rng) - 0.5, gy = u(rng) - 0.5;
      const double freq = 1.0 + 3.0 * u(rng);
      for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x)
          v[y * side + x] = gx * x / s + gy * y / s +
                            0.3 * std::sin(2.0 * pi * freq * (x + y) / (2.0 * s));
      break;
    }
  }
  normalize(v);
  const double offset = (u(rng) - 0.5) * 0.2;
  for (auto& x : v) x = std::clamp(x + offset, 0.0, 1.0);
  return nn::Tensor::from({1, side, side}, std::move(v));
}

nn::Tensor add_white_noise(const nn::Tensor& image, double snr, nn::Rng& rng,
                           std::size_t from_column) {
  if (!(snr > 0.0)) throw ContractError("SNR must be positive");
  if (image.rank() != 3) throw ContractError("expected a [C,H,W] image");
  const double sd = std::sqrt(variance(image.data()) / snr);
  std::normal_distribution<double> noise(0.0, sd);
  const std::size_t w = image.dim(2);
  std::vector<double> v(image.data().begin(), image.data().end());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i % w < from_column) continue;
    v[i] = std::clamp(v[i] + noise(rng), 0.0, 1.0);
  }
  return nn::Tensor::from(image.shape(), std::move(v));
}

nn::Tensor gaussian_blur(const nn::Tensor& image, double sigma) {
  if (image.rank() != 3) throw ContractError("expected a [C,H,W] image");
  if (!(sigma > 0.0)) return image.detach();
  const auto radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (long k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += kernel[k + radius];
  }
  for (auto& k : kernel) k /= total;
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const auto src = image.data();
  std::vector<double> tmp(src.size()), out(src.size());
  auto mirror = [](long i, std::size_t n) {
    const long period = n > 1 ? 2 * static_cast<long>(n - 1) : 1;
    i = ((i % period) + period) % period;
    return static_cast<std::size_t>(csm::mirror_index(static_cast<std::size_t>(i), n));
  };
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (long k = -radius; k <= radius; ++k)
          acc += kernel[k + radius] * src[(ch * h + y) * w + mirror(static_cast<long>(x) + k, w)];
        tmp[(ch * h + y) * w + x] = acc;
      }
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (long k = -radius; k <= radius; ++k)
          acc += kernel[k + radius] * tmp[(ch * h + mirror(static_cast<long>(y) + k, h)) * w + x];
        out[(ch * h + y) * w + x] = acc;
      }
  return nn::Tensor::from(image.shape(), std::move(out));
}

std::vector<SyntheticImage> make_synthetic_dataset(const SyntheticOptions& options) {
  if (options.count == 0 || options.side == 0) throw ContractError("synthetic dataset needs count and side > 0");
  nn::Rng rng(options.seed);
  const std::size_t levels = noise_snr_levels().size();
  std::vector<SyntheticImage> out;
  out.reserve(options.count);
  for (std::size_t i = 0; i < options.count; ++i) {
    SyntheticImage s;
    s.level = i % levels;
    s.kind = (i / levels) % 4;
    const bool use_blur = options.distortion == Distortion::blur ||
                          (options.distortion == Distortion::mixed && (i / levels) % 2 == 1);
    const nn::Tensor clean = clean_pattern(options.side, s.kind, rng);
    if (use_blur) {
      s.distortion = Distortion::blur;
      s.image = gaussian_blur(clean, blur_sigma_levels()[s.level]);
      s.mos = 1.0 - static_cast<double>(s.level) / static_cast<double>(levels - 1);
    } else {
      s.distortion = Distortion::noise;
      const double snr = noise_snr_levels()[s.level];
      s.image = add_white_noise(clean, snr, rng);
      s.mos = mos_for_snr(snr);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace csiqa::pipeline
