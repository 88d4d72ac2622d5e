#pragma once

#include <cstdint>
#include <vector>

#include "csiqa/numerics/init.hpp"
#include "csiqa/numerics/tensor.hpp"

// Procedural toy IQA data: clean patterns degraded at graded strengths, with
// a MOS that decreases monotonically in the degradation strength.
namespace csiqa::pipeline {

enum class Distortion { noise, blur, mixed };

// Linear signal-to-noise ratios {300, 100, 30, 10, 3, 1, 0.3, 0.1}.
const std::vector<double>& noise_snr_levels();
// Gaussian blur sigmas (pixels), mild to strong.
const std::vector<double>& blur_sigma_levels();

// (log10(snr) + 1) / 3.5 clamped to [0, 1]: 0 at SNR 0.1, ~1 at SNR 300.
double mos_for_snr(double snr);

// Pattern kinds 0..3: oriented grating, soft checkerboard, Gaussian blobs,
// ramp with ripples. Normalized to mean ~0.5, standard deviation 0.2.
nn::Tensor clean_pattern(std::size_t side, std::size_t kind, nn::Rng& rng);

// White Gaussian noise with variance var(image)/snr, then clipped to [0, 1].
// Only columns >= from_column are touched.
nn::Tensor add_white_noise(const nn::Tensor& image, double snr, nn::Rng& rng,
                           std::size_t from_column = 0);

nn::Tensor gaussian_blur(const nn::Tensor& image, double sigma);

struct SyntheticImage {
  nn::Tensor image;  // [1, side, side]
  double mos = 0.0;
  std::size_t level = 0;  // index into the strength table, 0 = mildest
  std::size_t kind = 0;
  Distortion distortion = Distortion::noise;
};

struct SyntheticOptions {
  std::size_t count = 32;
  std::size_t side = 40;
  std::uint64_t seed = 0;
  Distortion distortion = Distortion::noise;
};

// Image i uses strength level i % 8 and a freshly drawn pattern of kind
// (i / 8) % 4. In mixed mode even pattern rounds get noise, odd ones blur;
// blur MOS is 1 - level / 7.
std::vector<SyntheticImage> make_synthetic_dataset(const SyntheticOptions& options);

}  // namespace csiqa::pipeline
