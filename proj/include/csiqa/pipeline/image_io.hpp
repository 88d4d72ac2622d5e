#pragma once

#include <filesystem>

#include "csiqa/numerics/tensor.hpp"

// Binary PGM (P5) / PPM (P6) with maxval 255. Pixels map to [0, 1].
namespace csiqa::pipeline {

// Returns [1,H,W] for P5 and [3,H,W] for P6. Throws InputError.
nn::Tensor read_pnm(const std::filesystem::path& path);
// Reads and converts to single-channel luminance.
nn::Tensor read_luminance(const std::filesystem::path& path);

// Values are clamped to [0, 1] and rounded to 8 bits.
void write_pgm(const std::filesystem::path& path, const nn::Tensor& image);  // [1,H,W]
void write_ppm(const std::filesystem::path& path, const nn::Tensor& image);  // [3,H,W]

}  // namespace csiqa::pipeline
