#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csiqa/encoder.hpp"

namespace csiqa::pipeline {

enum class Variant { cl_iqa, cs_iqa };

std::string to_string(Variant v);
Variant parse_variant(const std::string& text);

// Fixed mode pins one ratio for training and evaluation; arbitrary mode draws
// a ratio per batch from the set.
struct RatioMode {
  bool arbitrary = false;
  std::vector<double> ratios{0.1};

  static RatioMode fixed(double ratio) { return {false, {ratio}}; }
  static RatioMode any_of(std::vector<double> ratios) { return {true, std::move(ratios)}; }
  // Ratio used when none is given explicitly: the fixed one, or the largest.
  double default_ratio() const;
};

// The grid used by `--ratio r`.
inline const std::vector<double> kArbitraryRatios{0.1, 0.2, 0.5, 1.0};

struct ModelConfig {
  Variant variant = Variant::cl_iqa;
  std::size_t block_size = 4;
  std::size_t embed_dim = 32;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t ff_hidden = 0;  // 0 means 4 * embed_dim
  std::size_t window = 2;
  double alpha = 0.1;
  bool alpha_learnable = false;
  std::size_t sstm_modules = 1;
  RatioMode ratio_mode;
  std::size_t crop_size = 32;
  std::size_t max_side = 64;  // positional table covers (max_side / B)^2 tokens
  std::uint64_t seed = 0;

  std::size_t hidden() const { return ff_hidden ? ff_hidden : 4 * embed_dim; }
  std::size_t max_tokens() const;
  encoder::VitConfig vit() const;
  encoder::SstmConfig sstm() const;

  // Throws ContractError naming the first inconsistent setting.
  void validate() const;

  // Stable `key=value` lines, one per setting; round-trips exactly.
  std::string serialize() const;
  static ModelConfig parse(const std::string& text);

  static ModelConfig desk_scale();
  // B=16, d=768, 12 blocks, 12 heads, 224 crops (expressible, not trained here).
  static ModelConfig full_scale();
};

std::string format_double(double v);

}  // namespace csiqa::pipeline
