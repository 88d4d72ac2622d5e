#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "csiqa/numerics/adam.hpp"
#include "csiqa/numerics/init.hpp"
#include "csiqa/numerics/tensor.hpp"

// Compressed sampling: block-based measurement of single-channel images with
// a learnable square matrix whose leading rows form the sampling operator for
// a given ratio, plus a CSNet-style reconstructor used to pretrain it.
namespace csiqa::csm {

using nn::Tensor;

using NamedTensor = std::pair<std::string, Tensor>;

// Number of measurement rows kept at sampling ratio `ratio` in (0, 1]:
// ceil(ratio * B^2), with a 1e-9 allowance so products such as 0.7 * 100
// that land just above an integer in floating point round to that integer.
std::size_t measurement_rows(double ratio, std::size_t block_size);

struct BlockGrid {
  std::size_t block_size = 0;
  std::size_t height = 0;  // original image extent
  std::size_t width = 0;
  std::size_t blocks_h = 0;
  std::size_t blocks_w = 0;

  std::size_t count() const { return blocks_h * blocks_w; }
  std::size_t padded_height() const { return blocks_h * block_size; }
  std::size_t padded_width() const { return blocks_w * block_size; }
};

BlockGrid make_grid(std::size_t height, std::size_t width, std::size_t block_size);

// Reflect index (no edge repetition) for positions past the end of an axis of
// length n; repeats with period 2(n-1) so any amount of padding works.
std::size_t mirror_index(std::size_t i, std::size_t n);

// [C,H,W] -> [C,out_h,out_w]; extra rows/columns mirror the image.
Tensor pad_reflect(const Tensor& image, std::size_t out_h, std::size_t out_w);

// [3,H,W] -> [1,H,W] with BT.601 weights; [1,H,W] passes through.
Tensor to_luminance(const Tensor& image);

struct Blocks {
  Tensor x;  // [L x B^2], row-major block order, row-major pixels inside a block
  BlockGrid grid;
};

// Reflect-pads [1,H,W] to whole blocks and flattens each block.
Blocks split_blocks(const Tensor& image, std::size_t block_size);
// Inverse of split_blocks: [L x B^2] -> padded [1,Hp,Wp].
Tensor merge_blocks(const Tensor& blocks, const BlockGrid& grid);

struct SamplingMatrix {
  Tensor phi;  // [B^2 x B^2]
  std::size_t block_size = 0;

  // Orthonormal Gaussian rows scaled by 1/B.
  static SamplingMatrix orthogonal(std::size_t block_size, nn::Rng& rng);
  // i.i.d. N(0, 1/B^4): rows have the same expected norm as orthogonal().
  static SamplingMatrix gaussian(std::size_t block_size, nn::Rng& rng);
  static SamplingMatrix identity(std::size_t block_size);
};

// First measurement_rows(ratio, B) rows of phi.
Tensor truncate(const SamplingMatrix& sampling, double ratio);

struct MeasurementSet {
  Tensor y;  // [L x rows]
  BlockGrid grid;
  double ratio = 1.0;
  std::size_t rows = 0;

  std::size_t scalar_count() const { return grid.count() * rows; }
};

// y_i = Phi_ratio x_i for every block, as one matrix product.
MeasurementSet sample(const SamplingMatrix& sampling, const Tensor& image, double ratio);
// Same measurements as a stride-B convolution whose kernels are the rows of Phi_ratio.
MeasurementSet sample_conv(const SamplingMatrix& sampling, const Tensor& image, double ratio);

struct CsnetReconstructor {
  std::size_t block_size = 0;
  std::size_t rows = 0;
  std::size_t width = 16;
  Tensor init_weight;                 // [rows x B^2]
  Tensor init_bias;                   // [B^2]
  std::vector<Tensor> refine_weight;  // 3 x 3x3 convolutions: 1->w, w->w, w->1
  std::vector<Tensor> refine_bias;

  static CsnetReconstructor create(std::size_t block_size, std::size_t rows, std::size_t width,
                                   nn::Rng& rng);
  std::vector<NamedTensor> named_parameters() const;
};

// Linear per-block initial reconstruction, then a residual ReLU conv stack.
Tensor csnet_reconstruct(const CsnetReconstructor& rec, const MeasurementSet& m);

struct PretrainOptions {
  std::size_t epochs = 200;
  double lr = 1e-2;
  std::uint64_t seed = 0;
  std::size_t refine_width = 16;
  bool train_sampling = true;  // false keeps phi frozen
};

struct PretrainResult {
  SamplingMatrix sampling;
  CsnetReconstructor reconstructor;
  // Corpus-mean MSE before each epoch's update, followed by the final MSE.
  std::vector<double> loss_history;
};

// Full-batch Adam on mean reconstruction MSE over the corpus. When `initial`
// is absent phi starts from SamplingMatrix::orthogonal.
PretrainResult pretrain_csm(const std::vector<Tensor>& corpus, double ratio,
                            std::size_t block_size, const PretrainOptions& options,
                            std::optional<SamplingMatrix> initial = std::nullopt);

double reconstruction_mse(const SamplingMatrix& sampling, const CsnetReconstructor& rec,
                          const std::vector<Tensor>& corpus, double ratio);

}  // namespace csiqa::csm
