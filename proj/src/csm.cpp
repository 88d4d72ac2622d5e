#include "csiqa/csm.hpp"

#include <cmath>
#include <string>

#include "csiqa/errors.hpp"
#include "csiqa/numerics/ops.hpp"

namespace csiqa::csm {

namespace {

void require_ratio(double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw ContractError("sampling ratio must lie in (0, 1], got " + std::to_string(ratio));
  }
}

void require_single_channel(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 1) {
    throw ContractError("sampling expects a single-channel [1,H,W] image, got " +
                        nn::shape_str(image.shape()));
  }
}

}  // namespace

std::size_t measurement_rows(double ratio, std::size_t block_size) {
  require_ratio(ratio);
  if (block_size == 0) throw ContractError("block size must be positive");
  const double n = static_cast<double>(block_size * block_size);
  const auto rows = static_cast<std::size_t>(std::ceil(ratio * n - 1e-9));
  return std::max<std::size_t>(rows, 1);
}

BlockGrid make_grid(std::size_t height, std::size_t width, std::size_t block_size) {
  if (block_size == 0) throw ContractError("block size must be positive");
  if (height == 0 || width == 0) throw ContractError("image extents must be positive");
  BlockGrid g;
  g.block_size = block_size;
  g.height = height;
  g.width = width;
  g.blocks_h = (height + block_size - 1) / block_size;
  g.blocks_w = (width + block_size - 1) / block_size;
  return g;
}

std::size_t mirror_index(std::size_t i, std::size_t n) {
  if (n == 1) return 0;
  const std::size_t period = 2 * (n - 1);
  i %= period;
  return i < n ? i : period - i;
}

Tensor pad_reflect(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  if (image.rank() != 3) throw ContractError("pad_reflect expects [C,H,W], got " + nn::shape_str(image.shape()));
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (out_h < h || out_w < w) throw ContractError("pad_reflect cannot shrink an image");
  if (out_h == h && out_w == w) return image;
  std::vector<std::size_t> index;
  index.reserve(c * out_h * out_w);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < out_h; ++y)
      for (std::size_t x = 0; x < out_w; ++x)
        index.push_back((ch * h + mirror_index(y, h)) * w + mirror_index(x, w));
  return nn::gather(image, std::move(index), {c, out_h, out_w});
}

Tensor to_luminance(const Tensor& image) {
  if (image.rank() != 3) throw ContractError("expected [C,H,W] image, got " + nn::shape_str(image.shape()));
  const std::size_t c = image.dim(0);
  if (c == 1) return image;
  if (c != 3) throw ContractError("luminance needs 1 or 3 channels, got " + std::to_string(c));
  const std::size_t plane = image.dim(1) * image.dim(2);
  const auto v = image.data();
  std::vector<double> out(plane);
  for (std::size_t i = 0; i < plane; ++i)
    out[i] = 0.299 * v[i] + 0.587 * v[plane + i] + 0.114 * v[2 * plane + i];
  return Tensor::from({1, image.dim(1), image.dim(2)}, std::move(out));
}

Blocks split_blocks(const Tensor& image, std::size_t block_size) {
  if (block_size == 0) throw ContractError("block size must be positive");
  require_single_channel(image);
  const std::size_t h = image.dim(1), w = image.dim(2);
  if (h < block_size || w < block_size) {
    throw ContractError("image " + nn::shape_str(image.shape()) + " smaller than block size " +
                        std::to_string(block_size));
  }
  const BlockGrid grid = make_grid(h, w, block_size);
  const std::size_t b = block_size;
  std::vector<std::size_t> index;
  index.reserve(grid.count() * b * b);
  for (std::size_t by = 0; by < grid.blocks_h; ++by)
    for (std::size_t bx = 0; bx < grid.blocks_w; ++bx)
      for (std::size_t y = 0; y < b; ++y)
        for (std::size_t x = 0; x < b; ++x)
          index.push_back(mirror_index(by * b + y, h) * w + mirror_index(bx * b + x, w));
  return {nn::gather(image, std::move(index), {grid.count(), b * b}), grid};
}

Tensor merge_blocks(const Tensor& blocks, const BlockGrid& grid) {
  const std::size_t b = grid.block_size;
  if (blocks.rank() != 2 || blocks.dim(0) != grid.count() || blocks.dim(1) != b * b) {
    throw DimensionError("merge_blocks: " + nn::shape_str(blocks.shape()) + " does not fit a " +
                         std::to_string(grid.blocks_h) + "x" + std::to_string(grid.blocks_w) +
                         " grid of " + std::to_string(b) + "-blocks");
  }
  const std::size_t ph = grid.padded_height(), pw = grid.padded_width();
  std::vector<std::size_t> index(ph * pw);
  for (std::size_t y = 0; y < ph; ++y)
    for (std::size_t x = 0; x < pw; ++x) {
      const std::size_t block = (y / b) * grid.blocks_w + x / b;
      index[y * pw + x] = block * b * b + (y % b) * b + x % b;
    }
  return nn::gather(blocks, std::move(index), {1, ph, pw});
}

SamplingMatrix SamplingMatrix::orthogonal(std::size_t block_size, nn::Rng& rng) {
  const std::size_t n = block_size * block_size;
  return {nn::orthogonal(n, 1.0 / static_cast<double>(block_size), rng), block_size};
}

SamplingMatrix SamplingMatrix::gaussian(std::size_t block_size, nn::Rng& rng) {
  const std::size_t n = block_size * block_size;
  return {nn::normal({n, n}, 1.0 / static_cast<double>(n), rng), block_size};
}

SamplingMatrix SamplingMatrix::identity(std::size_t block_size) {
  return {Tensor::eye(block_size * block_size), block_size};
}

Tensor truncate(const SamplingMatrix& sampling, double ratio) {
  const std::size_t rows = measurement_rows(ratio, sampling.block_size);
  const std::size_t n = sampling.block_size * sampling.block_size;
  if (sampling.phi.rank() != 2 || sampling.phi.dim(0) != n || sampling.phi.dim(1) != n) {
    throw DimensionError("sampling matrix " + nn::shape_str(sampling.phi.shape()) +
                         " is not square with side B^2 = " + std::to_string(n));
  }
  if (rows == n) return sampling.phi;
  return nn::narrow(sampling.phi, 0, 0, rows);
}

MeasurementSet sample(const SamplingMatrix& sampling, const Tensor& image, double ratio) {
  const Tensor phi_r = truncate(sampling, ratio);
  Blocks blocks = split_blocks(image, sampling.block_size);
  MeasurementSet m;
  m.y = nn::matmul(blocks.x, nn::transpose(phi_r));
  m.grid = blocks.grid;
  m.ratio = ratio;
  m.rows = phi_r.dim(0);
  return m;
}

MeasurementSet sample_conv(const SamplingMatrix& sampling, const Tensor& image, double ratio) {
  const Tensor phi_r = truncate(sampling, ratio);
  require_single_channel(image);
  const std::size_t b = sampling.block_size;
  if (image.dim(1) < b || image.dim(2) < b) {
    throw ContractError("image " + nn::shape_str(image.shape()) + " smaller than block size " +
                        std::to_string(b));
  }
  const BlockGrid grid = make_grid(image.dim(1), image.dim(2), b);
  const Tensor padded = pad_reflect(image, grid.padded_height(), grid.padded_width());
  const std::size_t rows = phi_r.dim(0);
  const Tensor kernels = nn::reshape(phi_r, {rows, 1, b, b});
  const Tensor response = nn::conv2d(padded, kernels, Tensor{}, b, 0);  // [rows, bh, bw]
  MeasurementSet m;
  m.y = nn::transpose(nn::reshape(response, {rows, grid.count()}));
  m.grid = grid;
  m.ratio = ratio;
  m.rows = rows;
  return m;
}

CsnetReconstructor CsnetReconstructor::create(std::size_t block_size, std::size_t rows,
                                              std::size_t width, nn::Rng& rng) {
  const std::size_t n = block_size * block_size;
  if (rows == 0 || rows > n) throw ContractError("reconstructor rows must lie in [1, B^2]");
  if (width == 0) throw ContractError("refine width must be positive");
  CsnetReconstructor r;
  r.block_size = block_size;
  r.rows = rows;
  r.width = width;
  r.init_weight = nn::xavier_uniform({rows, n}, rows, n, rng);
  r.init_bias = Tensor::zeros({n});
  const std::size_t chans[4] = {1, width, width, 1};
  for (int layer = 0; layer < 3; ++layer) {
    const std::size_t cin = chans[layer], cout = chans[layer + 1];
    r.refine_weight.push_back(nn::xavier_uniform({cout, cin, 3, 3}, cin * 9, cout * 9, rng));
    r.refine_bias.push_back(Tensor::zeros({cout}));
  }
  return r;
}

std::vector<NamedTensor> CsnetReconstructor::named_parameters() const {
  std::vector<NamedTensor> out{{"csm.recon.init.weight", init_weight},
                               {"csm.recon.init.bias", init_bias}};
  for (std::size_t i = 0; i < refine_weight.size(); ++i) {
    out.emplace_back("csm.recon.refine." + std::to_string(i) + ".weight", refine_weight[i]);
    out.emplace_back("csm.recon.refine." + std::to_string(i) + ".bias", refine_bias[i]);
  }
  return out;
}

Tensor csnet_reconstruct(const CsnetReconstructor& rec, const MeasurementSet& m) {
  if (m.rows != rec.rows || m.grid.block_size != rec.block_size) {
    throw ContractError("reconstructor configured for " + std::to_string(rec.rows) +
                        " rows of " + std::to_string(rec.block_size) + "-blocks, measurements have " +
                        std::to_string(m.rows) + " rows of " + std::to_string(m.grid.block_size) +
                        "-blocks");
  }
  const Tensor blocks = nn::add_bias(nn::matmul(m.y, rec.init_weight), rec.init_bias);
  const Tensor initial = merge_blocks(blocks, m.grid);
  Tensor h = initial;
  for (std::size_t i = 0; i < rec.refine_weight.size(); ++i) {
    h = nn::conv2d(h, rec.refine_weight[i], rec.refine_bias[i], 1, 1);
    if (i + 1 < rec.refine_weight.size()) h = nn::relu(h);
  }
  return nn::add(initial, h);
}

namespace {

std::vector<Tensor> luminance_corpus(const std::vector<Tensor>& corpus) {
  std::vector<Tensor> out;
  out.reserve(corpus.size());
  for (const auto& img : corpus) out.push_back(to_luminance(img).detach());
  return out;
}

Tensor padded_target(const Tensor& image, std::size_t block_size) {
  const BlockGrid g = make_grid(image.dim(1), image.dim(2), block_size);
  return pad_reflect(image, g.padded_height(), g.padded_width());
}

}  // namespace

double reconstruction_mse(const SamplingMatrix& sampling, const CsnetReconstructor& rec,
                          const std::vector<Tensor>& corpus, double ratio) {
  if (corpus.empty()) throw ContractError("reconstruction_mse: empty corpus");
  nn::NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& raw : corpus) {
    const Tensor img = to_luminance(raw);
    const MeasurementSet m = sample(sampling, img, ratio);
    total += nn::mse(csnet_reconstruct(rec, m), padded_target(img, sampling.block_size)).item();
  }
  return total / static_cast<double>(corpus.size());
}

PretrainResult pretrain_csm(const std::vector<Tensor>& corpus, double ratio,
                            std::size_t block_size, const PretrainOptions& options,
                            std::optional<SamplingMatrix> initial) {
  if (corpus.empty()) throw ContractError("pretrain_csm: corpus is empty");
  const std::size_t rows = measurement_rows(ratio, block_size);
  nn::Rng rng(options.seed);
  PretrainResult result;
  if (initial) {
    if (initial->block_size != block_size) throw ContractError("pretrain_csm: initial matrix has a different block size");
    result.sampling = {initial->phi.clone(), block_size};
  } else {
    result.sampling = SamplingMatrix::orthogonal(block_size, rng);
  }
  result.reconstructor = CsnetReconstructor::create(block_size, rows, options.refine_width, rng);

  std::vector<Tensor> params;
  if (options.train_sampling) params.push_back(result.sampling.phi);
  for (auto& [name, t] : result.reconstructor.named_parameters()) params.push_back(t);
  for (auto& p : params) p.set_requires_grad(true);

  const std::vector<Tensor> images = luminance_corpus(corpus);
  std::vector<Tensor> targets;
  for (const auto& img : images) targets.push_back(padded_target(img, block_size));

  nn::AdamOptions adam;
  adam.lr = options.lr;
  nn::AdamState state;
  const double inv_n = 1.0 / static_cast<double>(images.size());
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    for (auto& p : params) p.zero_grad();
    double epoch_loss = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      nn::GradTape tape;
      const MeasurementSet m = sample(result.sampling, images[i], ratio);
      const Tensor loss = nn::scale(nn::mse(csnet_reconstruct(result.reconstructor, m), targets[i]), inv_n);
      epoch_loss += loss.item();
      tape.backward(loss);
    }
    if (!std::isfinite(epoch_loss)) {
      throw NumericalError("pretrain_csm: non-finite loss at epoch " + std::to_string(epoch));
    }
    result.loss_history.push_back(epoch_loss);
    nn::adam_step(params, state, adam);
  }
  for (auto& p : params) {
    p.zero_grad();
    p.set_requires_grad(false);
  }
  result.loss_history.push_back(reconstruction_mse(result.sampling, result.reconstructor, images, ratio));
  return result;
}

}  // namespace csiqa::csm
