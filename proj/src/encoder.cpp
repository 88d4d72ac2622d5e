#include "csiqa/encoder.hpp"

#include <cmath>
#include <string>

#include "csiqa/errors.hpp"
#include "csiqa/numerics/ops.hpp"

namespace csiqa::encoder {

void VitConfig::validate() const {
  if (heads == 0 || embed_dim == 0 || embed_dim % heads != 0) {
    throw ContractError("embedding width " + std::to_string(embed_dim) +
                        " is not divisible by head count " + std::to_string(heads));
  }
  if (ff_hidden == 0) throw ContractError("feed-forward width must be positive");
  if (depth == 0) throw ContractError("encoder depth must be at least 1");
}

void SstmConfig::validate() const {
  if (window == 0) throw ContractError("window size must be positive");
  if (!std::isfinite(alpha)) throw ContractError("SSTM scale must be finite");
}

Linear Linear::create(std::size_t in, std::size_t out, nn::Rng& rng) {
  return {nn::xavier_uniform({in, out}, in, out, rng), Tensor::zeros({out})};
}

Tensor Linear::operator()(const Tensor& x) const { return nn::add_bias(nn::matmul(x, weight), bias); }

AttentionParams AttentionParams::create(std::size_t dim, nn::Rng& rng) {
  AttentionParams p;
  p.query = Linear::create(dim, dim, rng);
  p.key = Linear::create(dim, dim, rng);
  p.value = Linear::create(dim, dim, rng);
  p.output = Linear::create(dim, dim, rng);
  return p;
}

namespace {

// Rows `rows`, columns [col0, col0 + width) of a [L x d] tensor.
Tensor gather_block(const Tensor& t, const std::vector<std::size_t>& rows, std::size_t col0,
                    std::size_t width) {
  const std::size_t d = t.dim(1);
  std::vector<std::size_t> index;
  index.reserve(rows.size() * width);
  for (auto r : rows)
    for (std::size_t j = 0; j < width; ++j) index.push_back(r * d + col0 + j);
  return nn::gather(t, std::move(index), {rows.size(), width});
}

}  // namespace

Tensor multi_head_attention(const Tensor& x, const AttentionParams& params, std::size_t heads,
                            const TokenGroups& groups, AttentionTrace* trace) {
  if (x.rank() != 2) throw DimensionError("attention expects [L x d] tokens, got " + nn::shape_str(x.shape()));
  const std::size_t l = x.dim(0), d = x.dim(1);
  if (heads == 0 || d % heads != 0) {
    throw ContractError("embedding width " + std::to_string(d) + " is not divisible by head count " +
                        std::to_string(heads));
  }
  TokenGroups all;
  const TokenGroups* part = &groups;
  if (groups.empty()) {
    all.emplace_back(l);
    for (std::size_t i = 0; i < l; ++i) all[0][i] = i;
    part = &all;
  }
  std::vector<int> seen(l, 0);
  for (const auto& g : *part)
    for (auto r : g) {
      if (r >= l || seen[r]++) throw ContractError("attention groups must partition the tokens");
    }
  for (auto s : seen)
    if (!s) throw ContractError("attention groups must partition the tokens");

  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor q = params.query(x);
  const Tensor k = params.key(x);
  const Tensor v = params.value(x);

  std::vector<Tensor> pieces;
  std::vector<std::size_t> placement(l * d);  // destination flat index -> source flat index
  std::size_t offset = 0;
  for (const auto& g : *part) {
    for (std::size_t h = 0; h < heads; ++h) {
      const Tensor qg = gather_block(q, g, h * dh, dh);
      const Tensor kg = gather_block(k, g, h * dh, dh);
      const Tensor vg = gather_block(v, g, h * dh, dh);
      const Tensor probs = nn::softmax(nn::scale(nn::matmul(qg, nn::transpose(kg)), inv_sqrt), 1);
      if (trace) trace->probabilities.push_back(probs);
      pieces.push_back(nn::reshape(nn::matmul(probs, vg), {g.size() * dh}));
      for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = 0; j < dh; ++j) placement[g[i] * d + h * dh + j] = offset + i * dh + j;
      offset += g.size() * dh;
    }
  }
  const Tensor flat = nn::concat(pieces, 0);
  const Tensor merged = nn::gather(flat, std::move(placement), {l, d});
  return params.output(merged);
}

BlockParams BlockParams::create(std::size_t dim, std::size_t ff_hidden, nn::Rng& rng) {
  BlockParams p;
  p.attn = AttentionParams::create(dim, rng);
  p.norm1_gain = Tensor::full({dim}, 1.0);
  p.norm1_bias = Tensor::zeros({dim});
  p.ff1 = Linear::create(dim, ff_hidden, rng);
  p.ff2 = Linear::create(ff_hidden, dim, rng);
  p.norm2_gain = Tensor::full({dim}, 1.0);
  p.norm2_bias = Tensor::zeros({dim});
  return p;
}

void BlockParams::append_named(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.emplace_back(prefix + ".attn.query.weight", attn.query.weight);
  out.emplace_back(prefix + ".attn.query.bias", attn.query.bias);
  out.emplace_back(prefix + ".attn.key.weight", attn.key.weight);
  out.emplace_back(prefix + ".attn.key.bias", attn.key.bias);
  out.emplace_back(prefix + ".attn.value.weight", attn.value.weight);
  out.emplace_back(prefix + ".attn.value.bias", attn.value.bias);
  out.emplace_back(prefix + ".attn.output.weight", attn.output.weight);
  out.emplace_back(prefix + ".attn.output.bias", attn.output.bias);
  out.emplace_back(prefix + ".norm1.gain", norm1_gain);
  out.emplace_back(prefix + ".norm1.bias", norm1_bias);
  out.emplace_back(prefix + ".ff1.weight", ff1.weight);
  out.emplace_back(prefix + ".ff1.bias", ff1.bias);
  out.emplace_back(prefix + ".ff2.weight", ff2.weight);
  out.emplace_back(prefix + ".ff2.bias", ff2.bias);
  out.emplace_back(prefix + ".norm2.gain", norm2_gain);
  out.emplace_back(prefix + ".norm2.bias", norm2_bias);
}

Tensor vit_block(const Tensor& x, const BlockParams& params, std::size_t heads,
                 const TokenGroups& groups, AttentionTrace* trace) {
  const Tensor attended = multi_head_attention(x, params.attn, heads, groups, trace);
  const Tensor mid = nn::layer_norm(nn::add(attended, x), params.norm1_gain, params.norm1_bias, kNormEps);
  const Tensor ff = params.ff2(nn::gelu(params.ff1(mid)));
  return nn::layer_norm(nn::add(ff, mid), params.norm2_gain, params.norm2_bias, kNormEps);
}

Tensor encode(const Tensor& x0, const std::vector<BlockParams>& blocks, std::size_t heads) {
  Tensor x = x0;
  for (const auto& b : blocks) x = vit_block(x, b, heads);
  return x;
}

TokenGroups window_groups(std::size_t blocks_h, std::size_t blocks_w, std::size_t window,
                          std::size_t shift) {
  if (window == 0 || blocks_h % window != 0 || blocks_w % window != 0) {
    throw ContractError("window " + std::to_string(window) + " does not divide the " +
                        std::to_string(blocks_h) + "x" + std::to_string(blocks_w) + " token grid");
  }
  TokenGroups groups;
  for (std::size_t wr = 0; wr < blocks_h / window; ++wr) {
    for (std::size_t wc = 0; wc < blocks_w / window; ++wc) {
      std::vector<std::size_t> g;
      g.reserve(window * window);
      for (std::size_t i = 0; i < window; ++i)
        for (std::size_t j = 0; j < window; ++j) {
          const std::size_t r = (wr * window + i + shift) % blocks_h;
          const std::size_t c = (wc * window + j + shift) % blocks_w;
          g.push_back(r * blocks_w + c);
        }
      groups.push_back(std::move(g));
    }
  }
  return groups;
}

SstmParams SstmParams::create(std::size_t dim, std::size_t ff_hidden, const SstmConfig& cfg,
                              nn::Rng& rng) {
  SstmParams p;
  for (int i = 0; i < 2; ++i) p.layers.push_back(BlockParams::create(dim, ff_hidden, rng));
  p.conv_weight = nn::xavier_uniform({dim, dim, 3, 3}, dim * 9, dim * 9, rng);
  p.conv_bias = Tensor::zeros({dim});
  p.alpha = Tensor::scalar(cfg.alpha);
  return p;
}

void SstmParams::append_named(const std::string& prefix, bool alpha_learnable,
                              std::vector<NamedTensor>& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    layers[i].append_named(prefix + ".stl." + std::to_string(i), out);
  out.emplace_back(prefix + ".conv.weight", conv_weight);
  out.emplace_back(prefix + ".conv.bias", conv_bias);
  if (alpha_learnable) out.emplace_back(prefix + ".alpha", alpha);
}

Tensor sstm(const Tensor& x, const csm::BlockGrid& grid, const SstmConfig& cfg,
            const SstmParams& params, std::size_t heads, AttentionTrace* trace) {
  cfg.validate();
  const std::size_t l = grid.count();
  if (x.rank() != 2 || x.dim(0) != l) {
    throw DimensionError("sstm: tokens " + nn::shape_str(x.shape()) + " do not match a grid of " +
                         std::to_string(l));
  }
  const std::size_t d = x.dim(1);
  const std::size_t shift = cfg.window / 2;
  Tensor h = x;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto groups = window_groups(grid.blocks_h, grid.blocks_w, cfg.window, i % 2 ? shift : 0);
    h = vit_block(h, params.layers[i], heads, groups, trace);
  }
  const Tensor fmap = nn::reshape(nn::transpose(h), {d, grid.blocks_h, grid.blocks_w});
  const Tensor conv = nn::conv2d(fmap, params.conv_weight, params.conv_bias, 1, 1);
  const Tensor conv_tokens = nn::transpose(nn::reshape(conv, {d, l}));
  return nn::add(nn::scale_by(conv_tokens, params.alpha), h);
}

}  // namespace csiqa::encoder
