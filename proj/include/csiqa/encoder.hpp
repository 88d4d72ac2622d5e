#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "csiqa/csm.hpp"
#include "csiqa/numerics/init.hpp"
#include "csiqa/numerics/tensor.hpp"

namespace csiqa::encoder {

using nn::Tensor;
using NamedTensor = csm::NamedTensor;

// Normalization epsilon used by every post-norm in the encoder. Small enough
// that normalized tokens have unit variance to ~1e-9 relative.
inline constexpr double kNormEps = 1e-9;

struct VitConfig {
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t embed_dim = 32;
  std::size_t ff_hidden = 128;

  void validate() const;
};

struct SstmConfig {
  std::size_t window = 2;
  double alpha = 0.1;
  bool alpha_learnable = false;
  std::size_t modules = 1;

  void validate() const;
};

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]

  static Linear create(std::size_t in, std::size_t out, nn::Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

struct AttentionParams {
  Linear query, key, value, output;

  static AttentionParams create(std::size_t dim, nn::Rng& rng);
};

// Attention probabilities captured per (group, head), each [n x n].
struct AttentionTrace {
  std::vector<Tensor> probabilities;
};

// Partition of token indices; attention runs independently inside each group.
using TokenGroups = std::vector<std::vector<std::size_t>>;

// Multi-head self-attention with learned Q/K/V/output projections and
// 1/sqrt(d/h) scaling. Empty `groups` means one group of all tokens in order.
Tensor multi_head_attention(const Tensor& x, const AttentionParams& params, std::size_t heads,
                            const TokenGroups& groups = {}, AttentionTrace* trace = nullptr);

struct BlockParams {
  AttentionParams attn;
  Tensor norm1_gain, norm1_bias;
  Linear ff1, ff2;
  Tensor norm2_gain, norm2_bias;

  static BlockParams create(std::size_t dim, std::size_t ff_hidden, nn::Rng& rng);
  void append_named(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// Post-norm transformer block:
//   X~ = Norm(MSA(X) + X),  out = Norm(FF(X~) + X~),  FF = Linear-GELU-Linear.
Tensor vit_block(const Tensor& x, const BlockParams& params, std::size_t heads,
                 const TokenGroups& groups = {}, AttentionTrace* trace = nullptr);

// Sequential application of every block; an empty stack is the identity.
Tensor encode(const Tensor& x0, const std::vector<BlockParams>& blocks, std::size_t heads);

// Token groups for w x w windows over a blocks_h x blocks_w grid after a
// cyclic shift by `shift` (window k covers grid cells (r+shift, c+shift) mod
// extent for the cells (r, c) of the k-th unshifted window).
TokenGroups window_groups(std::size_t blocks_h, std::size_t blocks_w, std::size_t window,
                          std::size_t shift);

struct SstmParams {
  std::vector<BlockParams> layers;  // regular windows, then shifted windows
  Tensor conv_weight;               // [d x d x 3 x 3]
  Tensor conv_bias;                 // [d]
  Tensor alpha;                     // [1]; trained only when SstmConfig::alpha_learnable

  static SstmParams create(std::size_t dim, std::size_t ff_hidden, const SstmConfig& cfg,
                           nn::Rng& rng);
  void append_named(const std::string& prefix, bool alpha_learnable,
                    std::vector<NamedTensor>& out) const;
};

// Two window-attention layers (the second with a floor(w/2) cyclic shift),
// then out = alpha * Conv3x3(X1) + X1 on the token grid.
Tensor sstm(const Tensor& x, const csm::BlockGrid& grid, const SstmConfig& cfg,
            const SstmParams& params, std::size_t heads, AttentionTrace* trace = nullptr);

}  // namespace csiqa::encoder
