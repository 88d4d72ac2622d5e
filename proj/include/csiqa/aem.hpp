#pragma once

#include <cstddef>

#include "csiqa/csm.hpp"
#include "csiqa/numerics/init.hpp"
#include "csiqa/numerics/tensor.hpp"

// Adaptive embedding: variable-length measurements -> fixed-width tokens.
namespace csiqa::aem {

using nn::Tensor;

struct EmbeddingMatrix {
  Tensor m;  // [d x B^2]; ratio r uses the first measurement_rows(r, B) columns

  std::size_t embed_dim() const { return m.dim(0); }
  std::size_t max_rows() const { return m.dim(1); }

  static EmbeddingMatrix create(std::size_t embed_dim, std::size_t block_size, nn::Rng& rng);
};

struct PositionalTable {
  Tensor p;  // [L_max x d]

  std::size_t max_tokens() const { return p.dim(0); }

  // Truncated normal, sigma = 0.02.
  static PositionalTable create(std::size_t max_tokens, std::size_t embed_dim, nn::Rng& rng);
};

// t_i = M_r y_i for every block: [L x rows] -> [L x d].
Tensor embed(const EmbeddingMatrix& embedding, const csm::MeasurementSet& meas);

// X0 = T + P[0..L).
Tensor add_position(const Tensor& tokens, const PositionalTable& table);

// Parameter-free path used when the embedding module is skipped: each y_i is
// zero-padded on the right to length d.
Tensor bypass_embed(const csm::MeasurementSet& meas, std::size_t embed_dim);

}  // namespace csiqa::aem
