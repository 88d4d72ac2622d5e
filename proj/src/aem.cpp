#include "csiqa/aem.hpp"

#include <cmath>
#include <string>

#include "csiqa/errors.hpp"
#include "csiqa/numerics/ops.hpp"

namespace csiqa::aem {

EmbeddingMatrix EmbeddingMatrix::create(std::size_t embed_dim, std::size_t block_size,
                                        nn::Rng& rng) {
  const std::size_t n = block_size * block_size;
  return {nn::normal({embed_dim, n}, 1.0 / std::sqrt(static_cast<double>(n)), rng)};
}

PositionalTable PositionalTable::create(std::size_t max_tokens, std::size_t embed_dim,
                                        nn::Rng& rng) {
  return {nn::truncated_normal({max_tokens, embed_dim}, 0.02, rng)};
}

Tensor embed(const EmbeddingMatrix& embedding, const csm::MeasurementSet& meas) {
  const std::size_t rows = meas.y.dim(1);
  if (rows > embedding.max_rows()) {
    throw ContractError("measurement length " + std::to_string(rows) + " exceeds B^2 = " +
                        std::to_string(embedding.max_rows()));
  }
  const Tensor m_r =
      rows == embedding.max_rows() ? embedding.m : nn::narrow(embedding.m, 1, 0, rows);
  return nn::matmul(meas.y, nn::transpose(m_r));
}

Tensor add_position(const Tensor& tokens, const PositionalTable& table) {
  const std::size_t l = tokens.dim(0);
  if (l > table.max_tokens()) {
    throw ContractError("sequence of " + std::to_string(l) + " tokens exceeds positional table of " +
                        std::to_string(table.max_tokens()));
  }
  const Tensor p = l == table.max_tokens() ? table.p : nn::narrow(table.p, 0, 0, l);
  return nn::add(tokens, p);
}

Tensor bypass_embed(const csm::MeasurementSet& meas, std::size_t embed_dim) {
  const std::size_t rows = meas.y.dim(1);
  if (rows > embed_dim) {
    throw ContractError("bypass needs measurement length " + std::to_string(rows) +
                        " <= embedding width " + std::to_string(embed_dim));
  }
  if (rows == embed_dim) return meas.y;
  const Tensor parts[2] = {meas.y, Tensor::zeros({meas.y.dim(0), embed_dim - rows})};
  return nn::concat(parts, 1);
}

}  // namespace csiqa::aem
