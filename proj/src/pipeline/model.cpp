#include "csiqa/pipeline/model.hpp"

#include "csiqa/errors.hpp"
#include "csiqa/numerics/ops.hpp"

namespace csiqa::pipeline {

Model Model::create(const ModelConfig& config) {
  config.validate();
  nn::Rng rng(config.seed);
  Model m;
  m.config = config;
  m.sampling = csm::SamplingMatrix::orthogonal(config.block_size, rng);
  if (config.variant == Variant::cl_iqa) {
    m.embedding = aem::EmbeddingMatrix::create(config.embed_dim, config.block_size, rng);
  }
  m.positions = aem::PositionalTable::create(config.max_tokens(), config.embed_dim, rng);
  for (std::size_t i = 0; i < config.depth; ++i)
    m.vit.push_back(encoder::BlockParams::create(config.embed_dim, config.hidden(), rng));
  for (std::size_t i = 0; i < config.sstm_modules; ++i)
    m.sstm.push_back(encoder::SstmParams::create(config.embed_dim, config.hidden(), config.sstm(), rng));
  m.head = head::BranchParams::create(config.embed_dim, rng);
  for (auto& p : m.parameters()) p.set_requires_grad(true);
  return m;
}

std::vector<NamedTensor> Model::named_parameters() const {
  std::vector<NamedTensor> out;
  out.emplace_back("csm.phi", sampling.phi);
  if (embedding) out.emplace_back("aem.embedding", embedding->m);
  out.emplace_back("aem.positions", positions.p);
  for (std::size_t i = 0; i < vit.size(); ++i) vit[i].append_named("vit." + std::to_string(i), out);
  for (std::size_t i = 0; i < sstm.size(); ++i)
    sstm[i].append_named("sstm." + std::to_string(i), config.alpha_learnable, out);
  head.append_named("head", out);
  return out;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : parameters()) n += t.numel();
  return n;
}

Model Model::clone() const {
  Model copy = *this;  // shares storage until the values are replaced below
  auto fresh = [](Tensor& t) { t = t.clone(); };
  fresh(copy.sampling.phi);
  if (copy.embedding) fresh(copy.embedding->m);
  fresh(copy.positions.p);
  auto fresh_block = [&](encoder::BlockParams& b) {
    for (auto* l : {&b.attn.query, &b.attn.key, &b.attn.value, &b.attn.output, &b.ff1, &b.ff2}) {
      fresh(l->weight);
      fresh(l->bias);
    }
    for (auto* t : {&b.norm1_gain, &b.norm1_bias, &b.norm2_gain, &b.norm2_bias}) fresh(*t);
  };
  for (auto& b : copy.vit) fresh_block(b);
  for (auto& s : copy.sstm) {
    for (auto& b : s.layers) fresh_block(b);
    fresh(s.conv_weight);
    fresh(s.conv_bias);
    fresh(s.alpha);
  }
  for (auto* br : {&copy.head.score, &copy.head.weight}) {
    for (auto* l : {&br->fc1, &br->fc2}) {
      fresh(l->weight);
      fresh(l->bias);
    }
  }
  return copy;
}

void Model::zero_grad() const {
  for (auto p : parameters()) p.zero_grad();
}

void Model::copy_values_from(const Model& other) {
  auto mine = named_parameters();
  const auto theirs = other.named_parameters();
  if (mine.size() != theirs.size()) throw ContractError("copy_values_from: parameter layouts differ");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].first != theirs[i].first || mine[i].second.shape() != theirs[i].second.shape()) {
      throw ContractError("copy_values_from: mismatch at " + mine[i].first);
    }
    auto dst = mine[i].second.mutable_data();
    const auto src = theirs[i].second.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

ForwardResult forward(const Tensor& image, const Model& model, double ratio,
                      encoder::AttentionTrace* trace) {
  const ModelConfig& cfg = model.config;
  Tensor lum = csm::to_luminance(image);
  const std::size_t unit = cfg.block_size * cfg.window;
  const std::size_t h = lum.dim(1), w = lum.dim(2);
  const std::size_t ph = std::max((h + unit - 1) / unit * unit, unit);
  const std::size_t pw = std::max((w + unit - 1) / unit * unit, unit);
  lum = csm::pad_reflect(lum, ph, pw);

  ForwardResult r;
  r.measurements = csm::sample(model.sampling, lum, ratio);
  Tensor tokens = model.embedding ? aem::embed(*model.embedding, r.measurements)
                                  : aem::bypass_embed(r.measurements, cfg.embed_dim);
  Tensor x = aem::add_position(tokens, model.positions);
  x = encoder::encode(x, model.vit, cfg.heads);
  for (const auto& s : model.sstm) x = encoder::sstm(x, r.measurements.grid, cfg.sstm(), s, cfg.heads, trace);
  r.features = x;
  r.head = head::score(x, model.head);
  return r;
}

double predict_score(const Tensor& image, const Model& model, double ratio) {
  nn::NoGradGuard no_grad;
  return forward(image, model, ratio).head.score.item();
}

}  // namespace csiqa::pipeline
