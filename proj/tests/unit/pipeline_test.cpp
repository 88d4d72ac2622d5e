#include <doctest.h>

#include <cmath>
#include <set>

#include "csiqa/errors.hpp"
#include "csiqa/numerics/ops.hpp"
#include "csiqa/pipeline/model.hpp"
#include "gradcheck.hpp"

using namespace csiqa;
using namespace csiqa::pipeline;
using nn::Tensor;

namespace {

ModelConfig toy() {
  ModelConfig c;
  c.embed_dim = 16;
  c.heads = 4;
  c.crop_size = 8;
  c.max_side = 16;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("config serialization round-trips exactly") {
  ModelConfig c = ModelConfig::desk_scale();
  c.alpha = 0.1234567890123;
  c.ratio_mode = RatioMode::any_of(kArbitraryRatios);
  c.variant = Variant::cs_iqa;
  c.seed = 77;
  const ModelConfig back = ModelConfig::parse(c.serialize());
  CHECK(back.serialize() == c.serialize());
  CHECK(back.alpha == c.alpha);
  CHECK(back.ratio_mode.arbitrary);
  CHECK(back.ratio_mode.ratios == kArbitraryRatios);
  CHECK_THROWS(ModelConfig::parse("bogus=1\n"));
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(ModelConfig::desk_scale().validate());
  CHECK_NOTHROW(ModelConfig::full_scale().validate());
  ModelConfig c = ModelConfig::desk_scale();
  c.heads = 5;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = ModelConfig::desk_scale();
  c.variant = Variant::cs_iqa;
  c.embed_dim = 8;
  c.heads = 4;
  c.ratio_mode = RatioMode::fixed(1.0);
  CHECK_THROWS_AS(c.validate(), ContractError);
  c.ratio_mode = RatioMode::fixed(0.5);
  CHECK_NOTHROW(c.validate());
  c = ModelConfig::desk_scale();
  c.ratio_mode = RatioMode::fixed(0.0);
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = ModelConfig::desk_scale();
  c.crop_size = 80;
  CHECK_THROWS_AS(c.validate(), ContractError);
  CHECK(RatioMode::any_of(kArbitraryRatios).default_ratio() == 1.0);
  CHECK(RatioMode::fixed(0.2).default_ratio() == 0.2);
}

TEST_CASE("model parameters have unique stable names") {
  const Model m = Model::create(ModelConfig::desk_scale());
  const auto named = m.named_parameters();
  std::set<std::string> names;
  for (const auto& [n, t] : named) {
    names.insert(n);
    CHECK(t.requires_grad());
  }
  CHECK(names.size() == named.size());
  CHECK(named.front().first == "csm.phi");
  CHECK(named[1].first == "aem.embedding");
  CHECK(named.back().first == "head.weight.fc2.bias");
  ModelConfig cs = ModelConfig::desk_scale();
  cs.variant = Variant::cs_iqa;
  const Model b = Model::create(cs);
  CHECK_FALSE(b.embedding.has_value());
  CHECK(b.named_parameters().size() == named.size() - 1);
}

TEST_CASE("clone is deep and copy_values_from restores") {
  Model m = Model::create(toy());
  Model c = m.clone();
  c.head.score.fc2.bias.mutable_data()[0] = 42.0;
  CHECK(m.head.score.fc2.bias[0] != 42.0);
  m.copy_values_from(c);
  CHECK(m.head.score.fc2.bias[0] == 42.0);
}

TEST_CASE("constant gray image gives a finite, repeatable score") {
  const Model m = Model::create(ModelConfig::desk_scale());
  const Tensor gray = Tensor::full({1, 32, 32}, 0.5);
  const double a = predict_score(gray, m, 0.1);
  CHECK(std::isfinite(a));
  CHECK(predict_score(gray, m, 0.1) == a);
}

TEST_CASE("colour and small images go through luminance and padding") {
  const Model m = Model::create(ModelConfig::desk_scale());
  nn::Rng rng(5);
  const Tensor rgb = nn::uniform({3, 13, 21}, 0.0, 1.0, rng);
  const auto r = forward(rgb, m, 0.5);
  CHECK(r.measurements.grid.blocks_h == 4);  // padded to 16 x 24
  CHECK(r.measurements.grid.blocks_w == 6);
  CHECK(r.features.dim(0) == 24);
  CHECK(std::isfinite(r.head.score.item()));
}

TEST_CASE("identity sampling and embedding reduce to the raw-block pipeline") {
  ModelConfig c = toy();
  c.ratio_mode = RatioMode::fixed(1.0);
  Model m = Model::create(c);
  m.sampling = csm::SamplingMatrix::identity(4);
  m.embedding->m = Tensor::eye(16);
  nn::Rng rng(6);
  const Tensor img = nn::uniform({1, 8, 8}, 0.0, 1.0, rng);
  const auto r = forward(img, m, 1.0);

  const auto blocks = csm::split_blocks(img, 4);
  Tensor x = aem::add_position(blocks.x, m.positions);
  x = encoder::encode(x, m.vit, c.heads);
  x = encoder::sstm(x, blocks.grid, c.sstm(), m.sstm[0], c.heads);
  const double direct = head::score(x, m.head).score.item();
  CHECK(r.head.score.item() == direct);

  // the cs-iqa bypass is the same map when d = B^2
  ModelConfig cs = c;
  cs.variant = Variant::cs_iqa;
  Model b = Model::create(cs);
  b.sampling = m.sampling;
  b.positions = m.positions;
  b.vit = m.vit;
  b.sstm = m.sstm;
  b.head = m.head;
  CHECK(forward(img, b, 1.0).head.score.item() == direct);
}

TEST_CASE("full pipeline gradient at toy size") {
  ModelConfig c = toy();
  c.alpha_learnable = true;
  const Model m = Model::create(c);
  nn::Rng rng(7);
  const Tensor img = nn::uniform({1, 8, 8}, 0.0, 1.0, rng);
  auto loss = [&] {
    const Tensor d = nn::add_scalar(forward(img, m, 0.5).head.score, -0.3);
    return nn::mul(d, d);
  };
  const auto r = testing::gradcheck(loss, m.named_parameters(), 1e-5);
  INFO("worst " << r.worst);
  CHECK(r.max_rel_err <= 1e-4);
}
