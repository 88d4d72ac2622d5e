#include <doctest.h>

#include <cmath>
#include <limits>

#include "csiqa/errors.hpp"
#include "csiqa/pipeline/synthetic.hpp"
#include "csiqa/pipeline/trainer.hpp"

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
  c.ratio_mode = RatioMode::fixed(0.5);
  return c;
}

std::vector<Sample> toy_samples(std::size_t n, std::uint64_t seed) {
  SyntheticOptions o;
  o.count = n;
  o.side = 12;
  o.seed = seed;
  std::vector<Sample> out;
  for (const auto& s : make_synthetic_dataset(o)) out.push_back({s.image, s.mos, ""});
  return out;
}

TrainOptions opts() {
  TrainOptions o;
  o.batch_size = 2;
  o.lr = 1e-3;
  o.epochs = 3;
  o.seed = 11;
  return o;
}

bool same_values(const Model& a, const Model& b) {
  const auto pa = a.named_parameters(), pb = b.named_parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t k = 0; k < pa[i].second.numel(); ++k)
      if (pa[i].second[k] != pb[i].second[k]) return false;
  return true;
}

}  // namespace

TEST_CASE("crops are in bounds and mirror-pad small images") {
  std::vector<double> v(5 * 6);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  const Tensor img = Tensor::from({1, 5, 6}, v);
  const Tensor c = crop_at(img, 1, 2, 3);
  CHECK(c.shape() == nn::Shape{1, 3, 3});
  CHECK(c[0] == 8.0);
  CHECK(c[8] == 22.0);
  const Tensor big = crop_at(img, 0, 0, 8);
  CHECK(big.shape() == nn::Shape{1, 8, 8});
  CHECK(big[5] == 5.0);
  nn::Rng rng(4);
  for (int i = 0; i < 20; ++i) CHECK(random_crop(img, 4, rng).shape() == nn::Shape{1, 4, 4});
}

TEST_CASE("crop averaging is deterministic with a stable prefix") {
  const Model m = Model::create(toy());
  const auto s = toy_samples(1, 2);
  const double a = predict_crops(m, s[0].image, 0.5, 3, 9, 0);
  CHECK(a == predict_crops(m, s[0].image, 0.5, 3, 9, 0));
  const double one = predict_crops(m, s[0].image, 0.5, 1, 9, 0);
  const double two = predict_crops(m, s[0].image, 0.5, 2, 9, 0);
  const double three = predict_crops(m, s[0].image, 0.5, 3, 9, 0);
  const double second = 2 * two - one;
  const double third = 3 * three - 2 * two;
  CHECK(three == doctest::Approx((one + second + third) / 3.0).epsilon(1e-12));
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  TrainOptions o = opts();
  o.lr = 0.0;
  o.weight_decay = 0.0;
  const Model init = Model::create(toy());
  Trainer t(init.clone(), toy_samples(6, 1), {}, o);
  for (int i = 0; i < 3; ++i) t.step();
  CHECK(same_values(t.model(), init));
}

TEST_CASE("same seed gives identical loss curves") {
  Trainer a(Model::create(toy()), toy_samples(6, 1), {}, opts());
  Trainer b(Model::create(toy()), toy_samples(6, 1), {}, opts());
  for (int i = 0; i < 5; ++i) CHECK(a.step() == b.step());
  CHECK(same_values(a.model(), b.model()));
  TrainOptions o = opts();
  o.seed = 12;
  Trainer c(Model::create(toy()), toy_samples(6, 1), {}, o);
  bool differs = false;
  for (int i = 0; i < 5; ++i) differs |= c.step() != a.step_losses()[static_cast<std::size_t>(i)];
  CHECK(differs);
}

TEST_CASE("contract and numerical failures") {
  CHECK_THROWS_AS(Trainer(Model::create(toy()), {}, {}, opts()), ContractError);
  TrainOptions o = opts();
  o.batch_size = 0;
  CHECK_THROWS_AS(Trainer(Model::create(toy()), toy_samples(2, 1), {}, o), ContractError);
  Model m = Model::create(toy());
  m.head.score.fc2.bias.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  Trainer t(std::move(m), toy_samples(2, 1), {}, opts());
  CHECK_THROWS_AS(t.step(), NumericalError);
}

TEST_CASE("resume continues bit for bit") {
  TrainOptions o = opts();
  o.max_steps = 10;
  const auto train = toy_samples(5, 1);
  const auto val = toy_samples(3, 7);
  Trainer straight(Model::create(toy()), train, val, o);
  for (int i = 0; i < 10; ++i) straight.step();

  Trainer first(Model::create(toy()), train, val, o);
  for (int i = 0; i < 4; ++i) first.step();
  const Checkpoint ck = Checkpoint::deserialize(first.checkpoint().serialize());
  Trainer second = Trainer::resume(ck, train, val);
  CHECK(second.steps_taken() == 4);
  for (int i = 0; i < 6; ++i) second.step();

  CHECK(same_values(straight.model(), second.model()));
  CHECK(straight.step_losses() == second.step_losses());
  CHECK(same_values(straight.selected_model(), second.selected_model()));
  REQUIRE(straight.history().size() == second.history().size());
  for (std::size_t i = 0; i < straight.history().size(); ++i) {
    CHECK(straight.history()[i].train_loss == second.history()[i].train_loss);
    CHECK(straight.history()[i].val_srcc == second.history()[i].val_srcc);
  }
  CHECK(straight.checkpoint().serialize() == second.checkpoint().serialize());
}

TEST_CASE("run stops at the epoch budget and tracks the best validation model") {
  TrainOptions o = opts();
  o.epochs = 3;
  Trainer t(Model::create(toy()), toy_samples(4, 1), toy_samples(4, 5), o);
  std::size_t calls = 0;
  t.run([&](const EpochRecord&) { ++calls; });
  CHECK(calls == 3);
  CHECK(t.finished());
  CHECK(t.steps_taken() == 6);
  double best = -2.0;
  for (const auto& h : t.history()) best = std::max(best, h.val_srcc);
  CHECK(t.best_validation_srcc() == best);
}

TEST_CASE("options serialization round-trips") {
  TrainOptions o = opts();
  o.weight_decay = 3.25e-7;
  o.max_steps = 99;
  const TrainOptions back = TrainOptions::parse(o.serialize());
  CHECK(back.serialize() == o.serialize());
  CHECK(back.weight_decay == o.weight_decay);
}
