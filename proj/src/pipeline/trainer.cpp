#include "csiqa/pipeline/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>

#include "csiqa/errors.hpp"
#include "csiqa/numerics/ops.hpp"
#include "csiqa/pipeline/metrics.hpp"

namespace csiqa::pipeline {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double parse_number(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw InputError("bad number '" + s + "'");
  return v;
}

std::uint64_t parse_count(const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw InputError("bad integer '" + s + "'");
  return v;
}

std::string encode_doubles(const std::vector<double>& v) {
  std::string out(v.size() * sizeof(double), '\0');
  if (!v.empty()) std::memcpy(out.data(), v.data(), out.size());
  return out;
}

std::vector<double> decode_doubles(const std::string& blob) {
  if (blob.size() % sizeof(double) != 0) throw CheckpointError("double array has a ragged length");
  std::vector<double> v(blob.size() / sizeof(double));
  if (!v.empty()) std::memcpy(v.data(), blob.data(), blob.size());
  return v;
}

std::string encode_indices(const std::vector<std::size_t>& v) {
  std::string out;
  for (auto i : v) {
    const std::uint64_t x = i;
    out.append(reinterpret_cast<const char*>(&x), sizeof(x));
  }
  return out;
}

std::vector<std::size_t> decode_indices(const std::string& blob) {
  if (blob.size() % 8 != 0) throw CheckpointError("index array has a ragged length");
  std::vector<std::size_t> v(blob.size() / 8);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint64_t x;
    std::memcpy(&x, blob.data() + 8 * i, 8);
    v[i] = static_cast<std::size_t>(x);
  }
  return v;
}

void put_params(Checkpoint& ck, const std::string& prefix, const Model& m) {
  for (const auto& [name, t] : m.named_parameters()) ck.put_tensor(prefix + name, t);
}

void load_params(const Checkpoint& ck, const std::string& prefix, Model& m) {
  for (auto& [name, t] : m.named_parameters()) {
    const nn::Tensor stored = ck.tensor(prefix + name);
    if (stored.shape() != t.shape()) {
      throw CheckpointError("record '" + prefix + name + "' has shape " + nn::shape_str(stored.shape()) +
                            ", model expects " + nn::shape_str(t.shape()));
    }
    auto dst = t.mutable_data();
    std::copy(stored.data().begin(), stored.data().end(), dst.begin());
  }
}

std::string history_text(const std::vector<EpochRecord>& history) {
  std::string out;
  for (const auto& h : history) {
    out += std::to_string(h.epoch) + ' ' + std::to_string(h.step) + ' ' + format_double(h.train_loss) + ' ' +
           format_double(h.val_srcc) + '\n';
  }
  return out;
}

std::vector<EpochRecord> parse_history(const std::string& text) {
  std::vector<EpochRecord> out;
  std::istringstream in(text);
  std::string e, s, l, v;
  while (in >> e >> s >> l >> v) {
    out.push_back({static_cast<std::size_t>(parse_count(e)), parse_count(s), parse_number(l), parse_number(v)});
  }
  return out;
}

std::vector<double> ratio_set(const Model& model) { return model.config.ratio_mode.ratios; }

}  // namespace

std::string TrainOptions::serialize() const {
  std::string out;
  out += "batch_size=" + std::to_string(batch_size) + '\n';
  out += "lr=" + format_double(lr) + '\n';
  out += "weight_decay=" + format_double(weight_decay) + '\n';
  out += "epochs=" + std::to_string(epochs) + '\n';
  out += "max_steps=" + std::to_string(max_steps) + '\n';
  out += "validation_crops=" + std::to_string(validation_crops) + '\n';
  out += "seed=" + std::to_string(seed) + '\n';
  return out;
}

TrainOptions TrainOptions::parse(const std::string& text) {
  TrainOptions o;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError("bad training option line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "batch_size") o.batch_size = parse_count(value);
    else if (key == "lr") o.lr = parse_number(value);
    else if (key == "weight_decay") o.weight_decay = parse_number(value);
    else if (key == "epochs") o.epochs = parse_count(value);
    else if (key == "max_steps") o.max_steps = parse_count(value);
    else if (key == "validation_crops") o.validation_crops = parse_count(value);
    else if (key == "seed") o.seed = parse_count(value);
    else throw InputError("unknown training option '" + key + "'");
  }
  return o;
}

nn::Tensor crop_at(const nn::Tensor& image, std::size_t top, std::size_t left, std::size_t size) {
  if (image.rank() != 3) throw DimensionError("crop expects [C,H,W], got " + nn::shape_str(image.shape()));
  nn::Tensor src = image;
  const std::size_t h = image.dim(1), w = image.dim(2);
  if (h < size || w < size) src = csm::pad_reflect(image, std::max(h, size), std::max(w, size));
  const std::size_t c = src.dim(0), hh = src.dim(1), ww = src.dim(2);
  if (top + size > hh || left + size > ww) throw ContractError("crop window exceeds the image");
  std::vector<std::size_t> idx;
  idx.reserve(c * size * size);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) idx.push_back((ch * hh + top + y) * ww + left + x);
  return nn::gather(src, idx, {c, size, size});
}

nn::Tensor random_crop(const nn::Tensor& image, std::size_t size, nn::Rng& rng) {
  const std::size_t h = std::max(image.dim(1), size), w = std::max(image.dim(2), size);
  std::uniform_int_distribution<std::size_t> dy(0, h - size), dx(0, w - size);
  const std::size_t top = dy(rng);
  const std::size_t left = dx(rng);
  return crop_at(image, top, left, size);
}

double predict_crops(const Model& model, const nn::Tensor& image, double ratio, std::size_t crops,
                     std::uint64_t seed, std::uint64_t stream) {
  if (crops == 0) throw ContractError("need at least one crop");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  nn::Rng rng(seq);
  double total = 0.0;
  for (std::size_t k = 0; k < crops; ++k) {
    total += predict_score(random_crop(image, model.config.crop_size, rng), model, ratio);
  }
  return total / static_cast<double>(crops);
}

EvalResult evaluate(const Model& model, const std::vector<Sample>& samples, double ratio, std::size_t crops,
                    std::uint64_t seed) {
  EvalResult r;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    r.predictions.push_back(predict_crops(model, samples[i].image, ratio, crops, seed, i));
    r.targets.push_back(samples[i].mos);
  }
  r.plcc = plcc(r.predictions, r.targets);
  r.srcc = srcc(r.predictions, r.targets);
  return r;
}

Trainer::Trainer(Model model, std::vector<Sample> train, std::vector<Sample> validation, TrainOptions options)
    : model_(std::move(model)),
      train_(std::move(train)),
      validation_(std::move(validation)),
      options_(options),
      rng_(options.seed),
      best_val_(-std::numeric_limits<double>::infinity()) {
  if (train_.empty()) throw ContractError("training set is empty");
  if (options_.batch_size == 0) throw ContractError("batch size must be positive");
}

bool Trainer::finished() const {
  return epoch_ >= options_.epochs || (options_.max_steps != 0 && steps_ >= options_.max_steps);
}

double Trainer::step() {
  if (cursor_ == 0) {
    order_.resize(train_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
  }
  const std::size_t end = std::min(cursor_ + options_.batch_size, order_.size());
  const double count = static_cast<double>(end - cursor_);
  const auto& mode = model_.config.ratio_mode;
  double ratio = mode.ratios.front();
  if (mode.arbitrary) {
    std::uniform_int_distribution<std::size_t> pick(0, mode.ratios.size() - 1);
    ratio = mode.ratios[pick(rng_)];
  }

  model_.zero_grad();
  double loss = 0.0;
  for (std::size_t k = cursor_; k < end; ++k) {
    const Sample& s = train_[order_[k]];
    const nn::Tensor crop = random_crop(s.image, model_.config.crop_size, rng_);
    nn::GradTape tape;
    const auto out = forward(crop, model_, ratio);
    const nn::Tensor diff = nn::add_scalar(out.head.score, -s.mos);
    const nn::Tensor l = nn::scale(nn::mul(diff, diff), 1.0 / count);
    loss += l.item();
    tape.backward(nn::sum(l));
  }
  if (!std::isfinite(loss)) {
    throw NumericalError("non-finite training loss at step " + std::to_string(steps_ + 1));
  }
  auto params = model_.parameters();
  nn::adam_step(params, adam_, {.lr = options_.lr, .weight_decay = options_.weight_decay});

  step_losses_.push_back(loss);
  epoch_loss_sum_ += loss;
  ++epoch_batches_;
  ++steps_;
  cursor_ = end;
  if (cursor_ >= order_.size() || (options_.max_steps != 0 && steps_ >= options_.max_steps)) end_epoch();
  return loss;
}

double Trainer::validate() const {
  if (validation_.size() < 2) return kNaN;
  const auto ratios = model_.config.ratio_mode.arbitrary ? ratio_set(model_)
                                                         : std::vector<double>{model_.config.ratio_mode.ratios.front()};
  double total = 0.0;
  for (double r : ratios) {
    try {
      total += evaluate(model_, validation_, r, options_.validation_crops, options_.seed ^ 0x5eedULL).srcc;
    } catch (const UndefinedCorrelation&) {
      // constant predictions carry no ranking information
    }
  }
  return total / static_cast<double>(ratios.size());
}

void Trainer::end_epoch() {
  EpochRecord rec;
  rec.epoch = epoch_;
  rec.step = steps_;
  rec.train_loss = epoch_batches_ ? epoch_loss_sum_ / static_cast<double>(epoch_batches_) : 0.0;
  rec.val_srcc = validate();
  history_.push_back(rec);
  if (std::isfinite(rec.val_srcc) && rec.val_srcc >= best_val_) {
    best_val_ = rec.val_srcc;
    if (best_) {
      best_->copy_values_from(model_);
    } else {
      best_ = model_.clone();
    }
  }
  ++epoch_;
  cursor_ = 0;
  epoch_loss_sum_ = 0.0;
  epoch_batches_ = 0;
}

void Trainer::run(const std::function<void(const EpochRecord&)>& on_epoch) {
  while (!finished()) {
    const std::size_t before = history_.size();
    step();
    if (on_epoch && history_.size() != before) on_epoch(history_.back());
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck = model_checkpoint(model_);
  ck.put_text("kind", "trainer");
  ck.put_text("train/options", options_.serialize());
  ck.put_u64("adam/step", adam_.step);
  const auto named = model_.named_parameters();
  if (adam_.first_moment.size() == named.size()) {
    for (std::size_t i = 0; i < named.size(); ++i) {
      ck.put("adam/m/" + named[i].first, encode_doubles(adam_.first_moment[i]));
      ck.put("adam/v/" + named[i].first, encode_doubles(adam_.second_moment[i]));
    }
  }
  std::ostringstream rng_text;
  rng_text << rng_;
  ck.put_text("train/rng", rng_text.str());
  ck.put("train/order", encode_indices(order_));
  ck.put_u64("train/cursor", cursor_);
  ck.put_u64("train/epoch", epoch_);
  ck.put_u64("train/steps", steps_);
  ck.put_f64("train/epoch_loss_sum", epoch_loss_sum_);
  ck.put_u64("train/epoch_batches", epoch_batches_);
  ck.put("train/step_losses", encode_doubles(step_losses_));
  ck.put_text("train/history", history_text(history_));
  ck.put_f64("train/best_val", best_val_);
  if (best_) put_params(ck, "best/", *best_);
  return ck;
}

Trainer Trainer::resume(const Checkpoint& ck, std::vector<Sample> train, std::vector<Sample> validation) {
  if (!ck.contains("kind") || ck.text("kind") != "trainer") {
    throw CheckpointError("checkpoint does not hold trainer state");
  }
  Trainer t(model_from_checkpoint(ck), std::move(train), std::move(validation),
            TrainOptions::parse(ck.text("train/options")));
  t.adam_.step = ck.u64("adam/step");
  if (ck.contains("adam/m/csm.phi")) {
    for (const auto& [name, p] : t.model_.named_parameters()) {
      auto m = decode_doubles(ck.get("adam/m/" + name));
      auto v = decode_doubles(ck.get("adam/v/" + name));
      if (m.size() != p.numel() || v.size() != p.numel()) {
        throw CheckpointError("optimizer state for '" + name + "' does not match the parameter");
      }
      t.adam_.first_moment.push_back(std::move(m));
      t.adam_.second_moment.push_back(std::move(v));
    }
  }
  std::istringstream rng_text(ck.text("train/rng"));
  rng_text >> t.rng_;
  if (!rng_text) throw CheckpointError("unreadable RNG state");
  t.order_ = decode_indices(ck.get("train/order"));
  t.cursor_ = ck.u64("train/cursor");
  t.epoch_ = ck.u64("train/epoch");
  t.steps_ = ck.u64("train/steps");
  t.epoch_loss_sum_ = ck.f64("train/epoch_loss_sum");
  t.epoch_batches_ = ck.u64("train/epoch_batches");
  t.step_losses_ = decode_doubles(ck.get("train/step_losses"));
  t.history_ = parse_history(ck.text("train/history"));
  t.best_val_ = ck.f64("train/best_val");
  if (t.cursor_ != 0 && t.order_.size() != t.train_.size()) {
    throw CheckpointError("checkpoint data order does not match the training set size");
  }
  if (ck.contains("best/csm.phi")) {
    Model best = t.model_.clone();
    load_params(ck, "best/", best);
    t.best_ = std::move(best);
  }
  return t;
}

Checkpoint model_checkpoint(const Model& model) {
  Checkpoint ck;
  ck.put_text("kind", "model");
  ck.put_text("config", model.config.serialize());
  put_params(ck, "param/", model);
  return ck;
}

Model model_from_checkpoint(const Checkpoint& ck) {
  Model m = Model::create(ModelConfig::parse(ck.text("config")));
  load_params(ck, "param/", m);
  return m;
}

Checkpoint csm_checkpoint(const csm::PretrainResult& result, double ratio) {
  Checkpoint ck;
  ck.put_text("kind", "csm");
  ck.put_u64("csm/block_size", result.sampling.block_size);
  ck.put_f64("csm/ratio", ratio);
  ck.put_tensor("param/csm.phi", result.sampling.phi);
  for (const auto& [name, t] : result.reconstructor.named_parameters()) ck.put_tensor("param/" + name, t);
  ck.put("csm/loss_history", encode_doubles(result.loss_history));
  return ck;
}

csm::SamplingMatrix sampling_from_checkpoint(const Checkpoint& ck) {
  csm::SamplingMatrix s;
  s.block_size = ck.contains("csm/block_size") ? ck.u64("csm/block_size")
                                               : ModelConfig::parse(ck.text("config")).block_size;
  s.phi = ck.tensor("param/csm.phi");
  const std::size_t n = s.block_size * s.block_size;
  if (s.phi.shape() != nn::Shape{n, n}) {
    throw CheckpointError("csm.phi has shape " + nn::shape_str(s.phi.shape()) + ", expected " +
                          nn::shape_str({n, n}));
  }
  return s;
}

}  // namespace csiqa::pipeline
