#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "csiqa/csm.hpp"
#include "csiqa/numerics/adam.hpp"
#include "csiqa/pipeline/checkpoint.hpp"
#include "csiqa/pipeline/dataset.hpp"
#include "csiqa/pipeline/model.hpp"

namespace csiqa::pipeline {

struct TrainOptions {
  std::size_t batch_size = 8;
  double lr = 1e-5;
  double weight_decay = 1e-5;
  std::size_t epochs = 100;
  std::uint64_t max_steps = 0;  // 0: stop only on epochs
  std::size_t validation_crops = 1;
  std::uint64_t seed = 0;  // data order, crops and ratio draws

  std::string serialize() const;
  static TrainOptions parse(const std::string& text);
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::uint64_t step = 0;  // optimizer steps taken when the epoch ended
  double train_loss = 0.0;
  double val_srcc = 0.0;  // NaN without a validation set
};

struct EvalResult {
  std::vector<double> predictions;
  std::vector<double> targets;
  double plcc = 0.0;
  double srcc = 0.0;
};

// size x size window at (top, left); images smaller than `size` along an
// axis are mirror-padded first.
nn::Tensor crop_at(const nn::Tensor& image, std::size_t top, std::size_t left, std::size_t size);
nn::Tensor random_crop(const nn::Tensor& image, std::size_t size, nn::Rng& rng);

// Mean score over `crops` random crops drawn from a stream seeded by
// (seed, stream). Crop k is the same for any crops > k.
double predict_crops(const Model& model, const nn::Tensor& image, double ratio, std::size_t crops,
                     std::uint64_t seed, std::uint64_t stream);

// Per-image crop-averaged predictions and PLCC/SRCC against MOS. Image i uses
// crop stream i.
EvalResult evaluate(const Model& model, const std::vector<Sample>& samples, double ratio,
                    std::size_t crops, std::uint64_t seed);

// Adam + MSE over random crops; one random crop per image per epoch. In
// arbitrary-ratio mode each batch draws its ratio uniformly from the set.
// Keeps a copy of the parameters with the best validation SRCC, preferring
// the later epoch on ties. Reaching max_steps closes the current epoch.
class Trainer {
 public:
  Trainer(Model model, std::vector<Sample> train, std::vector<Sample> validation,
          TrainOptions options);

  bool finished() const;
  // One optimizer step; returns the batch MSE. Throws NumericalError on a
  // non-finite loss.
  double step();
  void run(const std::function<void(const EpochRecord&)>& on_epoch = {});

  const Model& model() const { return model_; }
  // Best-on-validation parameters, or the current ones if nothing was validated.
  const Model& selected_model() const { return best_ ? *best_ : model_; }
  double best_validation_srcc() const { return best_val_; }
  const std::vector<EpochRecord>& history() const { return history_; }
  const std::vector<double>& step_losses() const { return step_losses_; }
  std::uint64_t steps_taken() const { return steps_; }
  TrainOptions& options() { return options_; }

  Checkpoint checkpoint() const;
  static Trainer resume(const Checkpoint& ckpt, std::vector<Sample> train,
                        std::vector<Sample> validation);

 private:
  void end_epoch();
  double validate() const;

  Model model_;
  std::vector<Sample> train_;
  std::vector<Sample> validation_;
  TrainOptions options_;
  nn::AdamState adam_;
  nn::Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
  std::uint64_t steps_ = 0;
  double epoch_loss_sum_ = 0.0;
  std::uint64_t epoch_batches_ = 0;
  std::vector<double> step_losses_;
  std::vector<EpochRecord> history_;
  std::optional<Model> best_;
  double best_val_;
};

Checkpoint model_checkpoint(const Model& model);
Model model_from_checkpoint(const Checkpoint& ckpt);

// Standalone CSM checkpoint (same format, csm keys only).
Checkpoint csm_checkpoint(const csm::PretrainResult& result, double ratio);
// Reads csm.phi from either a CSM or a full model checkpoint.
csm::SamplingMatrix sampling_from_checkpoint(const Checkpoint& ckpt);

}  // namespace csiqa::pipeline
