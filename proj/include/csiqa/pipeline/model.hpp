#pragma once

#include <optional>
#include <vector>

#include "csiqa/aem.hpp"
#include "csiqa/csm.hpp"
#include "csiqa/encoder.hpp"
#include "csiqa/head.hpp"
#include "csiqa/pipeline/config.hpp"

namespace csiqa::pipeline {

using nn::Tensor;
using csm::NamedTensor;

// All trainable state of one CL-IQA / CS-IQA network.
struct Model {
  ModelConfig config;
  csm::SamplingMatrix sampling;
  std::optional<aem::EmbeddingMatrix> embedding;  // absent for cs-iqa
  aem::PositionalTable positions;
  std::vector<encoder::BlockParams> vit;
  std::vector<encoder::SstmParams> sstm;
  head::BranchParams head;

  // Fresh initialization from config.seed; every parameter requires grad.
  static Model create(const ModelConfig& config);

  // Stable order: csm, aem, vit blocks, sstm modules, head.
  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;

  Model clone() const;
  void zero_grad() const;
  // Copies parameter values (not grads) from a model of identical layout.
  void copy_values_from(const Model& other);
};

struct ForwardResult {
  head::ScoreResult head;
  csm::MeasurementSet measurements;
  Tensor features;  // encoder + SSTM output, [L x d]
};

// Luminance, mirror-padding to a multiple of B * window, then
// sample -> (embed | bypass) -> positions -> ViT blocks -> SSTM -> dual branch.
ForwardResult forward(const Tensor& image, const Model& model, double ratio,
                      encoder::AttentionTrace* trace = nullptr);

double predict_score(const Tensor& image, const Model& model, double ratio);

}  // namespace csiqa::pipeline
