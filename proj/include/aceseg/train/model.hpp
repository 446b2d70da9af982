#pragma once

#include <cstdint>
#include <memory>

#include "aceseg/nn/backbone.hpp"
#include "aceseg/nn/heads.hpp"

namespace aceseg {

struct ModelConfig {
  HeadKind head = HeadKind::kAce;
  HeadConfig head_cfg;  // in_channels follows backbone.channels
  BackboneConfig backbone;
  std::uint64_t seed = 1;
};

/// Backbone, context head and classifier, plus the auxiliary classifier on
/// the backbone tap that only feeds the auxiliary loss.
class SegModel {
 public:
  explicit SegModel(const ModelConfig& cfg);

  struct Output {
    Tensor<float> main;  // N x K x H x W logits at input resolution
    Tensor<float> aux;
  };

  Output forward(Tape<float>& tape, const Tensor<float>& images, Mode mode);

  /// Eval-mode main logits at input resolution, nothing recorded.
  Tensor<float> logits(const Tensor<float>& images);

  /// Parameters and BatchNorm buffers under stable checkpoint names.
  ParamList<float> parameters() const;

  const ModelConfig& config() const { return cfg_; }
  int num_classes() const { return cfg_.head_cfg.num_classes; }
  Head<float>& head() { return *head_; }

 private:
  ModelConfig cfg_;
  Backbone<float> backbone_;
  std::unique_ptr<Head<float>> head_;
  Classifier<float> classifier_;
  Classifier<float> aux_classifier_;
};

}  // namespace aceseg
