#pragma once

#include "aceseg/nn/layers.hpp"

namespace aceseg {

struct BackboneConfig {
  int channels = 128;     // C of the main output
  int aux_channels = 64;  // width of the auxiliary tap
};

template <typename T>
struct BackboneOutput {
  Tensor<T> main;  // N x C x H/8 x W/8
  Tensor<T> aux;   // N x aux_channels x H/8 x W/8
};

/// Three stride-2 stages (3 -> 32 -> 64 -> C), each two conv-BN-ReLU units.
/// The auxiliary tap is the stage-2 output, 2x2 average pooled and
/// projected by a 1x1 conv-BN-ReLU.
template <typename T>
class Backbone {
 public:
  Backbone() = default;
  Backbone(const BackboneConfig& cfg, Rng& rng);

  /// Throws GeometryError unless H and W are multiples of 8.
  BackboneOutput<T> forward(Tape<T>& tape, const Tensor<T>& img, Mode mode);
  void collect(const std::string& prefix, ParamList<T>& out) const;

  const BackboneConfig& config() const { return cfg_; }

 private:
  BackboneConfig cfg_;
  std::vector<ConvBnRelu<T>> units_;  // stage s uses units 2s and 2s+1
  ConvBnRelu<T> aux_proj_;
};

}  // namespace aceseg
