#pragma once

#include <vector>

#include "aceseg/nn/layers.hpp"

namespace aceseg {

/// One velocity buffer per parameter, zero at creation.
struct OptimizerState {
  std::vector<Tensor<float>> velocity;

  static OptimizerState for_params(const std::vector<Param<float>>& params);
};

/// Coupled weight decay with heavy-ball momentum:
///   g' = g + wd * p (only when p.decay), v = momentum * v + g', p -= lr * v.
/// Throws UnpopulatedGradientError when a parameter has no gradient.
void sgd_step(const std::vector<Param<float>>& params, OptimizerState& state, double lr, double momentum,
              double weight_decay);

}  // namespace aceseg
