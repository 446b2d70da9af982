#pragma once

#include <vector>

#include "aceseg/data/dataset.hpp"
#include "aceseg/eval/metrics.hpp"
#include "aceseg/train/model.hpp"

namespace aceseg {

struct EvalOptions {
  bool multiscale = false;
  std::vector<double> scales{1.0};
  bool flip = false;
  int batch = 8;
};

/// Eval-mode predictions over `indices`, accumulated into one matrix.
ConfusionMatrix evaluate(SegModel& model, const Dataset& data, const std::vector<int>& indices,
                         const EvalOptions& opts = {});

}  // namespace aceseg
