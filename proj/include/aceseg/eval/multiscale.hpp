#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "aceseg/ops.hpp"

namespace aceseg {

/// Maps an N x 3 x h x w image batch to N x K x h x w class scores (logits).
using ScoreFn = std::function<Tensor<float>(const Tensor<float>&)>;

/// Per-pixel argmax over channels, N x H x W row-major. Ties go to the
/// lower class index.
std::vector<std::int32_t> argmax_channels(const Tensor<float>& scores);

/// Extent fed to the network at a given scale: round(extent * scale) to
/// the nearest multiple of 8, at least 8.
int multiscale_extent(int extent, double scale);

/// Softmax probabilities averaged over scales (and mirrored passes when
/// flip is set), each resized back to the input size. Throws ConfigError
/// on an empty or non-positive scale list.
Tensor<float> multiscale_probs(const ScoreFn& score, const Tensor<float>& images, const std::vector<double>& scales,
                               bool flip);

std::vector<std::int32_t> multiscale_predict(const ScoreFn& score, const Tensor<float>& images,
                                             const std::vector<double>& scales, bool flip);

/// Argmax of softmax(score(images)) with no resizing.
std::vector<std::int32_t> plain_predict(const ScoreFn& score, const Tensor<float>& images);

std::vector<double> default_scales();  // 0.5 .. 1.75 in steps of 0.25

}  // namespace aceseg
