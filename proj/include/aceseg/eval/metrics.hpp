#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aceseg/ops.hpp"

namespace aceseg {

/// K x K pixel counts, rows ground truth and columns prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  /// Adds every pixel whose label is not ignore_index. Throws RangeError on
  /// a prediction or label outside [0, K) and ShapeError on length mismatch;
  /// nothing is counted when it throws.
  void update(std::span<const std::int32_t> pred, std::span<const std::int32_t> label,
              std::int32_t ignore_index = kIgnoreIndex);
  void merge(const ConfusionMatrix& other);

  int num_classes() const { return k_; }
  std::uint64_t at(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * k_ + pred]; }
  std::uint64_t total() const;

  /// Throw UndefinedMetricError when nothing has been counted.
  double pix_acc() const;
  /// Mean over classes present in ground truth or prediction.
  double mean_iou() const;
  /// Per-class IoU; classes absent from both sides read as NaN.
  std::vector<double> class_iou() const;

  /// Same metrics with class 0 (background) dropped: pixels whose ground
  /// truth is background are left out and class 0 is excluded from the mean.
  double pix_acc_no_background() const;
  double mean_iou_no_background() const;

 private:
  int k_;
  std::vector<std::uint64_t> counts_;
};

}  // namespace aceseg
