#include "aceseg/eval/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace aceseg {

ConfusionMatrix::ConfusionMatrix(int num_classes) : k_(num_classes) {
  if (num_classes < 1) throw ConfigError("confusion matrix needs at least one class");
  counts_.assign(static_cast<std::size_t>(k_) * k_, 0);
}

void ConfusionMatrix::update(std::span<const std::int32_t> pred, std::span<const std::int32_t> label,
                             std::int32_t ignore_index) {
  if (pred.size() != label.size())
    throw ShapeError("prediction has " + std::to_string(pred.size()) + " pixels, label " + std::to_string(label.size()));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (label[i] == ignore_index) continue;
    if (pred[i] < 0 || pred[i] >= k_) throw RangeError("prediction " + std::to_string(pred[i]) + " outside [0, K)");
    if (label[i] < 0 || label[i] >= k_) throw RangeError("label " + std::to_string(label[i]) + " outside [0, K)");
  }
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (label[i] != ignore_index) ++counts_[static_cast<std::size_t>(label[i]) * k_ + pred[i]];
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw ShapeError("cannot merge confusion matrices of different class counts");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

double ConfusionMatrix::pix_acc() const {
  const std::uint64_t t = total();
  if (t == 0) throw UndefinedMetricError("pixAcc of an empty confusion matrix");
  std::uint64_t diag = 0;
  for (int c = 0; c < k_; ++c) diag += at(c, c);
  return static_cast<double>(diag) / static_cast<double>(t);
}

std::vector<double> ConfusionMatrix::class_iou() const {
  std::vector<double> iou(static_cast<std::size_t>(k_), std::numeric_limits<double>::quiet_NaN());
  for (int c = 0; c < k_; ++c) {
    std::uint64_t row = 0, col = 0;
    for (int j = 0; j < k_; ++j) {
      row += at(c, j);
      col += at(j, c);
    }
    if (row + col > 0)
      iou[static_cast<std::size_t>(c)] = static_cast<double>(at(c, c)) / static_cast<double>(row + col - at(c, c));
  }
  return iou;
}

namespace {

double mean_present(const std::vector<double>& iou, std::size_t first) {
  double s = 0;
  int n = 0;
  for (std::size_t c = first; c < iou.size(); ++c)
    if (!std::isnan(iou[c])) {
      s += iou[c];
      ++n;
    }
  if (n == 0) throw UndefinedMetricError("mIoU with no class present");
  return s / n;
}

}  // namespace

double ConfusionMatrix::mean_iou() const { return mean_present(class_iou(), 0); }

double ConfusionMatrix::pix_acc_no_background() const {
  std::uint64_t t = 0, diag = 0;
  for (int c = 1; c < k_; ++c) {
    for (int j = 0; j < k_; ++j) t += at(c, j);
    diag += at(c, c);
  }
  if (t == 0) throw UndefinedMetricError("no foreground pixels counted");
  return static_cast<double>(diag) / static_cast<double>(t);
}

double ConfusionMatrix::mean_iou_no_background() const { return mean_present(class_iou(), 1); }

}  // namespace aceseg
