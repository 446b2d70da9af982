#pragma once

#include <memory>
#include <string>
#include <vector>

#include "aceseg/nn/layers.hpp"

namespace aceseg {

enum class HeadKind { kPpm, kAspp, kAce };
enum class AceFuse { kCascade, kConcat };

std::string head_name(HeadKind kind);  // "ppm", "aspp", "ace"
/// Row label used in comparison tables ("PPM", "ASPP", "Proposed").
std::string head_label(HeadKind kind);
/// Throws ConfigError on anything but ppm/aspp/ace (case-insensitive).
HeadKind parse_head(const std::string& name);

struct HeadConfig {
  int in_channels = 128;
  int num_classes = 4;
  std::vector<int> ppm_bins{1, 2, 3, 6};
  std::vector<int> aspp_rates{6, 12, 18};
  int ace_kernel = 3;
  AceFuse ace_fuse = AceFuse::kCascade;
  DeformVersion ace_version = DeformVersion::kV2;
};

struct BranchInfo {
  std::string name;
  int out_channels = 0;
  std::size_t params = 0;
};

/// Context aggregation over an N x C x H x W feature map. Output keeps H x W.
template <typename T>
class Head {
 public:
  virtual ~Head() = default;
  virtual HeadKind kind() const = 0;
  virtual Tensor<T> forward(Tape<T>& tape, const Tensor<T>& f, Mode mode) = 0;
  virtual int out_channels() const = 0;
  virtual void collect(const std::string& prefix, ParamList<T>& out) const = 0;
  virtual std::vector<BranchInfo> branches() const = 0;
};

/// Identity passthrough plus one pooled branch per bin count, each C/4 wide.
template <typename T>
class PpmHead final : public Head<T> {
 public:
  PpmHead(const HeadConfig& cfg, Rng& rng);
  HeadKind kind() const override { return HeadKind::kPpm; }
  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& f, Mode mode) override;
  int out_channels() const override;
  void collect(const std::string& prefix, ParamList<T>& out) const override;
  std::vector<BranchInfo> branches() const override;

  /// Per-bin branch outputs of the last forward call, before concatenation.
  const std::vector<Tensor<T>>& last_branches() const { return last_; }
  const std::vector<int>& bins() const { return bins_; }

 private:
  int in_channels_;
  std::vector<int> bins_;
  std::vector<ConvBnRelu<T>> proj_;
  std::vector<Tensor<T>> last_;
};

/// 1x1 conv, one 3x3 atrous conv per rate, and a pooled global branch, each
/// C/8 wide.
template <typename T>
class AsppHead final : public Head<T> {
 public:
  AsppHead(const HeadConfig& cfg, Rng& rng);
  HeadKind kind() const override { return HeadKind::kAspp; }
  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& f, Mode mode) override;
  int out_channels() const override;
  void collect(const std::string& prefix, ParamList<T>& out) const override;
  std::vector<BranchInfo> branches() const override;

  const std::vector<int>& rates() const { return rates_; }
  std::size_t branch_count() const { return 2 + atrous_.size(); }

 private:
  std::vector<int> rates_;
  ConvBnRelu<T> point_;
  std::vector<ConvBnRelu<T>> atrous_;
  ConvBnRelu<T> global_;
};

/// Three deformable blocks, C -> C/4 -> C/8 -> C/8.
template <typename T>
class AceHead final : public Head<T> {
 public:
  AceHead(const HeadConfig& cfg, Rng& rng);
  HeadKind kind() const override { return HeadKind::kAce; }
  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& f, Mode mode) override;
  int out_channels() const override;
  void collect(const std::string& prefix, ParamList<T>& out) const override;
  std::vector<BranchInfo> branches() const override;

  std::vector<DeformBlock<T>>& blocks() { return blocks_; }
  const std::vector<DeformBlock<T>>& blocks() const { return blocks_; }
  AceFuse fuse() const { return fuse_; }

 private:
  AceFuse fuse_;
  std::vector<DeformBlock<T>> blocks_;
};

template <typename T>
std::unique_ptr<Head<T>> make_head(HeadKind kind, const HeadConfig& cfg, Rng& rng);

/// 1x1 conv to K class scores.
template <typename T>
class Classifier {
 public:
  Classifier() = default;
  Classifier(int in_channels, int num_classes, Rng& rng);
  void collect(const std::string& prefix, ParamList<T>& out) const { conv.collect(prefix, out); }

  Conv<T> conv;
};

/// 1x1 classification followed by align_corners bilinear resize.
template <typename T>
Tensor<T> classify_and_upsample(Tape<T>& tape, const Tensor<T>& h, const Classifier<T>& clf, int out_h, int out_w);

/// Plain-text table of branch name, output channels and parameter count for
/// a freshly built head and its classifier.
std::string head_summary(HeadKind kind, const HeadConfig& cfg);

/// Total learnable parameters of head plus classifier.
std::size_t head_param_count(HeadKind kind, const HeadConfig& cfg);

}  // namespace aceseg
