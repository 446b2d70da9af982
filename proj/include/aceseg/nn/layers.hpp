#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aceseg/ops.hpp"
#include "aceseg/rng.hpp"

namespace aceseg {

/// A learnable tensor with its checkpoint name. BatchNorm affine parameters
/// set decay=false and are skipped by weight decay.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  bool decay = true;
};

/// Non-learnable persistent state (BatchNorm running statistics).
template <typename T>
struct Buffer {
  std::string name;
  Tensor<T> value;
};

template <typename T>
struct ParamList {
  std::vector<Param<T>> params;
  std::vector<Buffer<T>> buffers;

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value.numel();
    return n;
  }
};

/// Convolution with seeded He-uniform (fan-in) weights and zero bias.
template <typename T>
class Conv {
 public:
  Conv() = default;
  Conv(int in_channels, int out_channels, ConvParams p, bool bias, Rng& rng);

  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
  void zero_init();

  int in_channels() const { return weight.shape().c; }
  int out_channels() const { return weight.shape().n; }

  Tensor<T> weight;
  Tensor<T> bias;
  ConvParams params;
};

template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(int channels);

  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& x, Mode mode);
  void collect(const std::string& prefix, ParamList<T>& out) const;

  Tensor<T> gamma;
  Tensor<T> beta;
  BatchNormState<T> state;
};

/// conv (no bias) -> BN -> ReLU.
template <typename T>
class ConvBnRelu {
 public:
  ConvBnRelu() = default;
  ConvBnRelu(int in_channels, int out_channels, ConvParams p, Rng& rng);

  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& x, Mode mode);
  void collect(const std::string& prefix, ParamList<T>& out) const;
  int out_channels() const { return conv.out_channels(); }

  Conv<T> conv;
  BatchNorm<T> bn;
};

enum class DeformVersion { kV1, kV2 };

/// offset predictor -> deformable conv -> BN -> ReLU. The predictor starts
/// at zero, so offsets start at 0 and modulation at 0.5.
template <typename T>
class DeformBlock {
 public:
  DeformBlock() = default;
  DeformBlock(int in_channels, int out_channels, int kernel, DeformVersion version, Rng& rng);

  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& x, Mode mode);
  void collect(const std::string& prefix, ParamList<T>& out) const;
  int out_channels() const { return weight.shape().n; }

  /// Saturates the modulation bias so that, with a zero predictor weight,
  /// every modulation value is exactly 1.
  void force_unit_modulation();

  Conv<T> predictor;
  Tensor<T> weight;
  ConvParams params;
  DeformVersion version = DeformVersion::kV2;
  BatchNorm<T> bn;
};

}  // namespace aceseg
