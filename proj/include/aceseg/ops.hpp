#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aceseg/tape.hpp"
#include "aceseg/tensor.hpp"

// Differentiable layer primitives. Every operator takes the tape first; on
// a disabled tape (or when no input requires grad) nothing is recorded and
// the call is a plain forward evaluation.

namespace aceseg {

/// Kernel geometry shared by standard, atrous, and deformable convolution.
/// dilation is the atrous rate; dilation 1 is ordinary convolution.
struct ConvParams {
  int kernel_h = 3;
  int kernel_w = 3;
  int stride = 1;
  int padding = 0;
  int dilation = 1;

  int taps() const noexcept { return kernel_h * kernel_w; }
  /// Throws GeometryError on non-positive values or an empty output.
  int out_h(int in_h) const;
  int out_w(int in_w) const;
  void validate() const;

  static ConvParams square(int k, int stride = 1, int padding = 0, int dilation = 1) {
    return ConvParams{k, k, stride, padding, dilation};
  }
};

/// floor((in + 2*padding - dilation*(kernel-1) - 1) / stride) + 1, or a
/// GeometryError when that is below 1.
int conv_output_size(int in, int kernel, int stride, int padding, int dilation);

/// Learned sampling displacements for deformable convolution.
///
/// offsets is N x 2K x Ho x Wo; channel 2k holds the row displacement and
/// 2k+1 the column displacement of tap k (taps in row-major kernel order),
/// in input-pixel units added to the dilated tap position. modulation is
/// N x K x Ho x Wo with values in [0, 1]; it may be left undefined for v1.
template <typename T>
struct OffsetField {
  Tensor<T> offsets;
  Tensor<T> modulation;
};

enum class Mode { kTrain, kEval };

/// Running statistics owned by one normalisation layer (1 x C x 1 x 1).
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNormState create(int channels) {
    return BatchNormState{Tensor<T>::zeros({1, channels, 1, 1}), Tensor<T>::full({1, channels, 1, 1}, T(1))};
  }
};

/// Integer class map, N x H x W, row-major.
struct LabelMap {
  int n = 0;
  int h = 0;
  int w = 0;
  std::vector<std::int32_t> values;

  LabelMap() = default;
  LabelMap(int n_, int h_, int w_, std::int32_t fill = 0)
      : n(n_), h(h_), w(w_), values(static_cast<std::size_t>(n_) * h_ * w_, fill) {}

  std::size_t size() const noexcept { return values.size(); }
  std::int32_t& at(int b, int y, int x) { return values[(static_cast<std::size_t>(b) * h + y) * w + x]; }
  std::int32_t at(int b, int y, int x) const { return values[(static_cast<std::size_t>(b) * h + y) * w + x]; }
};

inline constexpr std::int32_t kIgnoreIndex = 255;

// --- convolution ---------------------------------------------------------

/// y[i] = sum_k x[i + r*k] * w[k] (+ b) with zero padding. b may be undefined.
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const ConvParams& p);

/// Bilinear read of a single H x W plane at a fractional (row, col);
/// neighbours outside the plane read as zero.
template <typename T>
T bilinear_sample(std::span<const T> plane, int h, int w, T row, T col);

template <typename T>
struct BilinearSample {
  T value;
  T d_row;  // ∂value/∂row
  T d_col;  // ∂value/∂col
};

template <typename T>
BilinearSample<T> bilinear_sample_grad(const T* plane, int h, int w, T row, T col);

/// Differentiable sampler: coords is N x 2 x P x Q of (row, col) pairs,
/// result is N x C x P x Q. Gradients flow to x and coords.
template <typename T>
Tensor<T> sample_bilinear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& coords);

/// y[i] = sum_k x[i + k + Δk] * w[k]; modulation is ignored.
template <typename T>
Tensor<T> deform_conv_v1(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const OffsetField<T>& off,
                         const ConvParams& p);

/// y[i] = sum_k x[i + k + Δk] * w[k] * Δm_k.
template <typename T>
Tensor<T> deform_conv_v2(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const OffsetField<T>& off,
                         const ConvParams& p);

/// Standard convolution producing 3K channels for a deformable layer with
/// geometry p: the first 2K become offsets, the last K go through a sigmoid
/// and become modulation.
template <typename T>
OffsetField<T> offset_predictor(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w_off, const Tensor<T>& b_off,
                                const ConvParams& p);

// --- normalisation and activations ---------------------------------------

template <typename T>
Tensor<T> batch_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, Mode mode);

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x);

// --- resampling and layout ------------------------------------------------

/// Mean over a partition of the plane into bins_h x bins_w cells whose edges
/// sit at floor(j * size / bins).
template <typename T>
Tensor<T> adaptive_avg_pool(Tape<T>& tape, const Tensor<T>& x, int bins_h, int bins_w);

/// Bilinear resize with align_corners semantics (corner pixels map onto
/// corner pixels).
template <typename T>
Tensor<T> upsample_bilinear(Tape<T>& tape, const Tensor<T>& x, int out_h, int out_w);

/// Repeats an N x C x 1 x 1 tensor over an h x w plane.
template <typename T>
Tensor<T> broadcast_spatial(Tape<T>& tape, const Tensor<T>& x, int h, int w);

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const std::vector<Tensor<T>>& xs);

template <typename T>
std::vector<Tensor<T>> split_channels(Tape<T>& tape, const Tensor<T>& x, const std::vector<int>& sizes);

// --- arithmetic ------------------------------------------------------------

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor);

/// Sum of all elements, 1 x 1 x 1 x 1.
template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x);

// --- loss --------------------------------------------------------------------

/// Mean over non-ignored pixels of -log softmax(logits)[label].
template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>& tape, const Tensor<T>& logits, const LabelMap& labels,
                                std::int32_t ignore_index = kIgnoreIndex);

/// Channel-wise softmax, not recorded.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits);

/// Horizontal mirror, not recorded.
template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& x);

}  // namespace aceseg
