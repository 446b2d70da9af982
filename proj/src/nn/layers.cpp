#include "aceseg/nn/layers.hpp"

#include <cmath>

namespace aceseg {

namespace {

template <typename T>
Tensor<T> he_uniform(Shape s, Rng& rng) {
  const double fan_in = static_cast<double>(s.c) * s.h * s.w;
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> d(-bound, bound);
  std::vector<T> v(s.numel());
  for (auto& x : v) x = static_cast<T>(d(rng));
  return Tensor<T>::from(s, std::move(v), true);
}

}  // namespace

template <typename T>
Conv<T>::Conv(int in_channels, int out_channels, ConvParams p, bool with_bias, Rng& rng) : params(p) {
  p.validate();
  if (in_channels < 1 || out_channels < 1) throw ConfigError("conv: channel counts must be positive");
  weight = he_uniform<T>({out_channels, in_channels, p.kernel_h, p.kernel_w}, rng);
  if (with_bias) bias = Tensor<T>::zeros({1, out_channels, 1, 1}, true);
}

template <typename T>
Tensor<T> Conv<T>::operator()(Tape<T>& tape, const Tensor<T>& x) const {
  return conv2d(tape, x, weight, bias, params);
}

template <typename T>
void Conv<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.params.push_back({prefix + ".weight", weight, true});
  if (bias.defined()) out.params.push_back({prefix + ".bias", bias, true});
}

template <typename T>
void Conv<T>::zero_init() {
  std::fill(weight.mutable_data().begin(), weight.mutable_data().end(), T(0));
  if (bias.defined()) std::fill(bias.mutable_data().begin(), bias.mutable_data().end(), T(0));
}

template <typename T>
BatchNorm<T>::BatchNorm(int channels)
    : gamma(Tensor<T>::full({1, channels, 1, 1}, T(1), true)),
      beta(Tensor<T>::zeros({1, channels, 1, 1}, true)),
      state(BatchNormState<T>::create(channels)) {}

template <typename T>
Tensor<T> BatchNorm<T>::operator()(Tape<T>& tape, const Tensor<T>& x, Mode mode) {
  return batch_norm(tape, x, gamma, beta, state, mode);
}

template <typename T>
void BatchNorm<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.params.push_back({prefix + ".gamma", gamma, false});
  out.params.push_back({prefix + ".beta", beta, false});
  out.buffers.push_back({prefix + ".running_mean", state.running_mean});
  out.buffers.push_back({prefix + ".running_var", state.running_var});
}

template <typename T>
ConvBnRelu<T>::ConvBnRelu(int in_channels, int out_channels, ConvParams p, Rng& rng)
    : conv(in_channels, out_channels, p, false, rng), bn(out_channels) {}

template <typename T>
Tensor<T> ConvBnRelu<T>::operator()(Tape<T>& tape, const Tensor<T>& x, Mode mode) {
  return relu(tape, bn(tape, conv(tape, x), mode));
}

template <typename T>
void ConvBnRelu<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  conv.collect(prefix + ".conv", out);
  bn.collect(prefix + ".bn", out);
}

template <typename T>
DeformBlock<T>::DeformBlock(int in_channels, int out_channels, int kernel, DeformVersion v, Rng& rng)
    : params(ConvParams::square(kernel, 1, kernel / 2, 1)), version(v), bn(out_channels) {
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("deformable block kernel must be odd, got " + std::to_string(kernel));
  predictor = Conv<T>(in_channels, 3 * params.taps(), params, true, rng);
  predictor.zero_init();
  weight = he_uniform<T>({out_channels, in_channels, kernel, kernel}, rng);
}

template <typename T>
Tensor<T> DeformBlock<T>::operator()(Tape<T>& tape, const Tensor<T>& x, Mode mode) {
  OffsetField<T> field = offset_predictor(tape, x, predictor.weight, predictor.bias, params);
  Tensor<T> y = version == DeformVersion::kV2 ? deform_conv_v2(tape, x, weight, field, params)
                                              : deform_conv_v1(tape, x, weight, field, params);
  return relu(tape, bn(tape, y, mode));
}

template <typename T>
void DeformBlock<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  predictor.collect(prefix + ".offset", out);
  out.params.push_back({prefix + ".weight", weight, true});
  bn.collect(prefix + ".bn", out);
}

template <typename T>
void DeformBlock<T>::force_unit_modulation() {
  const int K = params.taps();
  auto b = predictor.bias.mutable_data();
  for (int k = 2 * K; k < 3 * K; ++k) b[k] = T(100);
}

template class Conv<float>;
template class Conv<double>;
template class BatchNorm<float>;
template class BatchNorm<double>;
template class ConvBnRelu<float>;
template class ConvBnRelu<double>;
template class DeformBlock<float>;
template class DeformBlock<double>;

}  // namespace aceseg
