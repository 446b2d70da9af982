#include "aceseg/nn/backbone.hpp"

namespace aceseg {

template <typename T>
Backbone<T>::Backbone(const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.channels < 1 || cfg.aux_channels < 1) throw ConfigError("backbone: channel counts must be positive");
  const int widths[] = {32, 64, cfg.channels};
  int in = 3;
  for (int w : widths) {
    units_.emplace_back(in, w, ConvParams::square(3, 2, 1), rng);
    units_.emplace_back(w, w, ConvParams::square(3, 1, 1), rng);
    in = w;
  }
  aux_proj_ = ConvBnRelu<T>(64, cfg.aux_channels, ConvParams::square(1), rng);
}

template <typename T>
BackboneOutput<T> Backbone<T>::forward(Tape<T>& tape, const Tensor<T>& img, Mode mode) {
  const Shape s = img.shape();
  if (s.c != 3) throw ShapeError("backbone expects 3-channel images, got " + to_string(s));
  if (s.h % 8 != 0 || s.w % 8 != 0)
    throw GeometryError("backbone input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                        " is not a multiple of 8");
  Tensor<T> h = img;
  Tensor<T> stage2;
  for (std::size_t i = 0; i < units_.size(); ++i) {
    h = units_[i](tape, h, mode);
    if (i == 3) stage2 = h;
  }
  const Tensor<T> pooled = adaptive_avg_pool(tape, stage2, s.h / 8, s.w / 8);
  return {h, aux_proj_(tape, pooled, mode)};
}

template <typename T>
void Backbone<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  for (std::size_t i = 0; i < units_.size(); ++i)
    units_[i].collect(prefix + ".stage" + std::to_string(i / 2 + 1) + ".unit" + std::to_string(i % 2 + 1), out);
  aux_proj_.collect(prefix + ".aux", out);
}

template class Backbone<float>;
template class Backbone<double>;

}  // namespace aceseg
