#include "aceseg/eval/multiscale.hpp"

#include <cmath>

namespace aceseg {

std::vector<std::int32_t> argmax_channels(const Tensor<float>& scores) {
  const Shape s = scores.shape();
  const auto d = scores.data();
  std::vector<std::int32_t> out(static_cast<std::size_t>(s.n) * s.plane());
  for (int n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < s.plane(); ++i) {
      const float* p = d.data() + static_cast<std::size_t>(n) * s.c * s.plane() + i;
      int best = 0;
      for (int c = 1; c < s.c; ++c)
        if (p[c * s.plane()] > p[best * s.plane()]) best = c;
      out[static_cast<std::size_t>(n) * s.plane() + i] = best;
    }
  return out;
}

int multiscale_extent(int extent, double scale) {
  const long r = std::lround(extent * scale / 8.0) * 8;
  return static_cast<int>(std::max(8L, r));
}

namespace {

Tensor<float> resize(const Tensor<float>& x, int h, int w) {
  if (x.shape().h == h && x.shape().w == w) return x;
  Tape<float> off(false);
  return upsample_bilinear(off, x, h, w);
}

}  // namespace

Tensor<float> multiscale_probs(const ScoreFn& score, const Tensor<float>& images, const std::vector<double>& scales,
                               bool flip) {
  if (scales.empty()) throw ConfigError("multiscale evaluation needs at least one scale");
  for (double s : scales)
    if (!(s > 0)) throw ConfigError("scales must be positive");
  const Shape s = images.shape();

  std::vector<float> acc;
  int passes = 0;
  auto add_pass = [&](const Tensor<float>& img, bool mirrored) {
    for (double sc : scales) {
      Tensor<float> in = resize(img, multiscale_extent(s.h, sc), multiscale_extent(s.w, sc));
      Tensor<float> p = resize(softmax_channels(score(in)), s.h, s.w);
      if (mirrored) p = flip_horizontal(p);
      if (acc.empty()) acc.assign(p.numel(), 0.0f);
      if (acc.size() != p.numel()) throw ShapeError("score function changed the class count between passes");
      const auto d = p.data();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += d[i];
      ++passes;
    }
  };
  add_pass(images, false);
  if (flip) add_pass(flip_horizontal(images), true);

  const float inv = 1.0f / static_cast<float>(passes);
  for (auto& v : acc) v *= inv;
  const int k = static_cast<int>(acc.size() / (static_cast<std::size_t>(s.n) * s.plane()));
  return Tensor<float>::from({s.n, k, s.h, s.w}, std::move(acc));
}

std::vector<std::int32_t> multiscale_predict(const ScoreFn& score, const Tensor<float>& images,
                                             const std::vector<double>& scales, bool flip) {
  return argmax_channels(multiscale_probs(score, images, scales, flip));
}

std::vector<std::int32_t> plain_predict(const ScoreFn& score, const Tensor<float>& images) {
  return argmax_channels(softmax_channels(score(images)));
}

std::vector<double> default_scales() { return {0.5, 0.75, 1.0, 1.25, 1.5, 1.75}; }

}  // namespace aceseg
