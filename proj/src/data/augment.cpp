#include "aceseg/data/augment.hpp"

#include <algorithm>
#include <cmath>

#include "aceseg/error.hpp"
#include "aceseg/ops.hpp"

namespace aceseg {

Sample to_sample(const ScenePair& pair) {
  const Raster& img = pair.image;
  const Raster& lab = pair.label;
  if (img.width != lab.width || img.height != lab.height)
    throw PairingError("image " + std::to_string(img.width) + "x" + std::to_string(img.height) + " vs label " +
                       std::to_string(lab.width) + "x" + std::to_string(lab.height));
  Sample s;
  s.height = img.height;
  s.width = img.width;
  const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
  s.image.resize(3 * plane);
  s.label.resize(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) s.image[c * plane + i] = img.pixels[i * 3 + c] / 255.0f;
    s.label[i] = lab.pixels[i];
  }
  return s;
}

int scaled_extent(int extent, double scale) {
  return std::max(1, static_cast<int>(std::lround(extent * scale)));
}

AugmentDraw draw_augment(int height, int width, const AugmentParams& p, Rng& rng) {
  if (p.crop < 1) throw ConfigError("crop must be positive");
  if (!(p.scale_lo > 0) || p.scale_lo > p.scale_hi) throw ConfigError("scale range must satisfy 0 < lo <= hi");
  AugmentDraw d;
  d.flip = std::bernoulli_distribution(0.5)(rng);
  d.scale = std::uniform_real_distribution<double>(p.scale_lo, p.scale_hi)(rng);
  if (p.scale_lo == p.scale_hi) d.scale = p.scale_lo;
  const int sh = std::max(scaled_extent(height, d.scale), p.crop);
  const int sw = std::max(scaled_extent(width, d.scale), p.crop);
  d.offset_y = std::uniform_int_distribution<int>(0, sh - p.crop)(rng);
  d.offset_x = std::uniform_int_distribution<int>(0, sw - p.crop)(rng);
  return d;
}

Sample flip_sample(const Sample& s) {
  Sample out = s;
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      const std::size_t dst = static_cast<std::size_t>(y) * s.width + x;
      const std::size_t src = static_cast<std::size_t>(y) * s.width + (s.width - 1 - x);
      out.label[dst] = s.label[src];
      for (int c = 0; c < 3; ++c) {
        const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
        out.image[c * plane + dst] = s.image[c * plane + src];
      }
    }
  return out;
}

namespace {

// Pixel-centre mapping: output index o samples input coordinate
// (o + 0.5) * in / out - 0.5, so scale 1 is an exact copy.
struct Axis {
  std::vector<int> lo, hi, nearest;
  std::vector<float> frac;

  Axis(int in, int out) : lo(out), hi(out), nearest(out), frac(out) {
    const double r = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      const double src = std::clamp((o + 0.5) * r - 0.5, 0.0, static_cast<double>(in - 1));
      lo[o] = static_cast<int>(std::floor(src));
      hi[o] = std::min(lo[o] + 1, in - 1);
      frac[o] = static_cast<float>(src - lo[o]);
      nearest[o] = std::min(in - 1, static_cast<int>(std::floor((o + 0.5) * r)));
    }
  }
};

Sample rescale(const Sample& s, int oh, int ow) {
  if (oh == s.height && ow == s.width) return s;
  const Axis ay(s.height, oh), ax(s.width, ow);
  Sample out;
  out.height = oh;
  out.width = ow;
  const std::size_t ip = static_cast<std::size_t>(s.height) * s.width;
  const std::size_t op = static_cast<std::size_t>(oh) * ow;
  out.image.resize(3 * op);
  out.label.resize(op);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const std::size_t o = static_cast<std::size_t>(y) * ow + x;
      out.label[o] = s.label[static_cast<std::size_t>(ay.nearest[y]) * s.width + ax.nearest[x]];
      const float fy = ay.frac[y], fx = ax.frac[x];
      for (int c = 0; c < 3; ++c) {
        const float* p = s.image.data() + c * ip;
        const float a = p[static_cast<std::size_t>(ay.lo[y]) * s.width + ax.lo[x]];
        const float b = p[static_cast<std::size_t>(ay.lo[y]) * s.width + ax.hi[x]];
        const float cc = p[static_cast<std::size_t>(ay.hi[y]) * s.width + ax.lo[x]];
        const float d = p[static_cast<std::size_t>(ay.hi[y]) * s.width + ax.hi[x]];
        out.image[c * op + o] = (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * cc + fx * d);
      }
    }
  }
  return out;
}

}  // namespace

Sample apply_augment(const Sample& s, const AugmentDraw& d, int crop) {
  if (crop < 1) throw ConfigError("crop must be positive");
  const Sample flipped = d.flip ? flip_sample(s) : s;
  const Sample scaled = rescale(flipped, scaled_extent(s.height, d.scale), scaled_extent(s.width, d.scale));
  Sample out;
  out.height = out.width = crop;
  const std::size_t op = static_cast<std::size_t>(crop) * crop;
  const std::size_t sp = static_cast<std::size_t>(scaled.height) * scaled.width;
  out.image.assign(3 * op, 0.0f);
  out.label.assign(op, kIgnoreIndex);
  for (int y = 0; y < crop; ++y) {
    const int sy = y + d.offset_y;
    if (sy >= scaled.height) break;
    for (int x = 0; x < crop; ++x) {
      const int sx = x + d.offset_x;
      if (sx >= scaled.width) break;
      const std::size_t si = static_cast<std::size_t>(sy) * scaled.width + sx;
      const std::size_t o = static_cast<std::size_t>(y) * crop + x;
      out.label[o] = scaled.label[si];
      for (int c = 0; c < 3; ++c) out.image[c * op + o] = scaled.image[c * sp + si];
    }
  }
  return out;
}

Sample augment(const Sample& s, const AugmentParams& params, Rng& rng) {
  return apply_augment(s, draw_augment(s.height, s.width, params, rng), params.crop);
}

}  // namespace aceseg
