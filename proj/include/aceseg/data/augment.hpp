#pragma once

#include <cstdint>
#include <vector>

#include "aceseg/data/synth.hpp"
#include "aceseg/rng.hpp"

namespace aceseg {

/// Float working copy of a scene: planar RGB in [0, 1] and int32 labels.
struct Sample {
  int height = 0;
  int width = 0;
  std::vector<float> image;          // 3 x H x W
  std::vector<std::int32_t> label;   // H x W
};

Sample to_sample(const ScenePair& pair);

struct AugmentParams {
  int crop = 64;
  double scale_lo = 0.5;
  double scale_hi = 2.0;
};

/// The random decisions of one augmentation, drawn up front so tests can
/// force them.
struct AugmentDraw {
  bool flip = false;
  double scale = 1.0;
  int offset_y = 0;  // crop origin in the scaled (padded) frame
  int offset_x = 0;
};

/// Draws flip (p = 0.5), a uniform scale in [scale_lo, scale_hi], and a
/// uniform crop origin. Throws ConfigError on an empty crop or inverted range.
AugmentDraw draw_augment(int height, int width, const AugmentParams& params, Rng& rng);

/// Flip, rescale (bilinear for the image, nearest for labels), pad bottom
/// and right with image 0 / label 255 up to the crop, then crop.
Sample apply_augment(const Sample& s, const AugmentDraw& d, int crop);

Sample augment(const Sample& s, const AugmentParams& params, Rng& rng);

Sample flip_sample(const Sample& s);

/// Rescaled extent used for a given scale factor (at least 1 pixel).
int scaled_extent(int extent, double scale);

}  // namespace aceseg
