#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "aceseg/data/pnm.hpp"

namespace aceseg {

struct SceneSpec {
  int size = 64;     // square canvas edge in pixels
  int classes = 4;   // K, including background class 0
  int shapes = 5;    // objects drawn per scene
  int min_px = 6;    // object extent range, drawn uniformly
  int max_px = 48;
  std::uint64_t seed = 0;

  /// Throws ConfigError unless K in [2, 255], shapes >= 0, and the extent
  /// range spans at least a factor of 4.
  void validate() const;
};

/// One generated or loaded scene: interleaved RGB plus one label byte per
/// pixel (255 marks ignored pixels).
struct ScenePair {
  Raster image;
  Raster label;
};

enum class ShapeKind { kRectangle, kCircle, kTriangle };

/// Rectangles, circles and triangles of classes 1..K-1 over a class-0
/// background. Later shapes occlude earlier ones. Fill colours come from a
/// per-class palette with per-object jitter and per-pixel noise. Output is a
/// pure function of the spec. Throws EmptySceneError when shapes == 0.
ScenePair generate_scene(const SceneSpec& spec);

/// Seed of scene `index` in a dataset generated from `dataset_seed`.
std::uint64_t scene_seed(std::uint64_t dataset_seed, std::uint64_t index);

/// Nominal RGB colour of a class.
std::array<std::uint8_t, 3> class_color(int cls, int classes);

/// Per-class counts of drawn objects (index 0 unused), for frequency checks.
std::vector<int> scene_object_classes(const SceneSpec& spec);

}  // namespace aceseg
