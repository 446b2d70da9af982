#include "aceseg/data/synth.hpp"

#include <algorithm>
#include <cmath>

#include "aceseg/error.hpp"
#include "aceseg/rng.hpp"

namespace aceseg {

void SceneSpec::validate() const {
  if (size < 8) throw ConfigError("scene size must be at least 8");
  if (classes < 2 || classes > 255) throw ConfigError("classes must be in [2, 255], got " + std::to_string(classes));
  if (shapes < 0) throw ConfigError("shapes per scene must be non-negative");
  if (min_px < 1 || max_px < 4 * min_px)
    throw ConfigError("object size range [" + std::to_string(min_px) + ", " + std::to_string(max_px) +
                      "] must span at least 4x");
}

std::uint64_t scene_seed(std::uint64_t dataset_seed, std::uint64_t index) {
  // splitmix64 finaliser over the pair.
  std::uint64_t z = dataset_seed * 0x9E3779B97F4A7C15ull + index + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::array<std::uint8_t, 3> class_color(int cls, int classes) {
  if (cls == 0) return {70, 70, 70};
  const double h = 6.0 * (cls - 1) / (classes - 1);
  const double s = 0.75, v = 0.9;
  const double c = v * s;
  const double x = c * (1 - std::fabs(std::fmod(h, 2.0) - 1));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h) % 6) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = v - c;
  auto q = [&](double u) { return static_cast<std::uint8_t>(std::lround(255 * (u + m))); };
  return {q(r), q(g), q(b)};
}

namespace {

struct Object {
  ShapeKind kind;
  int cls;
  double cy, cx;
  double half_h, half_w;
  std::array<int, 3> color;
};

std::vector<Object> draw_objects(const SceneSpec& spec, Rng& rng) {
  std::uniform_int_distribution<int> kind(0, 2);
  std::uniform_int_distribution<int> cls(1, spec.classes - 1);
  std::uniform_int_distribution<int> extent(spec.min_px, spec.max_px);
  std::uniform_real_distribution<double> pos(0.0, spec.size);
  std::uniform_real_distribution<double> aspect(0.5, 1.0);
  std::uniform_int_distribution<int> jitter(-25, 25);
  std::bernoulli_distribution transpose(0.5);
  std::vector<Object> out;
  for (int i = 0; i < spec.shapes; ++i) {
    Object o;
    o.kind = static_cast<ShapeKind>(kind(rng));
    o.cls = cls(rng);
    const int e = extent(rng);
    o.cy = pos(rng);
    o.cx = pos(rng);
    o.half_h = o.half_w = e / 2.0;
    if (o.kind == ShapeKind::kRectangle) {
      const double a = aspect(rng);
      (transpose(rng) ? o.half_h : o.half_w) *= a;
    }
    const auto base = class_color(o.cls, spec.classes);
    for (int ch = 0; ch < 3; ++ch) o.color[ch] = base[ch] + jitter(rng);
    out.push_back(o);
  }
  return out;
}

bool covers(const Object& o, double y, double x) {
  const double dy = y - o.cy;
  const double dx = x - o.cx;
  switch (o.kind) {
    case ShapeKind::kRectangle:
      return std::fabs(dy) <= o.half_h && std::fabs(dx) <= o.half_w;
    case ShapeKind::kCircle:
      return dy * dy + dx * dx <= o.half_w * o.half_w;
    case ShapeKind::kTriangle: {
      // Apex up, base at cy + half_h; width shrinks linearly towards the apex.
      if (dy < -o.half_h || dy > o.half_h) return false;
      const double t = (dy + o.half_h) / (2 * o.half_h);
      return std::fabs(dx) <= t * o.half_w;
    }
  }
  return false;
}

}  // namespace

std::vector<int> scene_object_classes(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::vector<int> counts(spec.classes, 0);
  for (const auto& o : draw_objects(spec, rng)) ++counts[o.cls];
  return counts;
}

ScenePair generate_scene(const SceneSpec& spec) {
  spec.validate();
  if (spec.shapes == 0) throw EmptySceneError("scene spec asks for zero shapes");
  Rng rng(spec.seed);
  const auto objects = draw_objects(spec, rng);

  const int n = spec.size;
  std::vector<std::array<int, 3>> color(static_cast<std::size_t>(n) * n);
  std::vector<std::uint8_t> label(static_cast<std::size_t>(n) * n, 0);
  std::uniform_int_distribution<int> bg_jitter(-20, 20);
  const auto bg = class_color(0, spec.classes);
  const std::array<int, 3> background{bg[0] + bg_jitter(rng), bg[1] + bg_jitter(rng), bg[2] + bg_jitter(rng)};
  std::fill(color.begin(), color.end(), background);

  for (const auto& o : objects) {
    const int y0 = std::max(0, static_cast<int>(std::floor(o.cy - o.half_h)));
    const int y1 = std::min(n - 1, static_cast<int>(std::ceil(o.cy + o.half_h)));
    const int x0 = std::max(0, static_cast<int>(std::floor(o.cx - o.half_w)));
    const int x1 = std::min(n - 1, static_cast<int>(std::ceil(o.cx + o.half_w)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (covers(o, y + 0.5, x + 0.5)) {
          label[static_cast<std::size_t>(y) * n + x] = static_cast<std::uint8_t>(o.cls);
          color[static_cast<std::size_t>(y) * n + x] = o.color;
        }
  }

  std::normal_distribution<double> noise(0.0, 12.0);
  ScenePair p;
  p.image = Raster{n, n, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(n) * n * 3)};
  p.label = Raster{n, n, 1, std::move(label)};
  for (std::size_t i = 0; i < color.size(); ++i)
    for (int ch = 0; ch < 3; ++ch) {
      const double v = color[i][ch] + noise(rng);
      p.image.pixels[i * 3 + ch] = static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
    }
  return p;
}

}  // namespace aceseg
