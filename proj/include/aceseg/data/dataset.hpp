#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aceseg/data/augment.hpp"
#include "aceseg/data/synth.hpp"
#include "aceseg/ops.hpp"

namespace aceseg {

/// DIR/manifest.txt: "count=N classes=K size=S seed=SEED".
struct Manifest {
  int count = 0;
  int classes = 0;
  int size = 0;
  std::uint64_t seed = 0;
};

std::string image_path(const std::string& dir, int index);  // DIR/images/%06d.ppm
std::string label_path(const std::string& dir, int index);  // DIR/labels/%06d.pgm

void save_pair(const std::string& dir, int index, const ScenePair& pair);
/// Throws FormatError on a malformed file and PairingError when the image
/// and label sizes differ. Label values are not range-checked here.
ScenePair load_pair(const std::string& dir, int index);

void write_manifest(const std::string& dir, const Manifest& m);
Manifest read_manifest(const std::string& dir);

/// Writes `count` scenes (scene i seeded by scene_seed(spec.seed, i)) plus
/// the manifest. Creates the directory tree.
Manifest generate_dataset(const std::string& dir, int count, const SceneSpec& spec);

/// Deterministic 90/10 split: every index with index % 10 == 9 is held out.
struct Split {
  std::vector<int> train;
  std::vector<int> val;
};
Split split_indices(int count);

/// A dataset read fully into memory.
struct Dataset {
  Manifest manifest;
  std::vector<Sample> samples;

  static Dataset load(const std::string& dir);
  std::vector<const Sample*> select(const std::vector<int>& indices) const;
};

/// Images N x 3 x H x W in [0, 1] plus labels.
struct SegBatch {
  Tensor<float> images;
  LabelMap labels;
};

/// Throws ShapeError when the samples disagree on size or the list is empty.
SegBatch make_batch(const std::vector<const Sample*>& samples);

}  // namespace aceseg
