#include "aceseg/data/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "aceseg/error.hpp"

namespace aceseg {

namespace fs = std::filesystem;

namespace {

std::string numbered(const std::string& dir, const char* sub, int index, const char* ext) {
  char name[32];
  std::snprintf(name, sizeof name, "%06d.%s", index, ext);
  return (fs::path(dir) / sub / name).string();
}

}  // namespace

std::string image_path(const std::string& dir, int index) { return numbered(dir, "images", index, "ppm"); }
std::string label_path(const std::string& dir, int index) { return numbered(dir, "labels", index, "pgm"); }

void save_pair(const std::string& dir, int index, const ScenePair& pair) {
  write_ppm(image_path(dir, index), pair.image);
  write_pgm(label_path(dir, index), pair.label);
}

ScenePair load_pair(const std::string& dir, int index) {
  ScenePair p{read_ppm(image_path(dir, index)), read_pgm(label_path(dir, index))};
  if (p.image.width != p.label.width || p.image.height != p.label.height)
    throw PairingError("pair " + std::to_string(index) + ": image " + std::to_string(p.image.width) + "x" +
                       std::to_string(p.image.height) + " vs label " + std::to_string(p.label.width) + "x" +
                       std::to_string(p.label.height));
  return p;
}

void write_manifest(const std::string& dir, const Manifest& m) {
  std::ofstream f(fs::path(dir) / "manifest.txt", std::ios::trunc);
  if (!f) throw Error("cannot write manifest in " + dir);
  f << "count=" << m.count << " classes=" << m.classes << " size=" << m.size << " seed=" << m.seed << "\n";
}

Manifest read_manifest(const std::string& dir) {
  const fs::path path = fs::path(dir) / "manifest.txt";
  std::ifstream f(path);
  if (!f) throw ConfigError("no manifest at " + path.string());
  Manifest m;
  bool have[4] = {false, false, false, false};
  std::string tok;
  while (f >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw FormatError(path.string() + ": unexpected token '" + tok + "'");
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    try {
      if (key == "count") m.count = std::stoi(val), have[0] = true;
      else if (key == "classes") m.classes = std::stoi(val), have[1] = true;
      else if (key == "size") m.size = std::stoi(val), have[2] = true;
      else if (key == "seed") m.seed = std::stoull(val), have[3] = true;
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": bad value for " + key);
    }
  }
  for (bool h : have)
    if (!h) throw FormatError(path.string() + ": needs count, classes, size and seed");
  if (m.count < 1 || m.classes < 2 || m.size < 1) throw FormatError(path.string() + ": values out of range");
  return m;
}

Manifest generate_dataset(const std::string& dir, int count, const SceneSpec& spec) {
  spec.validate();
  if (count < 1) throw ConfigError("dataset needs at least one scene");
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "images", ec);
  if (!ec) fs::create_directories(fs::path(dir) / "labels", ec);
  if (ec) throw Error("cannot create " + dir + ": " + ec.message());
  for (int i = 0; i < count; ++i) {
    SceneSpec s = spec;
    s.seed = scene_seed(spec.seed, static_cast<std::uint64_t>(i));
    save_pair(dir, i, generate_scene(s));
  }
  Manifest m{count, spec.classes, spec.size, spec.seed};
  write_manifest(dir, m);
  return m;
}

Split split_indices(int count) {
  Split s;
  for (int i = 0; i < count; ++i) (i % 10 == 9 ? s.val : s.train).push_back(i);
  return s;
}

Dataset Dataset::load(const std::string& dir) {
  Dataset d;
  d.manifest = read_manifest(dir);
  d.samples.reserve(d.manifest.count);
  for (int i = 0; i < d.manifest.count; ++i) d.samples.push_back(to_sample(load_pair(dir, i)));
  return d;
}

std::vector<const Sample*> Dataset::select(const std::vector<int>& indices) const {
  std::vector<const Sample*> out;
  for (int i : indices) out.push_back(&samples.at(static_cast<std::size_t>(i)));
  return out;
}

SegBatch make_batch(const std::vector<const Sample*>& samples) {
  if (samples.empty()) throw ShapeError("make_batch: no samples");
  const int h = samples.front()->height, w = samples.front()->width;
  const int n = static_cast<int>(samples.size());
  SegBatch b{Tensor<float>::zeros({n, 3, h, w}), LabelMap(n, h, w)};
  auto img = b.images.mutable_data();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    const Sample& s = *samples[i];
    if (s.height != h || s.width != w) throw ShapeError("make_batch: samples differ in size");
    std::copy(s.image.begin(), s.image.end(), img.begin() + static_cast<std::ptrdiff_t>(i * 3 * plane));
    std::copy(s.label.begin(), s.label.end(), b.labels.values.begin() + static_cast<std::ptrdiff_t>(i * plane));
  }
  return b;
}

}  // namespace aceseg
