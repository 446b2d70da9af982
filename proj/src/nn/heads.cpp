#include "aceseg/nn/heads.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

namespace aceseg {

std::string head_name(HeadKind kind) {
  switch (kind) {
    case HeadKind::kPpm: return "ppm";
    case HeadKind::kAspp: return "aspp";
    case HeadKind::kAce: return "ace";
  }
  return "?";
}

std::string head_label(HeadKind kind) {
  switch (kind) {
    case HeadKind::kPpm: return "PPM";
    case HeadKind::kAspp: return "ASPP";
    case HeadKind::kAce: return "Proposed";
  }
  return "?";
}

HeadKind parse_head(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "ppm") return HeadKind::kPpm;
  if (s == "aspp") return HeadKind::kAspp;
  if (s == "ace") return HeadKind::kAce;
  throw ConfigError("unknown head '" + name + "' (expected ppm, aspp or ace)");
}

namespace {

void require_divisible(int c, int by, const char* head) {
  if (c < by || c % by != 0)
    throw ConfigError(std::string(head) + ": in_channels " + std::to_string(c) + " must be a positive multiple of " +
                      std::to_string(by));
}

template <typename M, typename T>
std::size_t count_params(const M& m) {
  ParamList<T> pl;
  m.collect("x", pl);
  return pl.count();
}

}  // namespace

// --- PPM ---------------------------------------------------------------------

template <typename T>
PpmHead<T>::PpmHead(const HeadConfig& cfg, Rng& rng) : in_channels_(cfg.in_channels), bins_(cfg.ppm_bins) {
  require_divisible(cfg.in_channels, 4, "ppm");
  if (bins_.empty()) throw ConfigError("ppm: no bins");
  for (int b : bins_) {
    if (b < 1) throw ConfigError("ppm: bin counts must be positive");
    proj_.emplace_back(cfg.in_channels, cfg.in_channels / 4, ConvParams::square(1), rng);
  }
}

template <typename T>
Tensor<T> PpmHead<T>::forward(Tape<T>& tape, const Tensor<T>& f, Mode mode) {
  const Shape s = f.shape();
  std::vector<Tensor<T>> parts{f};
  last_.clear();
  for (std::size_t i = 0; i < bins_.size(); ++i) {
    // Small inputs (coarse multi-scale passes) get as many bins as fit.
    Tensor<T> pooled = adaptive_avg_pool(tape, f, std::min(bins_[i], s.h), std::min(bins_[i], s.w));
    Tensor<T> b = upsample_bilinear(tape, proj_[i](tape, pooled, mode), s.h, s.w);
    last_.push_back(b);
    parts.push_back(b);
  }
  return concat_channels(tape, parts);
}

template <typename T>
int PpmHead<T>::out_channels() const {
  return in_channels_ + static_cast<int>(bins_.size()) * (in_channels_ / 4);
}

template <typename T>
void PpmHead<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  for (std::size_t i = 0; i < proj_.size(); ++i) proj_[i].collect(prefix + ".pool" + std::to_string(bins_[i]), out);
}

template <typename T>
std::vector<BranchInfo> PpmHead<T>::branches() const {
  std::vector<BranchInfo> rows{{"identity", in_channels_, 0}};
  for (std::size_t i = 0; i < proj_.size(); ++i)
    rows.push_back({"pool" + std::to_string(bins_[i]), proj_[i].out_channels(),
                    count_params<ConvBnRelu<T>, T>(proj_[i])});
  return rows;
}

// --- ASPP --------------------------------------------------------------------

template <typename T>
AsppHead<T>::AsppHead(const HeadConfig& cfg, Rng& rng) : rates_(cfg.aspp_rates) {
  require_divisible(cfg.in_channels, 8, "aspp");
  const int c = cfg.in_channels;
  const int b = c / 8;
  point_ = ConvBnRelu<T>(c, b, ConvParams::square(1), rng);
  for (int r : rates_) {
    if (r < 1) throw ConfigError("aspp: atrous rates must be positive");
    atrous_.emplace_back(c, b, ConvParams::square(3, 1, r, r), rng);
  }
  global_ = ConvBnRelu<T>(c, b, ConvParams::square(1), rng);
}

template <typename T>
Tensor<T> AsppHead<T>::forward(Tape<T>& tape, const Tensor<T>& f, Mode mode) {
  const Shape s = f.shape();
  std::vector<Tensor<T>> parts{point_(tape, f, mode)};
  for (auto& a : atrous_) parts.push_back(a(tape, f, mode));
  Tensor<T> g = global_(tape, adaptive_avg_pool(tape, f, 1, 1), mode);
  parts.push_back(broadcast_spatial(tape, g, s.h, s.w));
  return concat_channels(tape, parts);
}

template <typename T>
int AsppHead<T>::out_channels() const {
  return static_cast<int>(branch_count()) * point_.out_channels();
}

template <typename T>
void AsppHead<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  point_.collect(prefix + ".conv1x1", out);
  for (std::size_t i = 0; i < atrous_.size(); ++i) atrous_[i].collect(prefix + ".atrous" + std::to_string(rates_[i]), out);
  global_.collect(prefix + ".gap", out);
}

template <typename T>
std::vector<BranchInfo> AsppHead<T>::branches() const {
  std::vector<BranchInfo> rows{{"conv1x1", point_.out_channels(), count_params<ConvBnRelu<T>, T>(point_)}};
  for (std::size_t i = 0; i < atrous_.size(); ++i)
    rows.push_back({"atrous" + std::to_string(rates_[i]), atrous_[i].out_channels(),
                    count_params<ConvBnRelu<T>, T>(atrous_[i])});
  rows.push_back({"gap", global_.out_channels(), count_params<ConvBnRelu<T>, T>(global_)});
  return rows;
}

// --- ACE ---------------------------------------------------------------------

template <typename T>
AceHead<T>::AceHead(const HeadConfig& cfg, Rng& rng) : fuse_(cfg.ace_fuse) {
  require_divisible(cfg.in_channels, 8, "ace");
  const int c = cfg.in_channels;
  const int widths[] = {c / 4, c / 8, c / 8};
  int in = c;
  for (int w : widths) {
    blocks_.emplace_back(in, w, cfg.ace_kernel, cfg.ace_version, rng);
    in = w;
  }
}

template <typename T>
Tensor<T> AceHead<T>::forward(Tape<T>& tape, const Tensor<T>& f, Mode mode) {
  std::vector<Tensor<T>> outs;
  Tensor<T> h = f;
  for (auto& b : blocks_) {
    h = b(tape, h, mode);
    outs.push_back(h);
  }
  return fuse_ == AceFuse::kCascade ? h : concat_channels(tape, outs);
}

template <typename T>
int AceHead<T>::out_channels() const {
  if (fuse_ == AceFuse::kCascade) return blocks_.back().out_channels();
  int c = 0;
  for (const auto& b : blocks_) c += b.out_channels();
  return c;
}

template <typename T>
void AceHead<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(prefix + ".block" + std::to_string(i + 1), out);
}

template <typename T>
std::vector<BranchInfo> AceHead<T>::branches() const {
  std::vector<BranchInfo> rows;
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    rows.push_back({"block" + std::to_string(i + 1), blocks_[i].out_channels(),
                    count_params<DeformBlock<T>, T>(blocks_[i])});
  return rows;
}

// --- factory, classifier, summary ---------------------------------------------

template <typename T>
std::unique_ptr<Head<T>> make_head(HeadKind kind, const HeadConfig& cfg, Rng& rng) {
  switch (kind) {
    case HeadKind::kPpm: return std::make_unique<PpmHead<T>>(cfg, rng);
    case HeadKind::kAspp: return std::make_unique<AsppHead<T>>(cfg, rng);
    case HeadKind::kAce: return std::make_unique<AceHead<T>>(cfg, rng);
  }
  throw ConfigError("unknown head kind");
}

template <typename T>
Classifier<T>::Classifier(int in_channels, int num_classes, Rng& rng)
    : conv(in_channels, num_classes, ConvParams::square(1), true, rng) {
  if (num_classes < 2) throw ConfigError("classifier needs at least 2 classes");
}

template <typename T>
Tensor<T> classify_and_upsample(Tape<T>& tape, const Tensor<T>& h, const Classifier<T>& clf, int out_h, int out_w) {
  const Shape s = h.shape();
  if (out_h < s.h || out_w < s.w)
    throw GeometryError("classify_and_upsample: target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                        " is smaller than the feature map " + std::to_string(s.h) + "x" + std::to_string(s.w));
  Tensor<T> logits = clf.conv(tape, h);
  if (out_h == s.h && out_w == s.w) return logits;
  return upsample_bilinear(tape, logits, out_h, out_w);
}

std::size_t head_param_count(HeadKind kind, const HeadConfig& cfg) {
  Rng rng(0);
  auto head = make_head<float>(kind, cfg, rng);
  Classifier<float> clf(head->out_channels(), cfg.num_classes, rng);
  ParamList<float> pl;
  head->collect("head", pl);
  clf.collect("classifier", pl);
  return pl.count();
}

std::string head_summary(HeadKind kind, const HeadConfig& cfg) {
  Rng rng(0);
  auto head = make_head<float>(kind, cfg, rng);
  Classifier<float> clf(head->out_channels(), cfg.num_classes, rng);
  ParamList<float> cp;
  clf.collect("classifier", cp);

  std::string out = "head=" + head_name(kind) + " in_channels=" + std::to_string(cfg.in_channels) +
                    " classes=" + std::to_string(cfg.num_classes) + "\n";
  char line[128];
  std::snprintf(line, sizeof line, "%-12s %8s %10s\n", "branch", "out_ch", "params");
  out += line;
  std::size_t total = 0;
  for (const auto& b : head->branches()) {
    std::snprintf(line, sizeof line, "%-12s %8d %10zu\n", b.name.c_str(), b.out_channels, b.params);
    out += line;
    total += b.params;
  }
  std::snprintf(line, sizeof line, "%-12s %8d %10zu\n", "classifier", cfg.num_classes, cp.count());
  out += line;
  total += cp.count();
  std::snprintf(line, sizeof line, "%-12s %8d %10zu\n", "total", head->out_channels(), total);
  out += line;
  return out;
}

#define ACESEG_INSTANTIATE(T)                                                                                 \
  template class PpmHead<T>;                                                                                  \
  template class AsppHead<T>;                                                                                 \
  template class AceHead<T>;                                                                                  \
  template class Classifier<T>;                                                                               \
  template std::unique_ptr<Head<T>> make_head<T>(HeadKind, const HeadConfig&, Rng&);                          \
  template Tensor<T> classify_and_upsample(Tape<T>&, const Tensor<T>&, const Classifier<T>&, int, int);

ACESEG_INSTANTIATE(float)
ACESEG_INSTANTIATE(double)
#undef ACESEG_INSTANTIATE

}  // namespace aceseg
