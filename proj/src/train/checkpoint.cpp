#include "aceseg/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace aceseg {

namespace {

constexpr char kMagic[8] = {'A', 'C', 'E', 'S', 'E', 'G', '0', '1'};
constexpr const char* kMetaName = "meta.model";
constexpr const char* kOptimPrefix = "optim.";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(const std::string& b) : b_(b) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n)
      throw CorruptCheckpointError("checkpoint truncated at byte " + std::to_string(pos_) + " (need " +
                                   std::to_string(n) + " more)");
  }
  const std::string& b_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void copy_into(const NamedTensor& src, Tensor<float> dst) {
  if (!(src.value.shape() == dst.shape()))
    throw IncompatibleModelError("checkpoint tensor " + src.name + " has shape " + to_string(src.value.shape()) +
                                 ", model expects " + to_string(dst.shape()));
  auto d = dst.mutable_data();
  std::copy(src.value.data().begin(), src.value.data().end(), d.begin());
}

// Every model tensor must be present exactly once; velocities are optional.
void apply(const std::vector<NamedTensor>& tensors, SegModel& model, OptimizerState* state) {
  ParamList<float> pl = model.parameters();
  std::map<std::string, Tensor<float>> slots;
  std::map<std::string, std::size_t> param_index;
  for (std::size_t i = 0; i < pl.params.size(); ++i) {
    slots[pl.params[i].name] = pl.params[i].value;
    param_index[pl.params[i].name] = i;
  }
  for (const auto& b : pl.buffers) slots[b.name] = b.value;

  OptimizerState fresh = OptimizerState::for_params(pl.params);
  std::map<std::string, bool> seen;
  for (const auto& t : tensors) {
    if (t.name == kMetaName) continue;
    if (seen[t.name]) throw IncompatibleModelError("checkpoint repeats tensor " + t.name);
    seen[t.name] = true;
    if (t.name.rfind(kOptimPrefix, 0) == 0) {
      const std::string pname = t.name.substr(std::strlen(kOptimPrefix));
      auto it = param_index.find(pname);
      if (it == param_index.end()) throw IncompatibleModelError("checkpoint velocity for unknown parameter " + pname);
      copy_into(t, fresh.velocity[it->second]);
      continue;
    }
    auto it = slots.find(t.name);
    if (it == slots.end()) throw IncompatibleModelError("checkpoint tensor " + t.name + " is not part of the model");
    // shape checks happen before any write below
    if (!(t.value.shape() == it->second.shape()))
      throw IncompatibleModelError("checkpoint tensor " + t.name + " has shape " + to_string(t.value.shape()) +
                                   ", model expects " + to_string(it->second.shape()));
  }
  for (const auto& [name, slot] : slots)
    if (!seen.count(name)) throw IncompatibleModelError("checkpoint is missing tensor " + name);

  for (const auto& t : tensors) {
    auto it = slots.find(t.name);
    if (it != slots.end()) copy_into(t, it->second);
  }
  if (state) *state = std::move(fresh);
}

const NamedTensor& find_meta(const std::vector<NamedTensor>& tensors) {
  for (const auto& t : tensors)
    if (t.name == kMetaName) return t;
  throw IncompatibleModelError("checkpoint has no model description");
}

}  // namespace

std::string encode_tensors(const std::vector<NamedTensor>& tensors) {
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    const Shape s = t.value.shape();
    put_u32(out, 4);
    for (int d : {s.n, s.c, s.h, s.w}) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.value.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<NamedTensor> decode_tensors(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw FormatError("not a checkpoint (bad magic)");
  Reader r(bytes);
  r.bytes(sizeof kMagic);
  const std::uint32_t count = r.u32();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32();
    std::string name = r.bytes(len);
    const std::uint32_t rank = r.u32();
    if (rank < 1 || rank > 4) throw FormatError("checkpoint tensor " + name + " has unsupported rank " + std::to_string(rank));
    int dims[4] = {1, 1, 1, 1};
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t v = r.u32();
      if (v == 0 || v > (1u << 30)) throw FormatError("checkpoint tensor " + name + " has bad extent " + std::to_string(v));
      dims[4 - rank + d] = static_cast<int>(v);
      numel *= v;
    }
    if (numel * 4 > r.remaining())
      throw CorruptCheckpointError("checkpoint truncated inside tensor " + name);
    std::vector<float> values(numel);
    for (auto& v : values) v = std::bit_cast<float>(r.u32());
    out.push_back({std::move(name), Tensor<float>::from({dims[0], dims[1], dims[2], dims[3]}, std::move(values))});
  }
  if (!r.done()) throw CorruptCheckpointError("checkpoint has trailing bytes after the last tensor");
  return out;
}

Tensor<float> encode_model_meta(const ModelConfig& cfg) {
  std::vector<float> m{1.0f,
                       static_cast<float>(static_cast<int>(cfg.head)),
                       static_cast<float>(cfg.backbone.channels),
                       static_cast<float>(cfg.backbone.aux_channels),
                       static_cast<float>(cfg.head_cfg.num_classes),
                       static_cast<float>(cfg.head_cfg.ace_kernel),
                       static_cast<float>(static_cast<int>(cfg.head_cfg.ace_fuse)),
                       static_cast<float>(static_cast<int>(cfg.head_cfg.ace_version))};
  m.push_back(static_cast<float>(cfg.head_cfg.ppm_bins.size()));
  for (int b : cfg.head_cfg.ppm_bins) m.push_back(static_cast<float>(b));
  m.push_back(static_cast<float>(cfg.head_cfg.aspp_rates.size()));
  for (int r : cfg.head_cfg.aspp_rates) m.push_back(static_cast<float>(r));
  const int len = static_cast<int>(m.size());
  return Tensor<float>::from({1, 1, 1, len}, std::move(m));
}

ModelConfig decode_model_meta(const Tensor<float>& meta) {
  const auto d = meta.data();
  std::size_t pos = 0;
  auto next = [&]() -> int {
    if (pos >= d.size()) throw IncompatibleModelError("model description is truncated");
    return static_cast<int>(d[pos++]);
  };
  if (next() != 1) throw IncompatibleModelError("unsupported model description version");
  ModelConfig cfg;
  const int head = next();
  if (head < 0 || head > 2) throw IncompatibleModelError("unknown head kind " + std::to_string(head));
  cfg.head = static_cast<HeadKind>(head);
  cfg.backbone.channels = next();
  cfg.backbone.aux_channels = next();
  cfg.head_cfg.in_channels = cfg.backbone.channels;
  cfg.head_cfg.num_classes = next();
  cfg.head_cfg.ace_kernel = next();
  cfg.head_cfg.ace_fuse = next() == 0 ? AceFuse::kCascade : AceFuse::kConcat;
  cfg.head_cfg.ace_version = next() == 0 ? DeformVersion::kV1 : DeformVersion::kV2;
  cfg.head_cfg.ppm_bins.assign(static_cast<std::size_t>(std::max(0, next())), 0);
  for (int& b : cfg.head_cfg.ppm_bins) b = next();
  cfg.head_cfg.aspp_rates.assign(static_cast<std::size_t>(std::max(0, next())), 0);
  for (int& r : cfg.head_cfg.aspp_rates) r = next();
  if (pos != d.size()) throw IncompatibleModelError("model description has trailing values");
  return cfg;
}

void save_checkpoint(const std::string& path, const SegModel& model, const OptimizerState& state) {
  ParamList<float> pl = model.parameters();
  if (state.velocity.size() != pl.params.size())
    throw ContractViolation("optimizer state does not match the model's parameter list");
  std::vector<NamedTensor> tensors;
  tensors.push_back({kMetaName, encode_model_meta(model.config())});
  for (const auto& p : pl.params) tensors.push_back({p.name, p.value});
  for (const auto& b : pl.buffers) tensors.push_back({b.name, b.value});
  for (std::size_t i = 0; i < pl.params.size(); ++i)
    tensors.push_back({kOptimPrefix + pl.params[i].name, state.velocity[i]});

  const std::string bytes = encode_tensors(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("failed writing checkpoint " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  const auto tensors = decode_tensors(read_file(path));
  ModelConfig cfg;
  try {
    cfg = decode_model_meta(find_meta(tensors).value);
  } catch (const ConfigError& e) {
    throw IncompatibleModelError(e.what());
  }
  LoadedCheckpoint out;
  try {
    out.model = std::make_unique<SegModel>(cfg);
  } catch (const ConfigError& e) {
    throw IncompatibleModelError(std::string("stored model description is invalid: ") + e.what());
  }
  apply(tensors, *out.model, &out.state);
  return out;
}

void load_weights(const std::string& path, SegModel& model, OptimizerState* state) {
  const auto tensors = decode_tensors(read_file(path));
  const Tensor<float> want = encode_model_meta(model.config());
  const Tensor<float>& got = find_meta(tensors).value;
  if (!std::equal(want.data().begin(), want.data().end(), got.data().begin(), got.data().end()))
    throw IncompatibleModelError("checkpoint was written for a different architecture");
  apply(tensors, model, state);
}

}  // namespace aceseg
