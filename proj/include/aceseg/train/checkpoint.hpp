#pragma once

#include <memory>
#include <string>
#include <vector>

#include "aceseg/train/model.hpp"
#include "aceseg/train/optim.hpp"

namespace aceseg {

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

/// "ACESEG01", u32 count, then per tensor: u32 name length, name bytes,
/// u32 rank (always 4 on write), rank u32 dims, raw f32 values. All words
/// little-endian.
std::string encode_tensors(const std::vector<NamedTensor>& tensors);

/// Parses a whole image before returning anything. Bad magic or an
/// unsupported rank is a FormatError, running out of bytes (or trailing
/// garbage) a CorruptCheckpointError. Ranks below 4 are padded with
/// leading ones.
std::vector<NamedTensor> decode_tensors(const std::string& bytes);

/// Architecture fingerprint stored next to the weights as "meta.model".
Tensor<float> encode_model_meta(const ModelConfig& cfg);
ModelConfig decode_model_meta(const Tensor<float>& meta);

void save_checkpoint(const std::string& path, const SegModel& model, const OptimizerState& state);

struct LoadedCheckpoint {
  std::unique_ptr<SegModel> model;
  OptimizerState state;
};

/// Rebuilds the model from the stored meta and copies every tensor in.
/// Unknown names, shape mismatches and missing parameters or buffers raise
/// IncompatibleModelError. Missing optimizer velocities load as zeros.
LoadedCheckpoint load_checkpoint(const std::string& path);

/// Loads weights into an existing model; the stored meta must agree with
/// the model's architecture.
void load_weights(const std::string& path, SegModel& model, OptimizerState* state = nullptr);

}  // namespace aceseg
