#pragma once

#include <map>
#include <string>
#include <vector>

#include "aceseg/data/synth.hpp"
#include "aceseg/eval/evaluate.hpp"
#include "aceseg/train/model.hpp"
#include "aceseg/train/trainer.hpp"

namespace aceseg {

/// Everything a command can be told, each field with a default.
struct ExperimentConfig {
  TrainConfig train;
  ModelConfig model;
  SceneSpec scene;
  int num = 100;  // scenes written by gen-data

  std::string data;
  std::string val_data;  // when set, train on all of data and evaluate on all of this
  std::string out;
  std::string ckpt;
  std::string csv;

  EvalOptions eval;
  std::string split = "held-out";  // or "all"

  /// The one seed drives model init, data order and scene generation.
  void set_seed(std::uint64_t seed);
};

/// Config keys in echo order. Keys use dashes; underscores are accepted on
/// input and normalised.
const std::vector<std::string>& config_keys();

/// Throws ConfigError on an unknown key or a malformed value.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// "key = value" lines with '#' comments and blank lines. Throws ConfigError
/// on a line without '=' or an unreadable file.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

/// Every key with its effective value, one "key = value" per line. Feeding
/// the text back through parse_config_text/apply_setting reproduces cfg.
std::string echo_config(const ExperimentConfig& cfg);

}  // namespace aceseg
