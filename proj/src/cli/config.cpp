#include "aceseg/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace aceseg {

void ExperimentConfig::set_seed(std::uint64_t seed) {
  train.seed = seed;
  model.seed = seed;
  scene.seed = seed;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string normalise_key(std::string k) {
  std::replace(k.begin(), k.end(), '_', '-');
  return k;
}

template <typename I>
I parse_int(const std::string& key, const std::string& v) {
  I out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& s : split_list(v)) out.push_back(parse_int<int>(key, s));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::vector<double> parse_real_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split_list(v)) out.push_back(parse_real(key, s));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::string real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename V>
std::string join(const std::vector<V>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ",";
    if constexpr (std::is_floating_point_v<V>)
      s += real(xs[i]);
    else
      s += std::to_string(xs[i]);
  }
  return s;
}

struct Entry {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define INT_ENTRY(name, field)                                                                   \
  Entry {                                                                                        \
    name, [](ExperimentConfig& c, const std::string& v) { c.field = parse_int<int>(name, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.field); }                        \
  }
#define REAL_ENTRY(name, field)                                                               \
  Entry {                                                                                     \
    name, [](ExperimentConfig& c, const std::string& v) { c.field = parse_real(name, v); }, \
        [](const ExperimentConfig& c) { return real(c.field); }                               \
  }
#define STR_ENTRY(name, field)                                                  \
  Entry {                                                                       \
    name, [](ExperimentConfig& c, const std::string& v) { c.field = v; },       \
        [](const ExperimentConfig& c) { return c.field; }                       \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      STR_ENTRY("data", data),
      STR_ENTRY("val-data", val_data),
      STR_ENTRY("out", out),
      STR_ENTRY("ckpt", ckpt),
      STR_ENTRY("csv", csv),
      Entry{"head", [](ExperimentConfig& c, const std::string& v) { c.model.head = parse_head(v); },
            [](const ExperimentConfig& c) { return head_name(c.model.head); }},
      Entry{"seed",
            [](ExperimentConfig& c, const std::string& v) { c.set_seed(parse_int<std::uint64_t>("seed", v)); },
            [](const ExperimentConfig& c) { return std::to_string(c.train.seed); }},
      Entry{"classes",
            [](ExperimentConfig& c, const std::string& v) {
              c.scene.classes = parse_int<int>("classes", v);
              c.model.head_cfg.num_classes = c.scene.classes;
            },
            [](const ExperimentConfig& c) { return std::to_string(c.scene.classes); }},
      Entry{"channels",
            [](ExperimentConfig& c, const std::string& v) {
              c.model.backbone.channels = parse_int<int>("channels", v);
              c.model.head_cfg.in_channels = c.model.backbone.channels;
            },
            [](const ExperimentConfig& c) { return std::to_string(c.model.backbone.channels); }},
      INT_ENTRY("aux-channels", model.backbone.aux_channels),
      Entry{"bins", [](ExperimentConfig& c, const std::string& v) { c.model.head_cfg.ppm_bins = parse_int_list("bins", v); },
            [](const ExperimentConfig& c) { return join(c.model.head_cfg.ppm_bins); }},
      Entry{"rates",
            [](ExperimentConfig& c, const std::string& v) { c.model.head_cfg.aspp_rates = parse_int_list("rates", v); },
            [](const ExperimentConfig& c) { return join(c.model.head_cfg.aspp_rates); }},
      INT_ENTRY("ace-kernel", model.head_cfg.ace_kernel),
      Entry{"ace-fuse",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "cascade")
                c.model.head_cfg.ace_fuse = AceFuse::kCascade;
              else if (v == "concat")
                c.model.head_cfg.ace_fuse = AceFuse::kConcat;
              else
                throw ConfigError("ace-fuse: expected cascade or concat, got '" + v + "'");
            },
            [](const ExperimentConfig& c) {
              return std::string(c.model.head_cfg.ace_fuse == AceFuse::kCascade ? "cascade" : "concat");
            }},
      Entry{"ace-version",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "v1")
                c.model.head_cfg.ace_version = DeformVersion::kV1;
              else if (v == "v2")
                c.model.head_cfg.ace_version = DeformVersion::kV2;
              else
                throw ConfigError("ace-version: expected v1 or v2, got '" + v + "'");
            },
            [](const ExperimentConfig& c) {
              return std::string(c.model.head_cfg.ace_version == DeformVersion::kV1 ? "v1" : "v2");
            }},
      INT_ENTRY("epochs", train.epochs),
      INT_ENTRY("batch", train.batch_size),
      REAL_ENTRY("base-lr", train.base_lr),
      REAL_ENTRY("power", train.power),
      REAL_ENTRY("momentum", train.momentum),
      REAL_ENTRY("weight-decay", train.weight_decay),
      REAL_ENTRY("aux-weight", train.aux_weight),
      INT_ENTRY("crop", train.augment.crop),
      REAL_ENTRY("scale-min", train.augment.scale_lo),
      REAL_ENTRY("scale-max", train.augment.scale_hi),
      INT_ENTRY("num", num),
      INT_ENTRY("size", scene.size),
      INT_ENTRY("shapes", scene.shapes),
      INT_ENTRY("min-size", scene.min_px),
      INT_ENTRY("max-size", scene.max_px),
      Entry{"multiscale", [](ExperimentConfig& c, const std::string& v) { c.eval.multiscale = parse_bool("multiscale", v); },
            [](const ExperimentConfig& c) { return std::string(c.eval.multiscale ? "true" : "false"); }},
      Entry{"scales", [](ExperimentConfig& c, const std::string& v) { c.eval.scales = parse_real_list("scales", v); },
            [](const ExperimentConfig& c) { return join(c.eval.scales); }},
      Entry{"flip", [](ExperimentConfig& c, const std::string& v) { c.eval.flip = parse_bool("flip", v); },
            [](const ExperimentConfig& c) { return std::string(c.eval.flip ? "true" : "false"); }},
      Entry{"split",
            [](ExperimentConfig& c, const std::string& v) {
              if (v != "held-out" && v != "all") throw ConfigError("split: expected held-out or all, got '" + v + "'");
              c.split = v;
            },
            [](const ExperimentConfig& c) { return c.split; }},
  };
  return table;
}

#undef INT_ENTRY
#undef REAL_ENTRY
#undef STR_ENTRY

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& e : entries()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const std::string k = normalise_key(trim(key));
  for (const auto& e : entries())
    if (e.key == k) {
      e.set(cfg, trim(value));
      return;
    }
  throw ConfigError("unknown config key '" + k + "'");
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    out.emplace_back(normalise_key(key), trim(line.substr(eq + 1)));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string echo_config(const ExperimentConfig& cfg) {
  std::string s;
  for (const auto& e : entries()) s += e.key + " = " + e.get(cfg) + "\n";
  return s;
}

}  // namespace aceseg
