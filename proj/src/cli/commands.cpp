#include "aceseg/cli/commands.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "aceseg/eval/multiscale.hpp"
#include "aceseg/gradcheck.hpp"
#include "aceseg/log.hpp"
#include "aceseg/train/checkpoint.hpp"

namespace fs = std::filesystem;

namespace aceseg {

namespace {

void require(const std::string& value, const char* flag, const char* cmd) {
  if (value.empty()) throw ConfigError(std::string(cmd) + " needs --" + flag);
}

void echo(const ExperimentConfig& cfg) {
  log_info("# effective config");
  std::istringstream ss(echo_config(cfg));
  for (std::string line; std::getline(ss, line);) log_info(line);
}

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Training and evaluation sets: the 90/10 split of one directory, or all of
// data for training and all of val_data for evaluation.
struct Sets {
  Dataset train;
  std::optional<Dataset> val_store;
  std::vector<int> train_idx;
  std::vector<int> val_idx;
  const Dataset& val() const { return val_store ? *val_store : train; }
};

std::vector<int> all_indices(const Dataset& d) {
  std::vector<int> v(d.samples.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<int>(i);
  return v;
}

Sets load_sets(const ExperimentConfig& cfg) {
  Sets s;
  s.train = Dataset::load(cfg.data);
  if (cfg.val_data.empty()) {
    Split sp = split_indices(s.train.manifest.count);
    s.train_idx = std::move(sp.train);
    s.val_idx = std::move(sp.val);
  } else {
    s.val_store = Dataset::load(cfg.val_data);
    if (s.val_store->manifest.classes != s.train.manifest.classes)
      throw ConfigError("training and validation data disagree on the class count");
    s.train_idx = all_indices(s.train);
    s.val_idx = all_indices(*s.val_store);
  }
  if (s.train_idx.empty()) throw ConfigError("no training scenes in " + cfg.data);
  if (s.val_idx.empty()) throw ConfigError("no held-out scenes; need at least 10 scenes or --val-data");
  return s;
}

std::string csv_path_for(const ExperimentConfig& cfg) {
  if (!cfg.csv.empty()) return cfg.csv;
  return fs::path(cfg.out).replace_extension(".csv").string();
}

struct TrainRun {
  TrainReport report;
  double seconds = 0;
};

TrainRun train_and_eval(const ExperimentConfig& cfg, bool warm_start) {
  require(cfg.data, "data", "train");
  require(cfg.out, "out", "train");
  Sets sets = load_sets(cfg);

  ModelConfig mc = cfg.model;
  mc.head_cfg.num_classes = sets.train.manifest.classes;
  SegModel model(mc);
  // fine-tuning: weights from an earlier run, fresh momentum and schedule
  if (warm_start && !cfg.ckpt.empty()) load_weights(cfg.ckpt, model);

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult res = train(model, sets.train, sets.train_idx, cfg.train);
  TrainRun run;
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_train_csv(csv_path_for(cfg), res.history);
  save_checkpoint(cfg.out, model, res.state);
  run.report.history = std::move(res.history);
  run.report.cm = evaluate(model, sets.val(), sets.val_idx);
  return run;
}

}  // namespace

std::string format_metrics(const ConfusionMatrix& cm) {
  return "pixAcc=" + fixed6(cm.pix_acc()) + " mIoU=" + fixed6(cm.mean_iou());
}

void cmd_gen_data(const ExperimentConfig& cfg, std::ostream& out) {
  require(cfg.out, "out", "gen-data");
  cfg.scene.validate();
  if (cfg.num < 1) throw ConfigError("--num must be at least 1");
  const Manifest m = generate_dataset(cfg.out, cfg.num, cfg.scene);
  out << "wrote " << m.count << " scenes to " << cfg.out << "\n";
}

TrainReport cmd_train(const ExperimentConfig& cfg, std::ostream& out) {
  echo(cfg);
  TrainRun run = train_and_eval(cfg, true);
  log_info("trained " + std::to_string(run.report.history.size()) + " iterations in " + fixed6(run.seconds) + " s");
  out << format_metrics(run.report.cm) << "\n";
  return std::move(run.report);
}

ConfusionMatrix cmd_eval(const ExperimentConfig& cfg, std::ostream& out) {
  require(cfg.data, "data", "eval");
  require(cfg.ckpt, "ckpt", "eval");
  echo(cfg);
  LoadedCheckpoint ck = load_checkpoint(cfg.ckpt);

  const Dataset data = Dataset::load(cfg.val_data.empty() ? cfg.data : cfg.val_data);
  if (data.manifest.classes != ck.model->num_classes())
    throw IncompatibleModelError("checkpoint predicts " + std::to_string(ck.model->num_classes()) +
                                 " classes but the data has " + std::to_string(data.manifest.classes));
  std::vector<int> idx;
  if (cfg.split == "all" || !cfg.val_data.empty())
    idx = all_indices(data);
  else
    idx = split_indices(data.manifest.count).val;
  if (idx.empty()) throw ConfigError("nothing to evaluate in the selected split");

  const ConfusionMatrix cm = evaluate(*ck.model, data, idx, cfg.eval);
  out << format_metrics(cm) << "\n";
  try {
    out << "pixAcc_nobg=" << fixed6(cm.pix_acc_no_background()) << " mIoU_nobg=" << fixed6(cm.mean_iou_no_background())
        << "\n";
  } catch (const UndefinedMetricError&) {
    out << "pixAcc_nobg=n/a mIoU_nobg=n/a\n";
  }

  std::ostringstream csv;
  csv << "class,iou\n";
  const auto iou = cm.class_iou();
  for (std::size_t c = 0; c < iou.size(); ++c) csv << c << "," << (std::isnan(iou[c]) ? "nan" : fixed6(iou[c])) << "\n";
  out << csv.str();
  if (!cfg.csv.empty()) {
    std::ofstream f(cfg.csv, std::ios::trunc);
    if (!f) throw ConfigError("cannot write " + cfg.csv);
    f << csv.str();
  }
  return cm;
}

std::string format_compare_table(const std::vector<CompareRow>& rows) {
  std::ostringstream t;
  char buf[96];
  std::snprintf(buf, sizeof buf, "%-10s %8s %8s\n", "head", "pixAcc", "mIoU");
  t << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-10s %8.2f %8.2f\n", head_label(r.head).c_str(), 100 * r.pix_acc, 100 * r.miou);
    t << buf;
  }
  return t.str();
}

std::vector<CompareRow> cmd_compare_heads(const ExperimentConfig& cfg, std::ostream& out) {
  require(cfg.data, "data", "compare-heads");
  const std::string dir = cfg.out.empty() ? "compare-heads" : cfg.out;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create " + dir + ": " + ec.message());
  echo(cfg);

  std::vector<CompareRow> rows;
  for (HeadKind k : {HeadKind::kAspp, HeadKind::kPpm, HeadKind::kAce}) {
    ExperimentConfig c = cfg;
    c.model.head = k;
    c.out = (fs::path(dir) / (head_name(k) + ".ckpt")).string();
    c.csv = (fs::path(dir) / (head_name(k) + ".csv")).string();
    TrainRun run = train_and_eval(c, false);
    log_info("head=" + head_label(k) + " " + format_metrics(run.report.cm) + " seconds=" + fixed6(run.seconds));
    rows.push_back({k, run.report.cm.pix_acc(), run.report.cm.mean_iou()});
  }

  const std::string csv_path = (fs::path(dir) / "compare.csv").string();
  std::ofstream f(csv_path, std::ios::trunc);
  if (!f) throw ConfigError("cannot write " + csv_path);
  f << "head,pixacc,miou\n";
  for (const auto& r : rows) f << head_label(r.head) << "," << fixed6(r.pix_acc) << "," << fixed6(r.miou) << "\n";
  out << format_compare_table(rows);
  return rows;
}

bool cmd_gradcheck(const std::string& op, std::uint64_t seed, std::ostream& out) {
  const std::vector<std::string> ops = op == "all" ? gradcheck_ops() : std::vector<std::string>{op};
  bool ok = true;
  for (const auto& name : ops) {
    const GradCheckReport r = grad_check(name, seed);
    char buf[160];
    std::snprintf(buf, sizeof buf, "op=%s max_rel_error=%.3e tolerance=%.0e eps=%.0e %s\n", name.c_str(),
                  r.max_rel_error, r.tolerance, r.epsilon, r.passed ? "PASS" : "FAIL");
    out << buf;
    if (!r.passed) {
      ok = false;
      for (const auto& in : r.inputs)
        if (in.max_rel_error > r.tolerance) {
          std::snprintf(buf, sizeof buf, "  input=%s index=%zu analytic=%.9g numeric=%.9g rel=%.3e\n", in.name.c_str(),
                        in.worst_index, in.worst_analytic, in.worst_numeric, in.max_rel_error);
          out << buf;
        }
    }
  }
  return ok;
}

void cmd_head_summary(const std::string& head, const ExperimentConfig& cfg, std::ostream& out) {
  HeadConfig hc = cfg.model.head_cfg;
  hc.in_channels = cfg.model.backbone.channels;
  const std::vector<HeadKind> kinds =
      head == "all" ? std::vector<HeadKind>{HeadKind::kAspp, HeadKind::kPpm, HeadKind::kAce}
                    : std::vector<HeadKind>{parse_head(head)};
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (i) out << "\n";
    out << head_summary(kinds[i], hc);
  }
}

// --- argument handling --------------------------------------------------------

namespace {

struct Sub {
  CLI::App* app = nullptr;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> opts;
  std::map<std::string, bool> flags;
  std::map<std::string, CLI::Option*> flag_opts;
  std::string config;

  void opt(const std::string& key, const std::string& help) { opts[key] = app->add_option("--" + key, values[key], help); }
  void flag(const std::string& key, const std::string& help) {
    flag_opts[key] = app->add_flag("--" + key, flags[key], help);
  }
  bool given(const std::string& key) const {
    auto o = opts.find(key);
    if (o != opts.end() && o->second->count() > 0) return true;
    auto f = flag_opts.find(key);
    return f != flag_opts.end() && f->second->count() > 0;
  }

  /// File first, then flags, so flags win.
  ExperimentConfig resolve(std::vector<std::string>* file_keys = nullptr) const {
    ExperimentConfig cfg;
    if (!config.empty())
      for (const auto& [k, v] : read_config_file(config)) {
        apply_setting(cfg, k, v);
        if (file_keys) file_keys->push_back(k);
      }
    for (const auto& [k, o] : opts)
      if (o->count() > 0) apply_setting(cfg, k, values.at(k));
    for (const auto& [k, o] : flag_opts)
      if (o->count() > 0) apply_setting(cfg, k, flags.at(k) ? "true" : "false");
    return cfg;
  }
};

void model_options(Sub& s) {
  s.opt("channels", "backbone output channels C");
  s.opt("aux-channels", "width of the auxiliary tap");
  s.opt("bins", "pyramid pooling bins, comma separated");
  s.opt("rates", "atrous rates, comma separated");
  s.opt("ace-kernel", "deformable kernel size");
  s.opt("ace-fuse", "cascade or concat");
  s.opt("ace-version", "v1 or v2");
}

void train_options(Sub& s) {
  s.opt("data", "dataset directory");
  s.opt("val-data", "separate evaluation dataset (default: 90/10 split of --data)");
  s.opt("epochs", "training epochs");
  s.opt("batch", "batch size");
  s.opt("base-lr", "base learning rate per batch of 16");
  s.opt("crop", "training crop (multiple of 8)");
  s.opt("seed", "seed for init, shuffling and augmentation");
  s.opt("power", "poly schedule power");
  s.opt("momentum", "SGD momentum");
  s.opt("weight-decay", "weight decay (not applied to BatchNorm parameters)");
  s.opt("aux-weight", "auxiliary loss weight");
  s.opt("scale-min", "lower bound of the random rescale");
  s.opt("scale-max", "upper bound of the random rescale");
  model_options(s);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Desk-scale semantic segmentation with deformable context heads"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every command");

  Sub gen, tr, ev, cmp, gc, hs;  // options bind to members, so these stay put
  auto make = [&](Sub& s, const char* name, const char* help) {
    s.app = app.add_subcommand(name, help);
    s.app->add_option("--config", s.config, "key = value file; flags override it");
  };

  make(gen, "gen-data", "write a synthetic dataset");
  gen.opt("out", "output directory");
  gen.opt("num", "number of scenes");
  gen.opt("size", "scene edge in pixels");
  gen.opt("classes", "number of classes including background");
  gen.opt("seed", "dataset seed");
  gen.opt("shapes", "objects per scene");
  gen.opt("min-size", "smallest object extent");
  gen.opt("max-size", "largest object extent");

  make(tr, "train", "train one model and report held-out metrics");
  tr.opt("head", "ppm, aspp or ace");
  tr.opt("out", "checkpoint path");
  tr.opt("csv", "training CSV (default: checkpoint path with .csv)");
  tr.opt("ckpt", "start from these weights (fine-tuning)");
  train_options(tr);

  make(ev, "eval", "evaluate a checkpoint");
  ev.opt("data", "dataset directory");
  ev.opt("val-data", "evaluate all of this dataset instead");
  ev.opt("ckpt", "checkpoint path");
  ev.flag("multiscale", "average over the default scale set with flipping");
  ev.opt("scales", "comma separated scales (engages multi-scale)");
  ev.flag("flip", "add mirrored passes (engages multi-scale)");
  ev.opt("split", "held-out or all");
  ev.opt("csv", "also write the per-class CSV here");

  make(cmp, "compare-heads", "train ASPP, PPM and the proposed head under one budget");
  cmp.opt("out", "output directory for checkpoints and CSVs");
  train_options(cmp);

  make(gc, "gradcheck", "finite-difference gradient check");
  std::string op;
  std::uint64_t gc_seed = 1;
  bool list = false;
  gc.app->add_option("--op", op, "operator name, or all");
  gc.app->add_option("--seed", gc_seed, "case seed");
  gc.app->add_flag("--list", list, "print the registered operators");

  make(hs, "head-summary", "print branch widths and parameter counts");
  std::string head = "all";
  hs.app->add_option("--head", head, "ppm, aspp, ace or all");
  hs.opt("classes", "number of classes");
  model_options(hs);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (gen.app->parsed()) {
    cmd_gen_data(gen.resolve(), out);
  } else if (tr.app->parsed()) {
    cmd_train(tr.resolve(), out);
  } else if (ev.app->parsed()) {
    std::vector<std::string> file_keys;
    ExperimentConfig cfg = ev.resolve(&file_keys);
    const bool scales_set =
        ev.given("scales") || std::find(file_keys.begin(), file_keys.end(), "scales") != file_keys.end();
    if (ev.given("multiscale") && cfg.eval.multiscale) {
      if (!scales_set) cfg.eval.scales = default_scales();
      if (!ev.given("flip")) cfg.eval.flip = true;
    }
    if (ev.given("scales") || (ev.given("flip") && cfg.eval.flip)) cfg.eval.multiscale = true;
    cmd_eval(cfg, out);
  } else if (cmp.app->parsed()) {
    cmd_compare_heads(cmp.resolve(), out);
  } else if (gc.app->parsed()) {
    if (list) {
      for (const auto& name : gradcheck_ops()) out << name << "\n";
      return kExitOk;
    }
    if (op.empty()) throw ConfigError("gradcheck needs --op (or --list)");
    return cmd_gradcheck(op, gc_seed, out) ? kExitOk : kExitCheckFailed;
  } else if (hs.app->parsed()) {
    cmd_head_summary(head, hs.resolve(), out);
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

}  // namespace aceseg
