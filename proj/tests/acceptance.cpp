// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
// Criterion 4 trains three models at full desk scale and dominates runtime.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "aceseg/cli/commands.hpp"
#include "aceseg/gradcheck.hpp"
#include "aceseg/log.hpp"
#include "aceseg/ops.hpp"
#include "aceseg/train/optim.hpp"
#include "aceseg/train/schedule.hpp"

using namespace aceseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
  void expect(bool ok, const std::string& why) {
    if (!ok) fail(why);
  }
};

double rel(double a, double b) { return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-8}); }

Tensor<double> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(s.numel());
  for (auto& x : v) x = d(rng);
  return Tensor<double>::from(s, std::move(v));
}

double max_rel(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, rel(a.data()[i], b.data()[i]));
  return m;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CsvRow {
  long long iter;
  double lr, total;
};

std::vector<CsvRow> read_train_csv(const std::string& path) {
  std::istringstream in(slurp(path));
  std::vector<CsvRow> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    CsvRow r{};
    double m, a;
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf,%lf", &r.iter, &r.lr, &m, &a, &r.total) == 5) rows.push_back(r);
  }
  return rows;
}

std::string fmt(const char* f, double a, double b = 0) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

const fs::path& workdir() {
  static const fs::path d = [] {
    const fs::path p = fs::temp_directory_path() / "aceseg_acceptance";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

std::string gen(const std::string& name, int num, int size, std::uint64_t seed) {
  ExperimentConfig c;
  c.out = (workdir() / name).string();
  c.num = num;
  c.scene.size = size;
  c.scene.seed = seed;
  std::ostringstream sink;
  cmd_gen_data(c, sink);
  return c.out;
}

// --- 1 ---------------------------------------------------------------------

Tensor<double> inflate(const Tensor<double>& w, int rate) {
  const Shape s = w.shape();
  auto out = Tensor<double>::zeros({s.n, s.c, rate * (s.h - 1) + 1, rate * (s.w - 1) + 1});
  for (int o = 0; o < s.n; ++o)
    for (int c = 0; c < s.c; ++c)
      for (int a = 0; a < s.h; ++a)
        for (int b = 0; b < s.w; ++b) out.mutable_data()[out.offset(o, c, a * rate, b * rate)] = w.at(o, c, a, b);
  return out;
}

Outcome reductions() {
  Outcome r;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> pick(0, 1 << 20);
  Tape<double> off(false);
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    const int k = pick(rng) % 3 ? 3 : 1;
    const ConvParams p{k, k, 1 + pick(rng) % 2, pick(rng) % 3, 1 + pick(rng) % 3};
    const int n = 1 + pick(rng) % 2, c = 1 + pick(rng) % 3, co = 1 + pick(rng) % 3;
    const int h = 7 + pick(rng) % 6, w = 7 + pick(rng) % 6;
    const auto x = random_tensor({n, c, h, w}, rng);
    const auto wt = random_tensor({co, c, k, k}, rng);
    const int ho = p.out_h(h), wo = p.out_w(w), taps = p.taps();
    const OffsetField<double> f{Tensor<double>::zeros({n, 2 * taps, ho, wo}),
                                Tensor<double>::full({n, taps, ho, wo}, 1.0)};
    const auto ref = conv2d(off, x, wt, Tensor<double>{}, p);
    worst = std::max({worst, max_rel(deform_conv_v1(off, x, wt, f, p), ref), max_rel(deform_conv_v2(off, x, wt, f, p), ref)});
    const auto wi = inflate(wt, p.dilation);
    const ConvParams pi{wi.shape().h, wi.shape().w, p.stride, p.padding, 1};
    worst = std::max(worst, max_rel(conv2d(off, x, wi, Tensor<double>{}, pi), ref));
  }
  r.expect(worst <= 1e-6, "worst relative error " + fmt("%.3g", worst));
  if (r.pass) r.detail = "50 cases, worst relative error " + fmt("%.3g", worst);
  return r;
}

// --- 2 ---------------------------------------------------------------------

Outcome gradients() {
  Outcome r;
  double worst = 0;
  for (const auto& op : gradcheck_ops()) {
    const GradCheckReport g = grad_check(op, 1);
    worst = std::max(worst, g.max_rel_error);
    r.expect(g.passed && g.max_rel_error <= 1e-4, op + " max relative error " + fmt("%.3g", g.max_rel_error));
  }
  if (r.pass) r.detail = std::to_string(gradcheck_ops().size()) + " ops, worst " + fmt("%.3g", worst);
  return r;
}

// --- 3 ---------------------------------------------------------------------

Outcome hand_values() {
  Outcome r;
  auto near = [&](double got, double want, const char* what) {
    r.expect(std::fabs(got - want) <= 1e-4, std::string(what) + fmt(": got %.6f want %.6f", got, want));
  };
  Tape<float> off(false);

  near(conv2d(off, Tensor<float>::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}), Tensor<float>::full({1, 1, 3, 3}, 1),
              Tensor<float>{}, ConvParams::square(3))
           .item(),
       45, "conv");

  const float plane[] = {1, 2, 3, 4};
  near(bilinear_sample<float>(plane, 2, 2, 0.5f, 0.5f), 2.5, "bilinear");

  const OffsetField<float> shift{Tensor<float>::from({1, 2, 1, 4}, {0, 0, 0, 0, 1, 1, 1, 1}), Tensor<float>{}};
  const auto y = deform_conv_v1(off, Tensor<float>::from({1, 1, 1, 4}, {1, 2, 3, 4}), Tensor<float>::full({1, 1, 1, 1}, 1),
                                shift, ConvParams::square(1));
  const double shifted[] = {2, 3, 4, 0};
  for (int i = 0; i < 4; ++i) near(y.data()[i], shifted[i], "shifted offset");

  std::vector<float> grid(16);
  for (int i = 0; i < 16; ++i) grid[i] = static_cast<float>(i + 1);
  const auto pooled = adaptive_avg_pool(off, Tensor<float>::from({1, 1, 4, 4}, grid), 2, 2);
  const double means[] = {3.5, 5.5, 11.5, 13.5};
  for (int i = 0; i < 4; ++i) near(pooled.data()[i], means[i], "pool mean");

  const auto up = upsample_bilinear(off, Tensor<float>::from({1, 1, 1, 2}, {1, 3}), 1, 4);
  const double ups[] = {1, 5.0 / 3.0, 7.0 / 3.0, 3};
  for (int i = 0; i < 4; ++i) near(up.data()[i], ups[i], "upsample");

  near(poly_lr(0.01, 50, 100, 0.9), 0.01 * std::pow(0.5, 0.9), "poly");
  near(poly_lr(0.01, 50, 100, 0.9), 0.005359, "poly");

  std::vector<Param<float>> ps{{"p", Tensor<float>::scalar(0.0f, true), true}};
  OptimizerState st = OptimizerState::for_params(ps);
  for (int s = 0; s < 2; ++s) {
    ps[0].value.mutable_grad()[0] = 1.0f;
    sgd_step(ps, st, 1.0, 0.9, 0.0);
  }
  near(ps[0].value.item(), -2.9, "sgd");

  ConfusionMatrix cm(2);
  cm.update(std::vector<std::int32_t>{0, 0, 1, 1}, std::vector<std::int32_t>{0, 0, 0, 1});
  r.expect(cm.at(0, 0) == 2 && cm.at(0, 1) == 1 && cm.at(1, 0) == 0 && cm.at(1, 1) == 1, "confusion counts");
  near(cm.pix_acc(), 0.75, "pixAcc");
  near(cm.mean_iou(), 7.0 / 12.0, "mIoU");

  near(adjusted_base_lr(0.001, 4), 0.00025, "adjusted lr");
  if (r.pass) r.detail = "all hand values within 1e-4";
  return r;
}

// --- 4 ---------------------------------------------------------------------

Outcome desk_experiment() {
  Outcome r;
  ExperimentConfig c;
  c.data = gen("train200", 200, 64, 1);
  c.val_data = gen("val40", 40, 64, 2);
  c.out = (workdir() / "compare").string();
  c.train.epochs = 15;
  c.train.batch_size = 4;
  std::ostringstream table;
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = cmd_compare_heads(c, table);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fputs(table.str().c_str(), stdout);

  r.expect(secs < 1800, fmt("took %.0f s", secs));
  const char* names[] = {"aspp", "ppm", "ace"};
  const HeadKind order[] = {HeadKind::kAspp, HeadKind::kPpm, HeadKind::kAce};
  r.expect(rows.size() == 3, "expected three rows");
  std::istringstream lines(table.str());
  std::string header, line;
  std::getline(lines, header);
  const char* labels[] = {"ASPP ", "PPM ", "Proposed "};
  std::string summary;
  for (std::size_t i = 0; i < 3 && i < rows.size(); ++i) {
    r.expect(rows[i].head == order[i], "row order");
    r.expect(std::getline(lines, line) && line.starts_with(labels[i]), "table row " + std::to_string(i + 1));
    const auto hist = read_train_csv((fs::path(c.out) / (std::string(names[i]) + ".csv")).string());
    if (hist.size() < 7) {
      r.fail(std::string(names[i]) + ": training log too short");
      continue;
    }
    const double ratio = hist.back().total / hist[5].total;
    r.expect(ratio < 0.4, std::string(names[i]) + fmt(": final/iter5 loss %.3f", ratio));
    r.expect(rows[i].miou >= 0.55, std::string(names[i]) + fmt(": mIoU %.4f", rows[i].miou));
    summary += std::string(names[i]) + fmt(" loss ratio %.3f mIoU %.4f; ", ratio, rows[i].miou);
  }
  if (r.pass) r.detail = summary + fmt("%.0f s", secs);
  return r;
}

// --- 5 ---------------------------------------------------------------------

ExperimentConfig small_run(const std::string& data, const std::string& name, int batch) {
  ExperimentConfig c;
  c.data = data;
  c.out = (workdir() / (name + ".ckpt")).string();
  c.model.head = HeadKind::kAce;
  c.model.backbone.channels = 16;
  c.model.backbone.aux_channels = 8;
  c.train.augment.crop = 32;
  c.train.epochs = 2;
  c.train.batch_size = batch;
  c.train.base_lr = 0.001;
  return c;
}

Outcome schedule() {
  Outcome r;
  const std::string data = gen("sched", 40, 32, 3);
  std::ostringstream sink;
  double first[2] = {0, 0};
  int idx = 0;
  for (int batch : {4, 16}) {
    const ExperimentConfig c = small_run(data, "sched_b" + std::to_string(batch), batch);
    cmd_train(c, sink);
    const auto rows = read_train_csv(fs::path(c.out).replace_extension(".csv").string());
    const std::int64_t total = total_iterations(c.train.epochs, 36, batch);
    r.expect(static_cast<std::int64_t>(rows.size()) == total, "iteration count");
    const double base = c.train.base_lr * batch / 16.0;
    double worst = 0;
    for (const auto& row : rows) worst = std::max(worst, std::fabs(row.lr - base * std::pow(1.0 - double(row.iter) / total, 0.9)));
    r.expect(worst <= 1e-9, "batch " + std::to_string(batch) + fmt(": lr deviates by %.3g", worst));
    if (!rows.empty()) first[idx++] = rows.front().lr;
  }
  r.expect(first[0] == first[1] / 4, fmt("initial lr %.17g vs %.17g", first[0], first[1]));
  r.expect(std::fabs(first[0] - 0.00025) <= 1e-15, "batch-4 initial lr");
  if (r.pass) r.detail = "lr trajectories within 1e-9; batch 4 starts at " + fmt("%.6g", first[0]);
  return r;
}

// --- 6 ---------------------------------------------------------------------

struct SummaryRow {
  std::string name;
  int out_ch;
};

std::vector<SummaryRow> summary_rows(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // head=...
  std::getline(in, line);  // column names
  std::vector<SummaryRow> rows;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    SummaryRow row;
    if (!(ls >> row.name >> row.out_ch) || row.name == "classifier" || row.name == "total") continue;
    rows.push_back(row);
  }
  return rows;
}

Outcome architecture() {
  Outcome r;
  for (int c : {128, 512, 2048}) {
    ExperimentConfig cfg;
    cfg.model.backbone.channels = c;
    const std::string tag = " at C=" + std::to_string(c);
    for (const char* head : {"ace", "aspp", "ppm"}) {
      std::ostringstream out;
      cmd_head_summary(head, cfg, out);
      const auto rows = summary_rows(out.str());
      const std::string h = head;
      if (h == "ace") {
        r.expect(rows.size() == 3, "ace block count" + tag);
        const int want[] = {c / 4, c / 8, c / 8};
        for (std::size_t i = 0; i < rows.size() && i < 3; ++i) r.expect(rows[i].out_ch == want[i], "ace widths" + tag);
      } else if (h == "aspp") {
        r.expect(rows.size() == 5, "aspp branch count" + tag);
        for (const char* b : {"atrous6", "atrous12", "atrous18"})
          r.expect(std::any_of(rows.begin(), rows.end(), [&](const SummaryRow& s) { return s.name == b; }),
                   std::string("aspp missing ") + b + tag);
      } else {
        std::vector<std::string> pools;
        for (const auto& s : rows)
          if (s.name.starts_with("pool")) pools.push_back(s.name);
        r.expect(pools == std::vector<std::string>{"pool1", "pool2", "pool3", "pool6"}, "ppm bins" + tag);
      }
    }
  }
  if (r.pass) r.detail = "ace C/4,C/8,C/8; aspp 5 branches with rates 6,12,18; ppm bins 1,2,3,6";
  return r;
}

// --- 7 ---------------------------------------------------------------------

Outcome determinism() {
  Outcome r;
  const std::string data = gen("determinism", 30, 32, 4);
  std::ostringstream sink;
  ExperimentConfig a = small_run(data, "det_a", 4);
  a.train.base_lr = 0.1;
  ExperimentConfig b = a;
  b.out = (workdir() / "det_b.ckpt").string();
  const TrainReport ra = cmd_train(a, sink);
  cmd_train(b, sink);
  const std::string csv_a = slurp(fs::path(a.out).replace_extension(".csv").string());
  r.expect(!csv_a.empty() && csv_a == slurp(fs::path(b.out).replace_extension(".csv").string()), "training CSVs differ");

  ExperimentConfig e;
  e.data = data;
  e.ckpt = a.out;
  const ConfusionMatrix plain = cmd_eval(e, sink);
  const double trained = ra.cm.mean_iou(), reloaded = plain.mean_iou();
  r.expect(trained == reloaded, fmt("reloaded mIoU %.17g vs %.17g", reloaded, trained));

  e.eval.multiscale = true;
  e.eval.scales = {1.0};
  e.eval.flip = false;
  const ConfusionMatrix ms = cmd_eval(e, sink);
  bool same = true;
  for (int i = 0; i < plain.num_classes(); ++i)
    for (int j = 0; j < plain.num_classes(); ++j) same = same && plain.at(i, j) == ms.at(i, j);
  r.expect(same, "unit-scale multiscale differs from plain eval");
  if (r.pass) r.detail = "CSVs identical; mIoU " + fmt("%.6f", reloaded) + " after reload; unit-scale multiscale equal";
  return r;
}

}  // namespace

int main() {
  if (!std::getenv("ACESEG_LOG")) set_log_level(LogLevel::kQuiet);
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
    double budget;  // seconds, 0 for none beyond the run's own check
  };
  const Criterion all[] = {
      {1, "reduction identities", reductions, 10},
      {2, "gradient suite", gradients, 120},
      {3, "hand values", hand_values, 0},
      {4, "desk-scale head comparison", desk_experiment, 1800},
      {5, "schedule and scaling", schedule, 0},
      {6, "architecture arithmetic", architecture, 0},
      {7, "determinism and persistence", determinism, 0},
  };
  int failed = 0;
  for (const auto& c : all) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = c.run();
    } catch (const std::exception& ex) {
      o.fail(std::string("threw: ") + ex.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget > 0 && secs >= c.budget) o.fail(fmt("took %.1f s, budget %.0f s", secs, c.budget));
    failed += !o.pass;
    std::printf("criterion %d %-28s %s  (%.1f s) %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of 7 criteria passed\n", 7 - failed);
  return failed ? 1 : 0;
}
