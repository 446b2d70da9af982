#include "aceseg/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "aceseg/log.hpp"
#include "aceseg/train/schedule.hpp"

namespace aceseg {

void TrainConfig::validate() const {
  if (!(base_lr > 0)) throw ConfigError("base_lr must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(power > 0)) throw ConfigError("power must be positive");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
  if (!(aux_weight >= 0)) throw ConfigError("aux_weight must be non-negative");
  if (augment.crop < 8 || augment.crop % 8 != 0) throw ConfigError("crop must be a positive multiple of 8");
  if (!(augment.scale_lo > 0 && augment.scale_lo <= augment.scale_hi)) throw ConfigError("bad scale range");
}

StepRecord train_step(SegModel& model, OptimizerState& state, const SegBatch& batch, const TrainConfig& cfg,
                      std::int64_t iter, std::int64_t total_iters) {
  const double lr = poly_lr(adjusted_base_lr(cfg.base_lr, cfg.batch_size), iter, total_iters, cfg.power);
  ParamList<float> pl = model.parameters();
  for (auto& p : pl.params) {
    p.value.release_grad();
    p.value.set_requires_grad(true);
  }

  Tape<float> tape;
  SegModel::Output out = model.forward(tape, batch.images, Mode::kTrain);
  Tensor<float> main = softmax_cross_entropy(tape, out.main, batch.labels);
  Tensor<float> aux = softmax_cross_entropy(tape, out.aux, batch.labels);
  Tensor<float> total = add(tape, main, scale(tape, aux, static_cast<float>(cfg.aux_weight)));

  StepRecord r{iter, lr, main.item(), aux.item(), total.item()};
  if (!std::isfinite(r.total))
    throw DivergenceError(iter, "training diverged at iteration " + std::to_string(iter) + " (loss " +
                                    std::to_string(r.total) + ")");
  tape.backward(total);
  tape.clear();
  sgd_step(pl.params, state, lr, cfg.momentum, cfg.weight_decay);
  return r;
}

std::string format_log_line(const StepRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "iter=%lld lr=%.9g main=%.6f aux=%.6f total=%.6f", static_cast<long long>(r.iter),
                r.lr, r.main, r.aux, r.total);
  return buf;
}

std::string format_csv_row(const StepRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%lld,%.17g,%.9g,%.9g,%.9g", static_cast<long long>(r.iter), r.lr, r.main, r.aux,
                r.total);
  return buf;
}

TrainResult train(SegModel& model, const Dataset& data, const std::vector<int>& indices, const TrainConfig& cfg,
                  const std::function<void(const StepRecord&)>& on_step) {
  cfg.validate();
  if (indices.empty()) throw ConfigError("no training samples");
  const int n = static_cast<int>(indices.size());
  const std::int64_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t total = total_iterations(cfg.epochs, n, cfg.batch_size);

  TrainResult result;
  result.state = OptimizerState::for_params(model.parameters().params);
  // Kept apart from the model's init stream so head choice cannot shift the data order.
  Rng rng(cfg.seed ^ 0x5eedda7a0000ull);
  std::vector<int> order = indices;
  std::int64_t iter = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::int64_t b = 0; b < per_epoch; ++b, ++iter) {
      std::vector<Sample> augmented;
      augmented.reserve(static_cast<std::size_t>(cfg.batch_size));
      for (int k = 0; k < cfg.batch_size; ++k) {
        const int idx = order[static_cast<std::size_t>((b * cfg.batch_size + k) % n)];
        augmented.push_back(augment(data.samples.at(static_cast<std::size_t>(idx)), cfg.augment, rng));
      }
      std::vector<const Sample*> ptrs;
      for (const auto& s : augmented) ptrs.push_back(&s);
      const StepRecord r = train_step(model, result.state, make_batch(ptrs), cfg, iter, total);
      log_line(iter % 10 == 0 || iter + 1 == total ? LogLevel::kInfo : LogLevel::kDebug, format_log_line(r));
      result.history.push_back(r);
      if (on_step) on_step(r);
    }
  }
  return result;
}

void write_train_csv(const std::string& path, const std::vector<StepRecord>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out << kTrainCsvHeader << '\n';
  for (const auto& r : history) out << format_csv_row(r) << '\n';
  if (!out) throw ConfigError("failed writing " + path);
}

}  // namespace aceseg
