#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aceseg/data/dataset.hpp"
#include "aceseg/train/model.hpp"
#include "aceseg/train/optim.hpp"

namespace aceseg {

struct TrainConfig {
  double base_lr = 0.1;  // per reference batch of 16
  int batch_size = 4;
  int epochs = 15;
  double power = 0.9;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double aux_weight = 0.2;
  AugmentParams augment;  // crop and scale range
  std::uint64_t seed = 1;

  /// Throws ConfigError on non-positive rates or sizes.
  void validate() const;
};

struct StepRecord {
  std::int64_t iter = 0;
  double lr = 0;
  double main = 0;
  double aux = 0;
  double total = 0;
};

/// Forward both classifiers on a batch, backward the weighted sum and apply
/// one SGD step at poly_lr(adjusted base, iter, total_iters). Throws
/// DivergenceError when the loss is not finite (before touching weights).
StepRecord train_step(SegModel& model, OptimizerState& state, const SegBatch& batch, const TrainConfig& cfg,
                      std::int64_t iter, std::int64_t total_iters);

/// "iter=I lr=L main=M aux=A total=T"
std::string format_log_line(const StepRecord& r);
/// "iter,lr,main,aux,total" row; lr keeps full precision.
std::string format_csv_row(const StepRecord& r);
inline constexpr const char* kTrainCsvHeader = "iter,lr,main,aux,total";

struct TrainResult {
  std::vector<StepRecord> history;
  OptimizerState state;
};

/// Runs cfg.epochs passes over `indices` of `data`. Each epoch reshuffles,
/// augments every sample and, when the last batch comes up short, tops it
/// up by wrapping round to the start of that epoch's order. on_step sees
/// every record as it is produced.
TrainResult train(SegModel& model, const Dataset& data, const std::vector<int>& indices, const TrainConfig& cfg,
                  const std::function<void(const StepRecord&)>& on_step = {});

void write_train_csv(const std::string& path, const std::vector<StepRecord>& history);

}  // namespace aceseg
