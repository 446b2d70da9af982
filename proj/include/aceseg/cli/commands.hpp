#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "aceseg/cli/config.hpp"
#include "aceseg/eval/metrics.hpp"

namespace aceseg {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitUsage = 2, kExitDiverged = 3 };

/// Full command line (args[0] is the program name). Never throws; every
/// failure maps to an exit code with a message on err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// The commands themselves, for callers that already hold a config. They
// throw library errors; run_cli does the exit-code mapping.

void cmd_gen_data(const ExperimentConfig& cfg, std::ostream& out);

struct TrainReport {
  std::vector<StepRecord> history;
  ConfusionMatrix cm{2};
};
TrainReport cmd_train(const ExperimentConfig& cfg, std::ostream& out);

ConfusionMatrix cmd_eval(const ExperimentConfig& cfg, std::ostream& out);

struct CompareRow {
  HeadKind head;
  double pix_acc = 0;
  double miou = 0;
};
/// Rows in table order: ASPP, PPM, Proposed.
std::vector<CompareRow> cmd_compare_heads(const ExperimentConfig& cfg, std::ostream& out);
std::string format_compare_table(const std::vector<CompareRow>& rows);

/// Returns true when every requested op passes.
bool cmd_gradcheck(const std::string& op, std::uint64_t seed, std::ostream& out);

void cmd_head_summary(const std::string& head, const ExperimentConfig& cfg, std::ostream& out);

/// "pixAcc=P mIoU=M" with six decimals.
std::string format_metrics(const ConfusionMatrix& cm);

}  // namespace aceseg
