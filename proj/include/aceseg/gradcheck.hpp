#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace aceseg {

struct GradCheckInput {
  std::string name;
  std::size_t elements = 0;
  double max_rel_error = 0;
  std::size_t worst_index = 0;  // element with the largest error
  double worst_analytic = 0;
  double worst_numeric = 0;
};

struct GradCheckReport {
  std::string op;
  double max_rel_error = 0;
  double tolerance = 0;
  double epsilon = 0;
  bool passed = false;
  std::vector<GradCheckInput> inputs;
};

/// Names accepted by grad_check, in registry order.
std::vector<std::string> gradcheck_ops();

/// Compares tape gradients of sum(op(inputs) * R), R a fixed random tensor,
/// against central differences for every element of every differentiable
/// input, all in double precision. Relative error is
/// |a - n| / max(|a|, |n|, 1e-8). The default step of 1e-5 keeps rounding
/// noise below the smallest gradient entries of the deeper cases while
/// staying far inside the 1e-3 off-grid margin of sampled offsets. Throws
/// ConfigError for an unknown op.
GradCheckReport grad_check(const std::string& op, std::uint64_t seed,
                           std::optional<double> epsilon = std::nullopt, double tolerance = 1e-4);

}  // namespace aceseg
