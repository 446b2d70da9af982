#pragma once

#include <cstdint>

namespace aceseg {

/// Base rates are quoted per reference batch of 16 and scaled linearly.
double adjusted_base_lr(double base_lr, int batch_size);

/// base * (1 - iter/total)^power. Throws ScheduleOverrunError when
/// iter > total and ConfigError when total <= 0 or iter < 0.
double poly_lr(double base, std::int64_t iter, std::int64_t total, double power = 0.9);

/// epochs * ceil(dataset_size / batch).
std::int64_t total_iterations(int epochs, int dataset_size, int batch_size);

}  // namespace aceseg
