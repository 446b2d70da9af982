#include "aceseg/train/schedule.hpp"

#include <cmath>
#include <string>

#include "aceseg/error.hpp"

namespace aceseg {

double adjusted_base_lr(double base_lr, int batch_size) {
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  return base_lr / 16.0 * batch_size;
}

double poly_lr(double base, std::int64_t iter, std::int64_t total, double power) {
  if (total <= 0) throw ConfigError("poly_lr: total iterations must be positive");
  if (iter < 0) throw ConfigError("poly_lr: negative iteration");
  if (iter > total)
    throw ScheduleOverrunError("poly_lr: iteration " + std::to_string(iter) + " beyond total " + std::to_string(total));
  return base * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(total), power);
}

std::int64_t total_iterations(int epochs, int dataset_size, int batch_size) {
  if (epochs < 1 || dataset_size < 1 || batch_size < 1)
    throw ConfigError("epochs, dataset size and batch size must be positive");
  return static_cast<std::int64_t>(epochs) * ((dataset_size + batch_size - 1) / batch_size);
}

}  // namespace aceseg
