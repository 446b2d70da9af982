#include "aceseg/log.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>

namespace aceseg {

namespace {

std::optional<LogLevel>& override_level() {
  static std::optional<LogLevel> level;
  return level;
}

LogLevel from_env() {
  const char* v = std::getenv("ACESEG_LOG");
  if (!v) return LogLevel::kInfo;
  const std::string s(v);
  if (s == "debug") return LogLevel::kDebug;
  if (s == "quiet") return LogLevel::kQuiet;
  return LogLevel::kInfo;
}

}  // namespace

LogLevel log_level() {
  if (override_level()) return *override_level();
  static const LogLevel env = from_env();
  return env;
}

void set_log_level(LogLevel level) { override_level() = level; }

void log_line(LogLevel level, const std::string& line) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  std::cerr << line << '\n';
}

}  // namespace aceseg
