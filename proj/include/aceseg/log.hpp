#pragma once

#include <string>

namespace aceseg {

enum class LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };

/// Read once from ACESEG_LOG ("info" when unset, "debug", or "quiet").
/// Unrecognised values fall back to info.
LogLevel log_level();
void set_log_level(LogLevel level);

/// Writes one line to stderr when `level` is enabled.
void log_line(LogLevel level, const std::string& line);

inline void log_info(const std::string& line) { log_line(LogLevel::kInfo, line); }
inline void log_debug(const std::string& line) { log_line(LogLevel::kDebug, line); }

}  // namespace aceseg
