#pragma once

#include <string_view>

namespace umt {

enum class LogLevel { debug = 0, info = 1, warning = 2, error = 3, silent = 4 };

/// Messages below this level are dropped. Defaults to warning.
void set_log_level(LogLevel level);
LogLevel log_level();

void log_message(LogLevel level, std::string_view message);

inline void log_info(std::string_view message) { log_message(LogLevel::info, message); }
inline void log_warning(std::string_view message) { log_message(LogLevel::warning, message); }

}  // namespace umt
