#include "umt/log.hpp"

#include <atomic>
#include <iostream>

namespace umt {

namespace {

std::atomic<LogLevel> g_level{LogLevel::warning};

const char* level_tag(LogLevel level) {
    switch (level) {
        case LogLevel::debug:
            return "debug";
        case LogLevel::info:
            return "info";
        case LogLevel::warning:
            return "warning";
        case LogLevel::error:
            return "error";
        case LogLevel::silent:
            break;
    }
    return "";
}

}  // namespace

void set_log_level(LogLevel level) { g_level.store(level); }

LogLevel log_level() { return g_level.load(); }

void log_message(LogLevel level, std::string_view message) {
    if (level < g_level.load() || level == LogLevel::silent) {
        return;
    }
    std::clog << "[umt " << level_tag(level) << "] " << message << '\n';
}

}  // namespace umt
