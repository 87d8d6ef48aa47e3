#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string_view>

namespace skele::util {

enum class LogLevel { Debug, Info, Warn, Error, Off };

// SKELE_LOG_LEVEL=debug|info|warn|error|off (default warn).
inline LogLevel log_threshold() {
    static const LogLevel level = [] {
        const char* v = std::getenv("SKELE_LOG_LEVEL");
        std::string_view s = v ? v : "warn";
        if (s == "debug") return LogLevel::Debug;
        if (s == "info") return LogLevel::Info;
        if (s == "error") return LogLevel::Error;
        if (s == "off") return LogLevel::Off;
        return LogLevel::Warn;
    }();
    return level;
}

inline void log(LogLevel level, std::string_view msg) {
    if (level < log_threshold()) return;
    static std::mutex mu;
    static constexpr const char* names[] = {"debug", "info", "warn", "error"};
    std::lock_guard lock(mu);
    std::cerr << "[skele " << names[static_cast<int>(level)] << "] " << msg << '\n';
}

} // namespace skele::util
