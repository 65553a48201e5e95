#pragma once

// Minimal leveled stderr logger; verbosity comes from the MHE_LOG environment variable
// (error, warn, info, debug; default warn).

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace fcmhe::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

inline Level parse_level(std::string_view s, Level fallback = Level::warn) {
    if (s == "error") return Level::error;
    if (s == "warn" || s == "warning") return Level::warn;
    if (s == "info") return Level::info;
    if (s == "debug" || s == "trace") return Level::debug;
    return fallback;
}

inline Level& threshold() {
    static Level level = [] {
        const char* env = std::getenv("MHE_LOG");
        return env ? parse_level(env) : Level::warn;
    }();
    return level;
}

inline bool enabled(Level l) { return static_cast<int>(l) <= static_cast<int>(threshold()); }

inline void write(Level l, const std::string& msg) {
    if (!enabled(l)) return;
    static constexpr const char* names[] = {"error", "warn", "info", "debug"};
    std::cerr << "[" << names[static_cast<int>(l)] << "] " << msg << '\n';
}

inline void error(const std::string& msg) { write(Level::error, msg); }
inline void warn(const std::string& msg) { write(Level::warn, msg); }
inline void info(const std::string& msg) { write(Level::info, msg); }
inline void debug(const std::string& msg) { write(Level::debug, msg); }

}  // namespace fcmhe::log
