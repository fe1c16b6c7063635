#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace halucheck::log {

enum class Level { debug, info, warning, error };

using Sink = std::function<void(Level, std::string_view)>;

namespace detail {
inline std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}
inline Sink& sink() {
    static Sink s = [](Level level, std::string_view msg) {
        static constexpr const char* names[] = {"debug", "info", "warning", "error"};
        std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << '\n';
    };
    return s;
}
inline Level& threshold() {
    static Level l = Level::warning;
    return l;
}
}  // namespace detail

/// Replaces the process-wide sink. Logs always go to the sink, never to stdout.
inline void set_sink(Sink s) {
    std::lock_guard lock(detail::sink_mutex());
    detail::sink() = std::move(s);
}

inline void set_level(Level l) {
    std::lock_guard lock(detail::sink_mutex());
    detail::threshold() = l;
}

inline void write(Level level, std::string_view msg) {
    std::lock_guard lock(detail::sink_mutex());
    if (level < detail::threshold() || !detail::sink()) return;
    detail::sink()(level, msg);
}

inline void warn(std::string_view msg) { write(Level::warning, msg); }
inline void info(std::string_view msg) { write(Level::info, msg); }
inline void error(std::string_view msg) { write(Level::error, msg); }

}  // namespace halucheck::log
