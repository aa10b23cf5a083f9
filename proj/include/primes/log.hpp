#pragma once

#include <functional>
#include <string_view>

namespace primes::log {

enum class Level { debug, info, warn, error };

using Sink = std::function<void(Level, std::string_view)>;

/// Replaces the process-wide sink (stderr by default). Returns the previous one.
Sink set_sink(Sink sink);

void write(Level level, std::string_view message);

inline void info(std::string_view message) { write(Level::info, message); }
inline void warn(std::string_view message) { write(Level::warn, message); }
inline void error(std::string_view message) { write(Level::error, message); }

} // namespace primes::log
