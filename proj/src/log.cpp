#include "primes/log.hpp"

#include <iostream>
#include <mutex>

namespace primes::log {

namespace {

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

void stderr_sink(Level level, std::string_view message) {
    static constexpr std::string_view kNames[] = {"debug", "info", "warn", "error"};
    std::cerr << "[primes " << kNames[static_cast<int>(level)] << "] " << message << '\n';
}

Sink& current() {
    static Sink sink = stderr_sink;
    return sink;
}

} // namespace

Sink set_sink(Sink sink) {
    std::lock_guard lock(sink_mutex());
    auto previous = std::move(current());
    current() = sink ? std::move(sink) : Sink(stderr_sink);
    return previous;
}

void write(Level level, std::string_view message) {
    std::lock_guard lock(sink_mutex());
    current()(level, message);
}

} // namespace primes::log
