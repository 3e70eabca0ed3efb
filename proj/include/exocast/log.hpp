#pragma once

#include <atomic>
#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

namespace exocast::log {

enum class Level { Debug, Info, Warn, Error };

namespace detail {
struct State {
  std::mutex mutex;
  Level threshold = Level::Warn;
  std::function<void(Level, const std::string&)> sink;
  std::atomic<std::size_t> warnings{0};
};

inline State& state() {
  static State s;
  return s;
}
}  // namespace detail

inline void set_level(Level level) {
  std::lock_guard lock(detail::state().mutex);
  detail::state().threshold = level;
}

inline void write(Level level, const std::string& message) {
  auto& s = detail::state();
  if (level == Level::Warn) ++s.warnings;
  std::lock_guard lock(s.mutex);
  if (s.sink) {
    s.sink(level, message);
    return;
  }
  if (level < s.threshold) return;
  static constexpr const char* names[] = {"debug", "info", "warn", "error"};
  std::clog << "[" << names[static_cast<int>(level)] << "] " << message << '\n';
}

inline void debug(const std::string& m) { write(Level::Debug, m); }
inline void info(const std::string& m) { write(Level::Info, m); }
inline void warn(const std::string& m) { write(Level::Warn, m); }
inline void error(const std::string& m) { write(Level::Error, m); }

/// Total warnings emitted since process start.
inline std::size_t warning_count() { return detail::state().warnings.load(); }

/// Redirects every message to `sink` for the lifetime of the guard (tests use this to capture warnings).
class ScopedSink {
 public:
  explicit ScopedSink(std::function<void(Level, const std::string&)> sink) {
    std::lock_guard lock(detail::state().mutex);
    previous_ = std::exchange(detail::state().sink, std::move(sink));
  }
  ~ScopedSink() {
    std::lock_guard lock(detail::state().mutex);
    detail::state().sink = std::move(previous_);
  }
  ScopedSink(const ScopedSink&) = delete;
  ScopedSink& operator=(const ScopedSink&) = delete;

 private:
  std::function<void(Level, const std::string&)> previous_;
};

}  // namespace exocast::log
