#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <string_view>

namespace firemf {

/// Process-wide warning sink. Warnings go to stderr unless silenced; the
/// counter is always maintained so tests can assert on it.
class Warnings {
 public:
  static Warnings& instance() {
    static Warnings w;
    return w;
  }

  void emit(std::string_view message) {
    count_.fetch_add(1, std::memory_order_relaxed);
    if (quiet_.load(std::memory_order_relaxed)) return;
    std::lock_guard<std::mutex> lock(mutex_);
    std::cerr << "[fire-mf] warning: " << message << '\n';
  }

  std::size_t count() const { return count_.load(std::memory_order_relaxed); }
  void set_quiet(bool quiet) { quiet_.store(quiet, std::memory_order_relaxed); }

 private:
  std::atomic<std::size_t> count_{0};
  std::atomic<bool> quiet_{false};
  std::mutex mutex_;
};

inline void warn(std::string_view message) { Warnings::instance().emit(message); }

}  // namespace firemf
