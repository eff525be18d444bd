#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>

namespace ejfat {

inline constexpr std::uint64_t kNanosPerSecond = 1'000'000'000ULL;

/// Wall-clock source in nanoseconds since the Unix epoch. The simulation
/// harness swaps in a ManualClock so the 1 Hz loops run on virtual time.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::uint64_t now_ns() const = 0;
};

class SystemClock final : public Clock {
 public:
  std::uint64_t now_ns() const override {
    return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(
                                          std::chrono::system_clock::now().time_since_epoch())
                                          .count());
  }
};

class ManualClock final : public Clock {
 public:
  explicit ManualClock(std::uint64_t start_ns = 0) : now_(start_ns) {}

  std::uint64_t now_ns() const override { return now_.load(std::memory_order_relaxed); }
  void set(std::uint64_t t) { now_.store(t, std::memory_order_relaxed); }
  void advance(std::uint64_t dt) { now_.fetch_add(dt, std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> now_;
};

}  // namespace ejfat
