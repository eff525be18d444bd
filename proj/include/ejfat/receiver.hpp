#pragma once
// Compute-node side: per-port reassembly, channel aggregation, the bounded
// event queue and the PID loop feeding fill reports.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <thread>
#include <vector>

#include "ejfat/clock.hpp"
#include "ejfat/controlplane.hpp"
#include "ejfat/event.hpp"
#include "ejfat/net.hpp"

namespace ejfat::receiver {

inline constexpr Tick kTickWindow = 64;
inline constexpr std::size_t kDefaultQueueCapacity = 256;
inline constexpr std::uint64_t kReassemblyTimeoutNs = 2 * kNanosPerSecond;
/// Larger total_length values are rejected as malformed.
inline constexpr std::uint32_t kMaxChannelPayload = 1U << 28;

/// Receiver-side counters. ingested = applied + duplicates + stale + malformed.
struct ReassemblyCounters {
  std::uint64_t ingested = 0;
  std::uint64_t applied = 0;
  std::uint64_t duplicates = 0;  // already held, or for an already completed key
  std::uint64_t stale = 0;       // older than the tick window
  std::uint64_t malformed = 0;   // decode failure, bad bounds, mismatched overlap
  std::uint64_t poisoned = 0;    // buffers abandoned after a mismatched overlap
  std::uint64_t completed = 0;
  std::uint64_t expired = 0;     // incomplete buffers timed out or pushed out of the window
};

struct CompletedChannel {
  Tick tick = 0;
  std::uint16_t channel = 0;
  Bytes payload;
};

/// Reassembles (tick, channel) buffers arriving on one port. Not
/// thread-safe; each port owns one.
class Reassembler {
 public:
  explicit Reassembler(Tick tick_window = kTickWindow, std::uint64_t timeout_ns = kReassemblyTimeoutNs);

  /// `datagram` starts at the reassembly header (LB header already stripped).
  std::optional<CompletedChannel> ingest(std::span<const std::uint8_t> datagram, std::uint64_t now_ns);
  /// Drops incomplete buffers first seen more than the timeout ago.
  void expire(std::uint64_t now_ns);

  const ReassemblyCounters& counters() const noexcept { return counters_; }
  std::size_t live_buffers() const noexcept { return buffers_.size(); }
  std::optional<Tick> newest_completed() const noexcept { return newest_completed_; }

 private:
  using Key = std::pair<Tick, std::uint16_t>;
  struct Buffer {
    std::uint32_t total_length = 0;
    std::map<std::uint32_t, std::uint32_t> intervals;  // start -> end, disjoint
    std::uint64_t covered = 0;
    Bytes payload;
    std::uint64_t first_seen_ns = 0;
    bool poisoned = false;
  };

  bool stale(Tick tick) const noexcept;
  void advance_window(Tick completed_tick);

  Tick window_;
  std::uint64_t timeout_ns_;
  std::map<Key, Buffer> buffers_;
  std::set<Key> completed_;
  std::optional<Tick> newest_completed_;
  ReassemblyCounters counters_;
};

struct AggregatorCounters {
  std::uint64_t events = 0;
  std::uint64_t timeouts = 0;       // partial events discarded
  std::uint64_t late_channels = 0;  // channels arriving for an already closed tick
  std::uint64_t unexpected_channels = 0;
};

/// Joins completed channels of one tick into an Event.
class EventAggregator {
 public:
  EventAggregator(std::vector<std::uint16_t> expected_channels, Tick tick_window = kTickWindow,
                  std::uint64_t timeout_ns = kReassemblyTimeoutNs);

  std::optional<Event> add(CompletedChannel channel, std::uint64_t now_ns);
  /// Discards ticks still incomplete after the timeout. Returns their ticks.
  std::vector<Tick> expire(std::uint64_t now_ns);

  const AggregatorCounters& counters() const noexcept { return counters_; }
  std::size_t pending() const noexcept { return pending_.size(); }

 private:
  struct Pending {
    std::uint64_t first_seen_ns = 0;
    std::map<std::uint16_t, Bytes> channels;
  };
  void close(Tick tick);

  std::set<std::uint16_t> expected_;
  Tick window_;
  std::uint64_t timeout_ns_;
  std::map<Tick, Pending> pending_;
  std::set<Tick> closed_;
  AggregatorCounters counters_;
};

/// Bounded FIFO; pushing into a full queue evicts the oldest event.
class EventQueue {
 public:
  explicit EventQueue(std::size_t capacity = kDefaultQueueCapacity);

  /// Returns the evicted event, if any.
  std::optional<Event> push(Event e);
  std::optional<Event> try_pop();
  /// Waits up to timeout for an event.
  std::optional<Event> pop_wait(std::chrono::milliseconds timeout);

  std::size_t depth() const;
  std::size_t capacity() const noexcept { return capacity_; }
  double fill() const;
  std::uint64_t pushed() const;
  std::uint64_t popped() const;
  std::uint64_t evicted() const;

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Event> q_;
  std::uint64_t pushed_ = 0;
  std::uint64_t popped_ = 0;
  std::uint64_t evicted_ = 0;
};

struct PidGains {
  double kp = 0.5;
  double ki = 0.02;
  double kd = 3.0;
  double setpoint = 0.5;
  double integral_limit = 2.0;
};

/// Discrete PID at a fixed 1 s period. The derivative term is skipped on the
/// first step.
class PidController {
 public:
  explicit PidController(PidGains gains = {}) : gains_(gains) {}
  double step(double fill);
  void reset();
  const PidGains& gains() const noexcept { return gains_; }
  double integral() const noexcept { return integral_; }

 private:
  PidGains gains_;
  double integral_ = 0.0;
  std::optional<double> prev_error_;
};

struct ReceiverConfig {
  std::uint16_t base_port = 0;
  std::uint16_t port_count = 1;
  std::vector<std::uint16_t> expected_channels{0};
  std::size_t queue_capacity = kDefaultQueueCapacity;
  Tick tick_window = kTickWindow;
  std::uint64_t reassembly_timeout_ns = kReassemblyTimeoutNs;
  PidGains gains;
};

struct ReceiverCounters {
  ReassemblyCounters reassembly;  // summed over ports
  AggregatorCounters aggregation;
  std::uint64_t queued = 0;
  std::uint64_t evicted = 0;
  std::uint64_t consumed = 0;
  std::size_t depth = 0;
};

/// Sockets-free receiver core. Ports may be driven from separate threads;
/// aggregation and the queue are serialized internally.
class Receiver {
 public:
  using EvictionHook = std::function<void(const Event&)>;

  explicit Receiver(ReceiverConfig config);

  const ReceiverConfig& config() const noexcept { return config_; }

  /// `port_index` in [0, port_count). Returns the tick of an event that
  /// became complete and was queued.
  std::optional<Tick> ingest(std::size_t port_index, std::span<const std::uint8_t> datagram,
                             std::uint64_t now_ns);
  /// Times out stale reassembly buffers and partial events.
  void housekeeping(std::uint64_t now_ns);

  std::optional<Event> pop_event();
  std::optional<Event> pop_event_wait(std::chrono::milliseconds timeout);
  EventQueue& queue() noexcept { return queue_; }
  double fill() const { return queue_.fill(); }

  /// Runs one PID step on the current fill.
  controlplane::FillReport make_report(controlplane::SessionId session, std::uint64_t now_ns);
  void set_ready(bool ready) noexcept { ready_.store(ready, std::memory_order_relaxed); }
  bool ready() const noexcept { return ready_.load(std::memory_order_relaxed); }
  void on_eviction(EvictionHook hook) { eviction_hook_ = std::move(hook); }

  ReceiverCounters counters() const;

 private:
  ReceiverConfig config_;
  std::vector<std::unique_ptr<std::mutex>> port_mu_;
  std::vector<Reassembler> ports_;
  mutable std::mutex agg_mu_;
  EventAggregator aggregator_;
  EventQueue queue_;
  std::mutex pid_mu_;
  PidController pid_;
  std::atomic<bool> ready_{false};
  EvictionHook eviction_hook_;
};

}  // namespace ejfat::receiver
