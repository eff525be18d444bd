#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ejfat/clock.hpp"
#include "ejfat/dataplane.hpp"
#include "ejfat/error.hpp"
#include "ejfat/wire.hpp"

namespace ejfat::controlplane {

using dataplane::EpochId;
using dataplane::SessionId;
using InstanceId = std::uint32_t;

/// Latest queue state a compute node reports once per second.
struct FillReport {
  SessionId session_id = dataplane::kNoMember;
  double queue_fill = 0.0;       // [0, 1]
  double control_signal = 0.0;   // receiver PID output, [-1, 1]
  bool ready = true;
  std::uint64_t wallclock_ns = 0;

  friend bool operator==(const FillReport&, const FillReport&) = default;
};

/// Sliding-window least-squares line through (wallclock, latest_tick) sync
/// samples, merged across all senders of one instance.
class TickPredictor {
 public:
  struct Sample {
    std::uint32_t source_id = 0;
    std::uint64_t wallclock_ns = 0;
    Tick tick = 0;

    friend bool operator==(const Sample&, const Sample&) = default;
  };

  explicit TickPredictor(std::size_t window = 16);

  /// Returns false (and stores nothing) if the tick regresses for that source.
  bool add_sample(std::uint32_t source_id, std::uint64_t wallclock_ns, Tick tick);

  bool empty() const noexcept { return samples_.empty(); }
  std::size_t window() const noexcept { return window_; }
  const std::deque<Sample>& samples() const noexcept { return samples_; }
  const std::map<std::uint32_t, Tick>& last_tick_by_source() const noexcept { return last_by_source_; }

  /// Ticks per second, never negative.
  double slope() const noexcept { return slope_; }
  /// Largest tick ever observed; predictions are clamped to it from below.
  Tick newest_tick() const noexcept { return newest_tick_; }

  /// nullopt until at least one sample was ingested.
  std::optional<Tick> predict(std::uint64_t at_ns) const;

  /// Rebuilds the model from persisted state.
  void restore(std::deque<Sample> samples, std::map<std::uint32_t, Tick> last_by_source,
               Tick newest_tick);

 private:
  void refit();

  std::size_t window_;
  std::deque<Sample> samples_;
  std::map<std::uint32_t, Tick> last_by_source_;
  Tick newest_tick_ = 0;

  // Model: tick(t) = base_tick + mean_y + slope * (t - base_t - mean_x)
  std::uint64_t base_t_ns_ = 0;
  Tick base_tick_ = 0;
  long double mean_x_s_ = 0;
  long double mean_y_ = 0;
  double slope_ = 0;
};

/// session -> raw weight, only for members taking part in a schedule.
using WeightVector = std::map<SessionId, double>;

/// Largest-remainder apportionment of slot_count slots proportional to the
/// weights (ties go to the smaller session id), laid out by an interleaved
/// round-robin deal. Throws Error{EmptyWeights} if no weight is positive.
dataplane::SlotTable apportion_slots(const WeightVector& weights,
                                     std::size_t slot_count = dataplane::kSlotCount);

struct ControlConfig {
  double gain = 0.5;
  double weight_min = 0.05;
  double weight_max = 20.0;
  std::uint64_t stale_after_ns = 3 * kNanosPerSecond;
  std::uint64_t guard_ns = 1 * kNanosPerSecond;
  std::size_t predictor_window = 16;
  /// When set, every control tick persists a snapshot here.
  std::optional<std::filesystem::path> snapshot_path;
};

struct MemberStatus {
  dataplane::MemberSession session;
  double weight = 0.0;
  std::optional<FillReport> latest_report;
  bool ready = false;
  std::size_t slots = 0;  // in the newest epoch
  std::uint64_t forwarded = 0;
};

struct InstanceStatus {
  InstanceId instance_id = 0;
  dataplane::InstanceConfig config;
  std::vector<MemberStatus> members;
  std::vector<dataplane::Epoch> epochs;
  std::optional<Tick> predicted_tick;  // at the query time
  double tick_rate = 0.0;
  dataplane::CounterSnapshot counters;
  std::uint64_t epochs_total = 0;
  std::uint64_t sync_rejected = 0;
  std::uint64_t boundary_floor_hits = 0;
  bool degraded = false;
};

struct ControlTickResult {
  std::optional<dataplane::Epoch> emitted;
  bool degraded = false;       // no sync data, boundary came from forwarding history
  bool floor_applied = false;  // prediction lagged forwarded traffic
  std::vector<SessionId> retired;
};

enum class RestoreOutcome { Restored, Missing };

/// Owns every virtual LB instance and funnels all mutations through one
/// lock. The data planes it creates are shared with forwarding threads.
class ControlPlane {
 public:
  explicit ControlPlane(const Clock& clock, ControlConfig config = {});

  const ControlConfig& config() const noexcept { return config_; }

  /// Reserves the lowest free id (or `requested`). Throws CapacityExhausted
  /// when all eight are in use, InvalidArgument for a taken/out-of-range id.
  InstanceId reserve_instance(dataplane::InstanceConfig config,
                              std::optional<InstanceId> requested = std::nullopt);
  void free_instance(InstanceId id);
  std::vector<InstanceId> instances() const;
  std::size_t available_capacity() const;

  SessionId register_member(InstanceId id, const dataplane::Endpoint& endpoint,
                            double initial_weight = 1.0);
  void deregister_member(SessionId session);

  void ingest_fill_report(const FillReport& report);
  /// Throws NonMonotonicTick when a source's tick regresses (counted).
  void ingest_sync(InstanceId id, const wire::SyncMessage& sync);
  /// Throws NoSyncData before the first sync.
  Tick predict_tick(InstanceId id, std::uint64_t at_ns) const;

  /// One multiplicative step from each ready member's unapplied control
  /// signal. Throws NoReadyMembers when nobody is ready.
  WeightVector update_weights(InstanceId id);

  /// The 1 Hz loop body.
  ControlTickResult control_tick(InstanceId id, std::uint64_t now_ns);
  void control_tick_all(std::uint64_t now_ns);

  std::shared_ptr<dataplane::LbInstance> dataplane(InstanceId id) const;
  InstanceStatus status(InstanceId id) const;
  /// Instance owning a session, if any.
  std::optional<InstanceId> instance_of(SessionId session) const;

  /// Serialized state, the exact bytes persist_state writes.
  std::string snapshot() const;
  void persist_state(const std::filesystem::path& path) const;
  /// Replaces the whole state. Missing file -> empty state. A checksum or
  /// parse failure resets to empty and throws Error{CorruptSnapshot}.
  RestoreOutcome restore_state(const std::filesystem::path& path);
  void restore_from_bytes(const std::string& bytes);

 private:
  struct MemberRecord {
    double weight = 1.0;
    std::optional<FillReport> latest_report;
    bool report_pending = false;
    std::uint64_t last_seen_ns = 0;
  };

  struct Instance {
    dataplane::InstanceConfig config;
    std::shared_ptr<dataplane::LbInstance> dp;
    std::map<SessionId, MemberRecord> records;
    TickPredictor predictor;
    EpochId next_epoch_id = 1;
    std::uint64_t epochs_total = 0;
    std::uint64_t sync_rejected = 0;
    std::uint64_t boundary_floor_hits = 0;
    bool degraded = false;
    // Forwarding-history rate estimate for the no-sync fallback.
    std::optional<Tick> last_forwarded_tick;
    std::uint64_t last_forwarded_sample_ns = 0;
    double forwarded_tick_rate = 0.0;
  };

  Instance& instance_locked(InstanceId id);
  const Instance& instance_locked(InstanceId id) const;
  bool ready_locked(const Instance& inst, SessionId id, const MemberRecord& rec,
                    std::uint64_t now_ns) const;
  WeightVector update_weights_locked(Instance& inst, std::uint64_t now_ns);
  Tick next_boundary_locked(Instance& inst, std::uint64_t now_ns, ControlTickResult& result);
  std::string snapshot_locked() const;
  void restore_locked(const std::string& bytes);
  void reset_locked();

  const Clock& clock_;
  ControlConfig config_;

  mutable std::mutex mutex_;
  std::map<InstanceId, Instance> instances_;
  std::map<SessionId, InstanceId> session_index_;
  SessionId next_session_id_ = 1;
};

}  // namespace ejfat::controlplane
