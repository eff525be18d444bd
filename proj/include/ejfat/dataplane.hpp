#pragma once

// Software load-balancer data plane: tick -> epoch -> slot -> member ->
// (ip, port) redirection with the LB header stripped.

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "ejfat/error.hpp"
#include "ejfat/net.hpp"
#include "ejfat/wire.hpp"

namespace ejfat::dataplane {

using SessionId = std::uint64_t;
using EpochId = std::uint32_t;

inline constexpr std::size_t kSlotCount = 512;
inline constexpr std::size_t kEpochRetain = 4;
inline constexpr std::uint64_t kDefaultDrainDelayNs = 5'000'000'000ULL;
inline constexpr std::size_t kMaxInstances = 8;
/// Session ids start at 1; 0 marks an unassigned slot.
inline constexpr SessionId kNoMember = 0;

/// Calendar table indexed by tick mod size(). Weight is slot multiplicity.
struct SlotTable {
  std::vector<SessionId> slots;

  SlotTable() = default;
  explicit SlotTable(std::size_t n) : slots(n, kNoMember) {}

  std::size_t size() const noexcept { return slots.size(); }
  bool all_null() const noexcept;
  std::map<SessionId, std::size_t> counts() const;

  friend bool operator==(const SlotTable&, const SlotTable&) = default;
};

struct Epoch {
  EpochId epoch_id = 0;
  Tick boundary_tick = 0;
  SlotTable table;

  friend bool operator==(const Epoch&, const Epoch&) = default;
};

enum class MemberState { Active, Draining, Retired };

std::string_view to_string(MemberState s) noexcept;

/// Network coordinates a compute node registers with.
struct Endpoint {
  net::Ipv4 ip;
  std::uint16_t base_port = 0;
  std::uint16_t port_count = 1;  // power of two

  friend auto operator<=>(const Endpoint&, const Endpoint&) = default;
};

struct MemberSession {
  SessionId session_id = kNoMember;
  Endpoint endpoint;
  MemberState state = MemberState::Active;
  EpochId admitted_epoch = 0;
  std::optional<std::uint64_t> draining_since_ns;

  friend bool operator==(const MemberSession&, const MemberSession&) = default;
};

enum class DropReason : std::uint8_t {
  BadMagic,
  BadVersion,
  Truncated,
  NoEpoch,
  NullSlot,
  UnknownMember,
};
inline constexpr std::size_t kDropReasonCount = 6;

std::string_view to_string(DropReason r) noexcept;

struct ForwardAction {
  net::SocketAddress dest;
  std::span<const std::uint8_t> payload;  // datagram minus the LB header
  Tick tick = 0;
  std::uint16_t channel = 0;
  SessionId member = kNoMember;
  EpochId epoch_id = 0;
};

struct Drop {
  DropReason reason;
};

using ForwardResult = std::variant<ForwardAction, Drop>;

struct InstanceConfig {
  std::uint32_t instance_id = 0;
  net::SocketAddress listen;
  std::size_t slot_count = kSlotCount;
  std::uint64_t drain_delay_ns = kDefaultDrainDelayNs;
  std::size_t epoch_retain = kEpochRetain;
};

struct CounterSnapshot {
  std::uint64_t received = 0;
  std::uint64_t forwarded = 0;
  std::array<std::uint64_t, kDropReasonCount> dropped{};
  std::map<SessionId, std::uint64_t> per_member;
  std::optional<Tick> max_forwarded_tick;

  std::uint64_t dropped_total() const noexcept;
};

// Pure routing steps; usable without an LbInstance.

/// Retained epoch with the greatest boundary <= tick, or the oldest one when
/// the tick precedes every boundary. nullptr when there are no epochs.
const Epoch* select_epoch(std::span<const Epoch> epochs, Tick tick) noexcept;

/// Member owning slot tick mod table size; nullopt for an unassigned slot.
std::optional<SessionId> select_member(const Epoch& epoch, Tick tick) noexcept;

/// base_port + (channel mod port_count).
std::uint16_t dest_port(const Endpoint& member, std::uint16_t channel) noexcept;

/// One virtual load balancer. Forwarding is lock-free against a published
/// immutable routing snapshot; mutations are serialized and republish it.
class LbInstance {
 public:
  explicit LbInstance(InstanceConfig config);

  const InstanceConfig& config() const noexcept { return config_; }

  // --- control side (single writer) ---

  /// Adds an ACTIVE member; it only receives traffic once a schedule
  /// references it.
  void add_member(const MemberSession& member);
  /// ACTIVE -> DRAINING. Existing epochs keep routing to it.
  void drain_member(SessionId id, std::uint64_t now_ns);
  /// Appends and publishes a new epoch. Throws Error{StaleBoundary} when
  /// boundary_tick does not exceed the newest retained boundary, and
  /// Error{InvalidTable} when the table names a non-ACTIVE member.
  void apply_schedule(Tick boundary_tick, SlotTable table, EpochId epoch_id);
  /// Retires DRAINING members whose drain delay elapsed and that no retained
  /// epoch references. Returns the retired session ids.
  std::vector<SessionId> retire_expired(std::uint64_t now_ns);
  /// Retires every member and drops all epochs.
  void retire_all();
  /// Replaces the whole state, used by snapshot restore.
  void restore(std::vector<MemberSession> members, std::vector<Epoch> epochs);

  std::vector<Epoch> epochs() const;
  std::optional<Epoch> newest_epoch() const;
  std::vector<MemberSession> members() const;
  std::optional<MemberSession> member(SessionId id) const;

  // --- data side (any number of threads) ---

  ForwardResult forward(std::span<const std::uint8_t> datagram) noexcept;

  CounterSnapshot counters() const;

 private:
  struct Route {
    Endpoint endpoint;
    std::atomic<std::uint64_t>* forwarded = nullptr;
  };
  struct RoutingState {
    std::vector<Epoch> epochs;
    std::unordered_map<SessionId, Route> routes;
  };

  void publish_locked();
  bool referenced_locked(SessionId id) const;
  std::atomic<std::uint64_t>* member_counter_locked(SessionId id);

  InstanceConfig config_;

  mutable std::mutex writer_mutex_;
  std::map<SessionId, MemberSession> members_;
  std::vector<Epoch> epochs_;
  // Stable addresses; entries are never erased so published routes stay valid.
  std::map<SessionId, std::unique_ptr<std::atomic<std::uint64_t>>> member_forwarded_;

  std::shared_ptr<const RoutingState> state_;

  std::atomic<std::uint64_t> received_{0};
  std::atomic<std::uint64_t> forwarded_{0};
  std::array<std::atomic<std::uint64_t>, kDropReasonCount> dropped_{};
  std::atomic<Tick> max_forwarded_plus1_{0};
};

}  // namespace ejfat::dataplane
