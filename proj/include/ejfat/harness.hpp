#pragma once
// Loopback test bed: a seeded impairment layer and a discrete-event scenario
// runner that drives sender, control plane, data plane and receivers on a
// virtual clock.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "ejfat/controlplane.hpp"
#include "ejfat/event.hpp"
#include "ejfat/receiver.hpp"
#include "ejfat/sender.hpp"

namespace ejfat::harness {

using nlohmann::json;

struct ImpairmentProfile {
  double loss = 0.0;
  std::size_t reorder = 0;  // max displacement in packets
  double delay_mean_ms = 0.0;
  double delay_jitter_ms = 0.0;
  double duplicate = 0.0;
  std::uint64_t seed = 1;
};

/// Applies duplication, loss, bounded reordering and delay, in that order.
/// Output is a pure function of the input sequence, times and seed.
class Impairer {
 public:
  struct Released {
    Bytes data;
    std::uint64_t deliver_at_ns = 0;
  };

  explicit Impairer(ImpairmentProfile profile);

  std::vector<Released> push(Bytes datagram, std::uint64_t now_ns);
  /// Releases everything still held back by the reorder stage.
  std::vector<Released> flush(std::uint64_t now_ns);

  std::uint64_t lost() const noexcept { return lost_; }
  std::uint64_t duplicated() const noexcept { return duplicated_; }

 private:
  struct Held {
    std::uint64_t key;
    std::uint64_t index;
    Bytes data;
    bool operator>(const Held& o) const noexcept { return key != o.key ? key > o.key : index > o.index; }
  };

  void admit(Bytes datagram, std::vector<Released>& out, std::uint64_t now_ns);
  void release(Bytes datagram, std::vector<Released>& out, std::uint64_t now_ns);

  ImpairmentProfile profile_;
  std::mt19937_64 rng_;
  std::priority_queue<Held, std::vector<Held>, std::greater<>> held_;
  std::uint64_t next_index_ = 0;
  std::uint64_t last_delivery_ns_ = 0;
  std::uint64_t lost_ = 0;
  std::uint64_t duplicated_ = 0;
};

/// Convenience for tests: runs a whole stream through a fresh impairer.
std::vector<Bytes> impair(const std::vector<Bytes>& stream, const ImpairmentProfile& profile);

struct SenderSpec {
  double rate_hz = 1000.0;
  std::uint64_t count = 1000;
  std::uint16_t channels = 1;
  std::size_t size_per_channel = 4000;
  Tick start_tick = 1;
  Tick tick_step = 1;
  std::size_t mtu = sender::kDefaultMtuPayload;
};

struct ReceiverSpec {
  std::string name;
  std::uint16_t port_count = 1;
  double weight = 1.0;
  std::optional<double> service_rate_hz;  // nullopt = unlimited, 0 = paused
  std::size_t queue_capacity = receiver::kDefaultQueueCapacity;
  receiver::PidGains gains;
  bool auto_register = true;
};

struct Action {
  double at_s = 0.0;
  std::string type;  // start_sender, register, deregister, set_service_rate, stop, restart_cp
  std::string receiver;
  std::optional<double> rate_hz;
  double downtime_s = 1.0;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  SenderSpec sender;
  ImpairmentProfile impairment;
  std::vector<ReceiverSpec> receivers;
  std::vector<Action> actions;
  controlplane::ControlConfig control;
  double drain_s = 5.0;
  double max_sim_s = 600.0;
  double sample_period_s = 1.0;
  json expect = json::object();
};

/// Parses the scenario schema described in docs/scenarios.md.
Scenario parse_scenario(const json& j);
Scenario load_scenario(const std::filesystem::path& path);

enum class Fate { Delivered, Duplicated, Evicted, Queued, Dropped, Lost };
std::string_view to_string(Fate f) noexcept;

struct TickRecord {
  std::uint64_t digest = 0;
  std::vector<std::string> forwarded_to;  // distinct members, first-forward order
  std::vector<std::string> delivered_to;
  std::uint32_t evictions = 0;
  std::optional<dataplane::DropReason> dropped;
  bool digest_mismatch = false;
};

struct EpochRecord {
  double t_s = 0.0;
  dataplane::EpochId epoch_id = 0;
  Tick boundary = 0;
  std::optional<Tick> max_forwarded;  // harness-observed at application time
  std::map<std::string, std::size_t> slots;
};

struct Sample {
  double t_s = 0.0;
  std::map<std::string, double> fill;
  std::map<std::string, double> weight;
  std::map<std::string, std::uint64_t> arrivals;    // events queued so far
  std::map<std::string, std::uint64_t> deliveries;  // events consumed so far
};

struct Verdict {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ScenarioReport {
  std::string name;
  std::uint64_t seed = 0;
  double sim_duration_s = 0.0;
  std::uint64_t emitted = 0;
  std::map<Fate, std::uint64_t> fates;
  std::uint64_t split_events = 0;
  std::uint64_t digest_mismatches = 0;
  std::uint64_t boundary_violations = 0;
  std::uint64_t impairer_lost = 0;
  std::uint64_t impairer_duplicated = 0;
  std::map<std::string, std::uint64_t> delivered_by;
  std::vector<EpochRecord> epochs;
  std::vector<Sample> samples;
  std::optional<Tick> boundary_before_restart;
  std::optional<Tick> first_boundary_after_restart;
  std::map<Tick, TickRecord> ledger;
  std::uint64_t ledger_digest = 0;
  std::vector<Verdict> verdicts;

  bool passed() const noexcept;
  std::uint64_t fate(Fate f) const noexcept;
  json to_json(bool include_ledger = false) const;
};

/// Runs on a virtual clock. Throws Error{ScenarioTimeout} if the sender is
/// still running at max_sim_s.
ScenarioReport run_scenario(const Scenario& scenario);

struct ThroughputOptions {
  std::uint64_t events = 20000;
  std::uint16_t channels = 4;
  std::size_t size_per_channel = 8400;
  std::size_t mtu = 8400;
  double rate_hz = 0.0;  // 0 = unpaced
  std::size_t receivers = 1;
  std::uint16_t ports_per_receiver = 4;
  double settle_s = 1.5;
  int socket_buffer = 4 << 20;
  std::uint64_t seed = 1;
};

struct ThroughputReport {
  std::uint64_t fragments_sent = 0;
  std::uint64_t octets_sent = 0;
  std::uint64_t dp_received = 0;
  std::uint64_t dp_forwarded = 0;
  std::uint64_t dp_dropped = 0;
  std::uint64_t events_received = 0;
  double send_duration_s = 0.0;
  double mbps = 0.0;           // sender payload+header bits over the send window
  double dp_drop_fraction = 0.0;  // (sent - forwarded) / sent at the data plane
  json to_json() const;
};

/// Real sockets on loopback: lb service, receivers and sender in one process.
ThroughputReport run_throughput(const ThroughputOptions& options);

}  // namespace ejfat::harness
