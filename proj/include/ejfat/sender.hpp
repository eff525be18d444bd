#pragma once
// DAQ side: event sources, fragmentation into LB datagrams, paced
// transmission and the 1 Hz sync stream.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ejfat/clock.hpp"
#include "ejfat/event.hpp"
#include "ejfat/net.hpp"
#include "ejfat/wire.hpp"

namespace ejfat::sender {

inline constexpr std::size_t kDefaultMtuPayload = 1400;
inline constexpr std::size_t kUdpPayloadLimit = 65507;

/// LbMetaHeader | ReassemblyHeader | slice for every fragment of every
/// channel, channels ascending, offsets ascending. Throws Error{OversizeMtu}.
std::vector<Bytes> fragment_event(const Event& e, std::size_t mtu_payload = kDefaultMtuPayload);

/// Number of datagrams fragment_event would produce.
std::size_t fragment_count(const Event& e, std::size_t mtu_payload = kDefaultMtuPayload);

class EventSource {
 public:
  virtual ~EventSource() = default;
  virtual std::optional<Event> next() = 0;
};

class VectorEventSource final : public EventSource {
 public:
  explicit VectorEventSource(std::vector<Event> events) : events_(std::move(events)) {}
  std::optional<Event> next() override;

 private:
  std::vector<Event> events_;
  std::size_t pos_ = 0;
};

struct SynthConfig {
  std::uint64_t count = 0;
  std::uint16_t channels = 1;
  std::size_t size_per_channel = 0;
  Tick start_tick = 1;
  Tick tick_step = 1;
  std::uint64_t seed = 1;
};

/// Reproducible random payloads; identical config gives identical events.
class SynthEventSource final : public EventSource {
 public:
  explicit SynthEventSource(SynthConfig config);
  std::optional<Event> next() override;

 private:
  SynthConfig config_;
  std::mt19937_64 rng_;
  std::uint64_t emitted_ = 0;
};

std::vector<Event> synth_events(const SynthConfig& config);

/// Record stream: tick u64 | channel u16 | length u32 | payload, big-endian.
void write_event_file(const std::filesystem::path& path, const std::vector<Event>& events);
/// Throws Error{MalformedRecord} naming the byte offset of the bad record.
std::vector<Event> load_event_file(const std::filesystem::path& path);
std::vector<Event> parse_event_records(std::span<const std::uint8_t> bytes);

class DatagramSink {
 public:
  virtual ~DatagramSink() = default;
  /// Returns false if the datagram was not handed to the network.
  virtual bool send(std::span<const std::uint8_t> datagram) = 0;
};

class UdpSink final : public DatagramSink {
 public:
  UdpSink(net::UdpSocket& socket, net::SocketAddress dest) : socket_(socket), dest_(dest) {}
  bool send(std::span<const std::uint8_t> datagram) override { return socket_.send_to(datagram, dest_); }

 private:
  net::UdpSocket& socket_;
  net::SocketAddress dest_;
};

struct StreamStats {
  std::uint64_t events = 0;
  std::uint64_t fragments = 0;
  std::uint64_t octets = 0;  // datagram octets including headers
  std::uint64_t send_failures = 0;
  double duration_s = 0.0;
  double pacing_drift_s = 0.0;  // actual minus scheduled completion time
};

/// Pulls events from a source and fragments them into a sink. The data path
/// and the sync path may run on different threads.
class Sender {
 public:
  Sender(EventSource& source, DatagramSink& sink, std::size_t mtu_payload = kDefaultMtuPayload,
         std::uint32_t source_id = 0);

  /// Sends the next event. Returns nullopt when the source is exhausted.
  std::optional<Event> emit_next();
  bool exhausted() const noexcept { return !pending_.has_value(); }
  std::optional<Tick> next_tick() const noexcept;

  /// Latest emitted tick; before the first event, the tick about to be sent.
  Tick latest_tick() const noexcept { return latest_tick_.load(std::memory_order_relaxed); }

  /// Sync carrying latest_tick and the event rate since the previous call.
  wire::SyncMessage make_sync(std::uint64_t now_ns);

  const StreamStats& stats() const noexcept { return stats_; }
  std::uint32_t source_id() const noexcept { return source_id_; }

 private:
  EventSource& source_;
  DatagramSink& sink_;
  std::size_t mtu_;
  std::uint32_t source_id_;
  std::optional<Event> pending_;
  std::atomic<Tick> latest_tick_{0};
  std::atomic<std::uint64_t> events_{0};
  StreamStats stats_;
  std::uint64_t last_sync_ns_ = 0;
  std::uint64_t last_sync_events_ = 0;
  bool synced_ = false;
};

struct StreamOptions {
  net::SocketAddress lb;
  std::optional<net::SocketAddress> control;  // sync destination
  double rate_hz = 0.0;                       // 0 = unpaced
  std::size_t mtu_payload = kDefaultMtuPayload;
  std::uint32_t source_id = 0;
  double sync_period_s = 1.0;
  int send_buffer = 4 << 20;
};

/// Real-socket transmission with a concurrent sync thread. Throws
/// Error{SocketError} on a fatal socket failure.
StreamStats stream_events(EventSource& source, const StreamOptions& options);

}  // namespace ejfat::sender
