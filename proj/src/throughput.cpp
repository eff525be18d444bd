#include <atomic>
#include <chrono>
#include <thread>

#include "ejfat/error.hpp"
#include "ejfat/harness.hpp"
#include "ejfat/log.hpp"
#include "ejfat/receiver_service.hpp"
#include "ejfat/sender.hpp"
#include "ejfat/service.hpp"

namespace ejfat::harness {
namespace {

const net::Ipv4 kLoopback{0x7f000001};

std::unique_ptr<receiver::ReceiverService> start_receiver(receiver::ServiceOptions opts, const Clock& clock,
                                                          std::uint16_t& next_base) {
  // Walk the port space until a contiguous free range binds.
  for (int attempt = 0; attempt < 64; ++attempt) {
    opts.receiver.base_port = next_base;
    next_base = static_cast<std::uint16_t>(next_base + opts.receiver.port_count);
    try {
      return std::make_unique<receiver::ReceiverService>(opts, clock);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::SocketError) throw;
    }
  }
  throw Error(ErrorCode::SocketError, "no free receiver port range");
}

}  // namespace

json ThroughputReport::to_json() const {
  return {{"fragments_sent", fragments_sent}, {"octets_sent", octets_sent},
          {"dp_received", dp_received},       {"dp_forwarded", dp_forwarded},
          {"dp_dropped", dp_dropped},         {"events_received", events_received},
          {"send_duration_s", send_duration_s}, {"mbps", mbps},
          {"dp_drop_fraction", dp_drop_fraction}};
}

ThroughputReport run_throughput(const ThroughputOptions& o) {
  SystemClock clock;
  service::ServiceConfig sc;
  sc.control = net::SocketAddress{kLoopback, 0};
  dataplane::InstanceConfig ic;
  ic.instance_id = 0;
  ic.listen = net::SocketAddress{kLoopback, 0};
  sc.instances.push_back(ic);
  sc.socket_buffer = o.socket_buffer;
  service::LbService lb(sc, clock);

  std::atomic<std::uint64_t> events{0};
  std::vector<std::unique_ptr<receiver::ReceiverService>> receivers;
  std::uint16_t next_base = static_cast<std::uint16_t>(31000 + (::getpid() % 200) * 64);
  for (std::size_t i = 0; i < o.receivers; ++i) {
    receiver::ServiceOptions ro;
    ro.receiver.port_count = o.ports_per_receiver;
    ro.receiver.expected_channels.clear();
    for (std::uint16_t c = 0; c < o.channels; ++c) ro.receiver.expected_channels.push_back(c);
    ro.receiver.queue_capacity = 4096;
    ro.listen_ip = kLoopback;
    ro.cp = lb.control_address();
    ro.socket_buffer = o.socket_buffer;
    ro.sink = [&events](Event&&) { events.fetch_add(1, std::memory_order_relaxed); };
    receivers.push_back(start_receiver(ro, clock, next_base));
  }
  // Publish the first schedule now instead of waiting for the 1 Hz loop.
  lb.control_plane().control_tick(0, clock.now_ns());

  sender::SynthConfig synth;
  synth.count = o.events;
  synth.channels = o.channels;
  synth.size_per_channel = o.size_per_channel;
  synth.seed = o.seed;
  sender::SynthEventSource source(synth);
  sender::StreamOptions so;
  so.lb = *lb.data_address(0);
  so.control = lb.control_address();
  so.rate_hz = o.rate_hz;
  so.mtu_payload = o.mtu;
  so.source_id = control::make_source_id(0, 1);
  so.send_buffer = o.socket_buffer;
  const auto stats = sender::stream_events(source, so);

  std::this_thread::sleep_for(std::chrono::duration<double>(o.settle_s));
  const auto counters = lb.control_plane().dataplane(0)->counters();
  for (auto& r : receivers) r->stop();
  lb.stop();

  ThroughputReport rep;
  rep.fragments_sent = stats.fragments;
  rep.octets_sent = stats.octets;
  rep.dp_received = counters.received;
  rep.dp_forwarded = counters.forwarded;
  rep.dp_dropped = counters.dropped_total();
  rep.events_received = events.load();
  rep.send_duration_s = stats.duration_s;
  rep.mbps = stats.duration_s > 0 ? static_cast<double>(stats.octets) * 8.0 / stats.duration_s / 1e6 : 0.0;
  rep.dp_drop_fraction =
      stats.fragments ? static_cast<double>(stats.fragments - std::min(stats.fragments, counters.forwarded)) /
                            static_cast<double>(stats.fragments)
                      : 0.0;
  return rep;
}

}  // namespace ejfat::harness
