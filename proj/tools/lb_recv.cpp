// lb-recv: compute-node receiver with reassembly, queue, PID reports.

#include <csignal>
#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>

#include "ejfat/error.hpp"
#include "ejfat/log.hpp"
#include "ejfat/receiver_service.hpp"

namespace {
volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }
}  // namespace

int main(int argc, char** argv) {
  using namespace ejfat;
  log::init_from_env();

  CLI::App app{"Compute-node receiver"};
  std::string cp, listen = "127.0.0.1", sink = "null";
  std::uint16_t base_port = 0, ports = 1, channels = 1;
  std::uint32_t instance = 0;
  std::size_t queue = receiver::kDefaultQueueCapacity;
  receiver::PidGains gains;
  double weight = 1.0;
  app.add_option("--cp", cp, "Control plane address ip:port")->required();
  app.add_option("--listen", listen, "Local IPv4 address");
  app.add_option("--base-port", base_port, "First UDP port")->required();
  app.add_option("--ports", ports, "Number of ports, a power of two");
  app.add_option("--channels", channels, "Channels per event (0..n-1)");
  app.add_option("--instance", instance, "LB instance id");
  app.add_option("--queue", queue, "Event queue capacity");
  app.add_option("--kp", gains.kp);
  app.add_option("--ki", gains.ki);
  app.add_option("--kd", gains.kd);
  app.add_option("--setpoint", gains.setpoint);
  app.add_option("--weight", weight, "Initial scheduling weight");
  app.add_option("--sink", sink, "null | file:<path> | checksum");
  CLI11_PARSE(app, argc, argv);

  try {
    receiver::ServiceOptions o;
    o.receiver.base_port = base_port;
    o.receiver.port_count = ports;
    o.receiver.expected_channels.clear();
    for (std::uint16_t c = 0; c < channels; ++c) o.receiver.expected_channels.push_back(c);
    o.receiver.queue_capacity = queue;
    o.receiver.gains = gains;
    auto ip = net::Ipv4::parse(listen);
    if (!ip) throw Error(ErrorCode::InvalidArgument, "bad --listen address");
    o.listen_ip = *ip;
    o.cp = net::parse_address_or_throw(cp);
    o.instance_id = instance;
    o.initial_weight = weight;

    std::ofstream file_out;
    std::mutex out_mu;
    if (sink == "null") {
      o.sink = [](Event&&) {};
    } else if (sink == "checksum") {
      o.sink = [&out_mu](Event&& e) {
        char line[96];
        std::snprintf(line, sizeof(line), "{\"tick\":%llu,\"digest\":\"%016llx\"}\n",
                      static_cast<unsigned long long>(e.tick),
                      static_cast<unsigned long long>(event_digest(e)));
        std::lock_guard lock(out_mu);
        std::fputs(line, stdout);
        std::fflush(stdout);
      };
    } else if (sink.rfind("file:", 0) == 0) {
      file_out.open(sink.substr(5), std::ios::binary | std::ios::trunc);
      if (!file_out) throw Error(ErrorCode::InvalidArgument, "cannot open " + sink.substr(5));
      o.sink = [&file_out](Event&& e) {
        for (const auto& [ch, p] : e.channels) {
          std::uint8_t hdr[14];
          for (int i = 0; i < 8; ++i) hdr[i] = static_cast<std::uint8_t>(e.tick >> (56 - 8 * i));
          hdr[8] = static_cast<std::uint8_t>(ch >> 8);
          hdr[9] = static_cast<std::uint8_t>(ch);
          const auto n = static_cast<std::uint32_t>(p.size());
          for (int i = 0; i < 4; ++i) hdr[10 + i] = static_cast<std::uint8_t>(n >> (24 - 8 * i));
          file_out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
          file_out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size()));
        }
      };
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown sink " + sink);
    }

    SystemClock clock;
    receiver::ReceiverService svc(o, clock);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    svc.drain();
    svc.stop();
    const auto c = svc.receiver().counters();
    spdlog::info("events {} evicted {} timeouts {} duplicates {} stale {} malformed {}", c.aggregation.events,
                 c.evicted, c.aggregation.timeouts, c.reassembly.duplicates, c.reassembly.stale,
                 c.reassembly.malformed);
  } catch (const Error& e) {
    spdlog::error("{}: {}", to_string(e.code()), e.what());
    return 1;
  }
  return 0;
}
