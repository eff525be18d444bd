// lb-send: stream events to a load balancer and emit sync messages.

#include <CLI11.hpp>
#include <iostream>
#include <json.hpp>

#include "ejfat/error.hpp"
#include "ejfat/log.hpp"
#include "ejfat/sender.hpp"

int main(int argc, char** argv) {
  using namespace ejfat;
  log::init_from_env();

  CLI::App app{"Event sender"};
  std::string lb, control, file, synth;
  double rate = 0.0;
  std::size_t mtu = sender::kDefaultMtuPayload;
  std::uint32_t source_id = 0;
  std::uint64_t seed = 1;
  app.add_option("--lb", lb, "Load balancer data address ip:port")->required();
  app.add_option("--control", control, "Control address for sync messages ip:port");
  app.add_option("--rate", rate, "Events per second, 0 = unpaced")->required()->check(CLI::NonNegativeNumber);
  auto* file_opt = app.add_option("--file", file, "Event record file")->check(CLI::ExistingFile);
  auto* synth_opt = app.add_option("--synth", synth, "Synthetic events: count,channels,size");
  file_opt->excludes(synth_opt);
  app.add_option("--mtu", mtu, "Payload octets per datagram");
  app.add_option("--source-id", source_id, "Sync source id; top octet selects the instance");
  app.add_option("--seed", seed, "Synthetic payload seed");
  CLI11_PARSE(app, argc, argv);

  try {
    std::unique_ptr<sender::EventSource> source;
    if (!file.empty()) {
      source = std::make_unique<sender::VectorEventSource>(sender::load_event_file(file));
    } else if (!synth.empty()) {
      sender::SynthConfig sc;
      unsigned long long count = 0, size = 0;
      unsigned channels = 0;
      if (std::sscanf(synth.c_str(), "%llu,%u,%llu", &count, &channels, &size) != 3 || count == 0 ||
          channels == 0 || channels > 65535) {
        throw Error(ErrorCode::InvalidArgument, "--synth expects count,channels,size with positive values");
      }
      sc.count = count;
      sc.channels = static_cast<std::uint16_t>(channels);
      sc.size_per_channel = size;
      sc.seed = seed;
      source = std::make_unique<sender::SynthEventSource>(sc);
    } else {
      throw Error(ErrorCode::InvalidArgument, "one of --file or --synth is required");
    }

    sender::StreamOptions so;
    so.lb = net::parse_address_or_throw(lb);
    if (!control.empty()) so.control = net::parse_address_or_throw(control);
    so.rate_hz = rate;
    so.mtu_payload = mtu;
    so.source_id = source_id;
    const auto st = sender::stream_events(*source, so);
    nlohmann::json out{{"events", st.events},
                       {"fragments", st.fragments},
                       {"octets", st.octets},
                       {"send_failures", st.send_failures},
                       {"duration_s", st.duration_s},
                       {"pacing_drift_s", st.pacing_drift_s}};
    std::cout << out.dump() << '\n';
  } catch (const Error& e) {
    spdlog::error("{}: {}", to_string(e.code()), e.what());
    return 1;
  }
  return 0;
}
