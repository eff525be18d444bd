// lb-run: control plane, data plane and metrics in one process.

#include <csignal>
#include <CLI11.hpp>
#include <iostream>

#include "ejfat/error.hpp"
#include "ejfat/log.hpp"
#include "ejfat/service.hpp"

namespace {
volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }
}  // namespace

int main(int argc, char** argv) {
  using namespace ejfat;
  log::init_from_env();

  CLI::App app{"Userspace load balancer: control plane + data plane"};
  std::string config_path;
  std::string snapshot;
  app.add_option("--config", config_path, "Service JSON config")->required()->check(CLI::ExistingFile);
  app.add_option("--snapshot", snapshot, "State snapshot path (restored at start, written every tick)");
  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = service::load_config(config_path);
    if (!snapshot.empty()) cfg.control_config.snapshot_path = snapshot;
    SystemClock clock;
    service::LbService svc(std::move(cfg), clock);
    if (auto p = svc.metrics_port()) spdlog::info("metrics on port {}", *p);

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    spdlog::info("shutting down");
    svc.stop();
  } catch (const Error& e) {
    spdlog::error("{}: {}", to_string(e.code()), e.what());
    return 1;
  }
  return 0;
}
