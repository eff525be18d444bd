#pragma once

#include <memory>
#include <string>
#include <thread>

#include "ejfat/controlplane.hpp"
#include "ejfat/net.hpp"

namespace httplib {
class Server;
}

namespace ejfat::metrics {

/// Prometheus text exposition (format 0.0.4) of every instance.
std::string render(const controlplane::ControlPlane& cp);

/// Serves GET /metrics.
class MetricsServer {
 public:
  MetricsServer(const controlplane::ControlPlane& cp, const net::SocketAddress& listen);
  ~MetricsServer();
  MetricsServer(const MetricsServer&) = delete;
  MetricsServer& operator=(const MetricsServer&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  void stop();

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::uint16_t port_ = 0;
};

}  // namespace ejfat::metrics
