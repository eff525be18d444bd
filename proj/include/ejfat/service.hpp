#pragma once
// Process runtime for lb-run: data-plane forwarding threads, the control
// protocol, sync ingestion, the 1 Hz loop and the metrics endpoint.

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "ejfat/clock.hpp"
#include "ejfat/control_protocol.hpp"
#include "ejfat/controlplane.hpp"
#include "ejfat/metrics.hpp"
#include "ejfat/net.hpp"

namespace ejfat::service {

struct ServiceConfig {
  /// TCP control protocol and UDP sync share this port number.
  net::SocketAddress control{net::Ipv4{0x7f000001}, 0};
  std::optional<net::SocketAddress> metrics;
  std::vector<dataplane::InstanceConfig> instances;
  controlplane::ControlConfig control_config;
  int socket_buffer = 4 << 20;
  double tick_period_s = 1.0;
};

/// Reads the lb-run JSON config. Throws Error{InvalidArgument}.
ServiceConfig load_config(const std::filesystem::path& path);

/// Receives on an instance's listen address and forwards through its data
/// plane, batching with recvmmsg/sendmmsg.
class ForwardWorker {
 public:
  ForwardWorker(std::shared_ptr<dataplane::LbInstance> dp, const net::SocketAddress& listen, int socket_buffer);
  ~ForwardWorker();
  ForwardWorker(const ForwardWorker&) = delete;
  ForwardWorker& operator=(const ForwardWorker&) = delete;

  net::SocketAddress address() const { return socket_.local_address(); }
  std::uint64_t send_failures() const noexcept { return send_failures_.load(); }
  void stop();

 private:
  void run();

  std::shared_ptr<dataplane::LbInstance> dp_;
  net::UdpSocket socket_;
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> send_failures_{0};
  std::thread thread_;
};

class LbService {
 public:
  explicit LbService(ServiceConfig config, const Clock& clock);
  ~LbService();
  LbService(const LbService&) = delete;
  LbService& operator=(const LbService&) = delete;

  controlplane::ControlPlane& control_plane() noexcept { return cp_; }
  net::SocketAddress control_address() const { return control_->address(); }
  std::optional<std::uint16_t> metrics_port() const;
  /// Bound data address of an instance with a running worker.
  std::optional<net::SocketAddress> data_address(controlplane::InstanceId id) const;
  std::uint64_t send_failures() const;

  void stop();

 private:
  void start_worker(controlplane::InstanceId id);
  void stop_worker(controlplane::InstanceId id);
  void control_loop();

  ServiceConfig config_;
  const Clock& clock_;
  controlplane::ControlPlane cp_;
  mutable std::mutex workers_mu_;
  std::map<controlplane::InstanceId, std::unique_ptr<ForwardWorker>> workers_;
  std::unique_ptr<control::ControlServer> control_;
  std::unique_ptr<control::SyncListener> sync_;
  std::unique_ptr<metrics::MetricsServer> metrics_;
  std::mutex loop_mu_;
  std::condition_variable loop_cv_;
  bool stopping_ = false;
  std::thread loop_;
};

}  // namespace ejfat::service
