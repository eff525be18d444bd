#include "ejfat/service.hpp"

#include <netinet/in.h>
#include <sys/socket.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "ejfat/log.hpp"

namespace ejfat::service {
namespace {

using nlohmann::json;

constexpr std::size_t kBatch = 64;
constexpr std::size_t kMaxDatagram = 65536;

std::uint64_t seconds_to_ns(double s) {
  if (!(s >= 0) || !std::isfinite(s)) throw Error(ErrorCode::InvalidArgument, "durations must be >= 0");
  return static_cast<std::uint64_t>(std::llround(s * 1e9));
}

}  // namespace

ServiceConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open " + path.string());
  ServiceConfig cfg;
  try {
    const json j = json::parse(in);
    if (j.contains("control")) cfg.control = net::parse_address_or_throw(j.at("control").get<std::string>());
    if (j.contains("metrics")) cfg.metrics = net::parse_address_or_throw(j.at("metrics").get<std::string>());
    if (j.contains("snapshot")) cfg.control_config.snapshot_path = j.at("snapshot").get<std::string>();
    cfg.control_config.gain = j.value("gain", cfg.control_config.gain);
    if (j.contains("stale_after_s")) cfg.control_config.stale_after_ns = seconds_to_ns(j.at("stale_after_s"));
    if (j.contains("guard_s")) cfg.control_config.guard_ns = seconds_to_ns(j.at("guard_s"));
    cfg.socket_buffer = j.value("socket_buffer", cfg.socket_buffer);
    for (const auto& ji : j.value("instances", json::array())) {
      dataplane::InstanceConfig ic;
      ic.instance_id = ji.at("instance_id").get<std::uint32_t>();
      ic.listen = net::parse_address_or_throw(ji.at("listen").get<std::string>());
      ic.slot_count = ji.value("slot_count", dataplane::kSlotCount);
      if (ji.contains("drain_delay_s")) ic.drain_delay_ns = seconds_to_ns(ji.at("drain_delay_s"));
      cfg.instances.push_back(ic);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
  return cfg;
}

// ------------------------------------------------------------ ForwardWorker

ForwardWorker::ForwardWorker(std::shared_ptr<dataplane::LbInstance> dp, const net::SocketAddress& listen,
                             int socket_buffer)
    : dp_(std::move(dp)), socket_(listen) {
  socket_.set_receive_buffer(socket_buffer);
  socket_.set_send_buffer(socket_buffer);
  socket_.set_receive_timeout_ms(100);
  thread_ = std::thread([this] { run(); });
}

ForwardWorker::~ForwardWorker() { stop(); }

void ForwardWorker::stop() {
  if (stopping_.exchange(true)) return;
  if (thread_.joinable()) thread_.join();
}

void ForwardWorker::run() {
  std::vector<std::array<std::uint8_t, kMaxDatagram>> bufs(kBatch);
  std::array<iovec, kBatch> in_iov{};
  std::array<mmsghdr, kBatch> in_msgs{};
  std::array<iovec, kBatch> out_iov{};
  std::array<sockaddr_in, kBatch> out_addr{};
  std::array<mmsghdr, kBatch> out_msgs{};
  for (std::size_t i = 0; i < kBatch; ++i) {
    in_iov[i] = {bufs[i].data(), kMaxDatagram};
    in_msgs[i].msg_hdr.msg_iov = &in_iov[i];
    in_msgs[i].msg_hdr.msg_iovlen = 1;
  }

  while (!stopping_) {
    const int n = ::recvmmsg(socket_.fd(), in_msgs.data(), kBatch, MSG_WAITFORONE, nullptr);
    if (n <= 0) {
      if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR) {
        spdlog::error("data plane receive: {}", std::strerror(errno));
      }
      continue;
    }
    std::size_t out = 0;
    for (int i = 0; i < n; ++i) {
      const auto result = dp_->forward(std::span<const std::uint8_t>(bufs[i].data(), in_msgs[i].msg_len));
      const auto* fw = std::get_if<dataplane::ForwardAction>(&result);
      if (!fw) continue;
      fw->dest.to_sockaddr(out_addr[out]);
      out_iov[out] = {const_cast<std::uint8_t*>(fw->payload.data()), fw->payload.size()};
      out_msgs[out].msg_hdr = {};
      out_msgs[out].msg_hdr.msg_name = &out_addr[out];
      out_msgs[out].msg_hdr.msg_namelen = sizeof(sockaddr_in);
      out_msgs[out].msg_hdr.msg_iov = &out_iov[out];
      out_msgs[out].msg_hdr.msg_iovlen = 1;
      ++out;
    }
    std::size_t sent = 0;
    while (sent < out) {
      const int s = ::sendmmsg(socket_.fd(), out_msgs.data() + sent, static_cast<unsigned>(out - sent), 0);
      if (s < 0) {
        if (errno == EINTR) continue;
        // Skip the datagram the kernel refused and keep going.
        ++send_failures_;
        ++sent;
        continue;
      }
      sent += static_cast<std::size_t>(s);
    }
  }
}

// ---------------------------------------------------------------- LbService

LbService::LbService(ServiceConfig config, const Clock& clock)
    : config_(std::move(config)), clock_(clock), cp_(clock, config_.control_config) {
  if (config_.control_config.snapshot_path) {
    try {
      if (cp_.restore_state(*config_.control_config.snapshot_path) == controlplane::RestoreOutcome::Missing) {
        spdlog::info("no snapshot at {}; starting empty", config_.control_config.snapshot_path->string());
      }
    } catch (const Error& e) {
      spdlog::critical("CORRUPT SNAPSHOT {}: {}. Continuing with empty state.",
                       config_.control_config.snapshot_path->string(), e.what());
    }
  }
  for (const auto& ic : config_.instances) {
    const auto existing = cp_.instances();
    if (std::find(existing.begin(), existing.end(), ic.instance_id) == existing.end()) {
      cp_.reserve_instance(ic, ic.instance_id);
    }
  }
  for (auto id : cp_.instances()) start_worker(id);

  control::Hooks hooks{[this](controlplane::InstanceId id) { start_worker(id); },
                       [this](controlplane::InstanceId id) { stop_worker(id); }};
  control_ = std::make_unique<control::ControlServer>(cp_, config_.control, hooks);
  sync_ = std::make_unique<control::SyncListener>(cp_, control_->address());
  if (config_.metrics) metrics_ = std::make_unique<metrics::MetricsServer>(cp_, *config_.metrics);
  loop_ = std::thread([this] { control_loop(); });
  spdlog::info("control on {} (tcp+udp)", control_->address().to_string());
}

LbService::~LbService() { stop(); }

void LbService::stop() {
  {
    std::lock_guard lock(loop_mu_);
    if (stopping_) return;
    stopping_ = true;
  }
  loop_cv_.notify_all();
  if (loop_.joinable()) loop_.join();
  if (metrics_) metrics_->stop();
  if (sync_) sync_->stop();
  if (control_) control_->stop();
  std::lock_guard lock(workers_mu_);
  for (auto& [id, w] : workers_) w->stop();
  workers_.clear();
}

void LbService::start_worker(controlplane::InstanceId id) {
  auto dp = cp_.dataplane(id);
  const auto listen = dp->config().listen;
  auto worker = std::make_unique<ForwardWorker>(std::move(dp), listen, config_.socket_buffer);
  spdlog::info("instance {} forwarding on {}", id, worker->address().to_string());
  std::lock_guard lock(workers_mu_);
  workers_[id] = std::move(worker);
}

void LbService::stop_worker(controlplane::InstanceId id) {
  std::unique_ptr<ForwardWorker> w;
  {
    std::lock_guard lock(workers_mu_);
    auto it = workers_.find(id);
    if (it == workers_.end()) return;
    w = std::move(it->second);
    workers_.erase(it);
  }
  w->stop();
}

std::optional<std::uint16_t> LbService::metrics_port() const {
  if (!metrics_) return std::nullopt;
  return metrics_->port();
}

std::optional<net::SocketAddress> LbService::data_address(controlplane::InstanceId id) const {
  std::lock_guard lock(workers_mu_);
  auto it = workers_.find(id);
  if (it == workers_.end()) return std::nullopt;
  return it->second->address();
}

std::uint64_t LbService::send_failures() const {
  std::lock_guard lock(workers_mu_);
  std::uint64_t n = 0;
  for (const auto& [id, w] : workers_) n += w->send_failures();
  return n;
}

void LbService::control_loop() {
  const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(config_.tick_period_s));
  auto next = std::chrono::steady_clock::now() + period;
  std::unique_lock lock(loop_mu_);
  while (!loop_cv_.wait_until(lock, next, [this] { return stopping_; })) {
    lock.unlock();
    cp_.control_tick_all(clock_.now_ns());
    lock.lock();
    next += period;
  }
}

}  // namespace ejfat::service
