#include "ejfat/receiver_service.hpp"

#include <netinet/in.h>
#include <sys/socket.h>

#include <array>
#include <cerrno>
#include <chrono>

#include "ejfat/log.hpp"

namespace ejfat::receiver {
namespace {

constexpr std::size_t kBatch = 32;
constexpr std::size_t kMaxDatagram = 65536;

}  // namespace

ReceiverService::ReceiverService(ServiceOptions options, const Clock& clock)
    : options_(std::move(options)), clock_(clock), receiver_(options_.receiver) {
  const auto& rc = receiver_.config();
  for (std::size_t i = 0; i < rc.port_count; ++i) {
    net::UdpSocket s(net::SocketAddress{options_.listen_ip, static_cast<std::uint16_t>(rc.base_port + i)});
    s.set_receive_buffer(options_.socket_buffer);
    s.set_receive_timeout_ms(100);
    sockets_.push_back(std::move(s));
  }
  if (options_.cp) {
    client_ = std::make_unique<control::ControlClient>(*options_.cp);
    const auto reply = client_->call({{"verb", "register"},
                                      {"instance_id", options_.instance_id},
                                      {"ip", options_.listen_ip.to_string()},
                                      {"base_port", rc.base_port},
                                      {"port_count", rc.port_count},
                                      {"weight", options_.initial_weight}});
    session_ = reply.at("session_id").get<controlplane::SessionId>();
    spdlog::info("registered as session {}", *session_);
  }
  receiver_.set_ready(true);

  for (std::size_t i = 0; i < sockets_.size(); ++i) threads_.emplace_back([this, i] { port_loop(i); });
  if (options_.sink) threads_.emplace_back([this] { consumer_loop(); });
  threads_.emplace_back([this] { report_loop(); });
}

ReceiverService::~ReceiverService() { stop(); }

void ReceiverService::drain() {
  if (drained_.exchange(true)) return;
  receiver_.set_ready(false);
  if (client_ && session_) {
    try {
      client_->call({{"verb", "deregister"}, {"session_id", *session_}});
    } catch (const Error& e) {
      spdlog::warn("deregister failed: {}", e.what());
    }
  }
}

void ReceiverService::stop() {
  if (stopping_.exchange(true)) return;
  report_cv_.notify_all();
  for (auto& t : threads_) {
    if (t.joinable()) t.join();
  }
}

void ReceiverService::port_loop(std::size_t index) {
  std::vector<std::array<std::uint8_t, kMaxDatagram>> bufs(kBatch);
  std::array<iovec, kBatch> iov{};
  std::array<mmsghdr, kBatch> msgs{};
  for (std::size_t i = 0; i < kBatch; ++i) {
    iov[i] = {bufs[i].data(), kMaxDatagram};
    msgs[i].msg_hdr.msg_iov = &iov[i];
    msgs[i].msg_hdr.msg_iovlen = 1;
  }
  const int fd = sockets_[index].fd();
  while (!stopping_) {
    const int n = ::recvmmsg(fd, msgs.data(), kBatch, MSG_WAITFORONE, nullptr);
    if (n <= 0) continue;
    const auto now = clock_.now_ns();
    for (int i = 0; i < n; ++i) {
      receiver_.ingest(index, std::span<const std::uint8_t>(bufs[i].data(), msgs[i].msg_len), now);
    }
  }
}

void ReceiverService::consumer_loop() {
  while (!stopping_) {
    if (auto e = receiver_.pop_event_wait(std::chrono::milliseconds(100))) options_.sink(std::move(*e));
  }
  while (auto e = receiver_.pop_event()) options_.sink(std::move(*e));
}

void ReceiverService::report_loop() {
  const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(options_.report_period_s));
  auto next = std::chrono::steady_clock::now() + period;
  auto backoff = period;
  auto retry_at = std::chrono::steady_clock::time_point{};
  std::unique_lock lock(report_mu_);
  while (!report_cv_.wait_until(lock, next, [this] { return stopping_.load(); })) {
    next += period;
    const auto now_ns = clock_.now_ns();
    receiver_.housekeeping(now_ns);
    if (!client_ || !session_) continue;
    const auto r = receiver_.make_report(*session_, now_ns);
    if (std::chrono::steady_clock::now() < retry_at) continue;
    try {
      const auto reply = client_->request({{"verb", "report"},
                                           {"session_id", r.session_id},
                                           {"fill", r.queue_fill},
                                           {"control", r.control_signal},
                                           {"ready", r.ready},
                                           {"wallclock_ns", r.wallclock_ns}});
      if (!reply.value("ok", false)) spdlog::warn("report rejected: {}", reply.value("message", ""));
      ++reports_sent_;
      backoff = period;
    } catch (const Error& e) {
      ++report_failures_;
      retry_at = std::chrono::steady_clock::now() + backoff;
      spdlog::warn("report failed ({}); retrying in {:.1f} s", e.what(),
                   std::chrono::duration<double>(backoff).count());
      backoff = std::min<std::chrono::steady_clock::duration>(backoff * 2, period * 16);
    }
  }
}

}  // namespace ejfat::receiver
