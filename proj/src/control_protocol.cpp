#include "ejfat/control_protocol.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>

#include "byte_order.hpp"
#include "ejfat/log.hpp"
#include "ejfat/wire.hpp"

namespace ejfat::control {
namespace {

using controlplane::InstanceId;
using controlplane::SessionId;

json error_reply(std::string_view code, const std::string& message) {
  return json{{"ok", false}, {"error", code}, {"message", message}};
}

template <typename T>
T required(const json& req, const char* key) {
  if (!req.contains(key)) throw Error(ErrorCode::InvalidArgument, std::string("missing field '") + key + "'");
  return req.at(key).get<T>();
}

bool write_all(int fd, const std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

bool read_all(int fd, std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    const ssize_t r = ::recv(fd, p, n, 0);
    if (r == 0) return false;
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

}  // namespace

bool write_frame(int fd, const std::string& payload) {
  if (payload.size() > kMaxFrame) return false;
  std::uint8_t len[4];
  detail::put_be32(len, static_cast<std::uint32_t>(payload.size()));
  return write_all(fd, len, 4) &&
         write_all(fd, reinterpret_cast<const std::uint8_t*>(payload.data()), payload.size());
}

bool read_frame(int fd, std::string& payload) {
  std::uint8_t len[4];
  if (!read_all(fd, len, 4)) return false;
  const std::uint32_t n = detail::get_be32(len);
  if (n > kMaxFrame) return false;
  payload.resize(n);
  return read_all(fd, reinterpret_cast<std::uint8_t*>(payload.data()), n);
}

json status_to_json(const controlplane::InstanceStatus& st) {
  json members = json::array();
  for (const auto& m : st.members) {
    json jm{{"session_id", m.session.session_id},
            {"ip", m.session.endpoint.ip.to_string()},
            {"base_port", m.session.endpoint.base_port},
            {"port_count", m.session.endpoint.port_count},
            {"state", dataplane::to_string(m.session.state)},
            {"admitted_epoch", m.session.admitted_epoch},
            {"weight", m.weight},
            {"ready", m.ready},
            {"slots", m.slots},
            {"forwarded", m.forwarded}};
    if (m.latest_report) {
      jm["fill"] = m.latest_report->queue_fill;
      jm["control"] = m.latest_report->control_signal;
    }
    members.push_back(std::move(jm));
  }
  json epochs = json::array();
  for (const auto& e : st.epochs) {
    json counts = json::object();
    for (const auto& [s, n] : e.table.counts()) counts[std::to_string(s)] = n;
    epochs.push_back({{"epoch_id", e.epoch_id}, {"boundary_tick", e.boundary_tick}, {"slots", counts}});
  }
  json dropped = json::object();
  for (std::size_t i = 0; i < dataplane::kDropReasonCount; ++i) {
    dropped[std::string(dataplane::to_string(static_cast<dataplane::DropReason>(i)))] = st.counters.dropped[i];
  }
  json out{{"instance_id", st.instance_id},
           {"listen", st.config.listen.to_string()},
           {"members", std::move(members)},
           {"epochs", std::move(epochs)},
           {"epochs_total", st.epochs_total},
           {"tick_rate", st.tick_rate},
           {"degraded", st.degraded},
           {"sync_rejected", st.sync_rejected},
           {"boundary_floor_hits", st.boundary_floor_hits},
           {"received", st.counters.received},
           {"forwarded", st.counters.forwarded},
           {"dropped", std::move(dropped)}};
  out["predicted_tick"] = st.predicted_tick ? json(*st.predicted_tick) : json(nullptr);
  out["max_forwarded_tick"] =
      st.counters.max_forwarded_tick ? json(*st.counters.max_forwarded_tick) : json(nullptr);
  return out;
}

json handle_request(controlplane::ControlPlane& cp, const json& req, const Hooks& hooks) {
  try {
    if (!req.is_object()) throw Error(ErrorCode::InvalidArgument, "request must be a JSON object");
    const auto verb = required<std::string>(req, "verb");

    if (verb == "reserve") {
      dataplane::InstanceConfig cfg;
      cfg.listen = net::parse_address_or_throw(required<std::string>(req, "listen"));
      cfg.slot_count = req.value("slot_count", dataplane::kSlotCount);
      if (req.contains("drain_delay_s")) {
        const double d = req.at("drain_delay_s").get<double>();
        if (!(d >= 0)) throw Error(ErrorCode::InvalidArgument, "drain_delay_s must be >= 0");
        cfg.drain_delay_ns = static_cast<std::uint64_t>(std::llround(d * 1e9));
      }
      std::optional<InstanceId> requested;
      if (req.contains("instance_id")) requested = req.at("instance_id").get<InstanceId>();
      const InstanceId id = cp.reserve_instance(cfg, requested);
      if (hooks.on_reserved) {
        try {
          hooks.on_reserved(id);
        } catch (...) {
          cp.free_instance(id);
          throw;
        }
      }
      return {{"ok", true}, {"instance_id", id}};
    }
    if (verb == "free") {
      const auto id = required<InstanceId>(req, "instance_id");
      cp.free_instance(id);
      if (hooks.on_freed) hooks.on_freed(id);
      return {{"ok", true}};
    }
    if (verb == "register") {
      const auto id = required<InstanceId>(req, "instance_id");
      const auto ip = net::Ipv4::parse(required<std::string>(req, "ip"));
      if (!ip) throw Error(ErrorCode::InvalidArgument, "bad ip");
      dataplane::Endpoint ep{*ip, required<std::uint16_t>(req, "base_port"),
                             req.value<std::uint16_t>("port_count", 1)};
      const SessionId s = cp.register_member(id, ep, req.value("weight", 1.0));
      return {{"ok", true}, {"session_id", s}};
    }
    if (verb == "deregister") {
      cp.deregister_member(required<SessionId>(req, "session_id"));
      return {{"ok", true}};
    }
    if (verb == "report") {
      controlplane::FillReport r;
      r.session_id = required<SessionId>(req, "session_id");
      r.queue_fill = required<double>(req, "fill");
      r.control_signal = req.value("control", 0.0);
      r.ready = req.value("ready", true);
      r.wallclock_ns = req.value<std::uint64_t>("wallclock_ns", 0);
      cp.ingest_fill_report(r);
      return {{"ok", true}};
    }
    if (verb == "query") {
      json instances = json::array();
      if (req.contains("instance_id")) {
        instances.push_back(status_to_json(cp.status(req.at("instance_id").get<InstanceId>())));
      } else {
        for (InstanceId id : cp.instances()) instances.push_back(status_to_json(cp.status(id)));
      }
      return {{"ok", true}, {"available", cp.available_capacity()}, {"instances", std::move(instances)}};
    }
    throw Error(ErrorCode::InvalidArgument, "unknown verb '" + verb + "'");
  } catch (const Error& e) {
    return error_reply(to_string(e.code()), e.what());
  } catch (const json::exception& e) {
    return error_reply(to_string(ErrorCode::InvalidArgument), e.what());
  } catch (const std::exception& e) {
    return error_reply(to_string(ErrorCode::InvalidArgument), e.what());
  }
}

// ---------------------------------------------------------------- server

ControlServer::ControlServer(controlplane::ControlPlane& cp, const net::SocketAddress& listen, Hooks hooks)
    : cp_(cp), hooks_(std::move(hooks)) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listen_fd_ < 0) throw Error(ErrorCode::SocketError, std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in sa{};
  listen.to_sockaddr(sa);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0 || ::listen(listen_fd_, 16) != 0) {
    const std::string msg = std::strerror(errno);
    ::close(listen_fd_);
    throw Error(ErrorCode::SocketError, "control listen on " + listen.to_string() + ": " + msg);
  }
  socklen_t len = sizeof(sa);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&sa), &len);
  address_ = net::SocketAddress::from_sockaddr(sa);
  acceptor_ = std::thread([this] { accept_loop(); });
}

ControlServer::~ControlServer() { stop(); }

void ControlServer::stop() {
  if (stopping_.exchange(true)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  std::list<std::pair<int, std::thread>> conns;
  {
    std::lock_guard lock(conn_mu_);
    conns.swap(connections_);
  }
  for (auto& [fd, t] : conns) ::shutdown(fd, SHUT_RDWR);
  for (auto& [fd, t] : conns) {
    if (t.joinable()) t.join();
    ::close(fd);
  }
}

void ControlServer::accept_loop() {
  while (!stopping_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 200) <= 0) continue;
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    std::lock_guard lock(conn_mu_);
    if (stopping_) {
      ::close(fd);
      break;
    }
    connections_.emplace_back(fd, std::thread([this, fd] { serve(fd); }));
  }
}

void ControlServer::serve(int fd) {
  std::string in;
  while (!stopping_ && read_frame(fd, in)) {
    json reply;
    try {
      reply = handle_request(cp_, json::parse(in), hooks_);
    } catch (const json::exception& e) {
      reply = error_reply(to_string(ErrorCode::InvalidArgument), e.what());
    }
    if (!write_frame(fd, reply.dump())) break;
  }
}

// ---------------------------------------------------------------- client

ControlClient::ControlClient(net::SocketAddress server, int timeout_ms) : server_(server), timeout_ms_(timeout_ms) {}

ControlClient::~ControlClient() {
  std::lock_guard lock(mu_);
  close_locked();
}

void ControlClient::close_locked() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void ControlClient::connect_locked() {
  if (fd_ >= 0) return;
  const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error(ErrorCode::SocketError, std::strerror(errno));
  timeval tv{timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000};
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  sockaddr_in sa{};
  server_.to_sockaddr(sa);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0) {
    const std::string msg = std::strerror(errno);
    ::close(fd);
    throw Error(ErrorCode::SocketError, "connect " + server_.to_string() + ": " + msg);
  }
  fd_ = fd;
}

json ControlClient::request(const json& req) {
  std::lock_guard lock(mu_);
  connect_locked();
  std::string reply;
  if (!write_frame(fd_, req.dump()) || !read_frame(fd_, reply)) {
    close_locked();
    throw Error(ErrorCode::SocketError, "control connection to " + server_.to_string() + " lost");
  }
  try {
    return json::parse(reply);
  } catch (const json::exception& e) {
    close_locked();
    throw Error(ErrorCode::SocketError, std::string("bad control reply: ") + e.what());
  }
}

json ControlClient::call(const json& req) {
  json reply = request(req);
  if (reply.value("ok", false)) return reply;
  const std::string code = reply.value("error", "InvalidArgument");
  ErrorCode ec = ErrorCode::InvalidArgument;
  for (int i = 0; i <= static_cast<int>(ErrorCode::ScenarioTimeout); ++i) {
    if (to_string(static_cast<ErrorCode>(i)) == code) ec = static_cast<ErrorCode>(i);
  }
  throw Error(ec, reply.value("message", code));
}

// ---------------------------------------------------------------- sync

SyncListener::SyncListener(controlplane::ControlPlane& cp, const net::SocketAddress& listen)
    : cp_(cp), socket_(listen) {
  socket_.set_receive_timeout_ms(200);
  thread_ = std::thread([this] { run(); });
}

SyncListener::~SyncListener() { stop(); }

void SyncListener::stop() {
  if (stopping_.exchange(true)) return;
  if (thread_.joinable()) thread_.join();
}

void SyncListener::run() {
  std::uint8_t buf[256];
  while (!stopping_) {
    std::optional<std::size_t> n;
    try {
      n = socket_.receive_from(buf);
    } catch (const Error& e) {
      spdlog::warn("sync receive: {}", e.what());
      continue;
    }
    if (!n) continue;
    const auto msg = wire::decode_sync(std::span<const std::uint8_t>(buf, *n));
    if (!msg) {
      ++rejected_;
      continue;
    }
    try {
      cp_.ingest_sync(instance_of_source(msg->source_id), *msg);
    } catch (const Error& e) {
      ++rejected_;
      spdlog::debug("sync from source {:#x} rejected: {}", msg->source_id, e.what());
    }
  }
}

}  // namespace ejfat::control
