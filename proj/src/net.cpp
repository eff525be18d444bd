#include "ejfat/net.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <utility>

namespace ejfat::net {
namespace {

[[noreturn]] void throw_errno(const char* what) {
  throw Error(ErrorCode::SocketError, std::string(what) + ": " + std::strerror(errno));
}

}  // namespace

std::optional<Ipv4> Ipv4::parse(std::string_view text) {
  std::uint32_t value = 0;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int octet = 0; octet < 4; ++octet) {
    unsigned part = 0;
    auto [next, ec] = std::from_chars(p, end, part);
    if (ec != std::errc() || part > 255 || next == p) return std::nullopt;
    value = (value << 8) | part;
    p = next;
    if (octet < 3) {
      if (p == end || *p != '.') return std::nullopt;
      ++p;
    }
  }
  if (p != end) return std::nullopt;
  return Ipv4{value};
}

std::string Ipv4::to_string() const {
  return std::to_string(value >> 24) + "." + std::to_string((value >> 16) & 0xFF) + "." +
         std::to_string((value >> 8) & 0xFF) + "." + std::to_string(value & 0xFF);
}

std::optional<SocketAddress> SocketAddress::parse(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos) return std::nullopt;
  auto ip = Ipv4::parse(text.substr(0, colon));
  if (!ip) return std::nullopt;
  const auto port_text = text.substr(colon + 1);
  unsigned port = 0;
  auto [next, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc() || next != port_text.data() + port_text.size() || port > 65535) {
    return std::nullopt;
  }
  return SocketAddress{*ip, static_cast<std::uint16_t>(port)};
}

std::string SocketAddress::to_string() const {
  return ip.to_string() + ":" + std::to_string(port);
}

void SocketAddress::to_sockaddr(sockaddr_in& out) const noexcept {
  std::memset(&out, 0, sizeof(out));
  out.sin_family = AF_INET;
  out.sin_port = htons(port);
  out.sin_addr.s_addr = htonl(ip.value);
}

SocketAddress SocketAddress::from_sockaddr(const sockaddr_in& in) noexcept {
  return SocketAddress{Ipv4{ntohl(in.sin_addr.s_addr)}, ntohs(in.sin_port)};
}

SocketAddress parse_address_or_throw(std::string_view text) {
  auto addr = SocketAddress::parse(text);
  if (!addr) {
    throw Error(ErrorCode::InvalidArgument, "bad socket address '" + std::string(text) + "'");
  }
  return *addr;
}

UdpSocket::UdpSocket() {
  fd_ = ::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) throw_errno("socket");
}

UdpSocket::UdpSocket(const SocketAddress& bind_to) : UdpSocket() {
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in sa{};
  bind_to.to_sockaddr(sa);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0) {
    const int saved = errno;
    ::close(fd_);
    fd_ = -1;
    errno = saved;
    throw_errno(("bind " + bind_to.to_string()).c_str());
  }
}

UdpSocket::~UdpSocket() {
  if (fd_ >= 0) ::close(fd_);
}

UdpSocket::UdpSocket(UdpSocket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}

UdpSocket& UdpSocket::operator=(UdpSocket&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

SocketAddress UdpSocket::local_address() const {
  sockaddr_in sa{};
  socklen_t len = sizeof(sa);
  if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&sa), &len) != 0) throw_errno("getsockname");
  return SocketAddress::from_sockaddr(sa);
}

void UdpSocket::set_receive_buffer(int bytes) {
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVBUF, &bytes, sizeof(bytes));
}

void UdpSocket::set_send_buffer(int bytes) {
  ::setsockopt(fd_, SOL_SOCKET, SO_SNDBUF, &bytes, sizeof(bytes));
}

void UdpSocket::set_receive_timeout_ms(int ms) {
  timeval tv{};
  tv.tv_sec = ms / 1000;
  tv.tv_usec = (ms % 1000) * 1000;
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
}

bool UdpSocket::send_to(std::span<const std::uint8_t> data, const SocketAddress& dest) {
  sockaddr_in sa{};
  dest.to_sockaddr(sa);
  const auto n = ::sendto(fd_, data.data(), data.size(), 0, reinterpret_cast<sockaddr*>(&sa),
                          sizeof(sa));
  if (n >= 0) return true;
  if (errno == ENOBUFS || errno == EAGAIN || errno == EWOULDBLOCK || errno == ECONNREFUSED) {
    return false;
  }
  throw_errno("sendto");
}

std::optional<std::size_t> UdpSocket::receive_from(std::span<std::uint8_t> buffer,
                                                   SocketAddress* from) {
  sockaddr_in sa{};
  socklen_t len = sizeof(sa);
  const auto n = ::recvfrom(fd_, buffer.data(), buffer.size(), 0,
                            reinterpret_cast<sockaddr*>(&sa), &len);
  if (n < 0) {
    if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR || errno == ECONNREFUSED) {
      return std::nullopt;
    }
    throw_errno("recvfrom");
  }
  if (from) *from = SocketAddress::from_sockaddr(sa);
  return static_cast<std::size_t>(n);
}

}  // namespace ejfat::net
