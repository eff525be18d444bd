#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "ejfat/error.hpp"

struct sockaddr_in;

namespace ejfat::net {

/// IPv4 address in host byte order.
struct Ipv4 {
  std::uint32_t value = 0;

  static std::optional<Ipv4> parse(std::string_view text);
  std::string to_string() const;

  friend auto operator<=>(const Ipv4&, const Ipv4&) = default;
};

struct SocketAddress {
  Ipv4 ip;
  std::uint16_t port = 0;

  /// Parses "a.b.c.d:port".
  static std::optional<SocketAddress> parse(std::string_view text);
  std::string to_string() const;

  void to_sockaddr(sockaddr_in& out) const noexcept;
  static SocketAddress from_sockaddr(const sockaddr_in& in) noexcept;

  friend auto operator<=>(const SocketAddress&, const SocketAddress&) = default;
};

/// Parses "ip:port", throwing Error{InvalidArgument} on failure.
SocketAddress parse_address_or_throw(std::string_view text);

/// Owning IPv4 UDP socket.
class UdpSocket {
 public:
  UdpSocket();
  explicit UdpSocket(const SocketAddress& bind_to);
  ~UdpSocket();

  UdpSocket(UdpSocket&& other) noexcept;
  UdpSocket& operator=(UdpSocket&& other) noexcept;
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;

  int fd() const noexcept { return fd_; }
  SocketAddress local_address() const;

  void set_receive_buffer(int bytes);
  void set_send_buffer(int bytes);
  /// Receive timeout so blocking readers can observe shutdown flags.
  void set_receive_timeout_ms(int ms);

  /// Returns false when the kernel reports a transient failure (ENOBUFS,
  /// EAGAIN); throws Error{SocketError} otherwise.
  bool send_to(std::span<const std::uint8_t> data, const SocketAddress& dest);

  /// Returns the datagram length, or nullopt on timeout/interrupt.
  std::optional<std::size_t> receive_from(std::span<std::uint8_t> buffer,
                                          SocketAddress* from = nullptr);

 private:
  int fd_ = -1;
};

}  // namespace ejfat::net
