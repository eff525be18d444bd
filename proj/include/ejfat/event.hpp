#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "ejfat/wire.hpp"

namespace ejfat {

using Bytes = std::vector<std::uint8_t>;

/// One data-aggregation event: every channel's payload for one tick.
struct Event {
  Tick tick = 0;
  std::map<std::uint16_t, Bytes> channels;

  std::size_t payload_octets() const noexcept;
  friend bool operator==(const Event&, const Event&) = default;
};

/// FNV-1a 64 over tick, then (channel, length, payload) in channel order,
/// integers big-endian. Sender and receiver compare these end to end.
std::uint64_t event_digest(const Event& e) noexcept;

}  // namespace ejfat
