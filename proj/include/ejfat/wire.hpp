#pragma once

// On-wire message layouts. All multi-octet fields are big-endian.
//
//   sender -> LB        : LbMetaHeader (16) | ReassemblyHeader (20) | payload
//   LB -> compute node  :                     ReassemblyHeader (20) | payload
//   sender -> CP (sync) : SyncMessage (28)
//
// See docs/protocol.md for the field offset tables.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "ejfat/error.hpp"

namespace ejfat {

/// Aggregation tag of one data-aggregation event. Shared by every fragment
/// and every channel of the event; strictly increasing per sender stream.
using Tick = std::uint64_t;

namespace wire {

inline constexpr std::size_t kLbHeaderSize = 16;
inline constexpr std::size_t kReHeaderSize = 20;
inline constexpr std::size_t kSyncSize = 28;
inline constexpr std::size_t kHeaderOverhead = kLbHeaderSize + kReHeaderSize;

inline constexpr std::uint8_t kLbVersion = 1;
inline constexpr std::uint8_t kLbProtocolEventStream = 1;
inline constexpr std::uint8_t kReVersion = 1;
inline constexpr std::uint8_t kSyncVersion = 1;

enum class WireError { BadMagic, BadVersion, Truncated };

std::string_view to_string(WireError e) noexcept;

struct LbMetaHeader {
  std::uint8_t version = kLbVersion;
  std::uint8_t protocol = kLbProtocolEventStream;
  std::uint16_t reserved = 0;
  std::uint16_t channel = 0;
  Tick tick = 0;

  friend bool operator==(const LbMetaHeader&, const LbMetaHeader&) = default;
};

struct ReassemblyHeader {
  std::uint8_t version = kReVersion;  // 4 bits on the wire
  std::uint16_t reserved = 0;         // 12 bits on the wire
  std::uint16_t channel = 0;
  std::uint32_t offset = 0;
  std::uint32_t total_length = 0;
  Tick tick = 0;

  friend bool operator==(const ReassemblyHeader&, const ReassemblyHeader&) = default;
};

struct SyncMessage {
  std::uint8_t version = kSyncVersion;
  std::uint8_t reserved = 0;
  std::uint32_t source_id = 0;
  Tick latest_tick = 0;
  std::uint32_t event_rate_hz = 0;
  std::uint64_t wallclock_ns = 0;

  friend bool operator==(const SyncMessage&, const SyncMessage&) = default;
};

using LbHeaderBytes = std::array<std::uint8_t, kLbHeaderSize>;
using ReHeaderBytes = std::array<std::uint8_t, kReHeaderSize>;
using SyncBytes = std::array<std::uint8_t, kSyncSize>;

// Encoders always write the magic and zero the reserved fields. Decoders
// read exactly their fixed length from the front of the span and ignore
// reserved bits.

LbHeaderBytes encode_lb_header(const LbMetaHeader& h) noexcept;
void encode_lb_header(const LbMetaHeader& h, std::span<std::uint8_t, kLbHeaderSize> out) noexcept;
Expected<LbMetaHeader, WireError> decode_lb_header(std::span<const std::uint8_t> bytes) noexcept;

ReHeaderBytes encode_re_header(const ReassemblyHeader& h) noexcept;
void encode_re_header(const ReassemblyHeader& h, std::span<std::uint8_t, kReHeaderSize> out) noexcept;
Expected<ReassemblyHeader, WireError> decode_re_header(std::span<const std::uint8_t> bytes) noexcept;

SyncBytes encode_sync(const SyncMessage& s) noexcept;
Expected<SyncMessage, WireError> decode_sync(std::span<const std::uint8_t> bytes) noexcept;

}  // namespace wire
}  // namespace ejfat
