#include "ejfat/wire.hpp"

#include "byte_order.hpp"

namespace ejfat::wire {
namespace {

constexpr std::uint8_t kLbMagic0 = 0x4C;  // 'L'
constexpr std::uint8_t kLbMagic1 = 0x42;  // 'B'
constexpr std::uint8_t kSyncMagic1 = 0x43;  // 'C'

}  // namespace

std::string_view to_string(WireError e) noexcept {
  switch (e) {
    case WireError::BadMagic: return "BadMagic";
    case WireError::BadVersion: return "BadVersion";
    case WireError::Truncated: return "Truncated";
  }
  return "Unknown";
}

void encode_lb_header(const LbMetaHeader& h, std::span<std::uint8_t, kLbHeaderSize> out) noexcept {
  out[0] = kLbMagic0;
  out[1] = kLbMagic1;
  out[2] = h.version;
  out[3] = h.protocol;
  detail::put_be16(out.data() + 4, 0);
  detail::put_be16(out.data() + 6, h.channel);
  detail::put_be64(out.data() + 8, h.tick);
}

LbHeaderBytes encode_lb_header(const LbMetaHeader& h) noexcept {
  LbHeaderBytes b{};
  encode_lb_header(h, b);
  return b;
}

Expected<LbMetaHeader, WireError> decode_lb_header(std::span<const std::uint8_t> b) noexcept {
  if (b.size() < kLbHeaderSize) return WireError::Truncated;
  if (b[0] != kLbMagic0 || b[1] != kLbMagic1) return WireError::BadMagic;
  if (b[2] != kLbVersion) return WireError::BadVersion;
  LbMetaHeader h;
  h.version = b[2];
  h.protocol = b[3];
  h.channel = detail::get_be16(b.data() + 6);
  h.tick = detail::get_be64(b.data() + 8);
  return h;
}

void encode_re_header(const ReassemblyHeader& h, std::span<std::uint8_t, kReHeaderSize> out) noexcept {
  detail::put_be16(out.data(), static_cast<std::uint16_t>((h.version & 0x0F) << 12));
  detail::put_be16(out.data() + 2, h.channel);
  detail::put_be32(out.data() + 4, h.offset);
  detail::put_be32(out.data() + 8, h.total_length);
  detail::put_be64(out.data() + 12, h.tick);
}

ReHeaderBytes encode_re_header(const ReassemblyHeader& h) noexcept {
  ReHeaderBytes b{};
  encode_re_header(h, b);
  return b;
}

Expected<ReassemblyHeader, WireError> decode_re_header(std::span<const std::uint8_t> b) noexcept {
  if (b.size() < kReHeaderSize) return WireError::Truncated;
  const std::uint16_t word0 = detail::get_be16(b.data());
  if ((word0 >> 12) != kReVersion) return WireError::BadVersion;
  ReassemblyHeader h;
  h.version = static_cast<std::uint8_t>(word0 >> 12);
  h.channel = detail::get_be16(b.data() + 2);
  h.offset = detail::get_be32(b.data() + 4);
  h.total_length = detail::get_be32(b.data() + 8);
  h.tick = detail::get_be64(b.data() + 12);
  return h;
}

SyncBytes encode_sync(const SyncMessage& s) noexcept {
  SyncBytes b{};
  b[0] = kLbMagic0;
  b[1] = kSyncMagic1;
  b[2] = s.version;
  b[3] = 0;
  detail::put_be32(b.data() + 4, s.source_id);
  detail::put_be64(b.data() + 8, s.latest_tick);
  detail::put_be32(b.data() + 16, s.event_rate_hz);
  detail::put_be64(b.data() + 20, s.wallclock_ns);
  return b;
}

Expected<SyncMessage, WireError> decode_sync(std::span<const std::uint8_t> b) noexcept {
  if (b.size() < kSyncSize) return WireError::Truncated;
  if (b[0] != kLbMagic0 || b[1] != kSyncMagic1) return WireError::BadMagic;
  if (b[2] != kSyncVersion) return WireError::BadVersion;
  SyncMessage s;
  s.version = b[2];
  s.source_id = detail::get_be32(b.data() + 4);
  s.latest_tick = detail::get_be64(b.data() + 8);
  s.event_rate_hz = detail::get_be32(b.data() + 16);
  s.wallclock_ns = detail::get_be64(b.data() + 20);
  return s;
}

}  // namespace ejfat::wire
