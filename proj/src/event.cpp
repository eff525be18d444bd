#include "ejfat/event.hpp"

namespace ejfat {
namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void mix(std::uint64_t& h, std::uint8_t b) noexcept {
  h ^= b;
  h *= kFnvPrime;
}

void mix_be(std::uint64_t& h, std::uint64_t v, int octets) noexcept {
  for (int i = octets - 1; i >= 0; --i) mix(h, static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

std::size_t Event::payload_octets() const noexcept {
  std::size_t n = 0;
  for (const auto& [ch, p] : channels) n += p.size();
  return n;
}

std::uint64_t event_digest(const Event& e) noexcept {
  std::uint64_t h = kFnvOffset;
  mix_be(h, e.tick, 8);
  for (const auto& [ch, payload] : e.channels) {
    mix_be(h, ch, 2);
    mix_be(h, payload.size(), 4);
    for (std::uint8_t b : payload) mix(h, b);
  }
  return h;
}

}  // namespace ejfat
