#include <algorithm>
#include <cmath>

#include "ejfat/harness.hpp"

namespace ejfat::harness {

Impairer::Impairer(ImpairmentProfile profile) : profile_(profile), rng_(profile.seed) {}

std::vector<Impairer::Released> Impairer::push(Bytes datagram, std::uint64_t now_ns) {
  std::vector<Released> out;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const bool dup = profile_.duplicate > 0 && u(rng_) < profile_.duplicate;
  if (dup) {
    ++duplicated_;
    admit(datagram, out, now_ns);
  }
  admit(std::move(datagram), out, now_ns);
  return out;
}

void Impairer::admit(Bytes datagram, std::vector<Released>& out, std::uint64_t now_ns) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (profile_.loss > 0 && u(rng_) < profile_.loss) {
    ++lost_;
    return;
  }
  if (profile_.reorder == 0) {
    release(std::move(datagram), out, now_ns);
    return;
  }
  // A packet keyed index + U[0, D] leaves once the input index reaches its
  // key, so no packet moves more than D positions either way.
  const std::uint64_t index = next_index_++;
  std::uniform_int_distribution<std::uint64_t> jitter(0, profile_.reorder);
  held_.push(Held{index + jitter(rng_), index, std::move(datagram)});
  while (!held_.empty() && held_.top().key <= index) {
    Bytes d = std::move(const_cast<Held&>(held_.top()).data);
    held_.pop();
    release(std::move(d), out, now_ns);
  }
}

void Impairer::release(Bytes datagram, std::vector<Released>& out, std::uint64_t now_ns) {
  std::uint64_t at = now_ns;
  if (profile_.delay_mean_ms > 0 || profile_.delay_jitter_ms > 0) {
    std::uniform_real_distribution<double> j(-profile_.delay_jitter_ms, profile_.delay_jitter_ms);
    const double ms = std::max(0.0, profile_.delay_mean_ms + j(rng_));
    at = now_ns + static_cast<std::uint64_t>(std::llround(ms * 1e6));
  }
  // Delay never reorders; that is the reorder stage's job.
  at = std::max(at, last_delivery_ns_);
  last_delivery_ns_ = at;
  out.push_back(Released{std::move(datagram), at});
}

std::vector<Impairer::Released> Impairer::flush(std::uint64_t now_ns) {
  std::vector<Released> out;
  while (!held_.empty()) {
    Bytes d = std::move(const_cast<Held&>(held_.top()).data);
    held_.pop();
    release(std::move(d), out, now_ns);
  }
  return out;
}

std::vector<Bytes> impair(const std::vector<Bytes>& stream, const ImpairmentProfile& profile) {
  Impairer imp(profile);
  std::vector<Bytes> out;
  for (const auto& d : stream) {
    for (auto& r : imp.push(d, 0)) out.push_back(std::move(r.data));
  }
  for (auto& r : imp.flush(0)) out.push_back(std::move(r.data));
  return out;
}

}  // namespace ejfat::harness
