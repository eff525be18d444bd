#include <algorithm>
#include <cmath>
#include <limits>

#include "ejfat/controlplane.hpp"

namespace ejfat::controlplane {

TickPredictor::TickPredictor(std::size_t window) : window_(window == 0 ? 1 : window) {}

bool TickPredictor::add_sample(std::uint32_t source_id, std::uint64_t wallclock_ns, Tick tick) {
  auto it = last_by_source_.find(source_id);
  if (it != last_by_source_.end() && tick < it->second) return false;
  last_by_source_[source_id] = tick;
  newest_tick_ = std::max(newest_tick_, tick);
  samples_.push_back(Sample{source_id, wallclock_ns, tick});
  while (samples_.size() > window_) samples_.pop_front();
  refit();
  return true;
}

void TickPredictor::restore(std::deque<Sample> samples, std::map<std::uint32_t, Tick> last_by_source,
                            Tick newest_tick) {
  samples_ = std::move(samples);
  while (samples_.size() > window_) samples_.pop_front();
  last_by_source_ = std::move(last_by_source);
  newest_tick_ = newest_tick;
  refit();
}

void TickPredictor::refit() {
  slope_ = 0;
  mean_x_s_ = 0;
  mean_y_ = 0;
  if (samples_.empty()) return;

  base_t_ns_ = samples_.front().wallclock_ns;
  base_tick_ = samples_.front().tick;
  for (const auto& s : samples_) {
    base_t_ns_ = std::min(base_t_ns_, s.wallclock_ns);
    base_tick_ = std::min(base_tick_, s.tick);
  }

  // Offsets from the window minimum keep the sums well inside long double
  // precision even for ticks near 2^64.
  const auto n = static_cast<long double>(samples_.size());
  long double sx = 0, sy = 0;
  for (const auto& s : samples_) {
    sx += static_cast<long double>(s.wallclock_ns - base_t_ns_) / 1e9L;
    sy += static_cast<long double>(s.tick - base_tick_);
  }
  mean_x_s_ = sx / n;
  mean_y_ = sy / n;

  long double sxx = 0, sxy = 0;
  for (const auto& s : samples_) {
    const long double dx = static_cast<long double>(s.wallclock_ns - base_t_ns_) / 1e9L - mean_x_s_;
    const long double dy = static_cast<long double>(s.tick - base_tick_) - mean_y_;
    sxx += dx * dx;
    sxy += dx * dy;
  }
  if (samples_.size() >= 2 && sxx > 0) {
    slope_ = std::max(0.0, static_cast<double>(sxy / sxx));
  }
}

std::optional<Tick> TickPredictor::predict(std::uint64_t at_ns) const {
  if (samples_.empty()) return std::nullopt;
  const long double dx =
      (static_cast<long double>(at_ns) - static_cast<long double>(base_t_ns_)) / 1e9L - mean_x_s_;
  const long double y = std::roundl(mean_y_ + static_cast<long double>(slope_) * dx);

  Tick predicted = 0;
  if (y >= 0) {
    const long double room = static_cast<long double>(std::numeric_limits<Tick>::max() - base_tick_);
    predicted = y >= room ? std::numeric_limits<Tick>::max() : base_tick_ + static_cast<Tick>(y);
  } else if (-y < static_cast<long double>(base_tick_)) {
    predicted = base_tick_ - static_cast<Tick>(-y);
  }
  return std::max(predicted, newest_tick_);
}

}  // namespace ejfat::controlplane
