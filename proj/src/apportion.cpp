#include <algorithm>
#include <cmath>
#include <vector>

#include "ejfat/controlplane.hpp"

namespace ejfat::controlplane {

dataplane::SlotTable apportion_slots(const WeightVector& weights, std::size_t slot_count) {
  struct Share {
    SessionId id;
    double remainder;
    std::size_t slots;
  };

  double total = 0;
  for (const auto& [id, w] : weights) {
    if (w > 0 && std::isfinite(w)) total += w;
  }
  if (total <= 0 || slot_count == 0) throw Error(ErrorCode::EmptyWeights);

  std::vector<Share> shares;
  std::size_t assigned = 0;
  for (const auto& [id, w] : weights) {
    if (!(w > 0) || !std::isfinite(w)) continue;
    const double quota = static_cast<double>(slot_count) * w / total;
    const auto whole = static_cast<std::size_t>(std::floor(quota));
    shares.push_back(Share{id, quota - static_cast<double>(whole), whole});
    assigned += whole;
  }

  // Hand out the leftover slots by largest remainder. The weights map is
  // ordered by session id and stable_sort keeps that order among ties.
  std::vector<std::size_t> order(shares.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return shares[a].remainder > shares[b].remainder;
  });
  for (std::size_t k = 0; assigned < slot_count; k = (k + 1) % order.size()) {
    ++shares[order[k]].slots;
    ++assigned;
  }
  // Floating-point quotas can overshoot by a slot; take it back from the
  // smallest remainders.
  for (std::size_t k = order.size(); assigned > slot_count && k > 0; --k) {
    auto& s = shares[order[k - 1]];
    if (s.slots > 0) {
      --s.slots;
      --assigned;
    }
  }

  // Interleaved deal: cycle members by descending slot count (session id on
  // ties), skipping exhausted ones.
  std::stable_sort(shares.begin(), shares.end(),
                   [](const Share& a, const Share& b) { return a.slots > b.slots; });
  dataplane::SlotTable table(slot_count);
  std::vector<std::size_t> left;
  for (const auto& s : shares) left.push_back(s.slots);
  std::size_t pos = 0;
  while (pos < slot_count) {
    for (std::size_t i = 0; i < shares.size() && pos < slot_count; ++i) {
      if (left[i] == 0) continue;
      table.slots[pos++] = shares[i].id;
      --left[i];
    }
  }
  return table;
}

}  // namespace ejfat::controlplane
