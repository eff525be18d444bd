#include "ejfat/dataplane.hpp"

#include <algorithm>
#include <string>

namespace ejfat::dataplane {
namespace {

DropReason drop_reason_for(wire::WireError e) noexcept {
  switch (e) {
    case wire::WireError::BadMagic: return DropReason::BadMagic;
    case wire::WireError::BadVersion: return DropReason::BadVersion;
    case wire::WireError::Truncated: return DropReason::Truncated;
  }
  return DropReason::BadMagic;
}

}  // namespace

bool SlotTable::all_null() const noexcept {
  return std::all_of(slots.begin(), slots.end(), [](SessionId s) { return s == kNoMember; });
}

std::map<SessionId, std::size_t> SlotTable::counts() const {
  std::map<SessionId, std::size_t> out;
  for (SessionId s : slots) {
    if (s != kNoMember) ++out[s];
  }
  return out;
}

std::string_view to_string(MemberState s) noexcept {
  switch (s) {
    case MemberState::Active: return "ACTIVE";
    case MemberState::Draining: return "DRAINING";
    case MemberState::Retired: return "RETIRED";
  }
  return "UNKNOWN";
}

std::string_view to_string(DropReason r) noexcept {
  switch (r) {
    case DropReason::BadMagic: return "BadMagic";
    case DropReason::BadVersion: return "BadVersion";
    case DropReason::Truncated: return "Truncated";
    case DropReason::NoEpoch: return "NoEpoch";
    case DropReason::NullSlot: return "NullSlot";
    case DropReason::UnknownMember: return "UnknownMember";
  }
  return "Unknown";
}

std::uint64_t CounterSnapshot::dropped_total() const noexcept {
  std::uint64_t total = 0;
  for (auto d : dropped) total += d;
  return total;
}

const Epoch* select_epoch(std::span<const Epoch> epochs, Tick tick) noexcept {
  if (epochs.empty()) return nullptr;
  // Epochs are ordered by strictly increasing boundary.
  auto it = std::upper_bound(epochs.begin(), epochs.end(), tick,
                             [](Tick t, const Epoch& e) { return t < e.boundary_tick; });
  if (it == epochs.begin()) return &epochs.front();
  return &*std::prev(it);
}

std::optional<SessionId> select_member(const Epoch& epoch, Tick tick) noexcept {
  const auto& slots = epoch.table.slots;
  if (slots.empty()) return std::nullopt;
  const SessionId id = slots[tick % slots.size()];
  if (id == kNoMember) return std::nullopt;
  return id;
}

std::uint16_t dest_port(const Endpoint& member, std::uint16_t channel) noexcept {
  const std::uint16_t count = member.port_count == 0 ? 1 : member.port_count;
  return static_cast<std::uint16_t>(member.base_port + channel % count);
}

LbInstance::LbInstance(InstanceConfig config) : config_(std::move(config)) {
  if (config_.slot_count == 0) throw Error(ErrorCode::InvalidArgument, "slot_count must be > 0");
  if (config_.epoch_retain == 0) throw Error(ErrorCode::InvalidArgument, "epoch_retain must be > 0");
  std::lock_guard lock(writer_mutex_);
  publish_locked();
}

void LbInstance::add_member(const MemberSession& member) {
  std::lock_guard lock(writer_mutex_);
  MemberSession m = member;
  m.state = MemberState::Active;
  m.draining_since_ns.reset();
  members_[m.session_id] = m;
  member_counter_locked(m.session_id);
  publish_locked();
}

void LbInstance::drain_member(SessionId id, std::uint64_t now_ns) {
  std::lock_guard lock(writer_mutex_);
  auto it = members_.find(id);
  if (it == members_.end() || it->second.state == MemberState::Retired) {
    throw Error(ErrorCode::UnknownSession, "session " + std::to_string(id));
  }
  if (it->second.state == MemberState::Draining) {
    throw Error(ErrorCode::AlreadyDraining, "session " + std::to_string(id));
  }
  it->second.state = MemberState::Draining;
  it->second.draining_since_ns = now_ns;
}

void LbInstance::apply_schedule(Tick boundary_tick, SlotTable table, EpochId epoch_id) {
  std::lock_guard lock(writer_mutex_);
  if (!epochs_.empty() && boundary_tick <= epochs_.back().boundary_tick) {
    throw Error(ErrorCode::StaleBoundary,
                "boundary " + std::to_string(boundary_tick) + " <= newest " +
                    std::to_string(epochs_.back().boundary_tick));
  }
  if (table.size() != config_.slot_count) {
    throw Error(ErrorCode::InvalidTable, "table size " + std::to_string(table.size()));
  }
  for (SessionId s : table.slots) {
    if (s == kNoMember) continue;
    auto it = members_.find(s);
    if (it == members_.end() || it->second.state != MemberState::Active) {
      throw Error(ErrorCode::InvalidTable, "slot references non-active session " + std::to_string(s));
    }
  }
  epochs_.push_back(Epoch{epoch_id, boundary_tick, std::move(table)});
  while (epochs_.size() > config_.epoch_retain) epochs_.erase(epochs_.begin());
  publish_locked();
}

std::vector<SessionId> LbInstance::retire_expired(std::uint64_t now_ns) {
  std::lock_guard lock(writer_mutex_);
  std::vector<SessionId> retired;
  for (auto& [id, m] : members_) {
    if (m.state != MemberState::Draining || !m.draining_since_ns) continue;
    if (*m.draining_since_ns + config_.drain_delay_ns > now_ns) continue;
    if (referenced_locked(id)) continue;
    m.state = MemberState::Retired;
    retired.push_back(id);
  }
  if (!retired.empty()) {
    for (SessionId id : retired) members_.erase(id);
    publish_locked();
  }
  return retired;
}

void LbInstance::retire_all() {
  std::lock_guard lock(writer_mutex_);
  members_.clear();
  epochs_.clear();
  publish_locked();
}

void LbInstance::restore(std::vector<MemberSession> members, std::vector<Epoch> epochs) {
  std::lock_guard lock(writer_mutex_);
  members_.clear();
  for (auto& m : members) {
    if (m.state == MemberState::Retired) continue;
    member_counter_locked(m.session_id);
    members_[m.session_id] = std::move(m);
  }
  epochs_ = std::move(epochs);
  publish_locked();
}

std::vector<Epoch> LbInstance::epochs() const {
  std::lock_guard lock(writer_mutex_);
  return epochs_;
}

std::optional<Epoch> LbInstance::newest_epoch() const {
  std::lock_guard lock(writer_mutex_);
  if (epochs_.empty()) return std::nullopt;
  return epochs_.back();
}

std::vector<MemberSession> LbInstance::members() const {
  std::lock_guard lock(writer_mutex_);
  std::vector<MemberSession> out;
  out.reserve(members_.size());
  for (const auto& [id, m] : members_) out.push_back(m);
  return out;
}

std::optional<MemberSession> LbInstance::member(SessionId id) const {
  std::lock_guard lock(writer_mutex_);
  auto it = members_.find(id);
  if (it == members_.end()) return std::nullopt;
  return it->second;
}

ForwardResult LbInstance::forward(std::span<const std::uint8_t> datagram) noexcept {
  received_.fetch_add(1, std::memory_order_relaxed);
  auto drop = [this](DropReason r) -> ForwardResult {
    dropped_[static_cast<std::size_t>(r)].fetch_add(1, std::memory_order_relaxed);
    return Drop{r};
  };

  auto header = wire::decode_lb_header(datagram);
  if (!header) return drop(drop_reason_for(header.error()));
  const Tick tick = header->tick;

  const auto state = std::atomic_load_explicit(&state_, std::memory_order_acquire);
  const Epoch* epoch = select_epoch(state->epochs, tick);
  if (!epoch) return drop(DropReason::NoEpoch);
  const auto member = select_member(*epoch, tick);
  if (!member) return drop(DropReason::NullSlot);
  const auto route = state->routes.find(*member);
  if (route == state->routes.end()) return drop(DropReason::UnknownMember);

  ForwardAction action;
  action.dest = net::SocketAddress{route->second.endpoint.ip,
                                   dest_port(route->second.endpoint, header->channel)};
  action.payload = datagram.subspan(wire::kLbHeaderSize);
  action.tick = tick;
  action.channel = header->channel;
  action.member = *member;
  action.epoch_id = epoch->epoch_id;

  route->second.forwarded->fetch_add(1, std::memory_order_relaxed);
  // Stored as tick + 1 (saturating) so zero means "nothing forwarded yet".
  const Tick encoded = tick == ~Tick{0} ? tick : tick + 1;
  Tick seen = max_forwarded_plus1_.load(std::memory_order_relaxed);
  while (encoded > seen &&
         !max_forwarded_plus1_.compare_exchange_weak(seen, encoded, std::memory_order_relaxed)) {
  }
  forwarded_.fetch_add(1, std::memory_order_relaxed);
  return action;
}

CounterSnapshot LbInstance::counters() const {
  CounterSnapshot snap;
  // Outcome counters first so a concurrent snapshot never shows more
  // outcomes than receipts.
  snap.forwarded = forwarded_.load(std::memory_order_acquire);
  for (std::size_t i = 0; i < kDropReasonCount; ++i) {
    snap.dropped[i] = dropped_[i].load(std::memory_order_acquire);
  }
  snap.received = received_.load(std::memory_order_acquire);
  if (const Tick m = max_forwarded_plus1_.load(std::memory_order_acquire); m != 0) {
    snap.max_forwarded_tick = m - 1;
  }
  std::lock_guard lock(writer_mutex_);
  for (const auto& [id, counter] : member_forwarded_) {
    snap.per_member[id] = counter->load(std::memory_order_relaxed);
  }
  return snap;
}

void LbInstance::publish_locked() {
  auto next = std::make_shared<RoutingState>();
  next->epochs = epochs_;
  for (const auto& [id, m] : members_) {
    if (m.state == MemberState::Retired) continue;
    next->routes.emplace(id, Route{m.endpoint, member_forwarded_.at(id).get()});
  }
  std::atomic_store_explicit(&state_, std::shared_ptr<const RoutingState>(std::move(next)),
                             std::memory_order_release);
}

bool LbInstance::referenced_locked(SessionId id) const {
  return std::any_of(epochs_.begin(), epochs_.end(), [id](const Epoch& e) {
    return std::find(e.table.slots.begin(), e.table.slots.end(), id) != e.table.slots.end();
  });
}

std::atomic<std::uint64_t>* LbInstance::member_counter_locked(SessionId id) {
  auto& slot = member_forwarded_[id];
  if (!slot) slot = std::make_unique<std::atomic<std::uint64_t>>(0);
  return slot.get();
}

}  // namespace ejfat::dataplane
