#include "ejfat/controlplane.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "ejfat/log.hpp"

namespace ejfat::controlplane {

// snapshot.cpp
void persist_bytes(const std::filesystem::path& path, const std::string& bytes);

namespace {

bool is_power_of_two(std::uint32_t v) { return v != 0 && (v & (v - 1)) == 0; }

bool ranges_overlap(const dataplane::Endpoint& a, const dataplane::Endpoint& b) {
  if (a.ip != b.ip) return false;
  const std::uint32_t a_end = std::uint32_t{a.base_port} + a.port_count;
  const std::uint32_t b_end = std::uint32_t{b.base_port} + b.port_count;
  return a.base_port < b_end && b.base_port < a_end;
}

}  // namespace

ControlPlane::ControlPlane(const Clock& clock, ControlConfig config)
    : clock_(clock), config_(std::move(config)) {}

ControlPlane::Instance& ControlPlane::instance_locked(InstanceId id) {
  auto it = instances_.find(id);
  if (it == instances_.end()) throw Error(ErrorCode::UnknownInstance, "instance " + std::to_string(id));
  return it->second;
}

const ControlPlane::Instance& ControlPlane::instance_locked(InstanceId id) const {
  auto it = instances_.find(id);
  if (it == instances_.end()) throw Error(ErrorCode::UnknownInstance, "instance " + std::to_string(id));
  return it->second;
}

InstanceId ControlPlane::reserve_instance(dataplane::InstanceConfig config,
                                          std::optional<InstanceId> requested) {
  std::lock_guard lock(mutex_);
  if (instances_.size() >= dataplane::kMaxInstances) {
    throw Error(ErrorCode::CapacityExhausted,
                "all " + std::to_string(dataplane::kMaxInstances) + " instances reserved");
  }
  InstanceId id = 0;
  if (requested) {
    if (*requested >= dataplane::kMaxInstances || instances_.count(*requested)) {
      throw Error(ErrorCode::InvalidArgument, "instance id " + std::to_string(*requested) + " unavailable");
    }
    id = *requested;
  } else {
    while (instances_.count(id)) ++id;
  }
  config.instance_id = id;
  Instance inst;
  inst.config = config;
  inst.dp = std::make_shared<dataplane::LbInstance>(config);
  inst.predictor = TickPredictor(config_.predictor_window);
  instances_.emplace(id, std::move(inst));
  spdlog::info("reserved instance {} listening on {}", id, config.listen.to_string());
  return id;
}

void ControlPlane::free_instance(InstanceId id) {
  std::lock_guard lock(mutex_);
  auto& inst = instance_locked(id);
  inst.dp->retire_all();
  for (const auto& [session, rec] : inst.records) session_index_.erase(session);
  instances_.erase(id);
  spdlog::info("freed instance {}", id);
}

std::vector<InstanceId> ControlPlane::instances() const {
  std::lock_guard lock(mutex_);
  std::vector<InstanceId> out;
  for (const auto& [id, inst] : instances_) out.push_back(id);
  return out;
}

std::size_t ControlPlane::available_capacity() const {
  std::lock_guard lock(mutex_);
  return dataplane::kMaxInstances - instances_.size();
}

SessionId ControlPlane::register_member(InstanceId id, const dataplane::Endpoint& endpoint,
                                        double initial_weight) {
  std::lock_guard lock(mutex_);
  auto& inst = instance_locked(id);
  if (!is_power_of_two(endpoint.port_count) ||
      std::uint32_t{endpoint.base_port} + endpoint.port_count > 65536) {
    throw Error(ErrorCode::InvalidArgument, "port_count must be a power of two within the port space");
  }
  if (!(initial_weight > 0) || !std::isfinite(initial_weight)) {
    throw Error(ErrorCode::InvalidArgument, "initial weight must be positive");
  }
  for (const auto& m : inst.dp->members()) {
    if (m.state == dataplane::MemberState::Active && ranges_overlap(m.endpoint, endpoint)) {
      throw Error(ErrorCode::DuplicateEndpoint,
                  endpoint.ip.to_string() + ":" + std::to_string(endpoint.base_port) +
                      " overlaps session " + std::to_string(m.session_id));
    }
  }
  const SessionId session = next_session_id_++;
  dataplane::MemberSession m;
  m.session_id = session;
  m.endpoint = endpoint;
  m.admitted_epoch = inst.next_epoch_id;
  inst.dp->add_member(m);

  MemberRecord rec;
  rec.weight = std::clamp(initial_weight, config_.weight_min, config_.weight_max);
  rec.last_seen_ns = clock_.now_ns();
  inst.records.emplace(session, rec);
  session_index_[session] = id;
  spdlog::info("instance {}: registered session {} at {}:{}+{}", id, session,
               endpoint.ip.to_string(), endpoint.base_port, endpoint.port_count);
  return session;
}

void ControlPlane::deregister_member(SessionId session) {
  std::lock_guard lock(mutex_);
  auto idx = session_index_.find(session);
  if (idx == session_index_.end()) throw Error(ErrorCode::UnknownSession, "session " + std::to_string(session));
  auto& inst = instance_locked(idx->second);
  inst.dp->drain_member(session, clock_.now_ns());
  spdlog::info("instance {}: session {} draining", idx->second, session);
}

void ControlPlane::ingest_fill_report(const FillReport& report) {
  std::lock_guard lock(mutex_);
  auto idx = session_index_.find(report.session_id);
  if (idx == session_index_.end()) {
    throw Error(ErrorCode::UnknownSession, "session " + std::to_string(report.session_id));
  }
  if (!std::isfinite(report.queue_fill) || !std::isfinite(report.control_signal)) {
    throw Error(ErrorCode::InvalidArgument, "non-finite fill report");
  }
  auto& inst = instance_locked(idx->second);
  auto& rec = inst.records.at(report.session_id);
  FillReport stored = report;
  stored.queue_fill = std::clamp(report.queue_fill, 0.0, 1.0);
  stored.control_signal = std::clamp(report.control_signal, -1.0, 1.0);
  rec.latest_report = stored;
  rec.report_pending = true;
  rec.last_seen_ns = clock_.now_ns();
}

void ControlPlane::ingest_sync(InstanceId id, const wire::SyncMessage& sync) {
  std::lock_guard lock(mutex_);
  auto& inst = instance_locked(id);
  if (!inst.predictor.add_sample(sync.source_id, sync.wallclock_ns, sync.latest_tick)) {
    ++inst.sync_rejected;
    throw Error(ErrorCode::NonMonotonicTick,
                "source " + std::to_string(sync.source_id) + " tick " + std::to_string(sync.latest_tick));
  }
}

Tick ControlPlane::predict_tick(InstanceId id, std::uint64_t at_ns) const {
  std::lock_guard lock(mutex_);
  const auto prediction = instance_locked(id).predictor.predict(at_ns);
  if (!prediction) throw Error(ErrorCode::NoSyncData, "instance " + std::to_string(id));
  return *prediction;
}

bool ControlPlane::ready_locked(const Instance& inst, SessionId id, const MemberRecord& rec,
                                std::uint64_t now_ns) const {
  const auto member = inst.dp->member(id);
  if (!member || member->state != dataplane::MemberState::Active) return false;
  if (now_ns >= rec.last_seen_ns && now_ns - rec.last_seen_ns >= config_.stale_after_ns) return false;
  return !rec.latest_report || rec.latest_report->ready;
}

WeightVector ControlPlane::update_weights_locked(Instance& inst, std::uint64_t now_ns) {
  WeightVector out;
  for (auto& [id, rec] : inst.records) {
    const bool pending = std::exchange(rec.report_pending, false);
    if (!ready_locked(inst, id, rec, now_ns)) continue;
    const double c = pending ? rec.latest_report->control_signal : 0.0;
    rec.weight = std::clamp(rec.weight * (1.0 + config_.gain * c), config_.weight_min, config_.weight_max);
    out[id] = rec.weight;
  }
  if (out.empty()) throw Error(ErrorCode::NoReadyMembers);
  return out;
}

WeightVector ControlPlane::update_weights(InstanceId id) {
  std::lock_guard lock(mutex_);
  return update_weights_locked(instance_locked(id), clock_.now_ns());
}

Tick ControlPlane::next_boundary_locked(Instance& inst, std::uint64_t now_ns, ControlTickResult& result) {
  const auto counters = inst.dp->counters();
  const auto newest = inst.dp->newest_epoch();

  std::optional<Tick> predicted = inst.predictor.predict(now_ns + config_.guard_ns);
  if (!predicted && counters.max_forwarded_tick) {
    // No sync yet: extrapolate from what the data plane has forwarded.
    const double lead = inst.forwarded_tick_rate * static_cast<double>(config_.guard_ns) / 1e9;
    predicted = *counters.max_forwarded_tick + static_cast<Tick>(std::llround(lead));
  }
  result.degraded = inst.predictor.empty();
  if (result.degraded && !inst.degraded) {
    spdlog::warn("instance {}: no sync data, scheduling epochs from forwarding history",
                 inst.config.instance_id);
  }
  inst.degraded = result.degraded;

  Tick floor = 0;
  if (newest) floor = newest->boundary_tick + 1;
  if (counters.max_forwarded_tick) {
    const Tick after_traffic = *counters.max_forwarded_tick + 1;
    if (predicted && *predicted < after_traffic) {
      result.floor_applied = true;
      ++inst.boundary_floor_hits;
    }
    floor = std::max(floor, after_traffic);
  }
  return predicted ? std::max(*predicted, floor) : floor;
}

ControlTickResult ControlPlane::control_tick(InstanceId id, std::uint64_t now_ns) {
  std::lock_guard lock(mutex_);
  auto& inst = instance_locked(id);
  ControlTickResult result;

  const auto counters = inst.dp->counters();
  if (counters.max_forwarded_tick) {
    if (inst.last_forwarded_tick && now_ns > inst.last_forwarded_sample_ns) {
      const double dt = static_cast<double>(now_ns - inst.last_forwarded_sample_ns) / 1e9;
      const double dtick = static_cast<double>(*counters.max_forwarded_tick - *inst.last_forwarded_tick);
      inst.forwarded_tick_rate = dtick / dt;
    }
    inst.last_forwarded_tick = counters.max_forwarded_tick;
    inst.last_forwarded_sample_ns = now_ns;
  }

  dataplane::SlotTable table(inst.config.slot_count);
  try {
    table = apportion_slots(update_weights_locked(inst, now_ns), inst.config.slot_count);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoReadyMembers) throw;
  }

  const auto newest = inst.dp->newest_epoch();
  const bool changed = newest ? newest->table != table : !table.all_null();
  if (changed) {
    const Tick boundary = next_boundary_locked(inst, now_ns, result);
    const EpochId epoch_id = inst.next_epoch_id++;
    inst.dp->apply_schedule(boundary, table, epoch_id);
    ++inst.epochs_total;
    result.emitted = dataplane::Epoch{epoch_id, boundary, std::move(table)};
    spdlog::debug("instance {}: epoch {} boundary {}", id, epoch_id, boundary);
  }

  result.retired = inst.dp->retire_expired(now_ns);
  for (SessionId s : result.retired) {
    inst.records.erase(s);
    session_index_.erase(s);
    spdlog::info("instance {}: session {} retired", id, s);
  }

  if (config_.snapshot_path) {
    try {
      persist_bytes(*config_.snapshot_path, snapshot_locked());
    } catch (const std::exception& e) {
      spdlog::error("snapshot write failed: {}", e.what());
    }
  }
  return result;
}

void ControlPlane::control_tick_all(std::uint64_t now_ns) {
  for (InstanceId id : instances()) {
    try {
      control_tick(id, now_ns);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UnknownInstance) spdlog::error("control tick {}: {}", id, e.what());
    }
  }
}

std::shared_ptr<dataplane::LbInstance> ControlPlane::dataplane(InstanceId id) const {
  std::lock_guard lock(mutex_);
  return instance_locked(id).dp;
}

std::optional<InstanceId> ControlPlane::instance_of(SessionId session) const {
  std::lock_guard lock(mutex_);
  auto it = session_index_.find(session);
  if (it == session_index_.end()) return std::nullopt;
  return it->second;
}

InstanceStatus ControlPlane::status(InstanceId id) const {
  std::lock_guard lock(mutex_);
  const auto& inst = instance_locked(id);
  const auto now = clock_.now_ns();
  InstanceStatus st;
  st.instance_id = id;
  st.config = inst.config;
  st.epochs = inst.dp->epochs();
  st.counters = inst.dp->counters();
  st.predicted_tick = inst.predictor.predict(now);
  st.tick_rate = inst.predictor.slope();
  st.epochs_total = inst.epochs_total;
  st.sync_rejected = inst.sync_rejected;
  st.boundary_floor_hits = inst.boundary_floor_hits;
  st.degraded = inst.degraded;

  std::map<SessionId, std::size_t> slot_counts;
  if (!st.epochs.empty()) slot_counts = st.epochs.back().table.counts();
  for (const auto& m : inst.dp->members()) {
    MemberStatus ms;
    ms.session = m;
    if (auto rec = inst.records.find(m.session_id); rec != inst.records.end()) {
      ms.weight = rec->second.weight;
      ms.latest_report = rec->second.latest_report;
      ms.ready = ready_locked(inst, m.session_id, rec->second, now);
    }
    if (auto c = slot_counts.find(m.session_id); c != slot_counts.end()) ms.slots = c->second;
    if (auto f = st.counters.per_member.find(m.session_id); f != st.counters.per_member.end()) {
      ms.forwarded = f->second;
    }
    st.members.push_back(ms);
  }
  return st;
}

void ControlPlane::reset_locked() {
  for (auto& [id, inst] : instances_) inst.dp->retire_all();
  instances_.clear();
  session_index_.clear();
  next_session_id_ = 1;
}

}  // namespace ejfat::controlplane
