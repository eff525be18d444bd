// Control-plane snapshot: "EJFATCP1" | u64 payload length | JSON payload |
// u32 CRC-32 of the payload, all big-endian. Written to a temp file and
// renamed into place.

#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <string>

#include "byte_order.hpp"
#include "ejfat/controlplane.hpp"
#include "ejfat/log.hpp"

namespace ejfat::controlplane {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'E', 'J', 'F', 'A', 'T', 'C', 'P', '1'};
constexpr int kFormatVersion = 1;

std::uint32_t crc_of(const std::string& payload) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size())));
}

[[noreturn]] void corrupt(const std::string& why) { throw Error(ErrorCode::CorruptSnapshot, why); }

dataplane::MemberState parse_state(const std::string& s) {
  if (s == "ACTIVE") return dataplane::MemberState::Active;
  if (s == "DRAINING") return dataplane::MemberState::Draining;
  if (s == "RETIRED") return dataplane::MemberState::Retired;
  corrupt("unknown member state " + s);
}

void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::InvalidArgument, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

std::string ControlPlane::snapshot_locked() const {
  json root;
  root["format"] = kFormatVersion;
  root["next_session_id"] = next_session_id_;
  json instances = json::array();
  for (const auto& [id, inst] : instances_) {
    json ji;
    ji["instance_id"] = id;
    ji["listen"] = inst.config.listen.to_string();
    ji["slot_count"] = inst.config.slot_count;
    ji["drain_delay_ns"] = inst.config.drain_delay_ns;
    ji["epoch_retain"] = inst.config.epoch_retain;
    ji["next_epoch_id"] = inst.next_epoch_id;
    ji["epochs_total"] = inst.epochs_total;
    ji["sync_rejected"] = inst.sync_rejected;
    ji["boundary_floor_hits"] = inst.boundary_floor_hits;
    if (inst.last_forwarded_tick) {
      ji["last_forwarded_tick"] = *inst.last_forwarded_tick;
      ji["last_forwarded_sample_ns"] = inst.last_forwarded_sample_ns;
      ji["forwarded_tick_rate"] = inst.forwarded_tick_rate;
    }

    json members = json::array();
    for (const auto& m : inst.dp->members()) {
      json jm;
      jm["session_id"] = m.session_id;
      jm["ip"] = m.endpoint.ip.to_string();
      jm["base_port"] = m.endpoint.base_port;
      jm["port_count"] = m.endpoint.port_count;
      jm["state"] = std::string(dataplane::to_string(m.state));
      jm["admitted_epoch"] = m.admitted_epoch;
      if (m.draining_since_ns) jm["draining_since_ns"] = *m.draining_since_ns;
      if (auto rec = inst.records.find(m.session_id); rec != inst.records.end()) {
        jm["weight"] = rec->second.weight;
        jm["last_seen_ns"] = rec->second.last_seen_ns;
        jm["report_pending"] = rec->second.report_pending;
        if (const auto& r = rec->second.latest_report) {
          jm["report"] = {{"fill", r->queue_fill},
                          {"control", r->control_signal},
                          {"ready", r->ready},
                          {"wallclock_ns", r->wallclock_ns}};
        }
      }
      members.push_back(std::move(jm));
    }
    ji["members"] = std::move(members);

    json epochs = json::array();
    for (const auto& e : inst.dp->epochs()) {
      epochs.push_back({{"epoch_id", e.epoch_id}, {"boundary_tick", e.boundary_tick}, {"slots", e.table.slots}});
    }
    ji["epochs"] = std::move(epochs);

    json samples = json::array();
    for (const auto& s : inst.predictor.samples()) {
      samples.push_back({s.source_id, s.wallclock_ns, s.tick});
    }
    json last = json::array();
    for (const auto& [src, tick] : inst.predictor.last_tick_by_source()) last.push_back({src, tick});
    ji["predictor"] = {{"samples", std::move(samples)},
                       {"last_tick_by_source", std::move(last)},
                       {"newest_tick", inst.predictor.newest_tick()}};
    instances.push_back(std::move(ji));
  }
  root["instances"] = std::move(instances);

  const std::string payload = root.dump();
  std::string out(kMagic, sizeof(kMagic));
  std::uint8_t len[8];
  detail::put_be64(len, payload.size());
  out.append(reinterpret_cast<const char*>(len), sizeof(len));
  out += payload;
  std::uint8_t crc[4];
  detail::put_be32(crc, crc_of(payload));
  out.append(reinterpret_cast<const char*>(crc), sizeof(crc));
  return out;
}

std::string ControlPlane::snapshot() const {
  std::lock_guard lock(mutex_);
  return snapshot_locked();
}

void ControlPlane::persist_state(const std::filesystem::path& path) const {
  std::string bytes;
  {
    std::lock_guard lock(mutex_);
    bytes = snapshot_locked();
  }
  write_atomic(path, bytes);
}

void ControlPlane::restore_locked(const std::string& bytes) {
  constexpr std::size_t kFixed = sizeof(kMagic) + 8 + 4;
  if (bytes.size() < kFixed || bytes.compare(0, sizeof(kMagic), kMagic, sizeof(kMagic)) != 0) {
    corrupt("bad snapshot header");
  }
  const auto* raw = reinterpret_cast<const std::uint8_t*>(bytes.data());
  const std::uint64_t len = detail::get_be64(raw + sizeof(kMagic));
  if (len != bytes.size() - kFixed) corrupt("snapshot length mismatch");
  const std::string payload = bytes.substr(sizeof(kMagic) + 8, len);
  if (detail::get_be32(raw + sizeof(kMagic) + 8 + len) != crc_of(payload)) corrupt("snapshot checksum mismatch");

  json root;
  try {
    root = json::parse(payload);
    if (root.at("format").get<int>() != kFormatVersion) corrupt("unsupported snapshot format");

    std::map<InstanceId, Instance> instances;
    std::map<SessionId, InstanceId> index;
    for (const auto& ji : root.at("instances")) {
      Instance inst;
      const auto id = ji.at("instance_id").get<InstanceId>();
      inst.config.instance_id = id;
      inst.config.listen = net::parse_address_or_throw(ji.at("listen").get<std::string>());
      inst.config.slot_count = ji.at("slot_count").get<std::size_t>();
      inst.config.drain_delay_ns = ji.at("drain_delay_ns").get<std::uint64_t>();
      inst.config.epoch_retain = ji.at("epoch_retain").get<std::size_t>();
      inst.next_epoch_id = ji.at("next_epoch_id").get<EpochId>();
      inst.epochs_total = ji.at("epochs_total").get<std::uint64_t>();
      inst.sync_rejected = ji.at("sync_rejected").get<std::uint64_t>();
      inst.boundary_floor_hits = ji.at("boundary_floor_hits").get<std::uint64_t>();
      if (ji.contains("last_forwarded_tick")) {
        inst.last_forwarded_tick = ji.at("last_forwarded_tick").get<Tick>();
        inst.last_forwarded_sample_ns = ji.at("last_forwarded_sample_ns").get<std::uint64_t>();
        inst.forwarded_tick_rate = ji.at("forwarded_tick_rate").get<double>();
      }

      std::vector<dataplane::MemberSession> members;
      for (const auto& jm : ji.at("members")) {
        dataplane::MemberSession m;
        m.session_id = jm.at("session_id").get<SessionId>();
        auto ip = net::Ipv4::parse(jm.at("ip").get<std::string>());
        if (!ip) corrupt("bad member ip");
        m.endpoint = dataplane::Endpoint{*ip, jm.at("base_port").get<std::uint16_t>(),
                                         jm.at("port_count").get<std::uint16_t>()};
        m.state = parse_state(jm.at("state").get<std::string>());
        m.admitted_epoch = jm.at("admitted_epoch").get<EpochId>();
        if (jm.contains("draining_since_ns")) m.draining_since_ns = jm.at("draining_since_ns").get<std::uint64_t>();
        MemberRecord rec;
        rec.weight = jm.value("weight", 1.0);
        rec.last_seen_ns = jm.value("last_seen_ns", std::uint64_t{0});
        rec.report_pending = jm.value("report_pending", false);
        if (jm.contains("report")) {
          const auto& r = jm.at("report");
          rec.latest_report = FillReport{m.session_id, r.at("fill").get<double>(), r.at("control").get<double>(),
                                         r.at("ready").get<bool>(), r.at("wallclock_ns").get<std::uint64_t>()};
        }
        inst.records.emplace(m.session_id, rec);
        index[m.session_id] = id;
        members.push_back(m);
      }

      std::vector<dataplane::Epoch> epochs;
      for (const auto& je : ji.at("epochs")) {
        dataplane::Epoch e;
        e.epoch_id = je.at("epoch_id").get<EpochId>();
        e.boundary_tick = je.at("boundary_tick").get<Tick>();
        e.table.slots = je.at("slots").get<std::vector<SessionId>>();
        epochs.push_back(std::move(e));
      }

      const auto& jp = ji.at("predictor");
      std::deque<TickPredictor::Sample> samples;
      for (const auto& s : jp.at("samples")) {
        samples.push_back({s.at(0).get<std::uint32_t>(), s.at(1).get<std::uint64_t>(), s.at(2).get<Tick>()});
      }
      std::map<std::uint32_t, Tick> last;
      for (const auto& s : jp.at("last_tick_by_source")) last[s.at(0).get<std::uint32_t>()] = s.at(1).get<Tick>();
      inst.predictor = TickPredictor(config_.predictor_window);
      inst.predictor.restore(std::move(samples), std::move(last), jp.at("newest_tick").get<Tick>());

      inst.dp = std::make_shared<dataplane::LbInstance>(inst.config);
      inst.dp->restore(std::move(members), std::move(epochs));
      instances.emplace(id, std::move(inst));
    }
    instances_ = std::move(instances);
    session_index_ = std::move(index);
    next_session_id_ = root.at("next_session_id").get<SessionId>();
  } catch (const json::exception& e) {
    corrupt(std::string("snapshot parse: ") + e.what());
  }
}

void ControlPlane::restore_from_bytes(const std::string& bytes) {
  std::lock_guard lock(mutex_);
  reset_locked();
  try {
    restore_locked(bytes);
  } catch (...) {
    reset_locked();
    throw;
  }
}

RestoreOutcome ControlPlane::restore_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::lock_guard lock(mutex_);
    reset_locked();
    return RestoreOutcome::Missing;
  }
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    restore_from_bytes(bytes);
  } catch (const Error& e) {
    spdlog::error("snapshot {} unusable ({}); starting with empty state", path.string(), e.what());
    throw;
  }
  spdlog::info("restored control-plane state from {}", path.string());
  return RestoreOutcome::Restored;
}

void persist_bytes(const std::filesystem::path& path, const std::string& bytes) { write_atomic(path, bytes); }

}  // namespace ejfat::controlplane
