#include <cmath>
#include <fstream>
#include <set>

#include "ejfat/error.hpp"
#include "ejfat/harness.hpp"

namespace ejfat::harness {
namespace {

const std::set<std::string> kActionTypes = {"start_sender", "register", "deregister",
                                            "set_service_rate", "stop", "restart_cp"};

std::optional<double> optional_rate(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const double r = j.at(key).get<double>();
  if (!(r >= 0) || !std::isfinite(r)) throw Error(ErrorCode::InvalidArgument, std::string(key) + " must be >= 0");
  return r;
}

receiver::PidGains parse_gains(const json& j) {
  receiver::PidGains g;
  g.kp = j.value("kp", g.kp);
  g.ki = j.value("ki", g.ki);
  g.kd = j.value("kd", g.kd);
  g.setpoint = j.value("setpoint", g.setpoint);
  g.integral_limit = j.value("integral_limit", g.integral_limit);
  return g;
}

}  // namespace

Scenario parse_scenario(const json& j) {
  Scenario s;
  try {
    s.name = j.value("name", s.name);
    s.seed = j.value("seed", s.seed);
    s.drain_s = j.value("drain_s", s.drain_s);
    s.max_sim_s = j.value("max_sim_s", s.max_sim_s);
    s.sample_period_s = j.value("sample_period_s", s.sample_period_s);

    if (j.contains("sender")) {
      const auto& js = j.at("sender");
      s.sender.rate_hz = js.value("rate_hz", s.sender.rate_hz);
      s.sender.count = js.value("count", s.sender.count);
      s.sender.channels = js.value("channels", s.sender.channels);
      s.sender.size_per_channel = js.value("size_per_channel", s.sender.size_per_channel);
      s.sender.start_tick = js.value("start_tick", s.sender.start_tick);
      s.sender.tick_step = js.value("tick_step", s.sender.tick_step);
      s.sender.mtu = js.value("mtu", s.sender.mtu);
      if (!(s.sender.rate_hz > 0)) throw Error(ErrorCode::InvalidArgument, "sender.rate_hz must be positive");
    }

    if (j.contains("impairment")) {
      const auto& ji = j.at("impairment");
      auto& p = s.impairment;
      p.loss = ji.value("loss", p.loss);
      p.reorder = ji.value("reorder", p.reorder);
      p.delay_mean_ms = ji.value("delay_mean_ms", p.delay_mean_ms);
      p.delay_jitter_ms = ji.value("delay_jitter_ms", p.delay_jitter_ms);
      p.duplicate = ji.value("duplicate", p.duplicate);
      if (p.loss < 0 || p.loss > 1 || p.duplicate < 0 || p.duplicate > 1) {
        throw Error(ErrorCode::InvalidArgument, "impairment probabilities must lie in [0, 1]");
      }
    }
    s.impairment.seed = s.seed;

    if (j.contains("control")) {
      const auto& jc = j.at("control");
      s.control.gain = jc.value("gain", s.control.gain);
      s.control.weight_min = jc.value("weight_min", s.control.weight_min);
      s.control.weight_max = jc.value("weight_max", s.control.weight_max);
      if (jc.contains("guard_s")) s.control.guard_ns = static_cast<std::uint64_t>(std::llround(jc.at("guard_s").get<double>() * 1e9));
    }

    std::set<std::string> names;
    for (const auto& jr : j.value("receivers", json::array())) {
      ReceiverSpec r;
      r.name = jr.at("name").get<std::string>();
      if (!names.insert(r.name).second) throw Error(ErrorCode::InvalidArgument, "duplicate receiver " + r.name);
      r.port_count = jr.value("port_count", r.port_count);
      r.weight = jr.value("weight", r.weight);
      r.service_rate_hz = optional_rate(jr, "service_rate_hz");
      r.queue_capacity = jr.value("queue", r.queue_capacity);
      if (jr.contains("pid")) r.gains = parse_gains(jr.at("pid"));
      r.auto_register = jr.value("auto_register", r.auto_register);
      s.receivers.push_back(std::move(r));
    }

    for (const auto& ja : j.value("actions", json::array())) {
      Action a;
      a.at_s = ja.at("at_s").get<double>();
      a.type = ja.at("do").get<std::string>();
      if (!kActionTypes.count(a.type)) throw Error(ErrorCode::InvalidArgument, "unknown action " + a.type);
      a.receiver = ja.value("receiver", "");
      a.rate_hz = optional_rate(ja, "rate_hz");
      a.downtime_s = ja.value("downtime_s", a.downtime_s);
      const bool needs_receiver = a.type == "register" || a.type == "deregister" || a.type == "set_service_rate";
      if (needs_receiver && !names.count(a.receiver)) {
        throw Error(ErrorCode::InvalidArgument, a.type + " names unknown receiver '" + a.receiver + "'");
      }
      if (!s.actions.empty() && a.at_s < s.actions.back().at_s) {
        throw Error(ErrorCode::InvalidArgument, "actions must be time-ordered");
      }
      s.actions.push_back(std::move(a));
    }
    s.expect = j.value("expect", json::object());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("scenario: ") + e.what());
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open " + path.string());
  try {
    return parse_scenario(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
}

}  // namespace ejfat::harness
