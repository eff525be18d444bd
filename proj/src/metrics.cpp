#include "ejfat/metrics.hpp"

#include <httplib.h>

#include <sstream>

#include "ejfat/error.hpp"

namespace ejfat::metrics {
namespace {

struct Family {
  const char* name;
  const char* type;
  const char* help;
};

constexpr Family kFamilies[] = {
    {"lb_member_fill", "gauge", "Latest reported queue fill of a member."},
    {"lb_member_weight", "gauge", "Raw scheduling weight of a member."},
    {"lb_member_slots", "gauge", "Slots owned by a member in the newest epoch."},
    {"lb_member_forwarded_total", "counter", "Datagrams forwarded to a member."},
    {"lb_predicted_tick", "gauge", "Tick the predictor expects now."},
    {"lb_received_total", "counter", "Datagrams received by the data plane."},
    {"lb_forwarded_total", "counter", "Datagrams forwarded by the data plane."},
    {"lb_dropped_total", "counter", "Datagrams dropped by the data plane."},
    {"lb_epochs_total", "counter", "Epochs applied."},
    {"lb_sync_rejected_total", "counter", "Sync messages rejected as non-monotonic."},
    {"lb_boundary_floor_total", "counter", "Boundaries raised above the prediction by forwarded traffic."},
};

}  // namespace

std::string render(const controlplane::ControlPlane& cp) {
  std::vector<controlplane::InstanceStatus> statuses;
  for (auto id : cp.instances()) {
    try {
      statuses.push_back(cp.status(id));
    } catch (const Error&) {
      // freed between the two calls
    }
  }

  std::ostringstream out;
  out.precision(17);
  for (const auto& f : kFamilies) {
    const std::string name = f.name;
    out << "# HELP " << name << ' ' << f.help << "\n# TYPE " << name << ' ' << f.type << '\n';
    for (const auto& st : statuses) {
      const std::string inst = "instance=\"" + std::to_string(st.instance_id) + "\"";
      if (name.rfind("lb_member_", 0) == 0) {
        for (const auto& m : st.members) {
          const std::string labels = "{" + inst + ",session=\"" + std::to_string(m.session.session_id) + "\"}";
          if (name == "lb_member_fill") {
            if (m.latest_report) out << name << labels << ' ' << m.latest_report->queue_fill << '\n';
          } else if (name == "lb_member_weight") {
            out << name << labels << ' ' << m.weight << '\n';
          } else if (name == "lb_member_slots") {
            out << name << labels << ' ' << m.slots << '\n';
          } else {
            out << name << labels << ' ' << m.forwarded << '\n';
          }
        }
      } else if (name == "lb_dropped_total") {
        for (std::size_t i = 0; i < dataplane::kDropReasonCount; ++i) {
          out << name << '{' << inst << ",reason=\"" << dataplane::to_string(static_cast<dataplane::DropReason>(i))
              << "\"} " << st.counters.dropped[i] << '\n';
        }
      } else {
        const std::string labels = "{" + inst + "}";
        if (name == "lb_predicted_tick") {
          if (st.predicted_tick) out << name << labels << ' ' << *st.predicted_tick << '\n';
        } else if (name == "lb_received_total") {
          out << name << labels << ' ' << st.counters.received << '\n';
        } else if (name == "lb_forwarded_total") {
          out << name << labels << ' ' << st.counters.forwarded << '\n';
        } else if (name == "lb_epochs_total") {
          out << name << labels << ' ' << st.epochs_total << '\n';
        } else if (name == "lb_sync_rejected_total") {
          out << name << labels << ' ' << st.sync_rejected << '\n';
        } else if (name == "lb_boundary_floor_total") {
          out << name << labels << ' ' << st.boundary_floor_hits << '\n';
        }
      }
    }
  }
  return out.str();
}

MetricsServer::MetricsServer(const controlplane::ControlPlane& cp, const net::SocketAddress& listen)
    : server_(std::make_unique<httplib::Server>()) {
  server_->Get("/metrics", [&cp](const httplib::Request&, httplib::Response& res) {
    res.set_content(render(cp), "text/plain; version=0.0.4");
  });
  const std::string host = listen.ip.to_string();
  if (listen.port == 0) {
    const int p = server_->bind_to_any_port(host);
    if (p < 0) throw Error(ErrorCode::SocketError, "metrics bind on " + host);
    port_ = static_cast<std::uint16_t>(p);
  } else {
    if (!server_->bind_to_port(host, listen.port)) {
      throw Error(ErrorCode::SocketError, "metrics bind on " + listen.to_string());
    }
    port_ = listen.port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
}

MetricsServer::~MetricsServer() { stop(); }

void MetricsServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace ejfat::metrics
