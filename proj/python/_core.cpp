#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "camswarm/error.hpp"
#include "camswarm/geometry.hpp"
#include "camswarm/netsim.hpp"
#include "camswarm/playback.hpp"
#include "camswarm/protocol.hpp"
#include "camswarm/scenario.hpp"
#include "camswarm/sync.hpp"
#include "camswarm/world.hpp"

namespace py = pybind11;
using namespace camswarm;

namespace {

template <typename T>
T get(const py::dict& d, const char* key) {
  if (!d.contains(key)) throw Error(ErrorCode::Validation, std::string("missing field '") + key + "'");
  return d[key].cast<T>();
}

template <typename T>
T get_or(const py::dict& d, const char* key, T fallback) {
  return d.contains(key) ? d[key].cast<T>() : fallback;
}

protocol::Message message_from_dict(const py::dict& d) {
  using namespace protocol;
  Message m;
  m.sender = get<DeviceId>(d, "sender");
  const auto kind = get<std::string>(d, "kind");
  if (kind == "join_request") {
    m.payload = JoinRequest{get<std::uint64_t>(d, "swarm_id"), get_or<std::uint8_t>(d, "attempt", 1)};
  } else if (kind == "join_ack") {
    m.payload = JoinAck{get<std::uint64_t>(d, "swarm_id"), get<DeviceId>(d, "member")};
  } else if (kind == "member_update") {
    m.payload = MemberUpdate{get<std::uint16_t>(d, "epoch"), get<std::vector<DeviceId>>(d, "members")};
  } else if (kind == "orientation_report") {
    m.payload = OrientationReport{get<std::int32_t>(d, "yaw_vs_north_mdeg")};
  } else if (kind == "orientation_broadcast") {
    OrientationBroadcast b{get<std::uint16_t>(d, "round"), get_or<std::uint8_t>(d, "chunk", 0),
                           get_or<std::uint8_t>(d, "chunk_count", 1), {}};
    for (const auto& e : get<py::list>(d, "entries")) {
      const auto t = e.cast<std::pair<DeviceId, std::int32_t>>();
      b.entries.push_back({t.first, t.second});
    }
    m.payload = b;
  } else if (kind == "guide_box") {
    m.payload = GuideBoxUpdate{get<DeviceId>(d, "origin"),     get<std::uint32_t>(d, "revision"),
                               get<std::uint32_t>(d, "cx_ppm"), get<std::uint32_t>(d, "cy_ppm"),
                               get<std::uint32_t>(d, "w_ppm"),  get<std::uint32_t>(d, "h_ppm")};
  } else if (kind == "countdown") {
    const auto mode = get_or<std::string>(d, "mode", "photo");
    if (mode != "photo" && mode != "video") throw Error(ErrorCode::Validation, "mode must be 'photo' or 'video'");
    m.payload = CountdownPayload{get<std::uint32_t>(d, "capture_id"), get<std::int32_t>(d, "remaining_ms"),
                                 mode == "video" ? CaptureMode::Video : CaptureMode::Photo,
                                 get_or<std::uint32_t>(d, "video_duration_ms", 0)};
  } else if (kind == "capture_ack") {
    m.payload = CaptureAck{get<std::uint32_t>(d, "capture_id"), get<std::uint16_t>(d, "packets_received"),
                           get<std::int64_t>(d, "fired_at_local_us")};
  } else if (kind == "heartbeat") {
    m.payload = Heartbeat{};
  } else {
    throw Error(ErrorCode::UnknownKind, "unknown message kind '" + kind + "'");
  }
  return m;
}

py::dict message_to_dict(const protocol::Message& m) {
  using namespace protocol;
  py::dict d;
  d["sender"] = m.sender;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, JoinRequest>) {
          d["kind"] = "join_request";
          d["swarm_id"] = p.swarm_id;
          d["attempt"] = p.attempt;
        } else if constexpr (std::is_same_v<T, JoinAck>) {
          d["kind"] = "join_ack";
          d["swarm_id"] = p.swarm_id;
          d["member"] = p.member;
        } else if constexpr (std::is_same_v<T, MemberUpdate>) {
          d["kind"] = "member_update";
          d["epoch"] = p.epoch;
          d["members"] = p.members;
        } else if constexpr (std::is_same_v<T, OrientationReport>) {
          d["kind"] = "orientation_report";
          d["yaw_vs_north_mdeg"] = p.yaw_vs_north_mdeg;
        } else if constexpr (std::is_same_v<T, OrientationBroadcast>) {
          d["kind"] = "orientation_broadcast";
          d["round"] = p.round;
          d["chunk"] = p.chunk;
          d["chunk_count"] = p.chunk_count;
          py::list entries;
          for (const auto& e : p.entries) entries.append(py::make_tuple(e.device, e.display_yaw_mdeg));
          d["entries"] = entries;
        } else if constexpr (std::is_same_v<T, GuideBoxUpdate>) {
          d["kind"] = "guide_box";
          d["origin"] = p.origin;
          d["revision"] = p.revision;
          d["cx_ppm"] = p.cx_ppm;
          d["cy_ppm"] = p.cy_ppm;
          d["w_ppm"] = p.w_ppm;
          d["h_ppm"] = p.h_ppm;
        } else if constexpr (std::is_same_v<T, CountdownPayload>) {
          d["kind"] = "countdown";
          d["capture_id"] = p.capture_id;
          d["remaining_ms"] = p.remaining_ms;
          d["mode"] = std::string(to_string(p.mode));
          d["video_duration_ms"] = p.video_duration_ms;
        } else if constexpr (std::is_same_v<T, CaptureAck>) {
          d["kind"] = "capture_ack";
          d["capture_id"] = p.capture_id;
          d["packets_received"] = p.packets_received;
          d["fired_at_local_us"] = p.fired_at_local_us;
        } else {
          d["kind"] = "heartbeat";
        }
      },
      m.payload);
  return d;
}

py::dict row_to_dict(const sync::StudyRow& r) {
  py::dict d;
  d["loss_prob"] = r.loss_prob;
  d["rate_hz"] = r.rate_hz;
  d["single_shot"] = r.single_shot;
  d["trials"] = r.trials;
  d["clients"] = r.clients;
  d["missed"] = r.missed;
  d["miss_rate"] = r.miss_rate;
  d["mean_latency_ms"] = r.mean_latency_ms;
  d["mean_skew_ms"] = r.mean_skew_ms;
  d["worst_skew_ms"] = r.worst_skew_ms;
  return d;
}

sync::TrialConfig trial_config(double loss, const std::string& latency, double rate_hz, bool single_shot,
                               int clients) {
  sync::TrialConfig cfg;
  cfg.loss_prob = loss;
  cfg.latency = netsim::parse_latency(latency);
  cfg.rate_hz = rate_hz;
  cfg.single_shot = single_shot;
  cfg.clients = clients;
  return cfg;
}

std::vector<playback::View> views_from(const std::vector<std::pair<std::string, double>>& pairs) {
  std::vector<playback::View> views;
  for (const auto& [id, yaw] : pairs) views.push_back({id, yaw, "-"});
  return views;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "CamSwarm coordination engine";

  static py::exception<Error> error_type(m, "CamswarmError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object args = py::make_tuple(std::string(to_string(e.code())), std::string(e.what()));
      PyErr_SetObject(error_type.ptr(), args.ptr());
    }
  });

  m.def("encode_message", [](const py::dict& d) {
    const auto bytes = protocol::encode_message(message_from_dict(d));
    return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  });
  m.def("decode_message", [](const py::bytes& b) {
    const std::string s = b;
    const std::vector<std::uint8_t> bytes(s.begin(), s.end());
    return message_to_dict(protocol::decode_message(bytes));
  });
  m.def(
      "encode_qr",
      [](const std::array<std::uint8_t, 4>& address, std::uint16_t port, std::uint64_t swarm_id) {
        protocol::QrPayload q;
        q.host.address.octets = address;
        q.host.port = port;
        q.swarm_id = swarm_id;
        return protocol::encode_qr(q);
      },
      py::arg("address"), py::arg("port"), py::arg("swarm_id"));
  m.def("decode_qr", [](const std::string& text) {
    const auto q = protocol::decode_qr(text);
    py::dict d;
    d["version"] = q.version;
    d["address"] = q.host.address.octets;
    d["port"] = q.host.port;
    d["swarm_id"] = q.swarm_id;
    return d;
  });

  m.def("wrap_angle", &geometry::wrap_angle);
  m.def("compass_placement", py::overload_cast<double, double>(&geometry::compass_placement),
        py::arg("observer_display_yaw"), py::arg("other_display_yaw"));
  m.def(
      "recover_plane_angle",
      [](const std::array<std::pair<double, double>, 4>& corners, double aspect, double focal_px, int width_px,
         int height_px) {
        std::array<geometry::Vec2, 4> px;
        for (std::size_t i = 0; i < 4; ++i) px[i] = {corners[i].first, corners[i].second};
        geometry::CameraModel cam;
        cam.focal_px = focal_px;
        cam.width_px = width_px;
        cam.height_px = height_px;
        return geometry::recover_plane_angle(px, aspect, cam);
      },
      py::arg("corners"), py::arg("aspect") = 1.0, py::arg("focal_px") = 1000.0, py::arg("width_px") = 1920,
      py::arg("height_px") = 1080);
  m.def("angle_rsd", [](const std::vector<double>& yaws) { return geometry::spacing_metrics(yaws).angle_rsd; });

  m.def(
      "run_study_row",
      [](double loss, const std::string& latency, double rate_hz, bool single_shot, int clients, int trials,
         std::uint64_t seed, int jobs) {
        const auto cfg = trial_config(loss, latency, rate_hz, single_shot, clients);
        sync::StudyRow row;
        {
          py::gil_scoped_release release;
          row = sync::run_study_row(cfg, trials, seed, jobs);
        }
        return row_to_dict(row);
      },
      py::arg("loss") = 0.5, py::arg("latency") = "uniform:30:200", py::arg("rate_hz") = sync::kDefaultRateHz,
      py::arg("single_shot") = false, py::arg("clients") = 4, py::arg("trials") = 1000, py::arg("seed") = 1,
      py::arg("jobs") = 1);

  m.def(
      "spacing_trial",
      [](const std::string& policy, std::uint64_t seed, int devices) {
        world::SpacingTrialConfig cfg;
        cfg.policy.kind = agents::parse_policy(policy);
        cfg.devices = devices;
        const auto t = world::run_spacing_trial(cfg, seed);
        py::dict d;
        d["seed"] = t.seed;
        d["initial_angle_rsd"] = t.initial_angle_rsd;
        d["angle_rsd"] = t.angle_rsd;
        d["size_rsd"] = t.size_rsd;
        d["converged_at_ms"] = t.converged_at ? py::object(py::float_(netsim::to_ms(*t.converged_at))) : py::none();
        d["moves"] = t.moves;
        return d;
      },
      py::arg("policy") = "guided", py::arg("seed") = 1, py::arg("devices") = 4);

  m.def(
      "select_view",
      [](const std::vector<std::pair<std::string, double>>& views, double tilt_deg) {
        return playback::select_view(playback::build_view_graph(views_from(views)), tilt_deg);
      },
      py::arg("views"), py::arg("tilt_deg"));
  m.def("render_edl", [](const std::string& timeline_text) {
    return playback::format_edl(playback::export_edl(playback::parse_timeline(timeline_text)));
  });
  m.def("validate_edl", [](const std::string& edl_text) {
    const auto plan = playback::parse_edl(edl_text);
    playback::validate_plan(plan);
    return playback::format_timeline(playback::import_edl(plan));
  });

  m.def(
      "simulate",
      [](const std::string& scenario_text, std::optional<std::uint64_t> seed) {
        const auto sc = scenario::parse_scenario(scenario_text);
        scenario::RunOutput out;
        {
          py::gil_scoped_release release;
          out = scenario::run_scenario(sc, seed);
        }
        return py::make_tuple(out.report_text, out.trace_text);
      },
      py::arg("scenario_text"), py::arg("seed") = py::none());
}
