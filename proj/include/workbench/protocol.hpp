#pragma once

// JSON wire protocol: command envelopes in, acks / events / snapshots out.
// Transport-agnostic; the websocket server feeds frames through here.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <variant>

#include <nlohmann/json.hpp>

#include "workbench/dmp.hpp"
#include "workbench/error.hpp"
#include "workbench/scene.hpp"
#include "workbench/trajectory.hpp"
#include "workbench/workspace.hpp"

namespace workbench {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Outgoing message serialization

inline json error_json(ErrorCode code, std::string_view message) {
  return {{"code", code_name(code)}, {"message", message}};
}

inline json ack_ok(const std::string& id, json result = json::object()) {
  return {{"type", "ack"}, {"id", id}, {"ok", true}, {"result", std::move(result)}};
}

inline json ack_error(const std::string& id, ErrorCode code, std::string_view message) {
  return {{"type", "ack"}, {"id", id}, {"ok", false}, {"error", error_json(code, message)}};
}

/// Connection-level error for frames that cannot be answered with an ack.
inline json error_frame(ErrorCode code, std::string_view message) {
  return {{"type", "error"}, {"error", error_json(code, message)}};
}

inline json optional_json(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

inline json snapshot_to_json(const Snapshot& s) {
  json robots = json::array();
  for (const auto& r : s.robots) {
    json links = json::array();
    for (std::size_t i = 0; i < r.link_names.size(); ++i)
      links.push_back({{"name", r.link_names[i]}, {"pose", pose_to_json(r.link_poses[i])}});
    robots.push_back({{"id", r.id},
                      {"mode", mode_name(r.mode)},
                      {"q", r.q},
                      {"qd", r.qd},
                      {"ghost_q", r.ghost_q},
                      {"ee_pose", pose_to_json(r.ee_pose)},
                      {"links", std::move(links)},
                      {"gripper", gripper_name(r.gripper)},
                      {"attached", optional_json(r.attached)},
                      {"recording", r.recording},
                      {"active", r.active ? json(*r.active) : json(nullptr)}});
  }
  json objects = json::array();
  for (const auto& o : s.objects)
    objects.push_back({{"id", o.id},
                       {"shape", shape_name(o.shape)},
                       {"size", {o.size.x(), o.size.y(), o.size.z()}},
                       {"pose", pose_to_json(o.pose)},
                       {"attached_to", optional_json(o.attached_to)}});
  return {{"type", "snapshot"}, {"tick", s.tick}, {"time", s.time}, {"robots", std::move(robots)},
          {"objects", std::move(objects)}};
}

inline json event_to_json(const Event& e) {
  json j = {{"type", "event"}, {"event", event_name(e.kind)}, {"robot", e.robot_id},
            {"handle", e.handle},  {"tick", e.tick}};
  if (e.kind == EventKind::ProgramStepDone || e.kind == EventKind::ProgramAborted) j["step"] = e.step;
  if (!e.message.empty()) j["message"] = e.message;
  return j;
}

inline json geometry_to_json(const Shape& s) {
  const Geometry& g = s.geometry;
  json j = {{"origin", pose_to_json(s.origin.pose())}};
  switch (g.kind) {
    case GeometryKind::Box:
      j["type"] = "box";
      j["size"] = {g.size.x(), g.size.y(), g.size.z()};
      break;
    case GeometryKind::Cylinder:
      j["type"] = "cylinder";
      j["radius"] = g.radius;
      j["length"] = g.length;
      break;
    case GeometryKind::Sphere:
      j["type"] = "sphere";
      j["radius"] = g.radius;
      break;
    case GeometryKind::Mesh:
      j["type"] = "mesh";
      j["filename"] = g.mesh_filename;
      j["scale"] = {g.mesh_scale.x(), g.mesh_scale.y(), g.mesh_scale.z()};
      break;
  }
  return j;
}

/// Static scene description for clients: joints, limits and link visuals.
inline json scene_to_json(const Workspace& ws) {
  json robots = json::array();
  for (const auto& r : ws.robots()) {
    json joints = json::array();
    for (const auto& j : r.chain.joints)
      joints.push_back({{"name", j.name},
                        {"type", joint_kind_name(j.kind)},
                        {"lower", std::isfinite(j.limits.lower) ? json(j.limits.lower) : json(nullptr)},
                        {"upper", std::isfinite(j.limits.upper) ? json(j.limits.upper) : json(nullptr)},
                        {"velocity", j.limits.velocity}});
    json links = json::array();
    for (const auto& name : r.chain.frame_links()) {
      json visuals = json::array();
      if (const Link* link = r.model->find_link(name))
        for (const auto& v : link->visuals) visuals.push_back(geometry_to_json(v));
      links.push_back({{"name", name}, {"visuals", std::move(visuals)}});
    }
    robots.push_back({{"id", r.id},
                      {"model", r.model->name},
                      {"base_pose", pose_to_json(r.base_pose)},
                      {"base_link", r.chain.base_link},
                      {"tip_link", r.chain.tip_link},
                      {"joints", std::move(joints)},
                      {"links", std::move(links)},
                      {"grasp_radius", r.gripper.grasp_radius}});
  }
  return {{"sim_dt", ws.sim_dt()}, {"robots", std::move(robots)}, {"snapshot", snapshot_to_json(ws.snapshot())}};
}

// ---------------------------------------------------------------------------
// Artifacts

/// Trajectories and DMP models addressed by short server-generated ids,
/// persisted under a data directory as <id>.traj.jsonl / <id>.dmp.json.
class ArtifactStore {
 public:
  explicit ArtifactStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& dir() const { return dir_; }

  std::string add_trajectory(Trajectory t) {
    const std::string id = fresh_id("traj", ".traj.jsonl", trajectories_);
    trajectories_.emplace(id, std::move(t));
    return id;
  }

  std::string add_model(DmpModel m) {
    const std::string id = fresh_id("dmp", ".dmp.json", models_);
    models_.emplace(id, std::move(m));
    return id;
  }

  const Trajectory& trajectory(const std::string& id) {
    if (auto it = trajectories_.find(id); it != trajectories_.end()) return it->second;
    return load_trajectory(id);
  }

  const DmpModel& model(const std::string& id) {
    if (auto it = models_.find(id); it != models_.end()) return it->second;
    return load_model(id);
  }

  std::filesystem::path save_trajectory(const std::string& id) {
    const Trajectory& t = trajectory(id);
    const auto path = file_for(id, ".traj.jsonl");
    std::filesystem::create_directories(dir_);
    std::ofstream out(path);
    save(t, out);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
    return path;
  }

  std::filesystem::path save_model(const std::string& id) {
    const DmpModel& m = model(id);
    const auto path = file_for(id, ".dmp.json");
    std::filesystem::create_directories(dir_);
    std::ofstream out(path);
    save(m, out);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
    return path;
  }

  /// Re-reads <id>.traj.jsonl from disk, replacing any in-memory copy.
  const Trajectory& load_trajectory(const std::string& id) {
    std::ifstream in(existing_file(id, ".traj.jsonl"));
    return trajectories_.insert_or_assign(id, load(in)).first->second;
  }

  const DmpModel& load_model(const std::string& id) {
    std::ifstream in(existing_file(id, ".dmp.json"));
    return models_.insert_or_assign(id, load_dmp(in)).first->second;
  }

  static bool valid_id(std::string_view id) {
    if (id.empty() || id.size() > 64 || id.front() == '.') return false;
    for (char c : id)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) return false;
    return true;
  }

 private:
  std::filesystem::path file_for(const std::string& id, const char* ext) const {
    if (!valid_id(id)) throw Error(ErrorCode::ValidationError, "invalid artifact id '" + id + "'");
    return dir_ / (id + ext);
  }

  std::filesystem::path existing_file(const std::string& id, const char* ext) const {
    auto path = file_for(id, ext);
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::UnknownArtifact, "no artifact '" + id + "'");
    return path;
  }

  template <typename Map>
  std::string fresh_id(const char* prefix, const char* ext, const Map& live) {
    for (;;) {
      std::string id = std::string(prefix) + "-" + std::to_string(++counter_);
      if (!live.count(id) && !std::filesystem::exists(dir_ / (id + ext))) return id;
    }
  }

  std::filesystem::path dir_;
  std::map<std::string, Trajectory> trajectories_;
  std::map<std::string, DmpModel> models_;
  std::uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// Incoming frames

struct Envelope {
  std::string id;
  std::string type;
  json payload = json::object();
};

/// Per-connection protocol state.
struct Connection {
  std::unordered_set<std::string> seen_ids;
  bool subscribed = false;
};

/// Parses one text frame. Returns the envelope, or the reply to send instead
/// (error frame when there is no usable id, error ack otherwise).
inline std::variant<Envelope, json> parse_frame(std::string_view text, Connection& conn) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) return error_frame(ErrorCode::ValidationError, "frame is not valid JSON");
  if (!j.is_object()) return error_frame(ErrorCode::ValidationError, "frame must be a JSON object");
  if (!j.contains("id") || !j["id"].is_string() || j["id"].get_ref<const std::string&>().empty())
    return error_frame(ErrorCode::ValidationError, "envelope needs a non-empty string 'id'");
  Envelope env;
  env.id = j["id"].get<std::string>();
  if (!conn.seen_ids.insert(env.id).second)
    return ack_error(env.id, ErrorCode::ValidationError, "duplicate command id '" + env.id + "'");
  if (!j.contains("type") || !j["type"].is_string())
    return ack_error(env.id, ErrorCode::ValidationError, "envelope needs a string 'type'");
  env.type = j["type"].get<std::string>();
  if (j.contains("payload")) {
    if (!j["payload"].is_object()) return ack_error(env.id, ErrorCode::ValidationError, "payload must be an object");
    env.payload = std::move(j["payload"]);
  }
  return env;
}

// ---------------------------------------------------------------------------
// Payload accessors; every failure is a ValidationError naming the field.

namespace detail {

[[noreturn]] inline void invalid(const std::string& msg) { throw Error(ErrorCode::ValidationError, msg); }

inline const json& field(const json& p, const char* name) {
  if (!p.contains(name)) invalid(std::string("payload needs '") + name + "'");
  return p[name];
}

inline std::string string_field(const json& p, const char* name) {
  const json& v = field(p, name);
  if (!v.is_string()) invalid(std::string("'") + name + "' must be a string");
  return v.get<std::string>();
}

inline double number_field(const json& p, const char* name) {
  const json& v = field(p, name);
  if (!v.is_number()) invalid(std::string("'") + name + "' must be a number");
  return v.get<double>();
}

inline std::optional<double> optional_number(const json& p, const char* name) {
  if (!p.contains(name) || p[name].is_null()) return std::nullopt;
  return number_field(p, name);
}

inline std::vector<double> numbers_field(const json& p, const char* name) {
  return json_numbers(field(p, name), std::string("'") + name + "'", ErrorCode::ValidationError);
}

inline Trajectory inline_trajectory(const json& j) {
  if (!j.is_object() || !j.contains("samples") || !j["samples"].is_array())
    invalid("inline trajectory needs a 'samples' array");
  Trajectory t;
  try {
    std::size_t line = 0;
    for (const auto& s : j["samples"]) t.samples.push_back(sample_from_json(s, ++line));
    if (j.contains("joint_names")) t.meta.joint_names = j["joint_names"].get<std::vector<std::string>>();
    if (j.contains("robot")) t.meta.robot = j["robot"].get<std::string>();
  } catch (const Error& e) {
    invalid(std::string("inline trajectory: ") + e.what());
  } catch (const json::exception& e) {
    invalid(std::string("inline trajectory: ") + e.what());
  }
  return t;
}

inline DmpConfig dmp_config(const json& j) {
  if (!j.is_object()) invalid("'config' must be an object");
  DmpConfig c;
  if (auto k = optional_number(j, "K")) c = DmpConfig::critically_damped(*k);
  if (auto d = optional_number(j, "D")) c.D = *d;
  if (auto a = optional_number(j, "alpha")) c.alpha = *a;
  if (auto dt = optional_number(j, "dt")) c.dt = *dt;
  if (auto r = optional_number(j, "regularization")) c.regularization = *r;
  if (j.contains("fit")) {
    if (!j["fit"].is_string()) invalid("'fit' must be \"lwr\" or \"goal_constrained\"");
    try {
      c.fit = parse_fit(j["fit"].get<std::string>());
    } catch (const Error& e) {
      invalid(e.what());
    }
  }
  if (j.contains("n_basis")) {
    if (!j["n_basis"].is_number_unsigned()) invalid("'n_basis' must be a positive integer");
    c.n_basis = j["n_basis"].get<std::size_t>();
  }
  return c;
}

}  // namespace detail

/// Applies commands to a workspace and produces acks. Owned by the thread that
/// owns the workspace; `subscribe` is answered by the transport.
class CommandProcessor {
 public:
  CommandProcessor(Workspace& ws, ArtifactStore& store) : ws_(ws), store_(store) {}

  json handle(const Envelope& env) {
    try {
      return ack_ok(env.id, dispatch(env.type, env.payload));
    } catch (const Error& e) {
      return ack_error(env.id, e.code(), e.what());
    } catch (const json::exception& e) {
      return ack_error(env.id, ErrorCode::ValidationError, e.what());
    } catch (const std::filesystem::filesystem_error& e) {
      return ack_error(env.id, ErrorCode::Io, e.what());
    }
  }

  /// Convenience for tests and scripted clients: parse, then handle.
  json handle_text(std::string_view text, Connection& conn) {
    auto parsed = parse_frame(text, conn);
    if (auto* reply = std::get_if<json>(&parsed)) return *reply;
    return handle(std::get<Envelope>(parsed));
  }

 private:
  json dispatch(const std::string& type, const json& p) {
    using namespace detail;
    if (type == "get_scene") return scene_to_json(ws_);
    if (type == "get_snapshot") return snapshot_to_json(ws_.snapshot());
    if (type == "set_mode") {
      const auto mode = parse_mode(string_field(p, "mode"));
      if (!mode) invalid("'mode' must be hold, free_drive or ghost_drive");
      ws_.set_mode(robot_id(p), *mode);
      return json::object();
    }
    if (type == "drag_joint") {
      const std::string id = robot_id(p);
      ws_.drag_joint(id, joint_index(id, field(p, "joint")), number_field(p, "target"));
      return json::object();
    }
    if (type == "drag_ee") {
      const IkResult ik = ws_.drag_ee(robot_id(p), pose_from_json(field(p, "pose")));
      return {{"q", to_std_vector(ik.q)}, {"residual", ik.residual}, {"iterations", ik.iterations}};
    }
    if (type == "commit_ghost") return {{"handle", ws_.commit_ghost(robot_id(p))}};
    if (type == "set_gripper") {
      const auto state = parse_gripper(string_field(p, "state"));
      if (!state) invalid("'state' must be open or closed");
      ws_.set_gripper(robot_id(p), *state);
      return json::object();
    }
    if (type == "run_program") return {{"handle", ws_.run_program(robot_id(p), program_from_json(field(p, "program")))}};
    if (type == "play_trajectory") {
      return {{"handle", ws_.play_trajectory(robot_id(p), store_.trajectory(string_field(p, "trajectory_id")))}};
    }
    if (type == "stop") {
      ws_.stop(robot_id(p));
      return json::object();
    }
    if (type == "record_start") {
      int every = 10;
      if (p.contains("sample_every")) {
        if (!p["sample_every"].is_number_unsigned() || p["sample_every"].get<int>() < 1)
          invalid("'sample_every' must be a positive integer");
        every = p["sample_every"].get<int>();
      }
      ws_.start_recording(robot_id(p), every);
      return json::object();
    }
    if (type == "record_stop") {
      Trajectory t = ws_.stop_recording(robot_id(p));
      const json summary = trajectory_summary(t);
      json result = {{"trajectory_id", store_.add_trajectory(std::move(t))}};
      result.update(summary);
      return result;
    }
    if (type == "train_dmp") return train_dmp(p);
    if (type == "rollout_dmp") return rollout_dmp(p);
    if (type == "save_trajectory") return {{"path", store_.save_trajectory(string_field(p, "trajectory_id")).string()}};
    if (type == "save_model") return {{"path", store_.save_model(string_field(p, "model_id")).string()}};
    if (type == "load_trajectory") {
      const std::string id = string_field(p, "trajectory_id");
      json result = {{"trajectory_id", id}};
      result.update(trajectory_summary(store_.load_trajectory(id)));
      return result;
    }
    if (type == "load_model") {
      const std::string id = string_field(p, "model_id");
      const DmpModel& m = store_.load_model(id);
      return {{"model_id", id}, {"dof", m.dof()}, {"tau", m.tau}};
    }
    if (type == "get_trajectory") {
      const Trajectory& t = store_.trajectory(string_field(p, "trajectory_id"));
      json samples = json::array();
      for (const auto& s : t.samples) samples.push_back(sample_to_json(s));
      json result = trajectory_header(t);
      result["samples"] = std::move(samples);
      return result;
    }
    if (type == "get_model") return to_json(store_.model(string_field(p, "model_id")));
    throw Error(ErrorCode::UnknownCommand, "unknown command type '" + type + "'");
  }

  std::string robot_id(const json& p) const {
    std::string id = detail::string_field(p, "robot");
    ws_.robot(id);  // UnknownRobot before any other validation
    return id;
  }

  std::size_t joint_index(const std::string& robot, const json& j) const {
    if (j.is_number_unsigned()) return j.get<std::size_t>();
    if (j.is_string()) {
      const auto names = ws_.robot(robot).chain.joint_names();
      for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == j.get_ref<const std::string&>()) return i;
      throw Error(ErrorCode::IndexOutOfRange, "robot '" + robot + "' has no joint '" + j.get<std::string>() + "'");
    }
    detail::invalid("'joint' must be an index or a joint name");
  }

  static json trajectory_summary(const Trajectory& t) {
    return {{"samples", t.size()}, {"dof", t.dof()}, {"duration", t.duration()}};
  }

  json train_dmp(const json& p) {
    using namespace detail;
    Trajectory inline_demo;
    const Trajectory* demo = nullptr;
    if (p.contains("trajectory_id")) {
      demo = &store_.trajectory(string_field(p, "trajectory_id"));
    } else if (p.contains("trajectory")) {
      inline_demo = inline_trajectory(p["trajectory"]);
      demo = &inline_demo;
    } else {
      invalid("train_dmp needs 'trajectory_id' or an inline 'trajectory'");
    }
    const DmpConfig config = p.contains("config") ? dmp_config(p["config"]) : DmpConfig{};
    DmpModel model = train(*demo, config);
    const std::size_t dof = model.dof();
    const double tau = model.tau;
    return {{"model_id", store_.add_model(std::move(model))}, {"dof", dof}, {"tau", tau}};
  }

  json rollout_dmp(const json& p) {
    using namespace detail;
    const std::string id = robot_id(p);
    const DmpModel& model = store_.model(string_field(p, "model_id"));
    const std::vector<double> g = numbers_field(p, "g");
    if (g.size() != model.dof())
      invalid("'g' has " + std::to_string(g.size()) + " entries, model has " + std::to_string(model.dof()));
    std::vector<double> x0 = ws_.robot(id).q();
    if (p.contains("x0")) {
      x0 = numbers_field(p, "x0");
      if (x0.size() != model.dof())
        invalid("'x0' has " + std::to_string(x0.size()) + " entries, model has " + std::to_string(model.dof()));
    }
    const double tau = optional_number(p, "tau").value_or(model.tau);
    if (!(tau > 0.0)) invalid("'tau' must be positive");
    if (model.dof() != ws_.robot(id).dof())
      throw Error(ErrorCode::DofMismatch, "model dof differs from robot '" + id + "'");

    Trajectory t = rollout(model, x0, g, tau, ws_.sim_dt());
    t.meta.robot = id;
    if (t.meta.joint_names.empty()) t.meta.joint_names = ws_.robot(id).chain.joint_names();
    const bool play = !p.contains("play") || p["play"].get<bool>();
    std::optional<Handle> handle;
    if (play) handle = ws_.play_trajectory(id, t);
    json result = {{"trajectory_id", store_.add_trajectory(std::move(t))}};
    result["handle"] = handle ? json(*handle) : json(nullptr);
    return result;
  }

  Workspace& ws_;
  ArtifactStore& store_;
};

}  // namespace workbench
