#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "workbench/error.hpp"
#include "workbench/pose.hpp"
#include "workbench/urdf.hpp"
#include "workbench/workspace.hpp"

namespace workbench {

namespace detail {

[[noreturn]] inline void scene_error(const std::string& msg) { throw Error(ErrorCode::MalformedScene, msg); }

inline Eigen::Vector3d json_vec3(const nlohmann::json& j, const std::string& what, ErrorCode code) {
  if (!j.is_array() || j.size() != 3) throw Error(code, what + " must be an array of 3 numbers");
  Eigen::Vector3d v;
  for (int i = 0; i < 3; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_number()) throw Error(code, what + " must be an array of 3 numbers");
    v[i] = j[static_cast<std::size_t>(i)].get<double>();
  }
  if (!v.allFinite()) throw Error(code, what + " must be finite");
  return v;
}

inline std::vector<double> json_numbers(const nlohmann::json& j, const std::string& what, ErrorCode code) {
  if (!j.is_array()) throw Error(code, what + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : j) {
    if (!e.is_number()) throw Error(code, what + " must be an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// Accepts {"xyz": [..], "rpy": [..]} or {"position": [..], "orientation": [x, y, z, w]}.
inline Pose pose_from_json(const nlohmann::json& j, ErrorCode code = ErrorCode::ValidationError) {
  if (!j.is_object()) throw Error(code, "pose must be an object");
  Pose p;
  if (j.contains("position")) {
    p.position = detail::json_vec3(j["position"], "pose.position", code);
    if (j.contains("orientation")) {
      const auto xyzw = detail::json_numbers(j["orientation"], "pose.orientation", code);
      if (xyzw.size() != 4) throw Error(code, "pose.orientation must be [x, y, z, w]");
      Eigen::Quaterniond q(xyzw[3], xyzw[0], xyzw[1], xyzw[2]);
      if (!(q.norm() > 1e-9) || !std::isfinite(q.norm())) throw Error(code, "pose.orientation must be non-zero");
      p.orientation = q.normalized();
    }
    return p;
  }
  const Eigen::Vector3d xyz = j.contains("xyz") ? detail::json_vec3(j["xyz"], "pose.xyz", code) : Eigen::Vector3d::Zero();
  const Eigen::Vector3d rpy = j.contains("rpy") ? detail::json_vec3(j["rpy"], "pose.rpy", code) : Eigen::Vector3d::Zero();
  return Pose::from_xyz_rpy(xyz, rpy);
}

inline nlohmann::json pose_to_json(const Pose& p) {
  const auto& q = p.orientation;
  return {{"position", {p.position.x(), p.position.y(), p.position.z()}},
          {"orientation", {q.x(), q.y(), q.z(), q.w()}}};
}

/// Program steps: {"type": "move_to_joints", "q": [...]}, {"type": "move_to_pose", "pose": {...}},
/// {"type": "gripper_open"}, {"type": "gripper_close"}.
inline Program program_from_json(const nlohmann::json& j) {
  const nlohmann::json& steps = j.is_object() && j.contains("steps") ? j["steps"] : j;
  if (!steps.is_array()) throw Error(ErrorCode::ValidationError, "program must be an array of steps");
  Program program;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    const std::string where = "program step " + std::to_string(i);
    if (!s.is_object() || !s.contains("type") || !s["type"].is_string())
      throw Error(ErrorCode::ValidationError, where + " needs a string 'type'");
    const std::string type = s["type"].get<std::string>();
    if (type == "move_to_joints") {
      if (!s.contains("q")) throw Error(ErrorCode::ValidationError, where + " needs 'q'");
      program.push_back(MoveToJoints{detail::json_numbers(s["q"], where + ".q", ErrorCode::ValidationError)});
    } else if (type == "move_to_pose") {
      if (!s.contains("pose")) throw Error(ErrorCode::ValidationError, where + " needs 'pose'");
      program.push_back(MoveToPose{pose_from_json(s["pose"])});
    } else if (type == "gripper_open") {
      program.push_back(GripperOpen{});
    } else if (type == "gripper_close") {
      program.push_back(GripperClose{});
    } else {
      throw Error(ErrorCode::ValidationError, where + " has unknown type '" + type + "'");
    }
  }
  return program;
}

inline std::shared_ptr<const RobotModel> load_urdf_file(const std::filesystem::path& path) {
  return std::make_shared<const RobotModel>(parse_urdf(detail::read_text_file(path)));
}

/// Builds a workspace from a scene descriptor. URDF paths resolve against `base_dir`.
inline Workspace load_scene(const nlohmann::json& desc, const std::filesystem::path& base_dir) {
  using detail::scene_error;
  if (!desc.is_object()) scene_error("scene must be a JSON object");
  double sim_dt = 1e-3;
  if (desc.contains("sim_dt")) {
    if (!desc["sim_dt"].is_number()) scene_error("sim_dt must be a number");
    sim_dt = desc["sim_dt"].get<double>();
    if (!(sim_dt > 0.0)) scene_error("sim_dt must be positive");
  }
  Workspace ws(sim_dt);
  if (desc.contains("settle")) {
    const auto& st = desc["settle"];
    if (!st.is_object()) scene_error("settle must be an object");
    ws.settle.tolerance = st.value("tolerance", ws.settle.tolerance);
    ws.settle.ticks = st.value("ticks", ws.settle.ticks);
  }

  const auto robots = desc.value("robots", nlohmann::json::array());
  if (!robots.is_array()) scene_error("robots must be an array");
  for (const auto& r : robots) {
    if (!r.is_object()) scene_error("robot entries must be objects");
    for (const char* key : {"id", "urdf", "tip_link"})
      if (!r.contains(key) || !r[key].is_string()) scene_error(std::string("robot entry needs string '") + key + "'");
    RobotSpec spec;
    spec.id = r["id"].get<std::string>();
    std::filesystem::path urdf_path = r["urdf"].get<std::string>();
    if (urdf_path.is_relative()) urdf_path = base_dir / urdf_path;
    spec.model = load_urdf_file(urdf_path);
    spec.tip_link = r["tip_link"].get<std::string>();
    if (r.contains("base_link")) {
      if (!r["base_link"].is_string()) scene_error("base_link must be a string");
      spec.base_link = r["base_link"].get<std::string>();
    }
    if (r.contains("base_pose")) spec.base_pose = pose_from_json(r["base_pose"], ErrorCode::MalformedScene);
    if (r.contains("initial_q")) spec.initial_q = detail::json_numbers(r["initial_q"], "initial_q", ErrorCode::MalformedScene);
    if (r.contains("drive")) {
      const auto& d = r["drive"];
      if (!d.is_object()) scene_error("drive must be an object");
      try {
        spec.drive.stiffness = d.value("stiffness", spec.drive.stiffness);
        spec.drive.damping = d.value("damping", spec.drive.damping);
        spec.drive.force_limit = d.value("force_limit", spec.drive.force_limit);
        spec.drive.inertia = d.value("inertia", spec.drive.inertia);
      } catch (const nlohmann::json::exception&) {
        scene_error("drive parameters must be numbers");
      }
    }
    if (r.contains("grasp_radius")) {
      if (!r["grasp_radius"].is_number()) scene_error("grasp_radius must be a number");
      spec.grasp_radius = r["grasp_radius"].get<double>();
    }
    try {
      ws.add_robot(spec);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::DimensionMismatch || e.code() == ErrorCode::InvalidValue) scene_error(e.what());
      throw;
    }
  }

  const auto objects = desc.value("objects", nlohmann::json::array());
  if (!objects.is_array()) scene_error("objects must be an array");
  for (const auto& o : objects) {
    if (!o.is_object() || !o.contains("id") || !o["id"].is_string()) scene_error("object entries need a string 'id'");
    SceneObject obj;
    obj.id = o["id"].get<std::string>();
    const std::string shape = o.value("shape", std::string("box"));
    if (shape == "box") obj.shape = ShapeKind::Box;
    else if (shape == "sphere") obj.shape = ShapeKind::Sphere;
    else if (shape == "cylinder") obj.shape = ShapeKind::Cylinder;
    else scene_error("object '" + obj.id + "' has unknown shape '" + shape + "'");
    if (o.contains("size")) {
      const auto size = detail::json_numbers(o["size"], "object size", ErrorCode::MalformedScene);
      if (size.empty() || size.size() > 3) scene_error("object size needs 1 to 3 numbers");
      obj.size = Eigen::Vector3d::Zero();
      for (std::size_t i = 0; i < size.size(); ++i) obj.size[static_cast<Eigen::Index>(i)] = size[i];
    }
    if (o.contains("pose")) obj.pose = pose_from_json(o["pose"], ErrorCode::MalformedScene);
    ws.add_object(obj);
  }
  return ws;
}

inline Workspace load_scene_file(const std::filesystem::path& path) {
  nlohmann::json desc;
  try {
    desc = nlohmann::json::parse(detail::read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::MalformedScene, "scene '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return load_scene(desc, path.parent_path());
}

}  // namespace workbench
