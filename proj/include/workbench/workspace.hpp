#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "workbench/error.hpp"
#include "workbench/joint_dynamics.hpp"
#include "workbench/kinematics.hpp"
#include "workbench/pose.hpp"
#include "workbench/trajectory.hpp"
#include "workbench/urdf.hpp"

namespace workbench {

enum class Mode { Hold, FreeDrive, GhostDrive };

constexpr std::string_view mode_name(Mode m) noexcept {
  switch (m) {
    case Mode::Hold: return "hold";
    case Mode::FreeDrive: return "free_drive";
    case Mode::GhostDrive: return "ghost_drive";
  }
  return "hold";
}

inline std::optional<Mode> parse_mode(std::string_view text) {
  if (text == "hold") return Mode::Hold;
  if (text == "free_drive") return Mode::FreeDrive;
  if (text == "ghost_drive") return Mode::GhostDrive;
  return std::nullopt;
}

enum class ShapeKind { Box, Sphere, Cylinder };

constexpr std::string_view shape_name(ShapeKind s) noexcept {
  switch (s) {
    case ShapeKind::Box: return "box";
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Cylinder: return "cylinder";
  }
  return "box";
}

/// Kinematic-only scene object. `size` is (x, y, z) for boxes, (radius, -, -)
/// for spheres and (radius, length, -) for cylinders. The reference point is the center.
struct SceneObject {
  std::string id;
  ShapeKind shape = ShapeKind::Box;
  Eigen::Vector3d size = Eigen::Vector3d::Constant(0.1);
  Pose pose;
};

struct MoveToJoints {
  std::vector<double> q;
};
struct MoveToPose {
  Pose pose;  // world frame
};
struct GripperOpen {};
struct GripperClose {};

using Instruction = std::variant<MoveToJoints, MoveToPose, GripperOpen, GripperClose>;
using Program = std::vector<Instruction>;

using Handle = std::uint64_t;

struct Gripper {
  GripperState state = GripperState::Open;
  std::optional<std::string> attached;
  Pose attach_offset;  // object pose in the end-effector frame
  double grasp_radius = 0.05;
};

struct SettleParams {
  double tolerance = 1e-3;
  int ticks = 50;
};

struct PlaybackActivity {
  Handle handle = 0;
  Trajectory path;
  std::uint64_t start_tick = 0;
  bool hold_when_done = false;
};

struct ProgramActivity {
  Handle handle = 0;
  Program program;
  std::size_t step = 0;
  bool moving = false;
  Trajectory path;
  std::uint64_t start_tick = 0;
  int settled_ticks = 0;
};

using Activity = std::variant<PlaybackActivity, ProgramActivity>;

struct RecordingState {
  Recorder recorder;
  std::uint64_t start_tick = 0;
  int every = 10;
};

struct RobotInstance {
  std::string id;
  std::shared_ptr<const RobotModel> model;
  JointChain chain;
  Pose base_pose;
  std::vector<JointMotionState> joints;
  std::vector<DriveParams> drives;
  Mode mode = Mode::Hold;
  std::vector<double> ghost_q;
  Gripper gripper;
  std::optional<Activity> active;
  std::optional<RecordingState> recording;

  std::size_t dof() const { return chain.dof(); }

  std::vector<double> q() const {
    std::vector<double> out;
    for (const auto& j : joints) out.push_back(j.position);
    return out;
  }

  std::vector<double> qd() const {
    std::vector<double> out;
    for (const auto& j : joints) out.push_back(j.velocity);
    return out;
  }

  std::vector<double> velocity_limits() const {
    std::vector<double> out;
    for (const auto& j : chain.joints) out.push_back(j.limits.velocity);
    return out;
  }

  std::vector<double> clamp(std::vector<double> q) const {
    for (std::size_t i = 0; i < q.size() && i < chain.dof(); ++i) q[i] = chain.joints[i].clamp(q[i]);
    return q;
  }

  /// End-effector pose in the world frame.
  Pose ee_pose() const { return base_pose * forward_kinematics(chain, to_joint_vector(q())).ee; }

  std::optional<Handle> active_handle() const {
    if (!active) return std::nullopt;
    return std::visit([](const auto& a) { return a.handle; }, *active);
  }
};

enum class EventKind { PlaybackDone, ProgramStepDone, ProgramDone, ProgramAborted };

constexpr std::string_view event_name(EventKind k) noexcept {
  switch (k) {
    case EventKind::PlaybackDone: return "playback_done";
    case EventKind::ProgramStepDone: return "program_step_done";
    case EventKind::ProgramDone: return "program_done";
    case EventKind::ProgramAborted: return "program_aborted";
  }
  return "unknown";
}

struct Event {
  EventKind kind;
  std::string robot_id;
  Handle handle = 0;
  std::size_t step = 0;
  std::string message;
  std::uint64_t tick = 0;
};

struct RobotSnapshot {
  std::string id;
  Mode mode = Mode::Hold;
  std::vector<double> q;
  std::vector<double> qd;
  std::vector<double> ghost_q;
  Pose ee_pose;
  std::vector<std::string> link_names;
  std::vector<Pose> link_poses;  // world frame, matches link_names
  GripperState gripper = GripperState::Open;
  std::optional<std::string> attached;
  bool recording = false;
  std::optional<Handle> active;
};

struct ObjectSnapshot {
  std::string id;
  ShapeKind shape = ShapeKind::Box;
  Eigen::Vector3d size;
  Pose pose;
  std::optional<std::string> attached_to;
};

/// Immutable view of the workspace at a tick boundary.
struct Snapshot {
  std::uint64_t tick = 0;
  double time = 0.0;
  std::vector<RobotSnapshot> robots;
  std::vector<ObjectSnapshot> objects;
};

struct RobotSpec {
  std::string id;
  std::shared_ptr<const RobotModel> model;
  std::string base_link;  // empty: model root
  std::string tip_link;
  Pose base_pose;
  std::vector<double> initial_q;  // empty: zeros clamped to limits
  DriveParams drive;              // gains applied to every joint
  double grasp_radius = 0.05;
};

/// The single mutable simulation state. Not thread-safe: one owner applies
/// commands between ticks.
class Workspace {
 public:
  explicit Workspace(double sim_dt = 1e-3) : sim_dt_(sim_dt) {
    if (!(sim_dt > 0.0)) throw Error(ErrorCode::InvalidValue, "sim_dt must be positive");
  }

  SettleParams settle;

  double sim_dt() const { return sim_dt_; }
  std::uint64_t tick_count() const { return tick_count_; }
  double time() const { return static_cast<double>(tick_count_) * sim_dt_; }
  const std::vector<RobotInstance>& robots() const { return robots_; }
  const std::vector<SceneObject>& objects() const { return objects_; }

  RobotInstance& add_robot(const RobotSpec& spec) {
    if (!spec.model) throw Error(ErrorCode::MalformedScene, "robot '" + spec.id + "' has no model");
    check_new_id(spec.id);
    RobotInstance r;
    r.id = spec.id;
    r.model = spec.model;
    r.chain = build_chain(*spec.model, spec.base_link.empty() ? spec.model->root_link : spec.base_link, spec.tip_link);
    r.base_pose = spec.base_pose;
    validate(spec.drive);
    std::vector<double> q0 = spec.initial_q.empty() ? std::vector<double>(r.dof(), 0.0) : spec.initial_q;
    if (q0.size() != r.dof())
      throw Error(ErrorCode::DimensionMismatch, "robot '" + spec.id + "' initial_q has " + std::to_string(q0.size()) +
                                                    " entries, chain dof is " + std::to_string(r.dof()));
    q0 = r.clamp(q0);
    for (double qi : q0) {
      r.joints.push_back({qi, 0.0});
      DriveParams d = spec.drive;
      d.target_position = qi;
      d.target_velocity = 0.0;
      r.drives.push_back(d);
    }
    r.ghost_q = q0;
    r.gripper.grasp_radius = spec.grasp_radius;
    robots_.push_back(std::move(r));
    return robots_.back();
  }

  void add_object(const SceneObject& obj) {
    check_new_id(obj.id);
    for (int i = 0; i < 3; ++i) {
      const bool used = obj.shape == ShapeKind::Box || i == 0 || (obj.shape == ShapeKind::Cylinder && i == 1);
      if (used && !(obj.size[i] > 0.0))
        throw Error(ErrorCode::MalformedScene, "object '" + obj.id + "' needs strictly positive dimensions");
    }
    objects_.push_back(obj);
  }

  const RobotInstance& robot(std::string_view id) const { return robots_[robot_index(id)]; }

  const SceneObject* find_object(std::string_view id) const {
    for (const auto& o : objects_)
      if (o.id == id) return &o;
    return nullptr;
  }

  void set_mode(std::string_view robot_id, Mode mode) {
    RobotInstance& r = mutable_robot(robot_id);
    check_idle(r);
    if (mode == Mode::GhostDrive && r.mode != Mode::GhostDrive) r.ghost_q = r.clamp(r.q());
    if (mode != Mode::GhostDrive) r.ghost_q = r.clamp(r.q());
    r.mode = mode;
  }

  void drag_joint(std::string_view robot_id, std::size_t joint_index, double target) {
    RobotInstance& r = mutable_robot(robot_id);
    check_idle(r);
    if (r.mode == Mode::Hold) throw Error(ErrorCode::WrongMode, "robot '" + r.id + "' is in hold mode");
    if (joint_index >= r.dof())
      throw Error(ErrorCode::IndexOutOfRange, "joint index " + std::to_string(joint_index) + " out of range for dof " +
                                                  std::to_string(r.dof()));
    if (!std::isfinite(target)) throw Error(ErrorCode::InvalidValue, "drag target must be finite");
    const double clamped = r.chain.joints[joint_index].clamp(target);
    if (r.mode == Mode::FreeDrive) {
      r.drives[joint_index].target_position = clamped;
      r.drives[joint_index].target_velocity = 0.0;
    } else {
      r.ghost_q[joint_index] = clamped;
    }
  }

  IkResult drag_ee(std::string_view robot_id, const Pose& target, const IkOptions& opts = {}) {
    RobotInstance& r = mutable_robot(robot_id);
    check_idle(r);
    if (r.mode == Mode::Hold) throw Error(ErrorCode::WrongMode, "robot '" + r.id + "' is in hold mode");
    const IkResult ik = solve_ik(r.chain, r.base_pose.inverse() * target, to_joint_vector(r.q()), opts);
    if (!ik.converged)
      throw Error(ErrorCode::Unreachable, "pose unreachable for robot '" + r.id + "' (residual " +
                                              detail::format_double(ik.residual) + ")");
    const std::vector<double> q = to_std_vector(ik.q);
    if (r.mode == Mode::FreeDrive) {
      for (std::size_t i = 0; i < r.dof(); ++i) {
        r.drives[i].target_position = q[i];
        r.drives[i].target_velocity = 0.0;
      }
    } else {
      r.ghost_q = q;
    }
    return ik;
  }

  Handle commit_ghost(std::string_view robot_id) {
    RobotInstance& r = mutable_robot(robot_id);
    check_idle(r);
    if (r.mode != Mode::GhostDrive) throw Error(ErrorCode::WrongMode, "robot '" + r.id + "' is not in ghost mode");
    Trajectory path = interpolate_joint_path(to_joint_vector(r.q()), to_joint_vector(r.ghost_q), r.velocity_limits(),
                                             sim_dt_);
    return start_playback(r, std::move(path), true);
  }

  /// Replays a joint trajectory on the robot's drives from the next tick on.
  Handle play_trajectory(std::string_view robot_id, Trajectory traj) {
    RobotInstance& r = mutable_robot(robot_id);
    check_idle(r);
    if (traj.empty()) throw Error(ErrorCode::TooFewSamples, "cannot play an empty trajectory");
    if (traj.dof() != r.dof())
      throw Error(ErrorCode::DofMismatch, "trajectory dof " + std::to_string(traj.dof()) + " != robot dof " +
                                              std::to_string(r.dof()));
    validate(traj);
    return start_playback(r, std::move(traj), false);
  }

  void set_gripper(std::string_view robot_id, GripperState state) { apply_gripper(mutable_robot(robot_id), state); }

  Handle run_program(std::string_view robot_id, Program program) {
    RobotInstance& r = mutable_robot(robot_id);
    check_idle(r);
    if (program.empty()) throw Error(ErrorCode::InvalidValue, "program is empty");
    for (const auto& ins : program) {
      if (const auto* mj = std::get_if<MoveToJoints>(&ins); mj && mj->q.size() != r.dof())
        throw Error(ErrorCode::DimensionMismatch, "move_to_joints needs " + std::to_string(r.dof()) + " values");
    }
    ProgramActivity act;
    act.handle = next_handle_++;
    act.program = std::move(program);
    r.active = std::move(act);
    return std::get<ProgramActivity>(*r.active).handle;
  }

  /// Cancels any playback or program; drives hold the current position.
  void stop(std::string_view robot_id) {
    RobotInstance& r = mutable_robot(robot_id);
    r.active.reset();
    hold_here(r);
  }

  void start_recording(std::string_view robot_id, int sample_every = 10) {
    RobotInstance& r = mutable_robot(robot_id);
    if (r.recording) throw Error(ErrorCode::AlreadyRecording, "robot '" + r.id + "' is already recording");
    if (sample_every < 1) throw Error(ErrorCode::InvalidValue, "sample_every must be >= 1");
    TrajectoryMeta meta;
    meta.robot = r.model->name;
    meta.joint_names = r.chain.joint_names();
    RecordingState rec{Recorder(std::move(meta)), tick_count_, sample_every};
    rec.recorder.append(make_sample(r, 0.0));
    r.recording = std::move(rec);
  }

  Trajectory stop_recording(std::string_view robot_id) {
    RobotInstance& r = mutable_robot(robot_id);
    if (!r.recording) throw Error(ErrorCode::NotRecording, "robot '" + r.id + "' is not recording");
    Trajectory out = std::move(r.recording->recorder).finish();
    r.recording.reset();
    return out;
  }

  /// Advances the simulation by one sim_dt.
  std::vector<Event> tick() {
    std::vector<Event> events;
    const std::uint64_t next_tick = tick_count_ + 1;
    for (auto& r : robots_) {
      if (r.active) apply_activity_targets(r, events, next_tick);
      for (std::size_t i = 0; i < r.dof(); ++i) r.joints[i] = step(r.joints[i], r.drives[i], sim_dt_);
      update_attachment(r);
      if (r.active) finish_activity_step(r, events, next_tick);
    }
    tick_count_ = next_tick;
    for (auto& r : robots_) {
      if (!r.recording) continue;
      const std::uint64_t elapsed = tick_count_ - r.recording->start_tick;
      if (elapsed % static_cast<std::uint64_t>(r.recording->every) == 0)
        r.recording->recorder.append(make_sample(r, static_cast<double>(elapsed) * sim_dt_));
    }
    return events;
  }

  Snapshot snapshot() const {
    Snapshot s;
    s.tick = tick_count_;
    s.time = time();
    for (const auto& r : robots_) {
      RobotSnapshot rs;
      rs.id = r.id;
      rs.mode = r.mode;
      rs.q = r.q();
      rs.qd = r.qd();
      rs.ghost_q = r.ghost_q;
      const FkResult fk = forward_kinematics(r.chain, to_joint_vector(rs.q));
      rs.ee_pose = r.base_pose * fk.ee;
      rs.link_names = r.chain.frame_links();
      for (const auto& p : fk.link_poses) rs.link_poses.push_back(r.base_pose * p);
      rs.gripper = r.gripper.state;
      rs.attached = r.gripper.attached;
      rs.recording = r.recording.has_value();
      rs.active = r.active_handle();
      s.robots.push_back(std::move(rs));
    }
    for (const auto& o : objects_) {
      ObjectSnapshot os{o.id, o.shape, o.size, o.pose, std::nullopt};
      for (const auto& r : robots_)
        if (r.gripper.attached == o.id) os.attached_to = r.id;
      s.objects.push_back(std::move(os));
    }
    return s;
  }

 private:
  std::size_t robot_index(std::string_view id) const {
    for (std::size_t i = 0; i < robots_.size(); ++i)
      if (robots_[i].id == id) return i;
    throw Error(ErrorCode::UnknownRobot, "unknown robot '" + std::string(id) + "'");
  }

  RobotInstance& mutable_robot(std::string_view id) { return robots_[robot_index(id)]; }

  void check_new_id(const std::string& id) const {
    if (id.empty()) throw Error(ErrorCode::MalformedScene, "ids must be non-empty");
    for (const auto& r : robots_)
      if (r.id == id) throw Error(ErrorCode::DuplicateId, "duplicate id '" + id + "'");
    for (const auto& o : objects_)
      if (o.id == id) throw Error(ErrorCode::DuplicateId, "duplicate id '" + id + "'");
  }

  static void check_idle(const RobotInstance& r) {
    if (r.active) throw Error(ErrorCode::BusyRobot, "robot '" + r.id + "' is executing a playback or program");
  }

  static void hold_here(RobotInstance& r) {
    for (std::size_t i = 0; i < r.dof(); ++i) {
      r.drives[i].target_position = r.joints[i].position;
      r.drives[i].target_velocity = 0.0;
    }
  }

  TrajectorySample make_sample(const RobotInstance& r, double t) const {
    TrajectorySample s;
    s.t = t;
    s.q = r.q();
    s.qd = r.qd();
    s.gripper = r.gripper.state;
    return s;
  }

  Handle start_playback(RobotInstance& r, Trajectory path, bool hold_when_done) {
    PlaybackActivity act;
    act.handle = next_handle_++;
    act.path = std::move(path);
    act.start_tick = tick_count_;
    act.hold_when_done = hold_when_done;
    r.active = std::move(act);
    return std::get<PlaybackActivity>(*r.active).handle;
  }

  /// Drive targets for the tick that starts `elapsed` ticks into `path`.
  /// Inverts the semi-implicit Euler update: with the reference sampled at
  /// the previous, current and next tick, a joint already on the reference
  /// lands on it again after the step. Feedback handles any deviation.
  void track_reference(RobotInstance& r, const Trajectory& path, std::uint64_t elapsed) const {
    const double t = static_cast<double>(elapsed) * sim_dt_;
    const auto prev = hermite_reference(path, t - sim_dt_).q;
    const auto now = hermite_reference(path, t).q;
    const auto next = hermite_reference(path, t + sim_dt_).q;
    for (std::size_t i = 0; i < r.dof(); ++i) {
      DriveParams& d = r.drives[i];
      const double v = (now[i] - prev[i]) / sim_dt_;
      const double force = d.inertia * (next[i] - 2.0 * now[i] + prev[i]) / (sim_dt_ * sim_dt_);
      d.target_position = now[i];
      d.target_velocity = v;
      if (d.stiffness > 0.0) {
        d.target_position += force / d.stiffness;
      } else if (d.damping > 0.0) {
        d.target_velocity += force / d.damping;
      }
    }
  }

  static void hold_final(RobotInstance& r, const Trajectory& path) {
    const auto& q = path.samples.back().q;
    for (std::size_t i = 0; i < r.dof(); ++i) {
      r.drives[i].target_position = q[i];
      r.drives[i].target_velocity = 0.0;
    }
  }

  bool path_finished(const Trajectory& path, std::uint64_t start_tick, std::uint64_t now_tick) const {
    return static_cast<double>(now_tick - start_tick) * sim_dt_ >= path.duration() - 1e-9;
  }

  void apply_activity_targets(RobotInstance& r, std::vector<Event>& events, std::uint64_t next_tick) {
    if (auto* pb = std::get_if<PlaybackActivity>(&*r.active)) {
      track_reference(r, pb->path, tick_count_ - pb->start_tick);
      return;
    }
    auto& prog = std::get<ProgramActivity>(*r.active);
    if (!prog.moving) {
      const Instruction& ins = prog.program[prog.step];
      std::optional<std::vector<double>> target;
      if (const auto* mj = std::get_if<MoveToJoints>(&ins)) {
        target = r.clamp(mj->q);
      } else if (const auto* mp = std::get_if<MoveToPose>(&ins)) {
        const IkResult ik = solve_ik(r.chain, r.base_pose.inverse() * mp->pose, to_joint_vector(r.q()));
        if (!ik.converged) {
          events.push_back({EventKind::ProgramAborted, r.id, prog.handle, prog.step,
                            "move_to_pose unreachable (residual " + detail::format_double(ik.residual) + ")",
                            next_tick});
          r.active.reset();
          hold_here(r);
          return;
        }
        target = to_std_vector(ik.q);
      } else {
        apply_gripper(r, std::holds_alternative<GripperClose>(ins) ? GripperState::Closed : GripperState::Open);
        advance_program(r, prog, events, next_tick);
        return;
      }
      prog.path = interpolate_joint_path(to_joint_vector(r.q()), to_joint_vector(*target), r.velocity_limits(), sim_dt_);
      prog.start_tick = tick_count_;
      prog.settled_ticks = 0;
      prog.moving = true;
    }
    if (path_finished(prog.path, prog.start_tick, tick_count_)) {
      hold_final(r, prog.path);
    } else {
      track_reference(r, prog.path, tick_count_ - prog.start_tick);
    }
  }

  void finish_activity_step(RobotInstance& r, std::vector<Event>& events, std::uint64_t next_tick) {
    if (auto* pb = std::get_if<PlaybackActivity>(&*r.active)) {
      if (!path_finished(pb->path, pb->start_tick, next_tick)) return;
      hold_final(r, pb->path);
      events.push_back({EventKind::PlaybackDone, r.id, pb->handle, 0, "", next_tick});
      if (pb->hold_when_done) {
        r.mode = Mode::Hold;
        r.ghost_q = r.clamp(r.q());
      }
      r.active.reset();
      return;
    }
    auto& prog = std::get<ProgramActivity>(*r.active);
    if (!prog.moving || !path_finished(prog.path, prog.start_tick, next_tick)) return;
    const auto& target = prog.path.samples.back().q;
    bool settled = true;
    for (std::size_t i = 0; i < r.dof(); ++i) {
      if (std::abs(r.joints[i].position - target[i]) >= settle.tolerance ||
          std::abs(r.joints[i].velocity) >= settle.tolerance)
        settled = false;
    }
    prog.settled_ticks = settled ? prog.settled_ticks + 1 : 0;
    if (prog.settled_ticks >= settle.ticks) {
      hold_final(r, prog.path);
      advance_program(r, prog, events, next_tick);
    }
  }

  void advance_program(RobotInstance& r, ProgramActivity& prog, std::vector<Event>& events, std::uint64_t next_tick) {
    events.push_back({EventKind::ProgramStepDone, r.id, prog.handle, prog.step, "", next_tick});
    prog.moving = false;
    ++prog.step;
    if (prog.step >= prog.program.size()) {
      events.push_back({EventKind::ProgramDone, r.id, prog.handle, prog.step, "", next_tick});
      r.active.reset();
    }
  }

  void apply_gripper(RobotInstance& r, GripperState state) {
    r.gripper.state = state;
    if (state == GripperState::Open) {
      r.gripper.attached.reset();
      return;
    }
    if (r.gripper.attached) return;
    const Pose ee = r.ee_pose();
    const SceneObject* best = nullptr;
    double best_dist = r.gripper.grasp_radius;
    for (const auto& o : objects_) {
      bool taken = false;
      for (const auto& other : robots_) taken = taken || other.gripper.attached == o.id;
      if (taken) continue;
      const double dist = (o.pose.position - ee.position).norm();
      if (dist <= best_dist) {
        best = &o;
        best_dist = dist;
      }
    }
    if (best == nullptr) return;
    r.gripper.attached = best->id;
    r.gripper.attach_offset = ee.inverse() * best->pose;
  }

  void update_attachment(const RobotInstance& r) {
    if (!r.gripper.attached) return;
    for (auto& o : objects_)
      if (o.id == *r.gripper.attached) o.pose = r.ee_pose() * r.gripper.attach_offset;
  }

  double sim_dt_;
  std::uint64_t tick_count_ = 0;
  Handle next_handle_ = 1;
  std::vector<RobotInstance> robots_;
  std::vector<SceneObject> objects_;
};

}  // namespace workbench
