// Command-line front end for the workbench engine.
//
// Exit codes: 0 success, 1 usage, 2 parse/validation error, 3 solver or
// engine failure. Failures print one JSON line {"error": {...}} on stderr.

#include <csignal>
#include <filesystem>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "workbench/dmp.hpp"
#include "workbench/kinematics.hpp"
#include "workbench/protocol.hpp"
#include "workbench/scene.hpp"
#include "workbench/server.hpp"

namespace wb = workbench;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kUsage = 1;
constexpr int kInvalid = 2;
constexpr int kEngine = 3;

struct Failure {
  int exit_code;
  std::string code;
  std::string message;
};

int exit_code_for(wb::ErrorCode code) {
  switch (code) {
    case wb::ErrorCode::Unreachable:
    case wb::ErrorCode::NonFiniteState:
    case wb::ErrorCode::WrongMode:
    case wb::ErrorCode::BusyRobot:
    case wb::ErrorCode::AlreadyRecording:
    case wb::ErrorCode::NotRecording:
    case wb::ErrorCode::BindFailure:
      return kEngine;
    default:
      return kInvalid;
  }
}

[[noreturn]] void fail(int exit_code, std::string code, std::string message) {
  throw Failure{exit_code, std::move(code), std::move(message)};
}

std::vector<double> number_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto v = wb::detail::parse_double(item);
    if (!v || !std::isfinite(*v)) fail(kUsage, "usage", std::string(flag) + " expects comma-separated numbers");
    out.push_back(*v);
  }
  if (out.empty()) fail(kUsage, "usage", std::string(flag) + " expects comma-separated numbers");
  return out;
}

Eigen::Vector3d vec3(const std::string& text, const char* flag) {
  const auto v = number_list(text, flag);
  if (v.size() != 3) fail(kUsage, "usage", std::string(flag) + " expects three numbers");
  return {v[0], v[1], v[2]};
}

std::string csv_number(double v) { return wb::detail::format_double(v == 0.0 ? 0.0 : v); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw wb::Error(wb::ErrorCode::Io, "cannot write '" + path + "'");
}

/// Header "t,<joint>..." then one row per sample.
std::string trajectory_csv(const wb::Trajectory& t, const std::vector<std::string>& names) {
  std::ostringstream out;
  out << 't';
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (const auto& s : t.samples) {
    out << csv_number(s.t);
    for (double q : s.q) out << ',' << csv_number(q);
    out << '\n';
  }
  return out.str();
}

std::vector<std::string> column_names(const wb::Trajectory& t) {
  if (t.meta.joint_names.size() == t.dof()) return t.meta.joint_names;
  std::vector<std::string> names;
  for (std::size_t j = 0; j < t.dof(); ++j) names.push_back("q" + std::to_string(j));
  return names;
}

json vec_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

wb::Trajectory read_trajectory(const std::string& path) {
  std::istringstream in(wb::detail::read_text_file(path));
  return wb::load(in);
}

wb::JointChain chain_for(const wb::RobotModel& model, const std::string& base, const std::string& tip) {
  return wb::build_chain(model, base.empty() ? model.root_link : base, tip);
}

std::string dump(const json& j) { return j.dump(2); }

// ---------------------------------------------------------------------------

int cmd_validate(const std::string& urdf, bool as_json) {
  const wb::RobotModel model = wb::parse_urdf(wb::detail::read_text_file(urdf));
  std::vector<std::string> actuated;
  for (const auto& j : model.joints)
    if (j.is_actuated()) actuated.push_back(j.name);
  if (as_json) {
    std::cout << dump({{"robot", model.name},
                       {"root", model.root_link},
                       {"links", model.links.size()},
                       {"joints", model.joints.size()},
                       {"dof", actuated.size()},
                       {"actuated_joints", actuated}})
              << '\n';
  } else {
    std::cout << "robot " << model.name << ": " << model.links.size() << " links, " << model.joints.size()
              << " joints, root " << model.root_link << '\n'
              << "dof = " << actuated.size() << '\n';
  }
  return 0;
}

int cmd_fk(const std::string& urdf, const std::string& base, const std::string& tip, const std::string& q_text,
           bool as_json, const std::string& csv) {
  const wb::RobotModel model = wb::parse_urdf(wb::detail::read_text_file(urdf));
  const wb::JointChain chain = chain_for(model, base, tip);
  const std::vector<double> q = number_list(q_text, "--q");
  const wb::FkResult fk = wb::forward_kinematics(chain, wb::to_joint_vector(q));
  const Eigen::Vector3d rpy = fk.ee.rpy();
  if (!csv.empty()) {
    std::ostringstream out;
    out << 't';
    for (const auto& n : chain.joint_names()) out << ',' << n;
    out << ",x,y,z,roll,pitch,yaw\n" << csv_number(0.0);
    for (double v : q) out << ',' << csv_number(v);
    for (int i = 0; i < 3; ++i) out << ',' << csv_number(fk.ee.position[i]);
    for (int i = 0; i < 3; ++i) out << ',' << csv_number(rpy[i]);
    out << '\n';
    write_text(csv, out.str());
  }
  if (as_json) {
    const auto& o = fk.ee.orientation;
    std::cout << dump({{"base", chain.base_link},
                       {"tip", chain.tip_link},
                       {"q", q},
                       {"position", vec_json(fk.ee.position)},
                       {"rpy", vec_json(rpy)},
                       {"orientation", {o.x(), o.y(), o.z(), o.w()}}})
              << '\n';
  } else {
    std::cout << "position " << csv_number(fk.ee.position.x()) << ' ' << csv_number(fk.ee.position.y()) << ' '
              << csv_number(fk.ee.position.z()) << '\n'
              << "rpy " << csv_number(rpy.x()) << ' ' << csv_number(rpy.y()) << ' ' << csv_number(rpy.z()) << '\n';
  }
  return 0;
}

int cmd_ik(const std::string& urdf, const std::string& base, const std::string& tip, const std::string& pos,
           const std::string& rpy, const std::string& q0_text, bool as_json) {
  const wb::RobotModel model = wb::parse_urdf(wb::detail::read_text_file(urdf));
  const wb::JointChain chain = chain_for(model, base, tip);
  const wb::Pose target = wb::Pose::from_xyz_rpy(vec3(pos, "--pos"), rpy.empty() ? Eigen::Vector3d::Zero() : vec3(rpy, "--rpy"));
  wb::JointVector q0 = wb::JointVector::Zero(static_cast<Eigen::Index>(chain.dof()));
  if (!q0_text.empty()) q0 = wb::to_joint_vector(number_list(q0_text, "--q0"));
  const wb::IkResult ik = wb::solve_ik(chain, target, q0);
  if (!ik.converged)
    fail(kEngine, std::string(wb::code_name(wb::ErrorCode::Unreachable)),
         "no solution within tolerance (residual " + csv_number(ik.residual) + ")");
  const auto q = wb::to_std_vector(ik.q);
  if (as_json) {
    std::cout << dump({{"converged", true}, {"q", q}, {"residual", ik.residual}, {"iterations", ik.iterations}}) << '\n';
  } else {
    std::cout << "q";
    for (double v : q) std::cout << ' ' << csv_number(v);
    std::cout << "\nresidual " << csv_number(ik.residual) << '\n';
  }
  return 0;
}

int cmd_dmp_train(const std::string& demo_path, const std::string& out_path, std::size_t n_basis, double k,
                  const std::string& fit, bool as_json) {
  const wb::Trajectory demo = read_trajectory(demo_path);
  wb::DmpConfig config = k > 0.0 ? wb::DmpConfig::critically_damped(k) : wb::DmpConfig{};
  config.n_basis = n_basis;
  config.fit = wb::parse_fit(fit);
  const wb::DmpModel model = wb::train(demo, config);
  std::ostringstream out;
  wb::save(model, out);
  write_text(out_path, out.str());
  if (as_json) {
    std::cout << dump({{"model", out_path}, {"dof", model.dof()}, {"tau", model.tau}, {"n_basis", n_basis},
                       {"K", config.K}, {"fit", fit}})
              << '\n';
  } else {
    std::cout << "trained " << model.dof() << "-dof model, tau " << csv_number(model.tau) << " s -> " << out_path << '\n';
  }
  return 0;
}

int cmd_dmp_rollout(const std::string& model_path, const std::string& goal_text, const std::string& start_text,
                    double tau, double dt, const std::string& out_path, const std::string& csv, bool as_json) {
  std::istringstream in(wb::detail::read_text_file(model_path));
  const wb::DmpModel model = wb::load_dmp(in);
  const std::vector<double> goal = number_list(goal_text, "--goal");
  std::vector<double> start;
  for (const auto& d : model.dofs) start.push_back(d.x0);
  if (!start_text.empty()) start = number_list(start_text, "--start");
  const wb::Trajectory t = wb::rollout(model, start, goal, tau > 0.0 ? tau : model.tau, dt);
  if (!out_path.empty()) {
    std::ostringstream out;
    wb::save(t, out);
    write_text(out_path, out.str());
  }
  if (!csv.empty()) write_text(csv, trajectory_csv(t, column_names(t)));
  const auto& last = t.samples.back().q;
  if (as_json) {
    std::cout << dump({{"out", out_path}, {"samples", t.size()}, {"duration", t.duration()}, {"goal", goal},
                       {"final", last}})
              << '\n';
  } else {
    std::cout << "rolled out " << t.size() << " samples over " << csv_number(t.duration()) << " s; final";
    for (double v : last) std::cout << ' ' << csv_number(v);
    std::cout << '\n';
  }
  return 0;
}

std::string pick_robot(const wb::Workspace& ws, const std::string& requested, const std::string& hint) {
  if (!requested.empty()) return requested;
  for (const auto& r : ws.robots())
    if (r.id == hint) return hint;
  if (ws.robots().empty()) fail(kInvalid, std::string(wb::code_name(wb::ErrorCode::UnknownRobot)), "scene has no robots");
  return ws.robots().front().id;
}

int cmd_replay(const std::string& scene, const std::string& traj_path, const std::string& robot_flag, bool report,
               const std::string& csv, bool as_json) {
  const wb::Trajectory rec = read_trajectory(traj_path);
  if (rec.empty()) throw wb::Error(wb::ErrorCode::TooFewSamples, "trajectory has no samples");
  json desc = json::parse(wb::detail::read_text_file(scene), nullptr, false);
  if (desc.is_discarded()) throw wb::Error(wb::ErrorCode::MalformedScene, "scene file is not valid JSON");
  const fs::path scene_dir = fs::path(scene).parent_path();
  const std::string robot = pick_robot(wb::load_scene(desc, scene_dir), robot_flag, rec.meta.robot);

  // The robot starts where the recording started.
  for (auto& r : desc["robots"])
    if (r.value("id", "") == robot) r["initial_q"] = rec.samples.front().q;
  wb::Workspace ws = wb::load_scene(desc, scene_dir);
  ws.play_trajectory(robot, rec);

  wb::Trajectory actual;
  actual.meta.joint_names = ws.robot(robot).chain.joint_names();
  std::vector<double> worst(rec.dof(), 0.0);
  std::size_t next = 0;
  for (std::uint64_t k = 0; next < rec.size(); ++k) {
    const double now = static_cast<double>(k) * ws.sim_dt();
    while (next < rec.size() && now >= rec.samples[next].t - 1e-9) {
      const auto q = ws.robot(robot).q();
      for (std::size_t j = 0; j < q.size(); ++j) worst[j] = std::max(worst[j], std::abs(q[j] - rec.samples[next].q[j]));
      actual.samples.push_back({rec.samples[next].t, q, std::nullopt, std::nullopt});
      ++next;
    }
    if (next < rec.size()) ws.tick();
  }
  const double max_error = *std::max_element(worst.begin(), worst.end());
  if (!csv.empty()) write_text(csv, trajectory_csv(actual, actual.meta.joint_names));
  if (as_json) {
    json out = {{"robot", robot}, {"samples", rec.size()}, {"duration", rec.duration()}, {"max_error", max_error}};
    if (report) out["per_joint_max_error"] = worst;
    std::cout << dump(out) << '\n';
  } else {
    std::cout << "replayed " << rec.size() << " samples on " << robot << "; max error " << csv_number(max_error)
              << " rad\n";
    if (report)
      for (std::size_t j = 0; j < worst.size(); ++j)
        std::cout << "  " << actual.meta.joint_names[j] << ' ' << csv_number(worst[j]) << '\n';
  }
  return 0;
}

int cmd_program_run(const std::string& scene, const std::string& program_path, const std::string& robot_flag,
                    double max_time, bool as_json) {
  wb::Workspace ws = wb::load_scene_file(scene);
  const json program_json = json::parse(wb::detail::read_text_file(program_path), nullptr, false);
  if (program_json.is_discarded()) fail(kInvalid, "validation_error", "program file is not valid JSON");
  const std::string robot = pick_robot(ws, robot_flag, "");
  ws.run_program(robot, wb::program_from_json(program_json));

  json events = json::array();
  bool aborted = false;
  std::string abort_message;
  const auto max_ticks = static_cast<std::uint64_t>(std::llround(max_time / ws.sim_dt()));
  while (ws.robot(robot).active && ws.tick_count() < max_ticks) {
    for (const auto& e : ws.tick()) {
      events.push_back(wb::event_to_json(e));
      if (e.kind == wb::EventKind::ProgramAborted) {
        aborted = true;
        abort_message = e.message;
      }
    }
  }
  const bool timed_out = ws.robot(robot).active.has_value();
  json objects = json::array();
  for (const auto& o : ws.objects()) objects.push_back({{"id", o.id}, {"position", vec_json(o.pose.position)}});
  const json summary = {{"robot", robot},   {"completed", !aborted && !timed_out}, {"time", ws.time()},
                        {"events", events}, {"objects", objects}};
  if (as_json) {
    std::cout << dump(summary) << '\n';
  } else {
    for (const auto& e : events) {
      std::cout << "t=" << std::fixed << std::setprecision(3) << e["tick"].get<double>() * ws.sim_dt()
                << std::defaultfloat << ' ' << e["event"].get<std::string>();
      if (e.contains("step")) std::cout << " step " << e["step"].get<int>();
      std::cout << '\n';
    }
    for (const auto& o : ws.objects())
      std::cout << o.id << " at " << std::fixed << std::setprecision(5) << o.pose.position.x() << ' '
                << o.pose.position.y() << ' ' << o.pose.position.z() << std::defaultfloat << '\n';
  }
  if (aborted) fail(kEngine, "program_aborted", abort_message);
  if (timed_out) fail(kEngine, "timeout", "program still running after " + csv_number(max_time) + " s");
  return 0;
}

int cmd_serve(const std::string& scene, std::string addr, std::string data, double hz) {
  if (addr.empty()) {
    const char* env = std::getenv("WORKBENCH_ADDR");
    addr = env ? env : "127.0.0.1:8765";
  }
  if (data.empty()) {
    const char* env = std::getenv("WORKBENCH_DATA");
    data = env ? env : "workbench-data";
  }
  const auto [host, port] = wb::parse_address(addr);
  wb::ServerOptions opts;
  opts.host = host;
  opts.port = port;
  opts.broadcast_hz = hz;

  boost::asio::io_context signals_ctx;
  boost::asio::signal_set signals(signals_ctx, SIGINT, SIGTERM);
  wb::Server server(wb::load_scene_file(scene), wb::ArtifactStore(data), opts);
  std::cout << "listening on ws://" << host << ':' << server.port() << "/ (data " << data << ")" << std::endl;
  signals.async_wait([&](const boost::system::error_code&, int) { server.stop(); });
  signals_ctx.run();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Headless robot teaching workbench"};
  app.require_subcommand(1);
  bool as_json = false;
  app.add_flag("--json", as_json, "Machine-readable JSON on stdout");

  std::string urdf, base, tip, q_text, pos, rpy, q0, csv;

  auto* validate = app.add_subcommand("validate", "Parse a URDF and report its structure");
  validate->add_option("urdf", urdf, "URDF file")->required();

  auto* fk = app.add_subcommand("fk", "Forward kinematics of a chain");
  fk->add_option("urdf", urdf, "URDF file")->required();
  fk->add_option("--tip", tip, "Tip link")->required();
  fk->add_option("--base", base, "Base link (default: root)");
  fk->add_option("--q", q_text, "Joint values a,b,...")->required();
  fk->add_option("--csv", csv, "Write t, joints, ee pose as CSV");

  auto* ik = app.add_subcommand("ik", "Inverse kinematics for a pose");
  ik->add_option("urdf", urdf, "URDF file")->required();
  ik->add_option("--tip", tip, "Tip link")->required();
  ik->add_option("--base", base, "Base link (default: root)");
  ik->add_option("--pos", pos, "Target position x,y,z")->required();
  ik->add_option("--rpy", rpy, "Target roll,pitch,yaw");
  ik->add_option("--q0", q0, "Initial guess");

  auto* dmp = app.add_subcommand("dmp", "Train or roll out movement primitives");
  dmp->require_subcommand(1);
  std::string demo, model_out, model_in, goal, start, traj_out, fit = "goal_constrained";
  std::size_t n_basis = 20;
  double k_gain = 0.0, tau = 0.0, dt = 1e-3;
  auto* train = dmp->add_subcommand("train", "Fit a model to a demonstration");
  train->add_option("--demo", demo, "Demonstration .traj.jsonl")->required();
  train->add_option("--out", model_out, "Output .dmp.json")->required();
  train->add_option("--n-basis", n_basis, "Basis functions per DOF");
  train->add_option("--k", k_gain, "Spring constant (damping set critical)");
  train->add_option("--fit", fit, "Weight fit")->check(CLI::IsMember({"goal_constrained", "lwr"}));
  auto* roll = dmp->add_subcommand("rollout", "Generate a trajectory toward a goal");
  roll->add_option("--model", model_in, "Model .dmp.json")->required();
  roll->add_option("--goal", goal, "Goal g1,g2,...")->required();
  roll->add_option("--start", start, "Start (default: demonstration start)");
  roll->add_option("--tau", tau, "Duration in seconds (default: demonstration duration)");
  roll->add_option("--dt", dt, "Output sample spacing");
  roll->add_option("--out", traj_out, "Output .traj.jsonl");
  roll->add_option("--csv", csv, "Write t, joints as CSV");

  std::string scene, traj, robot, program, addr, data;
  bool report = false;
  double max_time = 60.0, hz = 60.0;
  auto* replay = app.add_subcommand("replay", "Play a trajectory in a scene and measure tracking");
  replay->add_option("--scene", scene, "Scene JSON")->required();
  replay->add_option("--traj", traj, "Trajectory .traj.jsonl")->required();
  replay->add_option("--robot", robot, "Robot id (default: trajectory's robot or first)");
  replay->footer("The robot starts at the trajectory's first sample.");
  replay->add_flag("--report", report, "Per-joint error report");
  replay->add_option("--csv", csv, "Write replayed t, joints as CSV");

  auto* serve = app.add_subcommand("serve", "Run the websocket server");
  serve->add_option("--scene", scene, "Scene JSON")->required();
  serve->add_option("--addr", addr, "host:port (env WORKBENCH_ADDR, default 127.0.0.1:8765)");
  serve->add_option("--data", data, "Artifact directory (env WORKBENCH_DATA)");
  serve->add_option("--broadcast-hz", hz, "Snapshot rate");

  auto* prog = app.add_subcommand("program", "Task programs");
  prog->require_subcommand(1);
  auto* run = prog->add_subcommand("run", "Run a program to completion");
  run->add_option("--scene", scene, "Scene JSON")->required();
  run->add_option("--program", program, "Program JSON")->required();
  run->add_option("--robot", robot, "Robot id (default: first)");
  run->add_option("--max-time", max_time, "Simulated time limit in seconds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", {{"code", "usage"}, {"message", e.what()}}}}.dump() << '\n';
    return kUsage;
  }

  try {
    if (*validate) return cmd_validate(urdf, as_json);
    if (*fk) return cmd_fk(urdf, base, tip, q_text, as_json, csv);
    if (*ik) return cmd_ik(urdf, base, tip, pos, rpy, q0, as_json);
    if (*train) return cmd_dmp_train(demo, model_out, n_basis, k_gain, fit, as_json);
    if (*roll) return cmd_dmp_rollout(model_in, goal, start, tau, dt, traj_out, csv, as_json);
    if (*replay) return cmd_replay(scene, traj, robot, report, csv, as_json);
    if (*serve) return cmd_serve(scene, addr, data, hz);
    if (*run) return cmd_program_run(scene, program, robot, max_time, as_json);
  } catch (const Failure& f) {
    std::cerr << json{{"error", {{"code", f.code}, {"message", f.message}}}}.dump() << '\n';
    return f.exit_code;
  } catch (const wb::Error& e) {
    std::cerr << json{{"error", {{"code", wb::code_name(e.code())}, {"message", e.what()}}}}.dump() << '\n';
    return exit_code_for(e.code());
  }
  return kUsage;
}
