#include <gtest/gtest.h>

#include <unistd.h>

#include "support.hpp"
#include "workbench/protocol.hpp"

using namespace workbench;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("workbench_protocol_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(dir);
  return dir;
}

class ProtocolTest : public ::testing::Test {
 protected:
  ProtocolTest()
      : ws_(load_scene_file(wb_test::data_path("scenes/pick_place.json"))),
        store_(scratch_dir(::testing::UnitTest::GetInstance()->current_test_info()->name())),
        proc_(ws_, store_) {}

  ~ProtocolTest() override { fs::remove_all(store_.dir()); }

  json send(const std::string& type, json payload = json::object()) {
    const std::string id = "c" + std::to_string(++next_id_);
    const json ack = proc_.handle_text(json{{"id", id}, {"type", type}, {"payload", payload}}.dump(), conn_);
    EXPECT_EQ(ack["type"], "ack");
    EXPECT_EQ(ack["id"], id);
    return ack;
  }

  json ok(const std::string& type, json payload = json::object()) {
    const json ack = send(type, std::move(payload));
    EXPECT_TRUE(ack["ok"].get<bool>()) << ack.dump();
    return ack.value("result", json::object());
  }

  std::string error_code(const std::string& type, json payload = json::object()) {
    const json ack = send(type, std::move(payload));
    EXPECT_FALSE(ack["ok"].get<bool>()) << ack.dump();
    return ack["error"].value("code", "");
  }

  std::vector<Event> tick_until_idle(int max_ticks) {
    std::vector<Event> all;
    for (int k = 0; k < max_ticks && ws_.robot("ur5e").active; ++k) {
      auto ev = ws_.tick();
      all.insert(all.end(), ev.begin(), ev.end());
    }
    return all;
  }

  Workspace ws_;
  ArtifactStore store_;
  CommandProcessor proc_;
  Connection conn_;
  int next_id_ = 0;
};

}  // namespace

TEST_F(ProtocolTest, MalformedFramesGetErrorFrames) {
  for (const char* text : {"{not json", "[1,2]", "{\"type\":\"set_mode\"}", "{\"id\":\"\",\"type\":\"x\"}", "{\"id\":7}"}) {
    const json reply = proc_.handle_text(text, conn_);
    EXPECT_EQ(reply["type"], "error") << text;
    EXPECT_EQ(reply["error"]["code"], "validation_error") << text;
  }
}

TEST_F(ProtocolTest, EnvelopeContract) {
  EXPECT_EQ(error_code("teleport"), "unknown_command");
  const json dup = proc_.handle_text(R"({"id":"c1","type":"get_snapshot"})", conn_);
  EXPECT_EQ(dup["ok"], false);
  EXPECT_EQ(dup["error"]["code"], "validation_error");
  const json no_type = proc_.handle_text(R"({"id":"x1"})", conn_);
  EXPECT_EQ(no_type["error"]["code"], "validation_error");
  const json bad_payload = proc_.handle_text(R"({"id":"x2","type":"set_mode","payload":3})", conn_);
  EXPECT_EQ(bad_payload["error"]["code"], "validation_error");

  Connection other;
  const json fresh = proc_.handle_text(R"({"id":"c1","type":"get_snapshot"})", other);
  EXPECT_EQ(fresh["ok"], true);
}

TEST_F(ProtocolTest, BadRobotLeavesSimulationAlone) {
  const auto before = ws_.robot("ur5e").drives;
  EXPECT_EQ(error_code("drag_joint", {{"robot", "r2d2"}, {"joint", 0}, {"target", 0.5}}), "unknown_robot");
  EXPECT_EQ(ws_.robot("ur5e").drives, before);
}

TEST_F(ProtocolTest, EngineErrorsForwardedByCode) {
  EXPECT_EQ(error_code("drag_joint", {{"robot", "ur5e"}, {"joint", 0}, {"target", 0.5}}), "wrong_mode");
  EXPECT_EQ(error_code("set_mode", {{"robot", "ur5e"}, {"mode", "fly"}}), "validation_error");
  EXPECT_EQ(error_code("set_mode", {{"robot", "ur5e"}}), "validation_error");
  ok("set_mode", {{"robot", "ur5e"}, {"mode", "free_drive"}});
  EXPECT_EQ(error_code("drag_joint", {{"robot", "ur5e"}, {"joint", 9}, {"target", 0.5}}), "index_out_of_range");
  EXPECT_EQ(error_code("drag_joint", {{"robot", "ur5e"}, {"joint", "elbow"}, {"target", 0.5}}), "index_out_of_range");
  EXPECT_EQ(error_code("drag_joint", {{"robot", "ur5e"}, {"joint", 0}, {"target", "far"}}), "validation_error");
  EXPECT_EQ(error_code("drag_ee", {{"robot", "ur5e"}, {"pose", {{"xyz", {4, 0, 0}}}}}), "unreachable");
  EXPECT_EQ(error_code("record_stop", {{"robot", "ur5e"}}), "not_recording");
  EXPECT_EQ(error_code("run_program", {{"robot", "ur5e"}, {"program", {{{"type", "jump"}}}}}), "validation_error");
  EXPECT_EQ(error_code("get_trajectory", {{"trajectory_id", "traj-404"}}), "unknown_artifact");
  EXPECT_EQ(error_code("load_model", {{"model_id", "../../etc/passwd"}}), "validation_error");
}

TEST_F(ProtocolTest, DragByJointName) {
  ok("set_mode", {{"robot", "ur5e"}, {"mode", "free_drive"}});
  ok("drag_joint", {{"robot", "ur5e"}, {"joint", "wrist_1_joint"}, {"target", -1.0}});
  EXPECT_EQ(ws_.robot("ur5e").drives[3].target_position, -1.0);
}

TEST_F(ProtocolTest, TeachingFlow) {
  ok("set_mode", {{"robot", "ur5e"}, {"mode", "free_drive"}});
  ok("record_start", {{"robot", "ur5e"}});
  const auto q0 = ws_.robot("ur5e").q();
  for (int k = 0; k < 2000; ++k) {
    if (k % 20 == 0)
      for (int j = 0; j < 6; ++j)
        ok("drag_joint", {{"robot", "ur5e"}, {"joint", j}, {"target", q0[j] + 0.3 * (1 - std::cos(k * 1.5e-3))}});
    ws_.tick();
  }
  const json rec = ok("record_stop", {{"robot", "ur5e"}});
  EXPECT_EQ(rec["samples"], 201);
  const std::string traj_id = rec["trajectory_id"];

  const json trained = ok("train_dmp", {{"trajectory_id", traj_id}});
  EXPECT_EQ(trained["dof"], 6);
  const std::string model_id = trained["model_id"];

  EXPECT_EQ(error_code("rollout_dmp", {{"robot", "ur5e"}, {"model_id", model_id}, {"g", {0.1, 0.2}}}),
            "validation_error");

  ok("set_mode", {{"robot", "ur5e"}, {"mode", "hold"}});
  std::vector<double> goal = ws_.robot("ur5e").q();
  for (double& v : goal) v -= 0.2;
  const json roll = ok("rollout_dmp", {{"robot", "ur5e"}, {"model_id", model_id}, {"g", goal}});
  ASSERT_FALSE(roll["handle"].is_null());
  const auto events = tick_until_idle(10000);
  ASSERT_FALSE(events.empty());
  EXPECT_EQ(events.back().kind, EventKind::PlaybackDone);
  EXPECT_EQ(events.back().handle, roll["handle"].get<Handle>());
  for (int k = 0; k < 500; ++k) ws_.tick();
  const auto q = ws_.robot("ur5e").q();
  for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(q[j], goal[j], 1e-3);
}

TEST_F(ProtocolTest, InlineTrainingAndConfig) {
  json samples = json::array();
  for (int k = 0; k <= 100; ++k) {
    const double t = k * 0.01;
    samples.push_back({{"t", t}, {"q", {std::sin(t), 1 - std::cos(t)}}});
  }
  const json trained =
      ok("train_dmp", {{"trajectory", {{"samples", samples}}}, {"config", {{"K", 400}, {"n_basis", 30}}}});
  const DmpModel m = dmp_from_json(ok("get_model", {{"model_id", trained["model_id"]}}));
  EXPECT_EQ(m.config.K, 400.0);
  EXPECT_EQ(m.config.D, 40.0);
  EXPECT_EQ(m.centers.size(), 30u);
  EXPECT_EQ(error_code("train_dmp", {{"trajectory", {{"samples", 3}}}}), "validation_error");
  EXPECT_EQ(error_code("train_dmp", json::object()), "validation_error");
  EXPECT_EQ(error_code("train_dmp", {{"trajectory", {{"samples", samples}}}, {"config", {{"n_basis", 1}}}}),
            "invalid_value");
  const json lwr = ok("train_dmp", {{"trajectory", {{"samples", samples}}}, {"config", {{"fit", "lwr"}}}});
  EXPECT_EQ(dmp_from_json(ok("get_model", {{"model_id", lwr["model_id"]}})).config.fit, DmpFit::Lwr);
  EXPECT_EQ(error_code("train_dmp", {{"trajectory", {{"samples", samples}}}, {"config", {{"fit", "spline"}}}}),
            "validation_error");
}

TEST_F(ProtocolTest, ArtifactsPersistAcrossStores) {
  ws_.start_recording("ur5e");
  for (int k = 0; k < 300; ++k) ws_.tick();
  const std::string traj_id = ok("record_stop", {{"robot", "ur5e"}})["trajectory_id"];
  const std::string model_id = ok("train_dmp", {{"trajectory_id", traj_id}})["model_id"];
  const fs::path traj_path = ok("save_trajectory", {{"trajectory_id", traj_id}})["path"].get<std::string>();
  const fs::path model_path = ok("save_model", {{"model_id", model_id}})["path"].get<std::string>();
  EXPECT_TRUE(fs::exists(traj_path));
  EXPECT_EQ(traj_path.filename(), traj_id + ".traj.jsonl");
  EXPECT_EQ(model_path.filename(), model_id + ".dmp.json");

  ArtifactStore again(store_.dir());
  EXPECT_EQ(again.trajectory(traj_id), store_.trajectory(traj_id));
  EXPECT_EQ(again.model(model_id), store_.model(model_id));
  const std::string next = again.add_trajectory(store_.trajectory(traj_id));
  EXPECT_NE(next, traj_id);

  const json loaded = ok("load_trajectory", {{"trajectory_id", traj_id}});
  EXPECT_EQ(loaded["samples"], 31);
  const json full = ok("get_trajectory", {{"trajectory_id", traj_id}});
  EXPECT_EQ(full["samples"].size(), 31u);
  EXPECT_EQ(full["dof"], 6);
}

TEST_F(ProtocolTest, PlayStoredTrajectory) {
  Trajectory t;
  const auto q0 = ws_.robot("ur5e").q();
  for (int k = 0; k <= 50; ++k) {
    auto q = q0;
    q[0] += 0.002 * k;
    t.samples.push_back({k * 0.01, q, std::nullopt, std::nullopt});
  }
  const std::string id = store_.add_trajectory(t);
  const json res = ok("play_trajectory", {{"robot", "ur5e"}, {"trajectory_id", id}});
  EXPECT_EQ(error_code("set_mode", {{"robot", "ur5e"}, {"mode", "free_drive"}}), "busy_robot");
  ok("stop", {{"robot", "ur5e"}});
  EXPECT_FALSE(ws_.robot("ur5e").active);
  EXPECT_FALSE(res["handle"].is_null());
}

TEST_F(ProtocolTest, SceneAndSnapshotShapes) {
  const json scene = ok("get_scene");
  ASSERT_EQ(scene["robots"].size(), 1u);
  EXPECT_EQ(scene["robots"][0]["joints"].size(), 6u);
  EXPECT_EQ(scene["robots"][0]["joints"][0]["name"], "shoulder_pan_joint");
  EXPECT_EQ(scene["snapshot"]["type"], "snapshot");

  ws_.set_gripper("ur5e", GripperState::Closed);
  const json snap = ok("get_snapshot");
  EXPECT_EQ(snap["tick"], 0);
  const json& r = snap["robots"][0];
  EXPECT_EQ(r["mode"], "hold");
  EXPECT_EQ(r["q"].size(), 6u);
  EXPECT_EQ(r["gripper"], "closed");
  EXPECT_TRUE(r["active"].is_null());
  EXPECT_EQ(r["links"].size(), ws_.robot("ur5e").chain.frame_links().size());
  EXPECT_EQ(snap["objects"][0]["shape"], "box");
  EXPECT_TRUE(snap["objects"][0]["attached_to"].is_null());
}

TEST_F(ProtocolTest, ProgramEventsSerialize) {
  const json res = ok("run_program", {{"robot", "ur5e"}, {"program", {{{"type", "gripper_close"}}}}});
  const auto events = ws_.tick();
  ASSERT_EQ(events.size(), 2u);
  const json step = event_to_json(events[0]);
  EXPECT_EQ(step["type"], "event");
  EXPECT_EQ(step["event"], "program_step_done");
  EXPECT_EQ(step["step"], 0);
  EXPECT_EQ(step["handle"], res["handle"]);
  EXPECT_EQ(event_to_json(events[1])["event"], "program_done");
}

TEST_F(ProtocolTest, EveryFrameGetsExactlyOneReply) {
  wb_test::Gen g(5);
  const std::vector<std::string> types = {"set_mode", "drag_joint", "drag_ee",   "commit_ghost", "set_gripper",
                                          "stop",     "get_snapshot", "record_start", "record_stop", "nonsense"};
  const std::vector<json> payloads = {
      {{"robot", "ur5e"}, {"mode", "ghost_drive"}},
      {{"robot", "ur5e"}, {"mode", "free_drive"}},
      {{"robot", "ur5e"}, {"joint", 2}, {"target", 0.3}},
      {{"robot", "ur5e"}, {"pose", {{"xyz", {-0.4, -0.1, 0.4}}, {"rpy", {M_PI, 0, M_PI / 2}}}}},
      {{"robot", "ur5e"}, {"state", "closed"}},
      {{"robot", "nobody"}},
      json::object(),
  };
  for (int k = 0; k < 400; ++k) {
    const std::string id = "p" + std::to_string(k);
    json env = {{"id", id}, {"type", types[static_cast<std::size_t>(g.integer(0, 9))]}};
    env["payload"] = payloads[static_cast<std::size_t>(g.integer(0, 6))];
    const json reply = proc_.handle_text(env.dump(), conn_);
    ASSERT_EQ(reply["type"], "ack");
    ASSERT_EQ(reply["id"], id);
    ASSERT_TRUE(reply["ok"].get<bool>() != reply.contains("error"));
    if (g.integer(0, 3) == 0) ws_.tick();
  }
}
