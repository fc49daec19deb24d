#include <random>

#include "doctest.h"
#include "dronos/error.hpp"
#include "dronos/orchestrator.hpp"

using namespace dronos;
using namespace dronos::orch;

namespace {

struct Harness {
  tracking::Registry registry;
  Orchestrator orch;
  double now = 0.0;

  explicit Harness(std::vector<DroneSpec> drones, OrchestratorConfig cfg = {})
      : orch(cfg, drones) {
    for (const auto& d : drones) registry.register_object(d.tracked_object_id, tracking::ObjectKind::Drone);
  }

  void pose(int tracked_id, Vec3 p) {
    Pose pose;
    pose.position = p;
    pose.timestamp = now;
    registry.ingest(tracking::Datagram{tracked_id, pose}, now);
  }

  TickOutput tick() {
    now += 0.02;
    return orch.tick(registry.snapshot(), now, 0.02);
  }

  Reply request(Request r) {
    const auto ticket = orch.submit(r);
    const TickOutput out = tick();
    for (const Reply& reply : out.replies)
      if (reply.ticket == ticket) return reply;
    FAIL("no reply for ticket");
    return {};
  }

  const SessionSummary& session(int drone_id) {
    for (const auto& s : orch.world().sessions)
      if (s.drone_id == drone_id) return s;
    throw std::runtime_error("no session");
  }
};

DroneSpec drone(int id, int priority = 0) {
  DroneSpec d;
  d.drone_id = id;
  d.tracked_object_id = id;
  d.priority = priority;
  return d;
}

Request cmd(int id, Command c) {
  Request r;
  r.drone_id = id;
  r.command = c;
  return r;
}

}  // namespace

TEST_CASE("resolve_separation") {
  SUBCASE("far apart is identity") {
    const std::vector<SeparationEntry> e{{{0, 0, 1}, {0, 0, 1}}, {{3, 0, 1}, {3, 0.5, 1}}};
    const auto out = resolve_separation(e, 0.5, 2.0, 0.02);
    CHECK(out[0] == e[0].target);
    CHECK(out[1] == e[1].target);
  }
  SUBCASE("close pair pushes the lower priority drone") {
    const std::vector<SeparationEntry> e{{{0, 0, 1}, {0, 0, 1}}, {{0.3, 0, 1}, {0.3, 0, 1}}};
    const auto out = resolve_separation(e, 0.5, 2.0, 0.02);
    const double v_rep = 2.0 * (0.5 - 0.3);
    CHECK(v_rep == doctest::Approx(0.4));
    CHECK(out[0] == e[0].target);
    CHECK(distance(out[1], {0.3 + v_rep * 0.02, 0, 1}) < 1e-12);
  }
  SUBCASE("stacked pair separates vertically") {
    const std::vector<SeparationEntry> e{{{0, 0, 1.2}, {0, 0, 1.2}}, {{0, 0.005, 0.9}, {0, 0.005, 0.9}}};
    const auto out = resolve_separation(e, 0.5, 2.0, 0.02);
    CHECK(out[1].z == doctest::Approx(0.7));
    CHECK(out[1].x == 0.0);
  }
  SUBCASE("higher priority targets never move") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int trial = 0; trial < 500; ++trial) {
      std::vector<SeparationEntry> e;
      for (int i = 0; i < 5; ++i) {
        const Vec3 p{u(rng), u(rng), 1 + u(rng)};
        e.push_back({p, p + Vec3{u(rng), u(rng), 0}});
      }
      const auto out = resolve_separation(e, 0.5, 2.0, 0.02);
      CHECK(out[0] == e[0].target);
    }
  }
}

TEST_CASE("failsafe_command ramp") {
  msp::RcCommand c = failsafe_command(1600, 1.0, 2.0);
  CHECK(c.throttle() == 1300);
  CHECK(c.roll() == 1500);
  CHECK(c.pitch() == 1500);
  CHECK(c.yaw() == 1500);
  CHECK(failsafe_command(1600, 2.5, 2.0).throttle() == 1000);
  CHECK(failsafe_command(1600, 0.0, 2.0).throttle() == 1600);
}

TEST_CASE("lifecycle transitions") {
  Harness h({drone(1)});
  h.pose(1, {0.5, -0.5, 0.02});
  h.tick();
  CHECK(h.session(1).mode == ModeKind::Idle);

  Reply r = h.request(cmd(1, Command::Takeoff));
  CHECK_FALSE(r.ok);
  CHECK(r.error.find("not armed") != std::string::npos);

  CHECK(h.request(cmd(1, Command::Arm)).ok);
  h.pose(1, {0.5, -0.5, 0.02});
  CHECK(h.request(cmd(1, Command::Takeoff)).ok);
  CHECK(h.session(1).mode == ModeKind::Takeoff);
  CHECK(h.session(1).target == Vec3{0.5, -0.5, 1.0});

  for (int i = 0; i < 20; ++i) {
    h.pose(1, {0.5, -0.5, 0.98});
    h.tick();
  }
  CHECK(h.session(1).mode == ModeKind::Hover);

  Request rt = cmd(1, Command::StartRealtime);
  rt.distance = 1.5;
  h.pose(1, {0.5, -0.5, 1.0});
  CHECK(h.request(rt).ok);
  CHECK(h.session(1).mode == ModeKind::Realtime);
  h.orch.set_pointer(1, path::PointerRay{{0, 0, 1}, {1, 0, 0}, 1.5});
  h.pose(1, {0.5, -0.5, 1.0});
  h.tick();
  CHECK(h.session(1).target == Vec3{1.5, 0, 1});

  h.pose(1, {0.5, -0.5, 1.0});
  CHECK(h.request(cmd(1, Command::Land)).ok);
  CHECK(h.session(1).mode == ModeKind::Landing);

  Request sp = cmd(1, Command::StartPath);
  sp.path_id = "nope";
  h.pose(1, {0.5, -0.5, 1.0});
  r = h.request(sp);
  CHECK_FALSE(r.ok);
  CHECK(r.error == "illegal transition: start_path in mode landing");

  r = h.request(cmd(99, Command::Arm));
  CHECK_FALSE(r.ok);
  CHECK(r.error.find("unknown drone") != std::string::npos);
}

TEST_CASE("takeoff needs fresh tracking") {
  Harness h({drone(1)});
  CHECK(h.request(cmd(1, Command::Arm)).ok);
  const Reply r = h.request(cmd(1, Command::Takeoff));
  CHECK_FALSE(r.ok);
  CHECK(r.error.find("tracking not fresh") != std::string::npos);
}

TEST_CASE("tracking loss enters failsafe and failsafe is absorbing") {
  Harness h({drone(1)});
  h.pose(1, {0, 0, 0.02});
  h.request(cmd(1, Command::Arm));
  h.pose(1, {0, 0, 0.02});
  h.request(cmd(1, Command::Takeoff));
  for (int i = 0; i < 5; ++i) {
    h.pose(1, {0, 0, 0.5});
    h.tick();
  }
  const double lost_at = h.now;
  TickOutput out;
  bool failsafe = false;
  while (!failsafe && h.now < lost_at + 1.0) {
    out = h.tick();
    failsafe = h.session(1).mode == ModeKind::Failsafe;
  }
  REQUIRE(failsafe);
  // One tick past lost_after at most.
  CHECK(h.now - lost_at <= 0.2 + 0.02 + 1e-9);
  bool event = false;
  for (const Event& e : out.events) event = event || e.type == "failsafe";
  CHECK(event);
  const msp::RcCommand& c = out.commands.at(0).second;
  CHECK(c.roll() == 1500);
  CHECK(c.pitch() == 1500);
  CHECK(c.yaw() == 1500);

  for (int i = 0; i < 110; ++i) out = h.tick();
  CHECK(out.commands.at(0).second.throttle() == 1000);

  Request sp = cmd(1, Command::StartPath);
  sp.path_id = "x";
  const Reply r = h.request(sp);
  CHECK_FALSE(r.ok);
  CHECK(r.error.find("failsafe") != std::string::npos);
  CHECK(h.request(cmd(1, Command::Land)).ok);
  CHECK(h.session(1).mode == ModeKind::Failsafe);
  CHECK_FALSE(h.request(cmd(1, Command::Reset)).ok);
  CHECK(h.request(cmd(1, Command::Disarm)).ok);
  CHECK(h.request(cmd(1, Command::Reset)).ok);
  CHECK(h.session(1).mode == ModeKind::Idle);
}

TEST_CASE("two distant hovering drones do not interact") {
  Harness h({drone(1, 0), drone(2, 1)});
  for (int id : {1, 2}) {
    h.pose(1, {0, 0, 1});
    h.pose(2, {3, 0, 1});
    h.request(cmd(id, Command::Arm));
    h.pose(1, {0, 0, 1});
    h.pose(2, {3, 0, 1});
    h.request(cmd(id, Command::Takeoff));
  }
  TickOutput out;
  for (int i = 0; i < 60; ++i) {
    h.pose(1, {0, 0, 1});
    h.pose(2, {3, 0, 1});
    out = h.tick();
  }
  CHECK(h.session(1).mode == ModeKind::Hover);
  CHECK(h.session(2).mode == ModeKind::Hover);
  CHECK(h.session(1).safe_target == Vec3{0, 0, 1});
  CHECK(h.session(2).safe_target == Vec3{3, 0, 1});
  for (const auto& [id, c] : out.commands) {
    CHECK(std::abs(int(c.roll()) - 1500) <= 1);
    CHECK(std::abs(int(c.pitch()) - 1500) <= 1);
    CHECK(std::abs(int(c.throttle()) - 1450) <= 1);
    CHECK(c.channels[4] == 2000);
  }
}

TEST_CASE("scripted path runs to completion") {
  Harness h({drone(1)});
  path::Waypoint a, b;
  a.position = {0, 0, 1};
  b.position = {0.2, 0, 1};
  h.orch.store_path(std::make_shared<path::FlightPath>("short", std::vector<path::Waypoint>{a, b}));
  CHECK(h.orch.path_ids() == std::vector<std::string>{"short"});
  h.pose(1, {0, 0, 0.02});
  h.request(cmd(1, Command::Arm));
  h.pose(1, {0, 0, 0.02});
  h.request(cmd(1, Command::Takeoff));
  for (int i = 0; i < 60; ++i) {
    h.pose(1, {0, 0, 1});
    h.tick();
  }
  Request sp = cmd(1, Command::StartPath);
  sp.path_id = "short";
  h.pose(1, {0, 0, 1});
  CHECK(h.request(sp).ok);
  CHECK(h.session(1).mode == ModeKind::Scripted);
  bool done = false;
  for (int i = 0; i < 40 && !done; ++i) {
    h.pose(1, h.session(1).target);
    for (const Event& e : h.tick().events) done = done || e.type == "path_done";
  }
  CHECK(done);
  CHECK(h.session(1).mode == ModeKind::Hover);
}

TEST_CASE("commands") {
  CHECK(command_from_string("start_path") == Command::StartPath);
  CHECK(command_from_string("land") == Command::Land);
  CHECK_THROWS_AS(command_from_string("fly"), Error);
  CHECK(std::string(to_string(ModeKind::Playback)) == "demonstrated-playback");
}
