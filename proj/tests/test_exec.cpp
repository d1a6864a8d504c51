#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "apg/exec.hpp"

using namespace apg;
using namespace apg::exec;
using symbols::Action;

namespace {

using S = State;

world::WorldObject door_object(int id = 0) {
  return {id, "door", {5, 0, 1, 0}, world::Aabb{{4.97, -0.45, 0}, {5.03, 0.45, 2}}, std::nullopt, 0, 0, 1};
}

world::WorldObject handle_object(int id, std::optional<int> parent, world::Vec3 at = {4.945, 0.35, 0.95}) {
  return {id, "door_handle", {at.x, at.y, at.z, 0}, world::Aabb::centered(at, {0.05, 0.12, 0.04}), parent, 0, 0, 1};
}

WorldProvider fixed(world::WorldModel w) {
  auto shared = std::make_shared<const world::WorldModel>(std::move(w));
  return [shared] { return shared; };
}

DoorSim door_sim() {
  DoorSim d;
  d.handle_position = {4.945, 0.35, 0.95};
  return d;
}

BehaviorRequest request(Action a, std::optional<int> id = std::nullopt) { return {a, {{"door"}, id}, std::nullopt}; }

bool is_path(const ExecStatus& s) {
  if (s.trace.empty() || s.trace.front().state != S::received) return false;
  for (std::size_t k = 1; k < s.trace.size(); ++k) {
    if (!allowed_transition(s.trace[k - 1].state, s.trace[k].state)) return false;
    if (s.trace[k].time < s.trace[k - 1].time) return false;
  }
  return is_terminal(s.trace.back().state) && s.state == s.trace.back().state;
}

}  // namespace

TEST_CASE("navigate to the door") {
  RobotState r;
  const RobotState after = navigate(r, door_object(), 1.0);
  // Nearest face is x = 4.97; one metre back along -x.
  CHECK(after.base.x == doctest::Approx(3.97));
  CHECK(std::abs(after.base.x - 4.0) <= 0.05);
  CHECK(after.base.y == doctest::Approx(0.0));
  CHECK(after.base.yaw == doctest::Approx(0.0));
  CHECK(after.time == doctest::Approx(3.97 / 0.5));

  const RobotState again = navigate(after, door_object(), 1.0);
  CHECK(again.base == after.base);
  CHECK(again.time == after.time);

  CHECK_THROWS_AS(navigate(r, door_object(), 0.0), std::invalid_argument);
}

TEST_CASE("navigate from the side faces the door") {
  RobotState r;
  r.base = {5.0, 3.0, 0, 0};
  const auto after = navigate(r, door_object(), 0.5);
  CHECK(after.base.x == doctest::Approx(5.0));
  CHECK(after.base.y == doctest::Approx(0.95));
  CHECK(after.base.yaw == doctest::Approx(-std::numbers::pi / 2));
}

TEST_CASE("unreachable targets") {
  RobotState r;
  const std::vector<world::Aabb> wall{{{3.0, -1.0, 0}, {4.6, 1.0, 2}}};
  CHECK_THROWS_AS(navigate(r, door_object(), 0.5, wall), NavigationError);
  const std::vector<world::Aabb> around{{{4.0, -1.0, 0}, {6.0, 1.0, 2}}};
  CHECK_THROWS_AS(navigate(r, door_object(), 0.5, around), NavigationError);
}

TEST_CASE("drive to the door trace") {
  RobotState robot;
  DoorSim door = door_sim();
  const auto s = receive_behavior(request(Action::navigate), fixed(world::WorldModel({door_object()})), robot, door);
  CHECK(s.states() == std::vector<S>{S::received, S::navigating, S::complete});
  CHECK(robot.base.x == doctest::Approx(4.47));
  CHECK(door.latched);
}

TEST_CASE("open the door trace") {
  RobotState robot;
  DoorSim door = door_sim();
  const auto w = world::WorldModel({door_object(), handle_object(1, 0)});
  const auto s = receive_behavior(request(Action::open, 0), fixed(w), robot, door);
  CHECK(s.states() ==
        std::vector<S>{S::received, S::navigating, S::detecting, S::localizing, S::turning, S::pushing, S::complete});
  CHECK_FALSE(door.latched);
  CHECK(door.handle_angle == doctest::Approx(0.6));
  CHECK(door.open_fraction == doctest::Approx(0.3));
  CHECK(door.valid());
  CHECK(robot.valid());
  // Motion primitives take time; the world lookup in DETECTING does not.
  for (std::size_t k = 1; k < s.trace.size(); ++k) {
    const S from = s.trace[k - 1].state;
    if (from == S::navigating || from == S::localizing || from == S::turning || from == S::pushing)
      CHECK(s.trace[k].time > s.trace[k - 1].time);
    else
      CHECK(s.trace[k].time >= s.trace[k - 1].time);
  }
}

TEST_CASE("open without a handle fails at detection") {
  RobotState robot;
  DoorSim door = door_sim();
  const auto s = receive_behavior(request(Action::open), fixed(world::WorldModel({door_object()})), robot, door);
  CHECK(s.states() == std::vector<S>{S::received, S::navigating, S::detecting, S::failure});
  REQUIRE(s.failure_reason.has_value());
  CHECK(door.latched);
}

TEST_CASE("missing target and unsupported actions fail on receipt") {
  RobotState robot;
  DoorSim door = door_sim();
  const auto empty = fixed(world::WorldModel{});
  auto s = receive_behavior(request(Action::navigate), empty, robot, door);
  CHECK(s.states() == std::vector<S>{S::received, S::failure});
  CHECK(s.failure_reason == "target not in world");
  for (Action a : {Action::turn, Action::look}) {
    s = receive_behavior(request(a), fixed(world::WorldModel({door_object()})), robot, door);
    CHECK(s.states() == std::vector<S>{S::received, S::failure});
  }
}

TEST_CASE("localize gates") {
  ExecParams p;
  DoorSim door = door_sim();
  RobotState r;
  r.base = {4.47, 0, 0, 0};
  SUBCASE("nominal contact") {
    auto res = localize(r, door, handle_object(1, 0), p);
    CHECK(res.ok);
    CHECK(r.contact_force > p.contact_threshold);
    CHECK(r.arm_extended);
  }
  SUBCASE("pose error beyond tolerance") {
    auto res = localize(r, door, handle_object(1, 0, {4.945, 0.35, 1.25}), p);
    CHECK_FALSE(res.ok);
  }
  SUBCASE("out of reach") {
    r.base = {3.0, 0, 0, 0};
    CHECK_FALSE(localize(r, door, handle_object(1, 0), p).ok);
  }
}

TEST_CASE("turning") {
  ExecParams p;
  RobotState r;
  SUBCASE("nominal handle unlatches at its limit") {
    DoorSim d = door_sim();
    CHECK(turn(r, d, p).ok);
    CHECK(d.handle_angle == doctest::Approx(d.handle_limit));
    CHECK(r.applied_torque == doctest::Approx(d.handle_torque_limit));
    CHECK_FALSE(d.latched);
  }
  SUBCASE("jammed handle") {
    DoorSim d = door_sim();
    d.jam_angle = 0.2;
    CHECK_FALSE(turn(r, d, p).ok);
    CHECK(d.latched);
  }
  SUBCASE("already unlatched is a no-op and push proceeds") {
    DoorSim d = door_sim();
    d.latched = false;
    const double t = r.time;
    CHECK(turn(r, d, p).ok);
    CHECK(r.time == t);
    CHECK(d.handle_angle == 0);
    CHECK(push(r, d, p).ok);
    CHECK(d.open_fraction == doctest::Approx(0.3));
  }
}

TEST_CASE("trace output") {
  RobotState robot;
  DoorSim door = door_sim();
  const auto s = receive_behavior(request(Action::open), fixed(world::WorldModel({door_object()})), robot, door);
  const auto j = trace_to_json(s);
  REQUIRE(j.size() == 4);
  CHECK(j[0]["state"] == "RECEIVED");
  CHECK(j[3]["state"] == "FAILURE");
  CHECK(j[3].contains("reason"));
  const auto log = trace_to_log(s);
  CHECK(log.find("NAVIGATING") != std::string::npos);
  CHECK(std::count(log.begin(), log.end(), '\n') == 4);
}

TEST_CASE("model check: every fault combination yields a legal trace") {
  int runs = 0, completes = 0;
  for (int mask = 0; mask < (1 << 8); ++mask) {
    const bool door_present = mask & 1;
    const bool handle_present = mask & 2;
    const bool handle_linked = mask & 4;
    const bool pose_error = mask & 8;
    const bool jammed = mask & 16;
    const bool unlatched = mask & 32;
    const bool blocked = mask & 64;
    const bool far_start_obstacle = mask & 128;  // obstacle that does not block the goal
    for (Action action : {Action::navigate, Action::open, Action::turn, Action::look}) {
      std::vector<world::WorldObject> objs;
      if (door_present) objs.push_back(door_object());
      if (handle_present) {
        const world::Vec3 at = pose_error ? world::Vec3{4.945, 0.35, 1.4} : world::Vec3{4.945, 0.35, 0.95};
        objs.push_back(handle_object(1, handle_linked && door_present ? std::optional<int>(0) : std::nullopt, at));
      }
      std::vector<world::Aabb> obstacles;
      if (blocked) obstacles.push_back({{4.2, -0.5, 0}, {4.8, 0.5, 2}});
      if (far_start_obstacle) obstacles.push_back({{-5, 5, 0}, {-4, 6, 2}});

      DoorSim door = door_sim();
      if (jammed) door.jam_angle = 0.3;
      if (unlatched) door.latched = false;
      RobotState robot;
      const auto s = receive_behavior(request(action), fixed(world::WorldModel(objs)), robot, door, {}, obstacles);
      CAPTURE(mask);
      CHECK(is_path(s));
      CHECK(robot.valid());
      CHECK(door.valid());
      ++runs;

      const bool reachable = door_present && !blocked;
      const bool handle_ok = handle_present && handle_linked && door_present;
      bool expect = false;
      if (action == Action::navigate) expect = reachable;
      if (action == Action::open) expect = reachable && handle_ok && !pose_error && (unlatched || !jammed);
      CHECK((s.state == S::complete) == expect);
      if (action == Action::open && reachable && !handle_ok) CHECK(s.states().back() == S::failure);
      if (action == Action::open && reachable && !handle_ok) CHECK(s.trace[s.trace.size() - 2].state == S::detecting);
      if (s.state == S::complete) ++completes;
    }
  }
  CHECK(runs == 1024);
  CHECK(completes > 0);
}
