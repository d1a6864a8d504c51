#include "apg/exec.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace apg::exec {

std::string_view to_string(State s) {
  switch (s) {
    case State::received: return "RECEIVED";
    case State::navigating: return "NAVIGATING";
    case State::detecting: return "DETECTING";
    case State::localizing: return "LOCALIZING";
    case State::turning: return "TURNING";
    case State::pushing: return "PUSHING";
    case State::complete: return "COMPLETE";
    case State::failure: return "FAILURE";
  }
  return "?";
}

bool is_terminal(State s) { return s == State::complete || s == State::failure; }

bool allowed_transition(State from, State to) {
  switch (from) {
    case State::received: return to == State::navigating || to == State::failure;
    case State::navigating: return to == State::complete || to == State::detecting;
    case State::detecting: return to == State::localizing || to == State::failure;
    case State::localizing: return to == State::turning || to == State::failure;
    case State::turning: return to == State::pushing || to == State::failure;
    case State::pushing: return to == State::complete;
    case State::complete:
    case State::failure: return false;
  }
  return false;
}

bool DoorSim::valid() const {
  return handle_angle >= 0 && handle_angle <= handle_limit && open_fraction >= 0 && open_fraction <= 1 &&
         (!latched || open_fraction == 0) && handle_limit > 0 && handle_torque_limit > 0;
}

namespace {

bool inside_2d(const world::Aabb& box, double x, double y) {
  return x > box.min.x && x < box.max.x && y > box.min.y && y < box.max.y;
}

double horizontal(const world::Vec3& a, const world::Vec3& b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

world::Pose navigation_goal(const world::Pose& from, const world::WorldObject& target, double standoff,
                            const std::vector<world::Aabb>& obstacles) {
  if (!(standoff > 0)) throw std::invalid_argument("standoff must be positive");
  const world::Vec3 center = target.bbox.center();
  for (const auto& o : obstacles)
    if (inside_2d(o, center.x, center.y)) throw NavigationError("target '" + target.label + "' is inside an obstacle");

  const world::Vec3 c = target.bbox.closest_point({from.x, from.y, center.z});
  double dx = from.x - c.x, dy = from.y - c.y;
  double n = std::hypot(dx, dy);
  if (n < 1e-9) {  // robot inside the footprint: back out away from the centre
    dx = from.x - center.x;
    dy = from.y - center.y;
    n = std::hypot(dx, dy);
    if (n < 1e-9) {
      dx = -1;
      dy = 0;
      n = 1;
    }
  }
  world::Pose goal{c.x + dx / n * standoff, c.y + dy / n * standoff, from.z, std::atan2(-dy, -dx)};
  for (const auto& o : obstacles)
    if (inside_2d(o, goal.x, goal.y)) throw NavigationError("standoff point near '" + target.label + "' is blocked");
  return goal.normalized();
}

RobotState navigate(RobotState robot, const world::WorldObject& target, double standoff,
                    const std::vector<world::Aabb>& obstacles, double speed) {
  if (!(speed > 0)) throw std::invalid_argument("speed must be positive");
  const world::Pose goal = navigation_goal(robot.base, target, standoff, obstacles);
  const double path = std::hypot(goal.x - robot.base.x, goal.y - robot.base.y);
  if (path < 1e-6) return robot;
  robot.base = goal;
  robot.time += path / speed;
  return robot;
}

PrimitiveResult localize(RobotState& robot, const DoorSim& door, const world::WorldObject& handle,
                         const ExecParams& params) {
  const world::Vec3 estimate = handle.pose.position();
  const double reach = horizontal(robot.base.position(), estimate);
  if (reach > params.arm_reach) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "handle is %.3f m away, beyond arm reach", reach);
    return {false, buf};
  }
  const double error = world::distance(estimate, door.handle_position);
  if (error > params.localize_tolerance) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "handle pose error %.3f m exceeds tolerance", error);
    return {false, buf};
  }
  robot.arm_extended = true;
  const double surface = door.handle_position.z + params.handle_half_height;
  double tip = estimate.z + params.approach_height;
  const double floor = surface - 2 * (params.approach_height + params.localize_tolerance);
  while (tip > floor) {
    tip -= params.descend_step;
    robot.time += params.descend_step_time;
    robot.contact_force = params.contact_stiffness * std::max(0.0, surface - tip);
    if (robot.contact_force > params.contact_threshold) return {};
  }
  robot.contact_force = 0;
  return {false, "no contact with the handle"};
}

PrimitiveResult turn(RobotState& robot, DoorSim& door, const ExecParams& params) {
  if (!door.latched) return {};
  const double stop = std::min(door.handle_limit, door.jam_angle.value_or(door.handle_limit));
  while (door.handle_angle < stop) {
    door.handle_angle = std::min(stop, door.handle_angle + params.turn_step);
    robot.applied_torque = params.handle_spring * door.handle_angle;
    robot.time += params.turn_step_time;
    if (robot.applied_torque >= door.handle_torque_limit) break;
  }
  // Against the stop the torque climbs to the limit.
  robot.applied_torque = door.handle_torque_limit;
  robot.time += params.turn_step_time;
  if (door.handle_angle < door.handle_limit) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "torque limit reached at %.3f rad before end of travel", door.handle_angle);
    return {false, buf};
  }
  door.latched = false;
  return {};
}

PrimitiveResult push(RobotState& robot, DoorSim& door, const ExecParams& params) {
  if (door.latched) return {false, "door is latched"};
  door.open_fraction = std::max(door.open_fraction, params.push_fraction);
  robot.time += params.push_time;
  robot.arm_extended = false;
  robot.contact_force = 0;
  robot.applied_torque = 0;
  return {};
}

std::vector<State> ExecStatus::states() const {
  std::vector<State> out;
  for (const auto& e : trace) out.push_back(e.state);
  return out;
}

BehaviorRequest BehaviorRequest::from_symbol(const symbols::BehaviorSymbol& s) {
  return {s.action, s.target_a, s.target_b};
}

namespace {

const world::WorldObject* resolve(const world::WorldModel& w, const symbols::TargetRef& ref) {
  if (ref.object_id) {
    const auto* o = w.find(*ref.object_id);
    return o && o->label == ref.label.name ? o : nullptr;
  }
  for (const auto& o : w.objects())
    if (o.label == ref.label.name) return &o;
  return nullptr;
}

// The constituent B: an explicit reference if given, else the lowest-id
// object linked to A.
const world::WorldObject* constituent(const world::WorldModel& w, int a_id, const std::optional<symbols::TargetRef>& b) {
  if (b && b->object_id) return resolve(w, *b);
  for (const auto& o : w.objects())
    if (o.parent == a_id && (!b || o.label == b->label.name)) return &o;
  return nullptr;
}

class Recorder {
 public:
  explicit Recorder(const RobotState& robot) : robot_(robot) { status_.trace.push_back({State::received, robot.time, ""}); }

  void enter(State s, std::string reason = "") {
    if (!allowed_transition(status_.state, s))
      throw std::logic_error(std::string("illegal transition ") + std::string(to_string(status_.state)) + " -> " +
                             std::string(to_string(s)));
    status_.state = s;
    if (s == State::failure) status_.failure_reason = reason;
    status_.trace.push_back({s, robot_.time, std::move(reason)});
  }
  ExecStatus& fail(std::string reason) {
    enter(State::failure, std::move(reason));
    return status_;
  }
  ExecStatus& done() {
    enter(State::complete);
    return status_;
  }

 private:
  const RobotState& robot_;
  ExecStatus status_;
};

}  // namespace

ExecStatus receive_behavior(const BehaviorRequest& b, const WorldProvider& world, RobotState& robot, DoorSim& door,
                            const ExecParams& params, const std::vector<world::Aabb>& obstacles) {
  Recorder rec(robot);
  if (b.action != symbols::Action::navigate && b.action != symbols::Action::open)
    return rec.fail("behavior '" + std::string(symbols::to_string(b.action)) + "' has no executive path");

  const auto dispatch = world();
  const world::WorldObject* a = resolve(*dispatch, b.a);
  if (a == nullptr) return rec.fail("target not in world");
  const int a_id = a->id;
  try {
    navigation_goal(robot.base, *a, params.standoff, obstacles);
  } catch (const NavigationError& e) {
    return rec.fail(e.what());
  }

  rec.enter(State::navigating);
  robot = navigate(robot, *a, params.standoff, obstacles, params.base_speed);
  if (b.action == symbols::Action::navigate) return rec.done();

  rec.enter(State::detecting);
  const auto fresh = world();
  const world::WorldObject* handle = constituent(*fresh, a_id, b.b);
  if (handle == nullptr) return rec.fail("no constituent of " + b.a.label.name + " in world");

  rec.enter(State::localizing);
  if (auto r = localize(robot, door, *handle, params); !r.ok) return rec.fail(r.reason);

  rec.enter(State::turning);
  if (auto r = turn(robot, door, params); !r.ok) return rec.fail(r.reason);

  rec.enter(State::pushing);
  push(robot, door, params);
  return rec.done();
}

nlohmann::json trace_to_json(const ExecStatus& s) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : s.trace) {
    nlohmann::json j{{"state", to_string(e.state)}, {"time", e.time}};
    if (!e.reason.empty()) j["reason"] = e.reason;
    out.push_back(std::move(j));
  }
  return out;
}

std::string trace_to_log(const ExecStatus& s) {
  std::ostringstream out;
  for (const auto& e : s.trace) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "[%9.3fs] ", e.time);
    out << buf << to_string(e.state);
    if (!e.reason.empty()) out << ": " << e.reason;
    out << '\n';
  }
  return out.str();
}

}  // namespace apg::exec
