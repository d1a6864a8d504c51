// Executive: turns a grounded behavior into navigation and manipulation
// primitives against a simulated base, arm and articulated door.
#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "apg/symbols.hpp"
#include "apg/world.hpp"

namespace apg::exec {

enum class State { received, navigating, detecting, localizing, turning, pushing, complete, failure };

std::string_view to_string(State s);
bool is_terminal(State s);
/// Edges of the executive flow chart.
bool allowed_transition(State from, State to);

struct RobotState {
  world::Pose base;
  bool arm_extended = false;
  double contact_force = 0;   // N
  double applied_torque = 0;  // N*m
  double time = 0;            // s
  bool valid() const { return contact_force >= 0 && applied_torque >= 0; }
};

struct DoorSim {
  double handle_angle = 0;            // rad
  double handle_limit = 0.6;          // rad, end of the handle's travel
  double handle_torque_limit = 2.0;   // N*m
  double open_fraction = 0;           // [0, 1]
  bool latched = true;
  std::optional<double> jam_angle;    // handle sticks here when set
  world::Vec3 handle_position;        // true handle location
  bool valid() const;
};

struct ExecParams {
  double standoff = 0.5;             // m from the target's nearest face
  double base_speed = 0.5;           // m/s
  double arm_reach = 0.9;            // m, horizontal
  double localize_tolerance = 0.1;   // m, estimate vs. true handle
  double approach_height = 0.1;      // m above the estimate where descent starts
  double descend_step = 0.001;       // m
  double descend_step_time = 0.01;   // s
  double contact_stiffness = 2000;   // N/m
  double contact_threshold = 5.0;    // N
  double handle_half_height = 0.02;  // m
  double turn_step = 0.01;           // rad
  double turn_step_time = 0.02;      // s
  double handle_spring = 1.5;        // N*m/rad
  double push_fraction = 0.3;
  double push_time = 2.0;            // s
};

class NavigationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Base pose at `standoff` from the point of `target`'s box nearest the robot,
/// facing that point. Throws std::invalid_argument if standoff <= 0 and
/// NavigationError if the goal or the target lies inside an obstacle.
world::Pose navigation_goal(const world::Pose& from, const world::WorldObject& target, double standoff,
                            const std::vector<world::Aabb>& obstacles = {});

/// Moves the base to the navigation goal; time advances by path length over
/// speed. A robot already at the goal is returned unchanged.
RobotState navigate(RobotState robot, const world::WorldObject& target, double standoff,
                    const std::vector<world::Aabb>& obstacles = {}, double speed = 0.5);

struct PrimitiveResult {
  bool ok = true;
  std::string reason;
};

/// Descends from above the estimated handle until the contact force exceeds
/// the threshold.
PrimitiveResult localize(RobotState& robot, const DoorSim& door, const world::WorldObject& handle,
                         const ExecParams& params);
/// Rotates the handle until the torque limit is hit; unlatches if that
/// happens at the end of travel. A door that is already unlatched is left as is.
PrimitiveResult turn(RobotState& robot, DoorSim& door, const ExecParams& params);
/// Displaces the door by the configured fraction.
PrimitiveResult push(RobotState& robot, DoorSim& door, const ExecParams& params);

struct TraceEntry {
  State state;
  double time;
  std::string reason;
  bool operator==(const TraceEntry&) const = default;
};

struct ExecStatus {
  State state = State::received;
  std::vector<TraceEntry> trace;
  std::optional<std::string> failure_reason;
  std::vector<State> states() const;
};

/// (action, primary object A, optional constituent B).
struct BehaviorRequest {
  symbols::Action action;
  symbols::TargetRef a;
  std::optional<symbols::TargetRef> b;
  static BehaviorRequest from_symbol(const symbols::BehaviorSymbol& s);
};

using WorldProvider = std::function<std::shared_ptr<const world::WorldModel>()>;

/// Runs the executive for one behavior. `robot` and `door` are owned by the
/// caller and updated in place; the world is only read through snapshots.
ExecStatus receive_behavior(const BehaviorRequest& b, const WorldProvider& world, RobotState& robot, DoorSim& door,
                            const ExecParams& params = {}, const std::vector<world::Aabb>& obstacles = {});

/// [{"state", "time", "reason"?}, ...]
nlohmann::json trace_to_json(const ExecStatus& s);
/// One line per state, e.g. "[   4.531s] NAVIGATING".
std::string trace_to_log(const ExecStatus& s);

}  // namespace apg::exec
