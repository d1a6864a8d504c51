// Simulated perception loop: a scripted scene, a registry of detectors with
// per-frame costs, and a frame loop that feeds detections into a world model
// while keeping exact cost bookkeeping.
#pragma once

#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "apg/symbols.hpp"
#include "apg/world.hpp"

namespace apg::percept {

/// Raised for unusable perception setups (empty detector set, unknown ids).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DetectorSpec {
  std::string id;
  std::string emits_label;
  double frame_cost = 0;           // seconds per frame
  double false_positive_rate = 0;  // probability per frame
  double noise_sigma = 0;          // meters
  std::optional<std::string> parent;  // id of the detector this one is a constituent of
  bool valid() const;
  bool operator==(const DetectorSpec&) const = default;
};

class DetectorRegistry {
 public:
  DetectorRegistry() = default;
  /// Throws ConfigError on invalid specs, duplicate ids or dangling parents.
  explicit DetectorRegistry(std::vector<DetectorSpec> specs);

  /// Sorted by id.
  const std::vector<DetectorSpec>& specs() const noexcept { return specs_; }
  const DetectorSpec* find(const std::string& id) const;
  /// Detectors that are not a constituent of another detector.
  std::set<std::string> standalone_ids() const;
  /// Returns a copy with frame costs replaced for the listed ids.
  DetectorRegistry with_costs(const std::map<std::string, double>& costs) const;

 private:
  std::vector<DetectorSpec> specs_;
};

/// {"detectors": [{"id", "label", "frame_cost", "false_positive_rate",
///   "noise_sigma", "parent"?}]}
DetectorRegistry registry_from_json(const nlohmann::json& j);
DetectorRegistry load_registry(const std::string& path);
nlohmann::json registry_to_json(const DetectorRegistry& r);

struct Visibility {
  double range = 6.0;                     // meters
  double fov = 87.0 * std::numbers::pi / 180.0;  // radians, full angle
  /// Whether a point is within range and inside the horizontal field of view.
  bool sees(const world::Pose& robot, const world::Vec3& p) const;
};

struct Scene {
  world::WorldModel truth;  // ground-truth objects; ids and parents as authored
  Visibility visibility;
  world::Pose robot_start;
  std::vector<world::Aabb> obstacles;  // regions the base cannot enter
};

/// {"visibility": {"range", "fov_deg"}, "robot": Pose, "objects": [...],
///  "obstacles": [Aabb]}
Scene scene_from_json(const nlohmann::json& j);
Scene load_scene(const std::string& path);

enum class Mode { adaptive, exhaustive };
std::string_view to_string(Mode m);

struct PerceptionConfig {
  symbols::DetectorSet active;  // P*
  Mode mode = Mode::adaptive;
  std::uint64_t seed = 0;
  int frame_budget = 50;
};

struct PerceptionMetrics {
  int frames = 0;
  double total_cost = 0;
  double avg_period = 0;
  int detections_emitted = 0;
  int spurious_emitted = 0;
  bool operator==(const PerceptionMetrics&) const = default;
};

nlohmann::json metrics_to_json(const PerceptionMetrics& m);

struct PerceptionResult {
  world::WorldModel world;
  PerceptionMetrics metrics;
  std::vector<std::string> detectors;  // detectors that actually ran, sorted
  world::LabelLinks links;             // label links used for integration
};

/// Detectors that run under `config`: P* in adaptive mode, every standalone
/// detector in exhaustive mode. Throws ConfigError if the result is empty or
/// names a detector the registry lacks.
std::vector<std::string> active_detectors(const DetectorRegistry& registry, const PerceptionConfig& config);

/// Runs `config.frame_budget` frames. Frame k is observed from `poses[k]`.
/// In adaptive mode false positives are disabled; in exhaustive mode only
/// detectors outside P* keep their registry rate. If `publish` is given, the
/// world is published after every frame.
PerceptionResult run_perception(const Scene& scene, const DetectorRegistry& registry, const PerceptionConfig& config,
                                std::span<const world::Pose> poses, world::SharedWorld* publish = nullptr);

/// Convenience: a stationary robot at the scene's start pose.
PerceptionResult run_perception(const Scene& scene, const DetectorRegistry& registry, const PerceptionConfig& config,
                                world::SharedWorld* publish = nullptr);

/// One measured configuration: the detectors that were active and the
/// observed average period.
struct CalibrationRow {
  std::string name;
  std::set<std::string> detectors;
  double period = 0;
};

/// Per-detector frame costs reproducing every row's period within 1%.
/// Rows are resolved fewest-unknowns first; the unexplained remainder of a
/// row is split uniformly across its unknown detectors.
std::map<std::string, double> calibrate_costs(const std::vector<CalibrationRow>& rows);

}  // namespace apg::percept
