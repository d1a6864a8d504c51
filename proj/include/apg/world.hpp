// World model: detected objects with poses, boxes, labels and single-layer
// parent links, plus copy-on-read snapshots for concurrent readers.
#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace apg::world {

struct Vec3 {
  double x = 0, y = 0, z = 0;
  bool operator==(const Vec3&) const = default;
};

double distance(const Vec3& a, const Vec3& b);

/// Meters and radians; `normalized()` wraps yaw into [-pi, pi).
struct Pose {
  double x = 0, y = 0, z = 0, yaw = 0;

  Vec3 position() const { return {x, y, z}; }
  Pose normalized() const;
  bool valid() const;
  bool operator==(const Pose&) const = default;
};

double wrap_angle(double a);

struct Aabb {
  Vec3 min;
  Vec3 max;
  bool degenerate = false;

  static Aabb centered(const Vec3& center, const Vec3& size);
  Vec3 center() const;
  double volume() const;
  /// True if `p` is inside the box grown by `margin` on every side.
  bool contains(const Vec3& p, double margin = 0.0) const;
  /// Closest point of the box to `p` (p itself when inside).
  Vec3 closest_point(const Vec3& p) const;
  bool valid() const;
  bool operator==(const Aabb&) const = default;
};

struct WorldObject {
  int id = -1;
  std::string label;
  Pose pose;
  Aabb bbox;
  std::optional<int> parent;
  double first_seen = 0;
  double last_seen = 0;
  int observations = 1;

  bool operator==(const WorldObject&) const = default;
};

struct Detection {
  std::string label;
  Aabb bbox;
  Pose pose;
  double timestamp = 0;
  std::string source_detector;
  bool spurious = false;  // simulation ground truth; never read by integration
};

/// Parent label -> child label pairs (e.g. door -> door_handle).
using LabelLinks = std::set<std::pair<std::string, std::string>>;

struct IntegrationParams {
  double assoc_radius = 0.5;
  double contain_margin = 0.1;
  double parent_fallback_radius = 0.75;
};

class WorldModel {
public:
  WorldModel() = default;
  /// Builds a world from stored objects (corpus worlds, snapshot files).
  /// Throws std::invalid_argument if ids repeat or parent links break the
  /// single-layer rule.
  explicit WorldModel(std::vector<WorldObject> objects);

  const std::vector<WorldObject>& objects() const noexcept { return objects_; }
  std::size_t size() const noexcept { return objects_.size(); }
  bool empty() const noexcept { return objects_.empty(); }
  const WorldObject* find(int id) const;

  /// Associates `d` with the nearest same-label object within the radius or
  /// inserts a new object, then links children to parents per `links`.
  /// Returns the id of the object that absorbed the detection.
  int integrate(const Detection& d, const LabelLinks& links, const IntegrationParams& params = {});

  bool operator==(const WorldModel&) const = default;

private:
  void link_orphans(const LabelLinks& links, const IntegrationParams& params);
  std::optional<int> best_parent(const WorldObject& child, const std::string& parent_label,
                                 const IntegrationParams& params) const;

  std::vector<WorldObject> objects_;
  int next_id_ = 0;
  double last_timestamp_ = 0;
};

/// Functional form: returns the integrated copy.
WorldModel integrate(WorldModel world, const Detection& d, const LabelLinks& links, double assoc_radius);

/// Objects with the given label ordered by id.
std::vector<WorldObject> query(const WorldModel& world, std::string_view label);

std::shared_ptr<const WorldModel> snapshot(const WorldModel& world);

/// Single writer, many readers. Readers only ever see complete versions.
class SharedWorld {
public:
  void publish(WorldModel world);
  std::shared_ptr<const WorldModel> snapshot() const;

private:
  mutable std::mutex mutex_;
  std::shared_ptr<const WorldModel> current_ = std::make_shared<const WorldModel>();
};

void to_json(nlohmann::json& j, const Pose& p);
void from_json(const nlohmann::json& j, Pose& p);
void to_json(nlohmann::json& j, const Aabb& b);
void from_json(const nlohmann::json& j, Aabb& b);
void to_json(nlohmann::json& j, const WorldObject& o);
void from_json(const nlohmann::json& j, WorldObject& o);
nlohmann::json world_to_json(const WorldModel& w);
WorldModel world_from_json(const nlohmann::json& j);
WorldModel load_world(const std::string& path);

}  // namespace apg::world
