#include "apg/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace apg::world {

double distance(const Vec3& a, const Vec3& b) { return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z); }

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a + std::numbers::pi, two_pi);
  if (r < 0) r += two_pi;
  r -= std::numbers::pi;
  // fmod can round up to exactly +pi
  if (r >= std::numbers::pi) r -= two_pi;
  return r;
}

Pose Pose::normalized() const { return {x, y, z, wrap_angle(yaw)}; }

bool Pose::valid() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(z) && std::isfinite(yaw) && yaw >= -std::numbers::pi &&
         yaw < std::numbers::pi;
}

Aabb Aabb::centered(const Vec3& c, const Vec3& size) {
  return {{c.x - size.x / 2, c.y - size.y / 2, c.z - size.z / 2}, {c.x + size.x / 2, c.y + size.y / 2, c.z + size.z / 2}};
}

Vec3 Aabb::center() const { return {(min.x + max.x) / 2, (min.y + max.y) / 2, (min.z + max.z) / 2}; }

double Aabb::volume() const { return (max.x - min.x) * (max.y - min.y) * (max.z - min.z); }

bool Aabb::contains(const Vec3& p, double margin) const {
  return p.x >= min.x - margin && p.x <= max.x + margin && p.y >= min.y - margin && p.y <= max.y + margin &&
         p.z >= min.z - margin && p.z <= max.z + margin;
}

Vec3 Aabb::closest_point(const Vec3& p) const {
  return {std::clamp(p.x, min.x, max.x), std::clamp(p.y, min.y, max.y), std::clamp(p.z, min.z, max.z)};
}

bool Aabb::valid() const {
  const bool ordered = min.x <= max.x && min.y <= max.y && min.z <= max.z;
  return ordered && (degenerate || volume() > 0);
}

WorldModel::WorldModel(std::vector<WorldObject> objects) : objects_(std::move(objects)) {
  std::sort(objects_.begin(), objects_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < objects_.size(); ++i) {
    if (objects_[i].id < 0) throw std::invalid_argument("negative object id");
    if (i > 0 && objects_[i].id == objects_[i - 1].id)
      throw std::invalid_argument("duplicate object id " + std::to_string(objects_[i].id));
  }
  for (const auto& o : objects_) {
    if (!o.parent) continue;
    const WorldObject* p = find(*o.parent);
    if (!p) throw std::invalid_argument("object " + std::to_string(o.id) + " has unknown parent");
    if (p->label == o.label) throw std::invalid_argument("object " + std::to_string(o.id) + " has a same-label parent");
    if (p->parent) throw std::invalid_argument("object " + std::to_string(o.id) + " would form a two-level hierarchy");
  }
  next_id_ = objects_.empty() ? 0 : objects_.back().id + 1;
  for (const auto& o : objects_) last_timestamp_ = std::max(last_timestamp_, o.last_seen);
}

const WorldObject* WorldModel::find(int id) const {
  auto it = std::lower_bound(objects_.begin(), objects_.end(), id, [](const auto& o, int v) { return o.id < v; });
  return it != objects_.end() && it->id == id ? &*it : nullptr;
}

int WorldModel::integrate(const Detection& d, const LabelLinks& links, const IntegrationParams& params) {
  if (!(params.assoc_radius > 0)) throw std::invalid_argument("assoc_radius must be positive");
  if (d.timestamp < last_timestamp_) throw std::invalid_argument("detection timestamps must be non-decreasing");
  last_timestamp_ = d.timestamp;

  const Vec3 at = d.pose.position();
  WorldObject* match = nullptr;
  double best = params.assoc_radius;
  for (auto& o : objects_) {
    if (o.label != d.label) continue;
    const double dist = distance(o.pose.position(), at);
    if (dist <= best) {
      best = dist;
      match = &o;
    }
  }

  int id;
  if (match) {
    // Running mean over observations; yaw follows the latest detection.
    const double n = match->observations;
    auto blend = [n](double old_v, double new_v) { return (old_v * n + new_v) / (n + 1); };
    match->pose = Pose{blend(match->pose.x, d.pose.x), blend(match->pose.y, d.pose.y), blend(match->pose.z, d.pose.z),
                       d.pose.yaw}
                      .normalized();
    match->bbox.min = {blend(match->bbox.min.x, d.bbox.min.x), blend(match->bbox.min.y, d.bbox.min.y),
                       blend(match->bbox.min.z, d.bbox.min.z)};
    match->bbox.max = {blend(match->bbox.max.x, d.bbox.max.x), blend(match->bbox.max.y, d.bbox.max.y),
                       blend(match->bbox.max.z, d.bbox.max.z)};
    match->observations += 1;
    match->last_seen = d.timestamp;
    id = match->id;
  } else {
    WorldObject o;
    o.id = next_id_++;
    o.label = d.label;
    o.pose = d.pose.normalized();
    o.bbox = d.bbox;
    o.first_seen = o.last_seen = d.timestamp;
    objects_.push_back(std::move(o));
    id = objects_.back().id;
  }
  link_orphans(links, params);
  return id;
}

std::optional<int> WorldModel::best_parent(const WorldObject& child, const std::string& parent_label,
                                           const IntegrationParams& params) const {
  const Vec3 c = child.bbox.center();
  std::optional<int> contained, nearby;
  double contained_d = std::numeric_limits<double>::infinity();
  double nearby_d = params.parent_fallback_radius;
  for (const auto& p : objects_) {
    if (p.label != parent_label || p.label == child.label || p.parent) continue;
    const double dist = distance(p.bbox.center(), c);
    if (p.bbox.contains(c, params.contain_margin)) {
      if (dist < contained_d) {
        contained_d = dist;
        contained = p.id;
      }
    } else {
      const double surface = distance(p.bbox.closest_point(c), c);
      if (surface <= nearby_d) {
        nearby_d = surface;
        nearby = p.id;
      }
    }
  }
  return contained ? contained : nearby;
}

void WorldModel::link_orphans(const LabelLinks& links, const IntegrationParams& params) {
  if (links.empty()) return;
  std::set<int> parents;
  for (const auto& o : objects_)
    if (o.parent) parents.insert(*o.parent);
  for (auto& o : objects_) {
    if (o.parent || parents.count(o.id)) continue;
    for (const auto& [parent_label, child_label] : links) {
      if (child_label != o.label) continue;
      if (auto p = best_parent(o, parent_label, params)) {
        o.parent = *p;
        parents.insert(*p);
        break;
      }
    }
  }
}

WorldModel integrate(WorldModel world, const Detection& d, const LabelLinks& links, double assoc_radius) {
  IntegrationParams params;
  params.assoc_radius = assoc_radius;
  world.integrate(d, links, params);
  return world;
}

std::vector<WorldObject> query(const WorldModel& world, std::string_view label) {
  std::vector<WorldObject> out;
  for (const auto& o : world.objects())
    if (o.label == label) out.push_back(o);
  return out;
}

std::shared_ptr<const WorldModel> snapshot(const WorldModel& world) { return std::make_shared<const WorldModel>(world); }

void SharedWorld::publish(WorldModel world) {
  auto next = std::make_shared<const WorldModel>(std::move(world));
  std::lock_guard lock(mutex_);
  current_ = std::move(next);
}

std::shared_ptr<const WorldModel> SharedWorld::snapshot() const {
  std::lock_guard lock(mutex_);
  return current_;
}

void to_json(nlohmann::json& j, const Pose& p) { j = {{"x", p.x}, {"y", p.y}, {"z", p.z}, {"yaw", p.yaw}}; }

void from_json(const nlohmann::json& j, Pose& p) {
  p.x = j.value("x", 0.0);
  p.y = j.value("y", 0.0);
  p.z = j.value("z", 0.0);
  p.yaw = wrap_angle(j.value("yaw", 0.0));
}

void to_json(nlohmann::json& j, const Aabb& b) {
  j = {{"min", {b.min.x, b.min.y, b.min.z}}, {"max", {b.max.x, b.max.y, b.max.z}}};
  if (b.degenerate) j["degenerate"] = true;
}

void from_json(const nlohmann::json& j, Aabb& b) {
  const auto& lo = j.at("min");
  const auto& hi = j.at("max");
  b.min = {lo.at(0).get<double>(), lo.at(1).get<double>(), lo.at(2).get<double>()};
  b.max = {hi.at(0).get<double>(), hi.at(1).get<double>(), hi.at(2).get<double>()};
  b.degenerate = j.value("degenerate", false);
  if (!b.valid()) throw std::invalid_argument("invalid bounding box");
}

void to_json(nlohmann::json& j, const WorldObject& o) {
  j = {{"id", o.id},
       {"label", o.label},
       {"pose", o.pose},
       {"bbox", o.bbox},
       {"parent", o.parent ? nlohmann::json(*o.parent) : nlohmann::json(nullptr)},
       {"first_seen", o.first_seen},
       {"last_seen", o.last_seen},
       {"observations", o.observations}};
}

void from_json(const nlohmann::json& j, WorldObject& o) {
  o.id = j.at("id").get<int>();
  o.label = j.at("label").get<std::string>();
  o.pose = j.at("pose").get<Pose>();
  if (j.contains("bbox")) {
    o.bbox = j.at("bbox").get<Aabb>();
  } else {
    o.bbox = Aabb::centered(o.pose.position(), {0.1, 0.1, 0.1});
  }
  o.parent.reset();
  if (j.contains("parent") && !j.at("parent").is_null()) o.parent = j.at("parent").get<int>();
  o.first_seen = j.value("first_seen", 0.0);
  o.last_seen = j.value("last_seen", o.first_seen);
  o.observations = j.value("observations", 1);
}

nlohmann::json world_to_json(const WorldModel& w) { return {{"objects", w.objects()}}; }

WorldModel world_from_json(const nlohmann::json& j) {
  return WorldModel(j.at("objects").get<std::vector<WorldObject>>());
}

WorldModel load_world(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return world_from_json(nlohmann::json::parse(in));
}

}  // namespace apg::world
