#include "apg/percept.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

namespace apg::percept {

bool DetectorSpec::valid() const {
  return !id.empty() && !emits_label.empty() && frame_cost > 0 && std::isfinite(frame_cost) &&
         false_positive_rate >= 0 && false_positive_rate < 1 && noise_sigma >= 0 && std::isfinite(noise_sigma);
}

DetectorRegistry::DetectorRegistry(std::vector<DetectorSpec> specs) : specs_(std::move(specs)) {
  std::sort(specs_.begin(), specs_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (!specs_[i].valid()) throw ConfigError("invalid detector spec '" + specs_[i].id + "'");
    if (i > 0 && specs_[i].id == specs_[i - 1].id) throw ConfigError("duplicate detector '" + specs_[i].id + "'");
  }
  for (const auto& s : specs_) {
    if (!s.parent) continue;
    const auto* p = find(*s.parent);
    if (p == nullptr) throw ConfigError("detector '" + s.id + "' names unknown parent '" + *s.parent + "'");
    if (p->parent) throw ConfigError("detector '" + s.id + "' would nest more than one level");
  }
}

const DetectorSpec* DetectorRegistry::find(const std::string& id) const {
  auto it = std::lower_bound(specs_.begin(), specs_.end(), id, [](const auto& s, const auto& v) { return s.id < v; });
  return it != specs_.end() && it->id == id ? &*it : nullptr;
}

std::set<std::string> DetectorRegistry::standalone_ids() const {
  std::set<std::string> out;
  for (const auto& s : specs_)
    if (!s.parent) out.insert(s.id);
  return out;
}

DetectorRegistry DetectorRegistry::with_costs(const std::map<std::string, double>& costs) const {
  auto specs = specs_;
  for (auto& s : specs)
    if (auto it = costs.find(s.id); it != costs.end()) s.frame_cost = it->second;
  return DetectorRegistry(std::move(specs));
}

DetectorRegistry registry_from_json(const nlohmann::json& j) {
  std::vector<DetectorSpec> specs;
  for (const auto& d : j.at("detectors")) {
    DetectorSpec s;
    s.id = d.at("id").get<std::string>();
    s.emits_label = d.value("label", s.id);
    s.frame_cost = d.at("frame_cost").get<double>();
    s.false_positive_rate = d.value("false_positive_rate", 0.0);
    s.noise_sigma = d.value("noise_sigma", 0.0);
    if (d.contains("parent") && !d.at("parent").is_null()) s.parent = d.at("parent").get<std::string>();
    specs.push_back(std::move(s));
  }
  return DetectorRegistry(std::move(specs));
}

DetectorRegistry load_registry(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return registry_from_json(nlohmann::json::parse(in));
}

nlohmann::json registry_to_json(const DetectorRegistry& r) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& s : r.specs()) {
    nlohmann::json d{{"id", s.id},
                     {"label", s.emits_label},
                     {"frame_cost", s.frame_cost},
                     {"false_positive_rate", s.false_positive_rate},
                     {"noise_sigma", s.noise_sigma}};
    if (s.parent) d["parent"] = *s.parent;
    list.push_back(std::move(d));
  }
  return {{"detectors", list}};
}

bool Visibility::sees(const world::Pose& robot, const world::Vec3& p) const {
  const double dx = p.x - robot.x, dy = p.y - robot.y;
  const double r = std::hypot(dx, dy);
  if (r > range) return false;
  if (r == 0) return true;
  return std::abs(world::wrap_angle(std::atan2(dy, dx) - robot.yaw)) <= fov / 2;
}

Scene scene_from_json(const nlohmann::json& j) {
  Scene s;
  s.truth = world::world_from_json(j);
  if (j.contains("visibility")) {
    const auto& v = j.at("visibility");
    s.visibility.range = v.value("range", s.visibility.range);
    if (v.contains("fov_deg")) s.visibility.fov = v.at("fov_deg").get<double>() * std::numbers::pi / 180.0;
  }
  if (j.contains("robot")) s.robot_start = j.at("robot").get<world::Pose>();
  if (j.contains("obstacles")) s.obstacles = j.at("obstacles").get<std::vector<world::Aabb>>();
  if (!(s.visibility.range > 0) || !(s.visibility.fov > 0)) throw std::invalid_argument("invalid visibility model");
  return s;
}

Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return scene_from_json(nlohmann::json::parse(in));
}

std::string_view to_string(Mode m) { return m == Mode::adaptive ? "adaptive" : "exhaustive"; }

nlohmann::json metrics_to_json(const PerceptionMetrics& m) {
  return {{"frames", m.frames},
          {"total_cost", m.total_cost},
          {"avg_period", m.avg_period},
          {"detections_emitted", m.detections_emitted},
          {"spurious_emitted", m.spurious_emitted}};
}

std::vector<std::string> active_detectors(const DetectorRegistry& registry, const PerceptionConfig& config) {
  std::set<std::string> ids;
  if (config.mode == Mode::exhaustive) {
    ids = registry.standalone_ids();
  } else {
    ids = config.active.detectors;
    for (const auto& id : ids)
      if (registry.find(id) == nullptr) throw ConfigError("detector '" + id + "' is not registered");
  }
  if (ids.empty()) throw ConfigError("nothing to perceive");
  return {ids.begin(), ids.end()};
}

namespace {

world::LabelLinks integration_links(const DetectorRegistry& registry, const PerceptionConfig& config,
                                    const std::vector<std::string>& active) {
  const std::set<std::string> on(active.begin(), active.end());
  world::LabelLinks links;
  for (const auto& l : config.active.links) {
    const auto* p = registry.find(l.parent_detector());
    const auto* c = registry.find(l.child_detector());
    if (p && c && on.count(p->id) && on.count(c->id)) links.emplace(p->emits_label, c->emits_label);
  }
  for (const auto& id : active) {
    const auto* s = registry.find(id);
    if (s->parent && on.count(*s->parent)) links.emplace(registry.find(*s->parent)->emits_label, s->emits_label);
  }
  return links;
}

world::Detection jittered(const world::WorldObject& o, const DetectorSpec& spec, double t, std::mt19937_64& rng) {
  world::Vec3 offset;
  if (spec.noise_sigma > 0) {
    std::normal_distribution<double> n(0.0, spec.noise_sigma);
    offset = {n(rng), n(rng), n(rng)};
  }
  world::Detection d;
  d.label = spec.emits_label;
  d.pose = {o.pose.x + offset.x, o.pose.y + offset.y, o.pose.z + offset.z, o.pose.yaw};
  d.bbox = o.bbox;
  d.bbox.min = {d.bbox.min.x + offset.x, d.bbox.min.y + offset.y, d.bbox.min.z + offset.z};
  d.bbox.max = {d.bbox.max.x + offset.x, d.bbox.max.y + offset.y, d.bbox.max.z + offset.z};
  d.timestamp = t;
  d.source_detector = spec.id;
  return d;
}

// A false positive somewhere in the visible cone, carrying the detector's label.
world::Detection phantom(const DetectorSpec& spec, const world::Pose& robot, const Visibility& vis, double t,
                         std::mt19937_64& rng) {
  std::uniform_real_distribution<double> range(std::min(1.0, vis.range / 2), vis.range);
  std::uniform_real_distribution<double> bearing(-vis.fov / 2, vis.fov / 2);
  std::uniform_real_distribution<double> height(0.1, 1.5);
  const double r = range(rng), a = robot.yaw + bearing(rng);
  const world::Vec3 c{robot.x + r * std::cos(a), robot.y + r * std::sin(a), height(rng)};
  world::Detection d;
  d.label = spec.emits_label;
  d.pose = {c.x, c.y, c.z, 0};
  d.bbox = world::Aabb::centered(c, {0.2, 0.2, 0.2});
  d.timestamp = t;
  d.source_detector = spec.id;
  d.spurious = true;
  return d;
}

}  // namespace

PerceptionResult run_perception(const Scene& scene, const DetectorRegistry& registry, const PerceptionConfig& config,
                                std::span<const world::Pose> poses, world::SharedWorld* publish) {
  if (config.frame_budget < 0) throw std::invalid_argument("frame budget must be non-negative");
  if (poses.size() < static_cast<std::size_t>(config.frame_budget))
    throw std::invalid_argument("pose stream shorter than the frame budget");

  PerceptionResult out;
  out.detectors = active_detectors(registry, config);
  out.links = integration_links(registry, config, out.detectors);

  std::vector<const DetectorSpec*> specs;
  std::vector<double> fp_rate;
  for (const auto& id : out.detectors) {
    specs.push_back(registry.find(id));
    const bool relevant = config.active.detectors.count(id) > 0;
    fp_rate.push_back(config.mode == Mode::exhaustive && !relevant ? specs.back()->false_positive_rate : 0.0);
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  auto& m = out.metrics;
  for (int frame = 0; frame < config.frame_budget; ++frame) {
    const world::Pose& robot = poses[static_cast<std::size_t>(frame)];
    const double t = m.total_cost;
    for (std::size_t k = 0; k < specs.size(); ++k) {
      const DetectorSpec& spec = *specs[k];
      m.total_cost += spec.frame_cost;
      for (const auto& o : scene.truth.objects()) {
        if (o.label != spec.emits_label || !scene.visibility.sees(robot, o.bbox.center())) continue;
        out.world.integrate(jittered(o, spec, t, rng), out.links);
        ++m.detections_emitted;
      }
      if (coin(rng) < fp_rate[k]) {
        out.world.integrate(phantom(spec, robot, scene.visibility, t, rng), out.links);
        ++m.detections_emitted;
        ++m.spurious_emitted;
      }
    }
    ++m.frames;
    if (publish) publish->publish(out.world);
  }
  m.avg_period = m.frames > 0 ? m.total_cost / m.frames : 0.0;
  return out;
}

PerceptionResult run_perception(const Scene& scene, const DetectorRegistry& registry, const PerceptionConfig& config,
                                world::SharedWorld* publish) {
  const std::vector<world::Pose> poses(static_cast<std::size_t>(std::max(config.frame_budget, 0)), scene.robot_start);
  return run_perception(scene, registry, config, poses, publish);
}

std::map<std::string, double> calibrate_costs(const std::vector<CalibrationRow>& rows) {
  for (const auto& r : rows) {
    if (!(r.period > 0) || !std::isfinite(r.period)) throw CalibrationError("row '" + r.name + "' has a non-positive period");
    if (r.detectors.empty()) throw CalibrationError("row '" + r.name + "' lists no detectors");
  }
  std::map<std::string, double> cost;
  auto unknowns = [&](const CalibrationRow& r) {
    std::vector<std::string> u;
    for (const auto& d : r.detectors)
      if (!cost.count(d)) u.push_back(d);
    return u;
  };
  while (true) {
    const CalibrationRow* next = nullptr;
    std::size_t fewest = std::numeric_limits<std::size_t>::max();
    for (const auto& r : rows) {
      const auto n = unknowns(r).size();
      if (n > 0 && n < fewest) {
        fewest = n;
        next = &r;
      }
    }
    if (next == nullptr) break;
    double known = 0;
    for (const auto& d : next->detectors)
      if (cost.count(d)) known += cost.at(d);
    const double remainder = next->period - known;
    if (!(remainder > 0)) throw CalibrationError("row '" + next->name + "' leaves no positive cost for new detectors");
    for (const auto& d : unknowns(*next)) cost[d] = remainder / static_cast<double>(fewest);
  }
  for (const auto& r : rows) {
    double sum = 0;
    for (const auto& d : r.detectors) sum += cost.at(d);
    if (std::abs(sum - r.period) > 0.01 * r.period)
      throw CalibrationError("row '" + r.name + "' cannot be matched within 1%");
  }
  return cost;
}

}  // namespace apg::percept
