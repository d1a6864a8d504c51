#include "apg/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

namespace apg::pipeline {

namespace fs = std::filesystem;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::io: return "io";
    case Stage::grounding: return "grounding";
    case Stage::perception: return "perception";
    case Stage::execution: return "execution";
  }
  return "?";
}

int exit_code(Stage s) {
  switch (s) {
    case Stage::io: return 1;
    case Stage::grounding: return 2;
    case Stage::perception: return 3;
    case Stage::execution: return 4;
  }
  return 1;
}

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw StageError(Stage::io, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw StageError(Stage::io, path + ": " + e.what());
  }
}

std::string resolve(const fs::path& base, const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return {};
  const fs::path p = j.at(key).get<std::string>();
  const fs::path full = p.is_absolute() ? p : base / p;
  if (!fs::exists(full)) throw StageError(Stage::io, std::string(key) + " file not found: " + full.string());
  return full.lexically_normal().string();
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  const auto j = read_json(path);
  const fs::path base = fs::path(path).parent_path();
  RunConfig c;
  try {
    c.symbols = resolve(base, j, "symbols");
    c.detectors = resolve(base, j, "detectors");
    c.scene = resolve(base, j, "scene");
    c.perception_model = resolve(base, j, "perception_model");
    c.behavior_model = resolve(base, j, "behavior_model");
    c.perception_corpus = resolve(base, j, "perception_corpus");
    c.behavior_corpus = resolve(base, j, "behavior_corpus");
    for (const auto& row : j.value("calibration", nlohmann::json::array()))
      c.calibration.push_back({row.at("name").get<std::string>(), row.at("detectors").get<std::set<std::string>>(),
                               row.at("period").get<double>()});
    c.seed = j.value("seed", std::uint64_t{0});
    c.exhaustive = j.value("exhaustive", false);
    c.frame_budget = j.value("frame_budget", 50);
    c.standoff = j.value("standoff", 0.5);
    c.drop_detectors = j.value("drop_detectors", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw StageError(Stage::io, path + ": " + e.what());
  }
  if (c.symbols.empty() || c.detectors.empty() || c.scene.empty())
    throw StageError(Stage::io, path + ": symbols, detectors and scene are required");
  if (c.perception_model.empty() && c.perception_corpus.empty())
    throw StageError(Stage::io, path + ": needs a perception model or corpus");
  if (c.behavior_model.empty() && c.behavior_corpus.empty())
    throw StageError(Stage::io, path + ": needs a behavior model or corpus");
  return c;
}

namespace {

dcg::Model obtain_model(const std::string& model_path, const std::string& corpus_path, dcg::GraphKind kind,
                        const symbols::SymbolSpace& space) {
  dcg::Model m;
  if (!model_path.empty()) {
    m = dcg::load_model(model_path);
  } else {
    const auto corpus = dcg::load_corpus(corpus_path);
    if (corpus.kind != kind) throw dcg::CorpusError(corpus_path + ": expected a " + std::string(dcg::to_string(kind)) + " corpus");
    m = dcg::train(corpus, space).model;
  }
  if (m.kind != kind) throw dcg::CorpusError("model kind mismatch: expected " + std::string(dcg::to_string(kind)));
  return m;
}

}  // namespace

Resources load_resources(const RunConfig& config) {
  Resources r;
  try {
    r.space = symbols::load_symbol_space(config.symbols);
    r.registry = percept::load_registry(config.detectors);
    r.scene = percept::load_scene(config.scene);
    r.perception = obtain_model(config.perception_model, config.perception_corpus, dcg::GraphKind::perception, r.space);
    r.behavior = obtain_model(config.behavior_model, config.behavior_corpus, dcg::GraphKind::behavior, r.space);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(Stage::io, e.what());
  }
  if (!config.calibration.empty()) {
    try {
      r.registry = r.registry.with_costs(percept::calibrate_costs(config.calibration));
    } catch (const std::exception& e) {
      throw StageError(Stage::perception, e.what());
    }
  }
  return r;
}

parse::ParseTree read_tree(const std::string& arg) {
  std::string text = arg;
  if (arg.find('(') != 0) {
    std::ifstream in(arg);
    if (!in) throw StageError(Stage::io, "cannot open " + arg);
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  try {
    return parse::load_parse_tree(text);
  } catch (const parse::ParseError& e) {
    throw StageError(Stage::io, "malformed tree at offset " + std::to_string(e.offset()) + ": " + e.what());
  }
}

PerceptionGrounding ground_perception(const parse::ParseTree& tree, const symbols::SymbolSpace& space,
                                      const dcg::Model& model) {
  const auto graph = dcg::FactorGraph::perception(tree, space);
  const auto a = dcg::infer(graph, model);
  PerceptionGrounding g;
  std::vector<symbols::PerceptionSymbol> expressed;
  for (int id : a.root_expressed()) {
    const auto& s = graph.symbols()[static_cast<std::size_t>(id)];
    g.symbols.push_back(dcg::key(s));
    expressed.push_back(std::get<symbols::PerceptionSymbol>(s));
  }
  g.detectors = symbols::detectors_from_groundings(expressed);
  return g;
}

std::optional<symbols::BehaviorSymbol> ground_behavior(const parse::ParseTree& tree, const symbols::SymbolSpace& space,
                                                       const dcg::Model& model, const world::WorldModel& world) {
  const auto graph = dcg::FactorGraph::behavior(tree, space, world);
  const auto a = dcg::infer(graph, model);
  std::optional<int> best;
  for (int id : a.root_expressed())
    if (!best || a.p_true[0][static_cast<std::size_t>(id)] > a.p_true[0][static_cast<std::size_t>(*best)]) best = id;
  if (!best) return std::nullopt;
  return std::get<symbols::BehaviorSymbol>(graph.symbols()[static_cast<std::size_t>(*best)]);
}

exec::DoorSim door_from_scene(const percept::Scene& scene) {
  exec::DoorSim d;
  for (const auto& o : scene.truth.objects()) {
    if (!o.parent) continue;
    const auto* p = scene.truth.find(*o.parent);
    if (p && p->label == "door" && o.label == "door_handle") {
      d.handle_position = o.pose.position();
      break;
    }
  }
  return d;
}

namespace {

void drop(symbols::DetectorSet& set, const std::vector<std::string>& ids) {
  for (const auto& id : ids) {
    set.detectors.erase(id);
    std::erase_if(set.links, [&](const auto& l) { return l.parent_detector() == id || l.child_detector() == id; });
  }
}

}  // namespace

RunResult run(const parse::ParseTree& tree, const Resources& resources, const RunConfig& config) {
  RunResult r;
  r.instruction = tree.instruction();
  r.mode = config.exhaustive ? percept::Mode::exhaustive : percept::Mode::adaptive;
  r.robot.base = resources.scene.robot_start;
  r.door = door_from_scene(resources.scene);

  auto fail = [&](Stage s, std::string message) -> RunResult& {
    r.failed_stage = s;
    r.message = std::move(message);
    return r;
  };

  try {
    r.grounding = ground_perception(tree, resources.space, resources.perception);
  } catch (const std::exception& e) {
    return fail(Stage::grounding, e.what());
  }
  symbols::DetectorSet active = r.grounding.detectors;
  drop(active, config.drop_detectors);

  // Perception is the world's single writer; it runs on its own thread and
  // publishes every frame. Readers below only ever take snapshots.
  world::SharedWorld shared;
  const percept::PerceptionConfig pc{active, r.mode, config.seed, config.frame_budget};
  try {
    auto writer = std::async(std::launch::async, [&] {
      return percept::run_perception(resources.scene, resources.registry, pc, &shared);
    });
    r.perception = writer.get();
  } catch (const std::exception& e) {
    return fail(Stage::perception, e.what());
  }

  const auto snapshot = shared.snapshot();
  try {
    r.behavior = ground_behavior(tree, resources.space, resources.behavior, *snapshot);
  } catch (const std::exception& e) {
    return fail(Stage::grounding, e.what());
  }
  if (!r.behavior) return fail(Stage::grounding, "no behavior grounded for '" + r.instruction + "'");

  exec::ExecParams params;
  params.standoff = config.standoff;
  r.status = exec::receive_behavior(exec::BehaviorRequest::from_symbol(*r.behavior), [&] { return shared.snapshot(); },
                                    r.robot, r.door, params, resources.scene.obstacles);
  if (r.status.state != exec::State::complete)
    return fail(Stage::execution, r.status.failure_reason.value_or("execution failed"));
  return r;
}

nlohmann::json summary_to_json(const RunResult& r) {
  nlohmann::json j;
  j["instruction"] = r.instruction;
  j["mode"] = to_string(r.mode);
  j["perception_symbols"] = r.grounding.symbols;
  j["inferred_detectors"] = r.grounding.detectors.detectors;
  j["active_detectors"] = r.perception.detectors;
  j["metrics"] = percept::metrics_to_json(r.perception.metrics);
  j["world"] = world::world_to_json(r.perception.world);
  j["behavior"] = r.behavior ? nlohmann::json(symbols::key(*r.behavior)) : nlohmann::json(nullptr);
  j["trace"] = exec::trace_to_json(r.status);
  j["final_state"] = to_string(r.status.state);
  if (r.failed_stage) {
    j["final_state"] = "FAILURE";
    j["failed_stage"] = to_string(*r.failed_stage);
    j["message"] = r.message;
  }
  j["exit_code"] = r.exit_code();
  return j;
}

std::vector<BenchRow> load_bench(const std::string& path) {
  const auto j = read_json(path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<BenchRow> rows;
  try {
    for (const auto& row : j.at("rows")) {
      BenchRow b;
      b.name = row.at("name").get<std::string>();
      if (row.contains("tree")) {
        b.tree = row.at("tree").get<std::string>();
      } else {
        const fs::path f = base / row.at("tree_file").get<std::string>();
        std::ifstream in(f);
        if (!in) throw StageError(Stage::io, "cannot open " + f.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        b.tree = ss.str();
      }
      const auto mode = row.value("mode", std::string("adaptive"));
      if (mode != "adaptive" && mode != "exhaustive") throw StageError(Stage::io, "unknown mode '" + mode + "'");
      b.mode = mode == "adaptive" ? percept::Mode::adaptive : percept::Mode::exhaustive;
      rows.push_back(std::move(b));
    }
  } catch (const nlohmann::json::exception& e) {
    throw StageError(Stage::io, path + ": " + e.what());
  }
  return rows;
}

std::vector<BenchResult> bench(const std::vector<BenchRow>& rows, const Resources& resources, const RunConfig& config) {
  std::vector<BenchResult> out;
  for (const auto& row : rows) {
    RunConfig c = config;
    c.exhaustive = row.mode == percept::Mode::exhaustive;
    const auto tree = read_tree(row.tree);
    const auto r = run(tree, resources, c);
    out.push_back({row.name, r.instruction, row.mode, r.perception.metrics.avg_period, r.perception.detectors,
                   r.failed_stage ? "FAILURE" : std::string(exec::to_string(r.status.state))});
  }
  return out;
}

nlohmann::json bench_to_json(const std::vector<BenchResult>& results) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : results)
    rows.push_back({{"name", r.name},
                    {"instruction", r.instruction},
                    {"mode", to_string(r.mode)},
                    {"avg_period", r.avg_period},
                    {"active_detectors", r.detectors},
                    {"final_state", r.final_state}});
  return {{"rows", rows}};
}

std::string bench_table(const std::vector<BenchResult>& results) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-12s %-32s %-10s %16s  %s\n", "name", "instruction", "mode", "avg period (s)",
                "active detectors");
  out << buf;
  for (const auto& r : results) {
    std::string dets;
    for (const auto& d : r.detectors) dets += (dets.empty() ? "" : ", ") + d;
    std::snprintf(buf, sizeof buf, "%-12s %-32s %-10s %16.3f  %s\n", r.name.c_str(), r.instruction.c_str(),
                  std::string(to_string(r.mode)).c_str(), r.avg_period, dets.c_str());
    out << buf;
  }
  return out.str();
}

}  // namespace apg::pipeline
