// End-to-end wiring: parse tree -> detector inference -> simulated perception
// -> behavior inference -> executive, plus the benchmark harness built on it.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "apg/dcg.hpp"
#include "apg/exec.hpp"
#include "apg/parse.hpp"
#include "apg/percept.hpp"
#include "apg/symbols.hpp"

namespace apg::pipeline {

enum class Stage { io, grounding, perception, execution };
std::string_view to_string(Stage s);
/// 1 I/O or format, 2 grounding, 3 perception configuration, 4 execution.
int exit_code(Stage s);

class StageError : public std::runtime_error {
 public:
  StageError(Stage stage, const std::string& what) : std::runtime_error(what), stage_(stage) {}
  Stage stage() const noexcept { return stage_; }

 private:
  Stage stage_;
};

/// Paths in the config file are relative to the file itself. A model path
/// wins over a corpus path; a corpus alone means "train in memory".
struct RunConfig {
  std::string symbols;
  std::string detectors;
  std::string scene;
  std::string perception_model, behavior_model;
  std::string perception_corpus, behavior_corpus;
  std::vector<percept::CalibrationRow> calibration;
  std::uint64_t seed = 0;
  bool exhaustive = false;
  int frame_budget = 50;
  double standoff = 0.5;
  std::vector<std::string> drop_detectors;
};

/// Throws StageError(io) if the file is unreadable, malformed, or names a
/// file that does not exist.
RunConfig load_run_config(const std::string& path);

/// Everything a run needs, parsed and validated up front.
struct Resources {
  symbols::SymbolSpace space;
  percept::DetectorRegistry registry;
  percept::Scene scene;
  dcg::Model perception;
  dcg::Model behavior;
};

Resources load_resources(const RunConfig& config);

/// Reads a tree from a file, or takes `arg` itself when it starts with '('.
parse::ParseTree read_tree(const std::string& arg);

struct PerceptionGrounding {
  std::vector<std::string> symbols;  // keys expressed by the root phrase
  symbols::DetectorSet detectors;    // P*
};

PerceptionGrounding ground_perception(const parse::ParseTree& tree, const symbols::SymbolSpace& space,
                                      const dcg::Model& model);

/// The root phrase's most probable expressed behavior, if any.
std::optional<symbols::BehaviorSymbol> ground_behavior(const parse::ParseTree& tree, const symbols::SymbolSpace& space,
                                                       const dcg::Model& model, const world::WorldModel& world);

/// Door simulation seeded with the scene's true handle position.
exec::DoorSim door_from_scene(const percept::Scene& scene);

struct RunResult {
  std::string instruction;
  PerceptionGrounding grounding;
  percept::Mode mode = percept::Mode::adaptive;
  percept::PerceptionResult perception;
  std::optional<symbols::BehaviorSymbol> behavior;
  exec::ExecStatus status;
  exec::RobotState robot;
  exec::DoorSim door;
  std::optional<Stage> failed_stage;
  std::string message;

  int exit_code() const { return failed_stage ? pipeline::exit_code(*failed_stage) : 0; }
};

/// Runs every stage. Stage failures are reported in the result rather than
/// thrown; only I/O problems escape as exceptions.
RunResult run(const parse::ParseTree& tree, const Resources& resources, const RunConfig& config);

nlohmann::json summary_to_json(const RunResult& r);

struct BenchRow {
  std::string name;
  std::string tree;  // bracketed text
  percept::Mode mode = percept::Mode::adaptive;
};

/// {"rows": [{"name", "tree", "mode"}]}; tree may also be "tree_file"
/// relative to the bench file.
std::vector<BenchRow> load_bench(const std::string& path);

struct BenchResult {
  std::string name;
  std::string instruction;
  percept::Mode mode;
  double avg_period = 0;
  std::vector<std::string> detectors;
  std::string final_state;
};

std::vector<BenchResult> bench(const std::vector<BenchRow>& rows, const Resources& resources, const RunConfig& config);
nlohmann::json bench_to_json(const std::vector<BenchResult>& results);
/// Fixed-width text table: instruction, mode, average period, detectors.
std::string bench_table(const std::vector<BenchResult>& results);

}  // namespace apg::pipeline
