// apg: train grounding models, ground instructions, simulate perception,
// run instructions end to end and benchmark perception cost.
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "apg/pipeline.hpp"

namespace fs = std::filesystem;
using namespace apg;
using pipeline::Stage;
using pipeline::StageError;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool exhaustive = false;
  bool json = false;
};

pipeline::RunConfig configure(const Common& c) {
  auto cfg = pipeline::load_run_config(c.config);
  if (c.seed_given) cfg.seed = c.seed;
  if (c.exhaustive) cfg.exhaustive = true;
  return cfg;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw StageError(Stage::io, "cannot write " + p.string());
  out << text;
}

int cmd_train(const std::string& corpus_path, const std::string& kind, const std::string& symbols_path,
              const std::string& out_path, bool json) {
  symbols::SymbolSpace space;
  dcg::Corpus corpus;
  try {
    space = symbols::load_symbol_space(symbols_path);
    corpus = dcg::load_corpus(corpus_path);
  } catch (const std::exception& e) {
    throw StageError(Stage::io, e.what());
  }
  if (std::string(dcg::to_string(corpus.kind)) != kind)
    throw StageError(Stage::io, "corpus is " + std::string(dcg::to_string(corpus.kind)) + ", expected " + kind);
  dcg::TrainResult r;
  try {
    r = dcg::train(corpus, space);
  } catch (const std::exception& e) {
    throw StageError(Stage::io, e.what());
  }
  dcg::save_model(r.model, out_path);
  const double objective = r.objective_history.empty() ? 0.0 : r.objective_history.back();
  if (json) {
    std::cout << nlohmann::json{{"objective", objective},
                                {"iterations", r.iterations},
                                {"converged", r.converged},
                                {"features", r.model.weights.size()},
                                {"model", out_path}}
                     .dump(2)
              << '\n';
  } else {
    std::cout << "trained " << kind << " model on " << corpus.examples.size() << " examples: objective " << objective
              << " after " << r.iterations << " iterations" << (r.converged ? " (converged)" : "") << '\n';
  }
  return 0;
}

int cmd_ground(const std::string& tree_arg, const Common& c, const std::string& world_path) {
  const auto cfg = configure(c);
  const auto res = pipeline::load_resources(cfg);
  const auto tree = pipeline::read_tree(tree_arg);
  nlohmann::json out;
  out["instruction"] = tree.instruction();
  const auto g = pipeline::ground_perception(tree, res.space, res.perception);
  out["perception_symbols"] = g.symbols;
  out["detectors"] = g.detectors.detectors;
  std::optional<symbols::BehaviorSymbol> b;
  if (!world_path.empty()) {
    world::WorldModel w;
    try {
      w = world::load_world(world_path);
    } catch (const std::exception& e) {
      throw StageError(Stage::io, e.what());
    }
    b = pipeline::ground_behavior(tree, res.space, res.behavior, w);
    out["behavior"] = b ? nlohmann::json(symbols::key(*b)) : nlohmann::json(nullptr);
  }
  if (c.json) {
    std::cout << out.dump(2) << '\n';
  } else {
    std::cout << "instruction: " << tree.instruction() << "\nP*:";
    for (const auto& d : g.detectors.detectors) std::cout << ' ' << d;
    std::cout << "\nsymbols:";
    for (const auto& s : g.symbols) std::cout << ' ' << s;
    std::cout << '\n';
    if (!world_path.empty()) std::cout << "behavior: " << (b ? symbols::key(*b) : "(none)") << '\n';
  }
  if (g.detectors.detectors.empty() || (!world_path.empty() && !b)) return pipeline::exit_code(Stage::grounding);
  return 0;
}

int cmd_perceive(const std::string& tree_arg, const std::vector<std::string>& detectors, const Common& c,
                 const std::string& out_dir) {
  const auto cfg = configure(c);
  const auto res = pipeline::load_resources(cfg);
  percept::PerceptionConfig pc;
  pc.mode = cfg.exhaustive ? percept::Mode::exhaustive : percept::Mode::adaptive;
  pc.seed = cfg.seed;
  pc.frame_budget = cfg.frame_budget;
  if (!tree_arg.empty()) pc.active = pipeline::ground_perception(pipeline::read_tree(tree_arg), res.space, res.perception).detectors;
  for (const auto& d : detectors) pc.active.detectors.insert(d);
  percept::PerceptionResult r;
  try {
    r = percept::run_perception(res.scene, res.registry, pc);
  } catch (const std::exception& e) {
    throw StageError(Stage::perception, e.what());
  }
  const nlohmann::json out{{"mode", to_string(pc.mode)},
                           {"active_detectors", r.detectors},
                           {"metrics", percept::metrics_to_json(r.metrics)},
                           {"world", world::world_to_json(r.world)}};
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_file(fs::path(out_dir) / "world.json", world::world_to_json(r.world).dump(2) + "\n");
    write_file(fs::path(out_dir) / "metrics.json", percept::metrics_to_json(r.metrics).dump(2) + "\n");
  }
  if (c.json) {
    std::cout << out.dump(2) << '\n';
  } else {
    std::cout << "mode " << to_string(pc.mode) << ", " << r.metrics.frames << " frames, avg period "
              << r.metrics.avg_period << " s, " << r.world.size() << " objects\n";
  }
  return 0;
}

int cmd_run(const std::string& tree_arg, const Common& c, const std::vector<std::string>& drop,
            const std::string& out_dir) {
  auto cfg = configure(c);
  cfg.drop_detectors.insert(cfg.drop_detectors.end(), drop.begin(), drop.end());
  const auto res = pipeline::load_resources(cfg);
  const auto tree = pipeline::read_tree(tree_arg);
  const auto r = pipeline::run(tree, res, cfg);
  const auto summary = pipeline::summary_to_json(r);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_file(fs::path(out_dir) / "world.json", summary["world"].dump(2) + "\n");
    write_file(fs::path(out_dir) / "metrics.json", summary["metrics"].dump(2) + "\n");
    write_file(fs::path(out_dir) / "trace.json", summary["trace"].dump(2) + "\n");
    write_file(fs::path(out_dir) / "trace.log", exec::trace_to_log(r.status));
  }
  if (c.json) {
    std::cout << summary.dump(2) << '\n';
  } else {
    std::cout << "instruction: " << r.instruction << "\nactive detectors:";
    for (const auto& d : r.perception.detectors) std::cout << ' ' << d;
    std::cout << "\navg period: " << r.perception.metrics.avg_period << " s\nbehavior: "
              << (r.behavior ? symbols::key(*r.behavior) : "(none)") << '\n'
              << exec::trace_to_log(r.status);
    if (r.failed_stage) std::cerr << "failed at " << to_string(*r.failed_stage) << ": " << r.message << '\n';
  }
  return r.exit_code();
}

int cmd_bench(const std::string& bench_path, const Common& c, const std::string& out_path) {
  const auto cfg = configure(c);
  const auto res = pipeline::load_resources(cfg);
  const auto rows = pipeline::load_bench(bench_path);
  const auto results = pipeline::bench(rows, res, cfg);
  const std::string json = pipeline::bench_to_json(results).dump(2) + "\n";
  if (!out_path.empty()) write_file(out_path, json);
  if (c.json)
    std::cout << json;
  else
    std::cout << pipeline::bench_table(results);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive perception grounding: instruction -> detectors -> world -> behavior"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", common.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
    if (config_required) opt->required();
    sub->add_option("--seed", common.seed, "Random seed (default from config, else 0)")
        ->each([&](const std::string&) { common.seed_given = true; });
    sub->add_flag("--json", common.json, "Machine-readable output");
  };

  std::string corpus, kind = "perception", symbols_path, out;
  auto* train = app.add_subcommand("train", "Train a grounding model from an annotated corpus");
  train->add_option("corpus", corpus, "Corpus file")->required()->check(CLI::ExistingFile);
  train->add_option("--kind", kind, "perception or behavior")->check(CLI::IsMember({"perception", "behavior"}));
  train->add_option("--symbols", symbols_path, "Symbol space file")->required()->check(CLI::ExistingFile);
  train->add_option("-o,--out", out, "Model output path")->required();
  train->add_flag("--json", common.json, "Machine-readable output");

  std::string tree, world_path;
  auto* ground = app.add_subcommand("ground", "Print the inferred detector set (and behavior, given a world)");
  ground->add_option("tree", tree, "Tree file or bracketed tree text")->required();
  ground->add_option("--world", world_path, "World file for behavior grounding")->check(CLI::ExistingFile);
  add_common(ground, true);

  std::vector<std::string> detectors;
  std::string out_dir;
  auto* perceive = app.add_subcommand("perceive", "Simulate perception for a tree or explicit detectors");
  perceive->add_option("--tree", tree, "Tree whose inferred detectors to run");
  perceive->add_option("--detector", detectors, "Detector to run (repeatable)");
  perceive->add_flag("--exhaustive", common.exhaustive, "Run every standalone detector");
  perceive->add_option("--out-dir", out_dir, "Directory for world.json and metrics.json");
  add_common(perceive, true);

  std::vector<std::string> drop;
  auto* run = app.add_subcommand("run", "Run an instruction end to end");
  run->add_option("tree", tree, "Tree file or bracketed tree text")->required();
  run->add_flag("--exhaustive", common.exhaustive, "Exhaustive perception baseline");
  run->add_option("--drop-detector", drop, "Remove a detector from the inferred set (repeatable)");
  run->add_option("--out-dir", out_dir, "Directory for world, metrics and trace files");
  add_common(run, true);

  std::string bench_path;
  auto* bench = app.add_subcommand("bench", "Benchmark perception periods over a list of instructions");
  bench->add_option("rows", bench_path, "Bench file")->required()->check(CLI::ExistingFile);
  bench->add_option("-o,--out", out, "Write the JSON report here as well");
  add_common(bench, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(corpus, kind, symbols_path, out, common.json);
    if (*ground) return cmd_ground(tree, common, world_path);
    if (*perceive) return cmd_perceive(tree, detectors, common, out_dir);
    if (*run) return cmd_run(tree, common, drop, out_dir);
    if (*bench) return cmd_bench(bench_path, common, out);
  } catch (const StageError& e) {
    std::cerr << "apg: " << to_string(e.stage()) << " error: " << e.what() << '\n';
    return pipeline::exit_code(e.stage());
  } catch (const std::exception& e) {
    std::cerr << "apg: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
