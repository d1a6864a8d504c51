// Acceptance checks for the whole system. Prints one PASS/FAIL line per
// criterion and exits non-zero if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "apg/pipeline.hpp"
#include "dcg_oracle.hpp"

using namespace apg;

namespace {

const std::string kData = APG_DATA_DIR;
const std::string kCli = APG_CLI;

int failures = 0;

void report(int n, const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << "  " << n << ". " << name << " -- " << detail << std::endl;
  if (!ok) ++failures;
}

template <typename F>
void criterion(int n, const std::string& name, F&& body) {
  try {
    std::string detail;
    const bool ok = body(detail);
    report(n, name, ok, detail);
  } catch (const std::exception& e) {
    report(n, name, false, std::string("exception: ") + e.what());
  }
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool within(double value, double target, double rel) { return std::abs(value - target) <= rel * std::abs(target); }

}  // namespace

int main() {
  const auto space = symbols::load_symbol_space(kData + "/symbols.json");
  const auto perception_corpus = dcg::load_corpus(kData + "/perception_corpus.json");
  const auto behavior_corpus = dcg::load_corpus(kData + "/behavior_corpus.json");
  const auto config = pipeline::load_run_config(kData + "/run.json");
  const auto drive = parse::load_parse_tree(slurp(kData + "/instructions/drive_to_the_door.tree"));
  const auto open = parse::load_parse_tree(slurp(kData + "/instructions/open_the_door.tree"));

  criterion(1, "detector-set reproduction", [&](std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto model = dcg::train(perception_corpus, space).model;
    const auto d = pipeline::ground_perception(drive, space, model).detectors;
    const auto o = pipeline::ground_perception(open, space, model).detectors;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool drive_ok = d.detectors == std::set<std::string>{"door"} && d.links.empty();
    const bool open_ok = o.detectors == std::set<std::string>{"door", "door_handle"} &&
                         o.links == std::set<symbols::HierarchyLink>{{{"door"}, {"handle"}}};
    char buf[160];
    std::snprintf(buf, sizeof buf, "drive={%s} open={%s} in %.2fs", join({d.detectors.begin(), d.detectors.end()}).c_str(),
                  join({o.detectors.begin(), o.detectors.end()}).c_str(), secs);
    detail = buf;
    return drive_ok && open_ok && secs < 5.0;
  });

  const auto resources = pipeline::load_resources(config);

  criterion(2, "perception-period scaling", [&](std::string& detail) {
    const auto rows = pipeline::load_bench(kData + "/bench.json");
    const auto r = pipeline::bench(rows, resources, config);
    if (r.size() != 3) return false;
    const double ratio = r[1].avg_period / r[0].avg_period;
    char buf[160];
    std::snprintf(buf, sizeof buf, "drive=%.4f open=%.4f exhaustive=%.4f ratio=%.3f", r[0].avg_period, r[1].avg_period,
                  r[2].avg_period, ratio);
    detail = buf;
    return within(r[0].avg_period, 0.092, 0.01) && within(r[1].avg_period, 0.158, 0.01) &&
           within(r[2].avg_period, 2.060, 0.01) && ratio >= 1.6 && ratio <= 2.0;
  });

  criterion(3, "inference oracle equivalence", [&](std::string& detail) {
    std::mt19937 rng(3);
    std::normal_distribution<double> normal(0, 1.5);
    const auto& pool = space.perception_symbols();
    std::set<symbols::SemanticLabel> labels(space.labels().begin(), space.labels().end());
    int graphs = 0, mismatches = 0;
    std::size_t largest = 0;
    for (int trial = 0; trial < 250; ++trial) {
      const int phrases = 1 + static_cast<int>(rng() % 4);
      const std::size_t cap = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(12 / phrases));
      const std::size_t n_sym = 1 + rng() % cap;
      auto shuffled = pool;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      shuffled.resize(n_sym);
      const symbols::SymbolSpace sub(labels, shuffled, {}, {});
      const auto g = dcg::FactorGraph::perception(parse::load_parse_tree(oracle::random_tree_text(rng, phrases)), sub);
      if (g.factor_count() > 12) continue;
      dcg::Model m;
      oracle::intern_all(g, m.index);
      m.weights.resize(m.index.size());
      for (auto& w : m.weights) w = normal(rng);
      if (dcg::infer(g, m).expressed != oracle::enumerate(g, m).expressed) ++mismatches;
      largest = std::max(largest, g.factor_count());
      ++graphs;
    }
    detail = std::to_string(graphs) + " graphs (up to " + std::to_string(largest) + " variables), " +
             std::to_string(mismatches) + " mismatches";
    return graphs >= 200 && mismatches == 0;
  });

  criterion(4, "gradient correctness", [&](std::string& detail) {
    std::mt19937 rng(4);
    std::normal_distribution<double> normal(0, 0.3);
    const double l2 = 1e-3;
    double worst = 0;
    int vectors = 0;
    for (const auto* corpus : {&perception_corpus, &behavior_corpus}) {
      dcg::FeatureIndex index;
      const auto compiled = dcg::compile(*corpus, space, index);
      auto f = [&](const std::vector<double>& w) { return dcg::log_likelihood(compiled, w, l2); };
      for (int v = 0; v < 10; ++v, ++vectors) {
        std::vector<double> w(compiled.dim);
        for (auto& x : w) x = normal(rng);
        const auto g = dcg::gradient(compiled, w, l2);
        for (int k = 0; k < 25; ++k) {
          const std::size_t i = rng() % w.size();
          const double fd = oracle::central_difference(f, w, i, 1e-5);
          worst = std::max(worst, std::abs(g[i] - fd) / std::max({1.0, std::abs(g[i]), std::abs(fd)}));
        }
      }
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "%d weight vectors, max relative error %.2e", vectors, worst);
    detail = buf;
    return vectors >= 20 && worst < 1e-4;
  });

  criterion(5, "training behavior", [&](std::string& detail) {
    bool ok = true;
    for (const auto* corpus : {&perception_corpus, &behavior_corpus}) {
      const auto r = dcg::train(*corpus, space);
      bool monotone = true;
      for (std::size_t k = 1; k < r.objective_history.size(); ++k)
        monotone &= r.objective_history[k] >= r.objective_history[k - 1];
      std::size_t recovered = 0;
      for (const auto& ex : corpus->examples) {
        const auto g = dcg::make_graph(ex, corpus->kind, space);
        if (dcg::infer(g, r.model).expressed == dcg::gold_ids(ex, g)) ++recovered;
      }
      detail += std::string(detail.empty() ? "" : "; ") + std::string(dcg::to_string(corpus->kind)) + ": " +
                std::to_string(r.iterations) + " iterations, " + (monotone ? "monotone" : "NOT monotone") + ", " +
                std::to_string(recovered) + "/" + std::to_string(corpus->examples.size()) + " recovered";
      ok &= monotone && recovered == corpus->examples.size();
    }
    return ok;
  });

  criterion(6, "end-to-end traces", [&](std::string& detail) {
    using S = exec::State;
    auto trace = [](const pipeline::RunResult& r) {
      std::vector<std::string> s;
      for (auto st : r.status.states()) s.emplace_back(exec::to_string(st));
      return join(s);
    };
    const auto o = pipeline::run(open, resources, config);
    const auto d = pipeline::run(drive, resources, config);
    auto dropped_cfg = config;
    dropped_cfg.drop_detectors = {"door_handle"};
    const auto x = pipeline::run(open, resources, dropped_cfg);
    detail = "open=" + trace(o) + " drive=" + trace(d) + " open-without-handle=" + trace(x);
    return o.status.states() == std::vector<S>{S::received, S::navigating, S::detecting, S::localizing, S::turning,
                                               S::pushing, S::complete} &&
           d.status.states() == std::vector<S>{S::received, S::navigating, S::complete} &&
           x.status.states() == std::vector<S>{S::received, S::navigating, S::detecting, S::failure} &&
           o.exit_code() == 0 && d.exit_code() == 0 && x.exit_code() == 4;
  });

  criterion(7, "world minimality and contrast", [&](std::string& detail) {
    bool ok = true;
    for (const auto* tree : {&drive, &open}) {
      const auto r = pipeline::run(*tree, resources, config);
      std::set<std::string> emitted;
      for (const auto& id : r.grounding.detectors.detectors) emitted.insert(resources.registry.find(id)->emits_label);
      for (const auto& o : r.perception.world.objects()) ok &= emitted.count(o.label) == 1;
      detail += r.instruction + ": " + std::to_string(r.perception.world.size()) + " objects; ";
    }
    auto ex_cfg = config;
    ex_cfg.exhaustive = true;
    ex_cfg.seed = 0;
    const auto a = pipeline::run(drive, resources, ex_cfg);
    const auto b = pipeline::run(drive, resources, ex_cfg);
    std::set<std::string> relevant;
    for (const auto& id : a.grounding.detectors.detectors) relevant.insert(resources.registry.find(id)->emits_label);
    std::vector<std::string> extraneous;
    for (const auto& o : a.perception.world.objects())
      if (!relevant.count(o.label)) extraneous.push_back(o.label);
    const bool same = a.perception.world == b.perception.world;
    detail += "exhaustive extraneous={" + join(extraneous) + "}" + (same ? ", repeatable" : ", NOT repeatable");
    return ok && !extraneous.empty() && same;
  });

  criterion(8, "determinism", [&](std::string& detail) {
    const auto dir = std::filesystem::temp_directory_path() / ("apg_acceptance_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    const std::string a = (dir / "a.json").string(), b = (dir / "b.json").string();
    const std::string base = "\"" + kCli + "\" bench \"" + kData + "/bench.json\" --config \"" + kData +
                             "/run.json\" --seed 0 --json > ";
    const int ra = std::system((base + "\"" + a + "\"").c_str());
    const int rb = std::system((base + "\"" + b + "\"").c_str());
    const std::string ja = slurp(a), jb = slurp(b);
    std::filesystem::remove_all(dir);
    detail = "exit codes " + std::to_string(ra) + "/" + std::to_string(rb) + ", " + std::to_string(ja.size()) +
             " bytes, " + (ja == jb ? "identical" : "different");
    return ra == 0 && rb == 0 && !ja.empty() && ja == jb;
  });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
