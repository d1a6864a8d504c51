// Distributed Correspondence Graphs: one boolean correspondence variable per
// (phrase, symbol) pair, each scored by a log-linear factor conditioned on
// the symbols expressed by the phrase's children.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "apg/parse.hpp"
#include "apg/symbols.hpp"
#include "apg/world.hpp"

namespace apg::dcg {

inline constexpr std::string_view kTemplateVersion = "apg-dcg-templates-1";

class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
public:
  TrainingError(const std::string& what, int iteration);
  int iteration() const noexcept { return iteration_; }

private:
  int iteration_;
};

class CorpusError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

using GroundingSymbol = std::variant<symbols::PerceptionSymbol, symbols::BehaviorSymbol>;

std::string key(const GroundingSymbol& s);

enum class GraphKind { perception, behavior };

std::string_view to_string(GraphKind k);
GraphKind parse_graph_kind(std::string_view s);

class FeatureIndex {
public:
  std::optional<std::uint32_t> find(std::string_view name) const;
  std::uint32_t intern(const std::string& name);
  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(std::uint32_t i) const { return names_.at(i); }

private:
  std::unordered_map<std::string, std::uint32_t> ids_;
  std::vector<std::string> names_;
};

/// Sparse binary feature vector: sorted, unique indices below `dim`.
struct FeatureVector {
  std::vector<std::uint32_t> indices;
  std::size_t dim = 0;
  bool operator==(const FeatureVector&) const = default;
};

double dot(const FeatureVector& f, std::span<const double> w);

/// Trained log-linear factor: feature names and their weights.
struct Model {
  GraphKind kind = GraphKind::perception;
  FeatureIndex index;
  std::vector<double> weights;

  double weight(std::string_view name) const;
};

void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);
std::string model_to_json_text(const Model& m);
Model model_from_json_text(const std::string& text);

/// Correspondence variables for every (phrase, symbol) pair of one parse.
/// Perception graphs range over the space's perception symbols and never
/// consult the world; behavior graphs instantiate one behavior symbol per
/// (action, world object) pair.
class FactorGraph {
public:
  static FactorGraph perception(parse::ParseTree tree, const symbols::SymbolSpace& space,
                                std::optional<world::WorldModel> world = std::nullopt);
  static FactorGraph behavior(parse::ParseTree tree, const symbols::SymbolSpace& space, world::WorldModel world);

  GraphKind kind() const noexcept { return kind_; }
  const parse::ParseTree& tree() const noexcept { return tree_; }
  const std::vector<GroundingSymbol>& symbols() const noexcept { return symbols_; }
  const std::optional<world::WorldModel>& world() const noexcept { return world_; }
  std::size_t phrase_count() const noexcept { return tree_.phrase_count(); }
  std::size_t symbol_count() const noexcept { return symbols_.size(); }
  std::size_t factor_count() const noexcept { return phrase_count() * symbol_count(); }
  std::optional<int> symbol_id(const std::string& key) const;

  /// World consulted by featurization: always null for perception graphs.
  const world::WorldModel* feature_world() const;

private:
  FactorGraph(GraphKind kind, parse::ParseTree tree, std::vector<GroundingSymbol> symbols,
              std::optional<world::WorldModel> world);

  GraphKind kind_;
  parse::ParseTree tree_;
  std::vector<GroundingSymbol> symbols_;
  std::unordered_map<std::string, int> ids_;
  std::optional<world::WorldModel> world_;
};

/// Phrase-side feature descriptors, computed once per phrase.
struct PhraseContext {
  std::vector<std::string> all;          // phrase label, words, tags, governing verb, bias
  std::vector<std::string> conjunctive;  // subset used in three-way conjunctions
  bool has_children = false;
};

PhraseContext phrase_context(const parse::ParseTree& tree, int phrase_index);

/// Feature template expansion for one factor value. `child_expressed` is the
/// union of symbols expressed by the phrase's children.
std::vector<std::string> feature_names(const PhraseContext& phrase, const GroundingSymbol& symbol, bool phi,
                                       std::span<const GroundingSymbol> child_expressed,
                                       const world::WorldModel* world);

/// Encodes names against `index`; names the index does not know are dropped.
FeatureVector encode(std::span<const std::string> names, const FeatureIndex& index);

FeatureVector featurize(const PhraseContext& phrase, const GroundingSymbol& symbol, bool phi,
                        std::span<const GroundingSymbol> child_expressed, const world::WorldModel* world,
                        const FeatureIndex& index);

/// p(phi = true) = exp(w.f_true) / (exp(w.f_true) + exp(w.f_false)).
double factor_prob(const FeatureVector& f_true, const FeatureVector& f_false, std::span<const double> w);

struct Assignment {
  std::vector<std::vector<bool>> phi;       // [phrase][symbol]
  std::vector<std::vector<double>> p_true;  // [phrase][symbol]
  std::vector<std::vector<int>> expressed;  // [phrase] -> sorted symbol ids
  double log_score = 0;

  /// Symbols expressed by the root phrase.
  const std::vector<int>& root_expressed() const { return expressed.front(); }
};

/// Bottom-up argmax: phrases children-first, each variable set to the value
/// with the larger factor given the children's already-fixed expressions.
/// Ties resolve to phi = false.
Assignment infer(const FactorGraph& graph, const Model& model);

/// Union of child expressions for `phrase_index` under `expressed`.
std::vector<int> child_expressed_ids(const parse::ParseTree& tree, int phrase_index,
                                     const std::vector<std::vector<int>>& expressed);

struct TrainingExample {
  parse::ParseTree tree;
  std::optional<world::WorldModel> world;
  /// phrase index -> keys of the symbols that phrase expresses.
  std::vector<std::vector<std::string>> gold;
};

struct Corpus {
  GraphKind kind = GraphKind::perception;
  std::vector<TrainingExample> examples;
};

/// {"kind": "perception"|"behavior", "examples": [{"tree": "(VP ...)",
///  "world": {...}, "gold": [{"phrase": 0, "symbols": ["label:door"]}]}]}
Corpus load_corpus(const std::string& path);
Corpus corpus_from_json_text(const std::string& text);

FactorGraph make_graph(const TrainingExample& ex, GraphKind kind, const symbols::SymbolSpace& space);

/// Gold assignment as [phrase] -> sorted symbol ids in `graph`. Throws
/// CorpusError when a phrase index or symbol key does not resolve.
std::vector<std::vector<int>> gold_ids(const TrainingExample& ex, const FactorGraph& graph);

/// Per-factor feature vectors with children conditioned on the gold
/// assignment; the unit the objective and gradient sum over.
struct CompiledFactor {
  FeatureVector f_true;
  FeatureVector f_false;
  bool gold = false;
};

struct CompiledCorpus {
  std::vector<CompiledFactor> factors;
  std::size_t dim = 0;
};

/// Interns every feature reachable from the corpus into `index`.
CompiledCorpus compile(const Corpus& corpus, const symbols::SymbolSpace& space, FeatureIndex& index);

double log_likelihood(const CompiledCorpus& c, std::span<const double> w, double l2);
std::vector<double> gradient(const CompiledCorpus& c, std::span<const double> w, double l2);

struct TrainConfig {
  int iterations = 300;
  double l2 = 1e-3;
  double initial_step = 1.0;
  double armijo = 1e-4;
  double tolerance = 1e-6;
  int max_halvings = 60;
};

struct TrainResult {
  Model model;
  std::vector<double> objective_history;  // accepted iterates, starting at w = 0
  int iterations = 0;
  bool converged = false;
};

/// Batch gradient ascent with backtracking line search.
TrainResult train(const Corpus& corpus, const symbols::SymbolSpace& space, const TrainConfig& config = {});

}  // namespace apg::dcg
