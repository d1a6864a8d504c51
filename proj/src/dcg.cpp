#include "apg/dcg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace apg::dcg {

using symbols::BehaviorSymbol;
using symbols::ConditionalPairSymbol;
using symbols::DetectorCategory;
using symbols::HierarchicalDetectorSymbol;
using symbols::IndependentDetectorSymbol;
using symbols::PerceptionSymbol;

TrainingError::TrainingError(const std::string& what, int iteration)
    : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"), iteration_(iteration) {}

std::string key(const GroundingSymbol& s) {
  return std::visit([](const auto& sym) { return symbols::key(sym); }, s);
}

std::string_view to_string(GraphKind k) { return k == GraphKind::perception ? "perception" : "behavior"; }

GraphKind parse_graph_kind(std::string_view s) {
  if (s == "perception") return GraphKind::perception;
  if (s == "behavior") return GraphKind::behavior;
  throw CorpusError("unknown graph kind '" + std::string(s) + "'");
}

std::optional<std::uint32_t> FeatureIndex::find(std::string_view name) const {
  auto it = ids_.find(std::string(name));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t FeatureIndex::intern(const std::string& name) {
  auto [it, inserted] = ids_.emplace(name, static_cast<std::uint32_t>(names_.size()));
  if (inserted) names_.push_back(name);
  return it->second;
}

double dot(const FeatureVector& f, std::span<const double> w) {
  double s = 0;
  for (auto i : f.indices) s += w[i];
  return s;
}

double Model::weight(std::string_view name) const {
  auto i = index.find(name);
  return i ? weights[*i] : 0.0;
}

// ---------------------------------------------------------------------------
// Model files

std::string model_to_json_text(const Model& m) {
  nlohmann::json weights = nlohmann::json::object();
  for (std::uint32_t i = 0; i < m.index.size(); ++i) weights[m.index.name(i)] = m.weights[i];
  nlohmann::json j = {{"template_version", kTemplateVersion}, {"kind", to_string(m.kind)}, {"weights", weights}};
  return j.dump(1);
}

Model model_from_json_text(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.at("template_version").get<std::string>() != kTemplateVersion)
    throw CorpusError("model was trained with feature templates '" + j.at("template_version").get<std::string>() +
                      "', expected '" + std::string(kTemplateVersion) + "'");
  Model m;
  m.kind = parse_graph_kind(j.at("kind").get<std::string>());
  for (const auto& [name, w] : j.at("weights").items()) {
    m.index.intern(name);
    const double v = w.get<double>();
    if (!std::isfinite(v)) throw CorpusError("non-finite weight for " + name);
    m.weights.push_back(v);
  }
  return m;
}

void save_model(const Model& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << model_to_json_text(m) << '\n';
}

Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json_text(ss.str());
}

// ---------------------------------------------------------------------------
// Graphs

FactorGraph::FactorGraph(GraphKind kind, parse::ParseTree tree, std::vector<GroundingSymbol> symbols,
                         std::optional<world::WorldModel> world)
    : kind_(kind), tree_(std::move(tree)), symbols_(std::move(symbols)), world_(std::move(world)) {
  for (std::size_t i = 0; i < symbols_.size(); ++i) ids_.emplace(key(symbols_[i]), static_cast<int>(i));
}

FactorGraph FactorGraph::perception(parse::ParseTree tree, const symbols::SymbolSpace& space,
                                    std::optional<world::WorldModel> world) {
  std::vector<GroundingSymbol> syms(space.perception_symbols().begin(), space.perception_symbols().end());
  return FactorGraph(GraphKind::perception, std::move(tree), std::move(syms), std::move(world));
}

FactorGraph FactorGraph::behavior(parse::ParseTree tree, const symbols::SymbolSpace& space, world::WorldModel world) {
  std::vector<GroundingSymbol> syms;
  for (auto action : space.actions())
    for (const auto& o : world.objects())
      syms.emplace_back(symbols::make_behavior(action, symbols::TargetRef{symbols::SemanticLabel{o.label}, o.id}));
  return FactorGraph(GraphKind::behavior, std::move(tree), std::move(syms), std::move(world));
}

std::optional<int> FactorGraph::symbol_id(const std::string& k) const {
  auto it = ids_.find(k);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const world::WorldModel* FactorGraph::feature_world() const {
  if (kind_ == GraphKind::perception || !world_) return nullptr;
  return &*world_;
}

// ---------------------------------------------------------------------------
// Feature templates

PhraseContext phrase_context(const parse::ParseTree& tree, int phrase_index) {
  const parse::Phrase& p = tree.phrase(phrase_index);
  PhraseContext ctx;
  ctx.has_children = !p.children.empty();
  std::set<std::string> all, conj;
  all.insert("phrase=" + p.label);
  conj.insert("phrase=" + p.label);
  for (const auto& w : p.words) {
    all.insert("word=" + w.text);
    conj.insert("word=" + w.text);
    all.insert("tag=" + w.tag.str());
  }
  if (auto verb = parse::governing_verb(tree, phrase_index); !verb.empty()) {
    all.insert("verb=" + verb);
    conj.insert("verb=" + verb);
  }
  all.insert("bias");
  ctx.all.assign(all.begin(), all.end());
  ctx.conjunctive.assign(conj.begin(), conj.end());
  return ctx;
}

namespace {

std::string independent_token(const IndependentDetectorSymbol& s) {
  if (s.category == DetectorCategory::semantic_label) return s.value;
  return std::string(symbols::to_string(s.category)) + ":" + s.value;
}

std::vector<std::string> symbol_descriptors(const GroundingSymbol& g, const world::WorldModel* world) {
  std::vector<std::string> out;
  if (const auto* ps = std::get_if<PerceptionSymbol>(&g)) {
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, IndependentDetectorSymbol>) {
            out.push_back("kind=" + std::string(symbols::to_string(s.category)));
            if (s.category == DetectorCategory::semantic_label)
              out.push_back("label=" + s.value);
            else
              out.push_back(std::string(symbols::to_string(s.category)) + "=" + s.value);
          } else if constexpr (std::is_same_v<T, ConditionalPairSymbol>) {
            out.push_back("kind=conditional_pair");
            out.push_back("pair=" + independent_token(s.first) + "+" + independent_token(s.second));
          } else {
            out.push_back("kind=hierarchical");
            out.push_back("hier_parent=" + s.parent_type.name);
            out.push_back("hier_subtype=" + s.subtype.name);
          }
        },
        *ps);
    return out;
  }
  const auto& b = std::get<BehaviorSymbol>(g);
  out.push_back("kind=behavior");
  out.push_back("action=" + std::string(symbols::to_string(b.action)));
  out.push_back("target=" + b.target_a.label.name);
  if (b.target_b) out.push_back("target_b=" + b.target_b->label.name);
  if (world && b.target_a.object_id) {
    if (const auto* o = world->find(*b.target_a.object_id); o && o->parent) out.push_back("target_is_part");
  }
  return out;
}

std::string child_token(const GroundingSymbol& g) {
  if (const auto* ps = std::get_if<PerceptionSymbol>(&g)) {
    return std::visit(
        [](const auto& s) -> std::string {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, IndependentDetectorSymbol>) {
            return "child_has=" + independent_token(s);
          } else if constexpr (std::is_same_v<T, ConditionalPairSymbol>) {
            return "child_has=pair:" + independent_token(s.first) + "+" + independent_token(s.second);
          } else {
            return "child_has=hier:" + s.parent_type.name + ">" + s.subtype.name;
          }
        },
        *ps);
  }
  const auto& b = std::get<BehaviorSymbol>(g);
  return "child_has=" + std::string(symbols::to_string(b.action)) + ":" + b.target_a.label.name;
}

bool is_label(const GroundingSymbol& g, const std::string& label) {
  const auto* ps = std::get_if<PerceptionSymbol>(&g);
  if (!ps) return false;
  const auto* s = std::get_if<IndependentDetectorSymbol>(ps);
  return s && s->category == DetectorCategory::semantic_label && s->value == label;
}

// Relations between the scored symbol and what the children expressed.
std::vector<std::string> child_relations(const GroundingSymbol& g, std::span<const GroundingSymbol> children) {
  std::set<std::string> out;
  for (const auto& c : children) {
    if (c == g) out.insert("child_match=self");
    if (const auto* b = std::get_if<BehaviorSymbol>(&g)) {
      const auto* cb = std::get_if<BehaviorSymbol>(&c);
      if (cb && cb->target_a == b->target_a) out.insert("child_match=target");
      continue;
    }
    const auto& ps = std::get<PerceptionSymbol>(g);
    if (const auto* h = std::get_if<HierarchicalDetectorSymbol>(&ps)) {
      if (is_label(c, h->parent_type.name)) out.insert("child_match=parent");
      if (is_label(c, h->subtype.name)) out.insert("child_match=subtype");
    } else if (const auto* s = std::get_if<IndependentDetectorSymbol>(&ps);
               s && s->category == DetectorCategory::semantic_label) {
      const auto* cps = std::get_if<PerceptionSymbol>(&c);
      const auto* ch = cps ? std::get_if<HierarchicalDetectorSymbol>(cps) : nullptr;
      if (ch && ch->parent_type.name == s->value) out.insert("child_match=as_parent");
    }
  }
  return {out.begin(), out.end()};
}

}  // namespace

std::vector<std::string> feature_names(const PhraseContext& phrase, const GroundingSymbol& symbol, bool phi,
                                       std::span<const GroundingSymbol> child_expressed,
                                       const world::WorldModel* world) {
  const std::string suffix = phi ? "&phi=1" : "&phi=0";
  const auto sym = symbol_descriptors(symbol, world);

  std::vector<std::string> child;
  if (!phrase.has_children) {
    child.push_back("child=leaf");
  } else if (child_expressed.empty()) {
    child.push_back("child=none");
  } else {
    std::set<std::string> toks;
    for (const auto& c : child_expressed) toks.insert(child_token(c));
    child.assign(toks.begin(), toks.end());
    for (auto& r : child_relations(symbol, child_expressed)) child.push_back(std::move(r));
  }

  std::vector<std::string> out;
  out.reserve(sym.size() * (1 + phrase.all.size() + child.size() * (1 + phrase.conjunctive.size())));
  for (const auto& s : sym) {
    out.push_back(s + suffix);
    for (const auto& p : phrase.all) out.push_back(p + "&" + s + suffix);
    for (const auto& c : child) {
      out.push_back(c + "&" + s + suffix);
      for (const auto& p : phrase.conjunctive) out.push_back(p + "&" + s + "&" + c + suffix);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

FeatureVector encode(std::span<const std::string> names, const FeatureIndex& index) {
  FeatureVector f;
  f.dim = index.size();
  f.indices.reserve(names.size());
  for (const auto& n : names)
    if (auto i = index.find(n)) f.indices.push_back(*i);
  std::sort(f.indices.begin(), f.indices.end());
  f.indices.erase(std::unique(f.indices.begin(), f.indices.end()), f.indices.end());
  return f;
}

FeatureVector featurize(const PhraseContext& phrase, const GroundingSymbol& symbol, bool phi,
                        std::span<const GroundingSymbol> child_expressed, const world::WorldModel* world,
                        const FeatureIndex& index) {
  return encode(feature_names(phrase, symbol, phi, child_expressed, world), index);
}

double factor_prob(const FeatureVector& f_true, const FeatureVector& f_false, std::span<const double> w) {
  if (f_true.dim > w.size() || f_false.dim > w.size()) throw NumericError("feature dimension exceeds weight vector");
  const double diff = dot(f_true, w) - dot(f_false, w);
  if (!std::isfinite(diff)) throw NumericError("non-finite factor score");
  // Logistic of the score difference, evaluated on the stable side.
  if (diff >= 0) return 1.0 / (1.0 + std::exp(-diff));
  const double e = std::exp(diff);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Inference

std::vector<int> child_expressed_ids(const parse::ParseTree& tree, int phrase_index,
                                     const std::vector<std::vector<int>>& expressed) {
  std::set<int> ids;
  for (const auto& c : tree.phrase(phrase_index).children) {
    const auto& e = expressed.at(static_cast<std::size_t>(c.index));
    ids.insert(e.begin(), e.end());
  }
  return {ids.begin(), ids.end()};
}

namespace {

std::vector<GroundingSymbol> resolve(const FactorGraph& g, const std::vector<int>& ids) {
  std::vector<GroundingSymbol> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(g.symbols()[static_cast<std::size_t>(id)]);
  return out;
}

// log(exp(a) + exp(b))
double log_sum_exp(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

Assignment infer(const FactorGraph& graph, const Model& model) {
  const std::size_t n_phrases = graph.phrase_count();
  const std::size_t n_symbols = graph.symbol_count();
  Assignment a;
  a.phi.assign(n_phrases, std::vector<bool>(n_symbols, false));
  a.p_true.assign(n_phrases, std::vector<double>(n_symbols, 0.5));
  a.expressed.assign(n_phrases, {});

  const world::WorldModel* world = graph.feature_world();
  for (const parse::Phrase* phrase : parse::phrases_bottom_up(graph.tree())) {
    const auto i = static_cast<std::size_t>(phrase->index);
    const PhraseContext ctx = phrase_context(graph.tree(), phrase->index);
    const auto children = resolve(graph, child_expressed_ids(graph.tree(), phrase->index, a.expressed));
    for (std::size_t j = 0; j < n_symbols; ++j) {
      const auto& sym = graph.symbols()[j];
      const FeatureVector ft = featurize(ctx, sym, true, children, world, model.index);
      const FeatureVector ff = featurize(ctx, sym, false, children, world, model.index);
      const double st = dot(ft, model.weights);
      const double sf = dot(ff, model.weights);
      // Strict comparison: equal scores leave the symbol unexpressed.
      const bool phi = st > sf;
      a.p_true[i][j] = factor_prob(ft, ff, model.weights);
      a.phi[i][j] = phi;
      a.log_score += (phi ? st : sf) - log_sum_exp(st, sf);
      if (phi) a.expressed[i].push_back(static_cast<int>(j));
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// Corpora

namespace {

TrainingExample example_from_json(const nlohmann::json& j, GraphKind kind, std::size_t n) {
  const std::string where = "example " + std::to_string(n);
  TrainingExample ex{parse::load_parse_tree(j.at("tree").get<std::string>()), std::nullopt, {}};
  if (j.contains("world") && !j.at("world").is_null()) {
    if (kind == GraphKind::perception) throw CorpusError(where + ": perception examples must not carry a world");
    ex.world = world::world_from_json(j.at("world"));
  } else if (kind == GraphKind::behavior) {
    throw CorpusError(where + ": behavior examples need a world");
  }
  ex.gold.assign(ex.tree.phrase_count(), {});
  for (const auto& g : j.at("gold")) {
    const int phrase = g.at("phrase").get<int>();
    if (phrase < 0 || static_cast<std::size_t>(phrase) >= ex.gold.size())
      throw CorpusError(where + ": gold references phrase " + std::to_string(phrase));
    for (const auto& s : g.at("symbols")) ex.gold[static_cast<std::size_t>(phrase)].push_back(s.get<std::string>());
  }
  return ex;
}

}  // namespace

Corpus corpus_from_json_text(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  Corpus c;
  c.kind = parse_graph_kind(j.at("kind").get<std::string>());
  std::size_t n = 0;
  for (const auto& e : j.at("examples")) c.examples.push_back(example_from_json(e, c.kind, n++));
  return c;
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return corpus_from_json_text(ss.str());
}

FactorGraph make_graph(const TrainingExample& ex, GraphKind kind, const symbols::SymbolSpace& space) {
  if (kind == GraphKind::perception) return FactorGraph::perception(ex.tree, space);
  if (!ex.world) throw CorpusError("behavior example without a world");
  return FactorGraph::behavior(ex.tree, space, *ex.world);
}

std::vector<std::vector<int>> gold_ids(const TrainingExample& ex, const FactorGraph& graph) {
  if (ex.gold.size() != graph.phrase_count()) throw CorpusError("gold does not cover the parse tree's phrases");
  std::vector<std::vector<int>> out(ex.gold.size());
  for (std::size_t i = 0; i < ex.gold.size(); ++i) {
    std::set<int> ids;
    for (const auto& k : ex.gold[i]) {
      auto id = graph.symbol_id(k);
      if (!id) throw CorpusError("gold symbol '" + k + "' is not in the graph for \"" + ex.tree.instruction() + "\"");
      ids.insert(*id);
    }
    out[i].assign(ids.begin(), ids.end());
  }
  return out;
}

CompiledCorpus compile(const Corpus& corpus, const symbols::SymbolSpace& space, FeatureIndex& index) {
  struct Pending {
    std::vector<std::string> t, f;
    bool gold;
  };
  std::vector<Pending> pending;
  for (const auto& ex : corpus.examples) {
    const FactorGraph graph = make_graph(ex, corpus.kind, space);
    const auto gold = gold_ids(ex, graph);
    const world::WorldModel* world = graph.feature_world();
    for (std::size_t i = 0; i < graph.phrase_count(); ++i) {
      const int pi = static_cast<int>(i);
      const PhraseContext ctx = phrase_context(graph.tree(), pi);
      const auto children = resolve(graph, child_expressed_ids(graph.tree(), pi, gold));
      for (std::size_t j = 0; j < graph.symbol_count(); ++j) {
        const auto& sym = graph.symbols()[j];
        Pending p{feature_names(ctx, sym, true, children, world), feature_names(ctx, sym, false, children, world),
                  std::binary_search(gold[i].begin(), gold[i].end(), static_cast<int>(j))};
        for (const auto& n : p.t) index.intern(n);
        for (const auto& n : p.f) index.intern(n);
        pending.push_back(std::move(p));
      }
    }
  }
  CompiledCorpus out;
  out.dim = index.size();
  out.factors.reserve(pending.size());
  for (const auto& p : pending) {
    CompiledFactor f{encode(p.t, index), encode(p.f, index), p.gold};
    f.f_true.dim = f.f_false.dim = out.dim;
    out.factors.push_back(std::move(f));
  }
  return out;
}

double log_likelihood(const CompiledCorpus& c, std::span<const double> w, double l2) {
  double ll = 0;
  for (const auto& f : c.factors) {
    const double st = dot(f.f_true, w);
    const double sf = dot(f.f_false, w);
    ll += (f.gold ? st : sf) - log_sum_exp(st, sf);
  }
  double sq = 0;
  for (double v : w) sq += v * v;
  return ll - 0.5 * l2 * sq;
}

std::vector<double> gradient(const CompiledCorpus& c, std::span<const double> w, double l2) {
  std::vector<double> g(w.size(), 0.0);
  for (const auto& f : c.factors) {
    const double p = factor_prob(f.f_true, f.f_false, w);
    // d/dw log p(gold) = f_gold - E[f]
    const double coef_true = (f.gold ? 1.0 : 0.0) - p;
    for (auto i : f.f_true.indices) g[i] += coef_true;
    for (auto i : f.f_false.indices) g[i] -= coef_true;
  }
  for (std::size_t i = 0; i < w.size(); ++i) g[i] -= l2 * w[i];
  return g;
}

TrainResult train(const Corpus& corpus, const symbols::SymbolSpace& space, const TrainConfig& config) {
  if (corpus.examples.empty()) throw TrainingError("empty corpus", 0);
  TrainResult result;
  result.model.kind = corpus.kind;
  const CompiledCorpus compiled = compile(corpus, space, result.model.index);
  std::vector<double> w(compiled.dim, 0.0);

  double objective = log_likelihood(compiled, w, config.l2);
  result.objective_history.push_back(objective);
  double step = config.initial_step;
  for (int iter = 1; iter <= config.iterations; ++iter) {
    const auto g = gradient(compiled, w, config.l2);
    double g_sq = 0, g_max = 0;
    for (double v : g) {
      g_sq += v * v;
      g_max = std::max(g_max, std::abs(v));
    }
    if (!std::isfinite(g_sq)) throw TrainingError("gradient diverged", iter);
    if (g_max < config.tolerance) {
      result.converged = true;
      break;
    }

    std::vector<double> trial(w.size());
    bool accepted = false;
    for (int h = 0; h < config.max_halvings; ++h, step *= 0.5) {
      for (std::size_t i = 0; i < w.size(); ++i) trial[i] = w[i] + step * g[i];
      const double value = log_likelihood(compiled, trial, config.l2);
      if (std::isnan(value)) throw TrainingError("objective is NaN", iter);
      if (value >= objective + config.armijo * step * g_sq) {
        w.swap(trial);
        objective = value;
        accepted = true;
        break;
      }
    }
    result.iterations = iter;
    if (!accepted) {
      // No ascent step of any representable size: at the optimum to precision.
      result.converged = true;
      break;
    }
    result.objective_history.push_back(objective);
    step *= 2.0;
  }
  result.model.weights = std::move(w);
  return result;
}

}  // namespace apg::dcg
