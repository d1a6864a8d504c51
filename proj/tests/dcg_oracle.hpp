// Test-only reference computations for the DCG module. Nothing here calls
// infer(), log_likelihood() or gradient(); the oracles recompute from the
// feature templates up.
#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "apg/dcg.hpp"

namespace apg::oracle {

inline double weight_of(const dcg::Model& m, const std::string& name) {
  auto i = m.index.find(name);
  return i ? m.weights[*i] : 0.0;
}

inline double score(const dcg::Model& m, const std::vector<std::string>& names) {
  double s = 0;
  for (const auto& n : names) s += weight_of(m, n);
  return s;
}

// Children-first order by plain recursion over the tree.
inline void postorder(const parse::Phrase& p, std::vector<int>& out) {
  for (const auto& c : p.children) postorder(c, out);
  out.push_back(p.index);
}

struct EnumerationResult {
  std::vector<std::vector<int>> expressed;
  double log_objective = 0;
};

/// Exhaustive search: for every phrase (children first) try all 2^|symbols|
/// assignments of its correspondence variables and keep the one with the
/// largest product of factor probabilities, conditioning on the children's
/// chosen expressions. Among equal products the one with fewest expressed
/// symbols wins, then the lexicographically smallest mask.
inline EnumerationResult enumerate(const dcg::FactorGraph& g, const dcg::Model& m) {
  const std::size_t n_sym = g.symbol_count();
  EnumerationResult r;
  r.expressed.assign(g.phrase_count(), {});
  std::vector<int> order;
  postorder(g.tree().root(), order);
  for (int i : order) {
    std::set<int> child_ids;
    for (const auto& c : g.tree().phrase(i).children)
      for (int id : r.expressed[static_cast<std::size_t>(c.index)]) child_ids.insert(id);
    std::vector<dcg::GroundingSymbol> children;
    for (int id : child_ids) children.push_back(g.symbols()[static_cast<std::size_t>(id)]);
    const auto ctx = dcg::phrase_context(g.tree(), i);

    std::vector<double> p_true(n_sym);
    for (std::size_t j = 0; j < n_sym; ++j) {
      const double et = std::exp(score(m, dcg::feature_names(ctx, g.symbols()[j], true, children, g.feature_world())));
      const double ef = std::exp(score(m, dcg::feature_names(ctx, g.symbols()[j], false, children, g.feature_world())));
      p_true[j] = et / (et + ef);
    }
    double best = -1;
    unsigned best_mask = 0;
    int best_bits = 0;
    for (unsigned mask = 0; mask < (1u << n_sym); ++mask) {
      double prod = 1;
      for (std::size_t j = 0; j < n_sym; ++j) prod *= (mask >> j & 1u) ? p_true[j] : 1 - p_true[j];
      const int bits = __builtin_popcount(mask);
      if (prod > best || (prod == best && bits < best_bits)) {
        best = prod;
        best_mask = mask;
        best_bits = bits;
      }
    }
    for (std::size_t j = 0; j < n_sym; ++j)
      if (best_mask >> j & 1u) r.expressed[static_cast<std::size_t>(i)].push_back(static_cast<int>(j));
    r.log_objective += std::log(best);
  }
  return r;
}

/// Interns every feature any assignment of `g` could produce: all phrases,
/// symbols, phi values and child-expression subsets.
inline void intern_all(const dcg::FactorGraph& g, dcg::FeatureIndex& index) {
  const std::size_t n_sym = g.symbol_count();
  for (std::size_t i = 0; i < g.phrase_count(); ++i) {
    const auto ctx = dcg::phrase_context(g.tree(), static_cast<int>(i));
    const unsigned subsets = ctx.has_children ? (1u << n_sym) : 1u;
    for (unsigned mask = 0; mask < subsets; ++mask) {
      std::vector<dcg::GroundingSymbol> children;
      for (std::size_t j = 0; j < n_sym; ++j)
        if (mask >> j & 1u) children.push_back(g.symbols()[j]);
      for (const auto& s : g.symbols())
        for (bool phi : {false, true})
          for (const auto& n : dcg::feature_names(ctx, s, phi, children, g.feature_world())) index.intern(n);
    }
  }
}

/// Random tree over a small grammar with `phrases` phrase nodes.
inline std::string random_tree_text(std::mt19937& rng, int phrases) {
  static const std::vector<std::pair<std::string, std::string>> words{
      {"VB", "open"}, {"VB", "drive"}, {"DT", "the"}, {"NN", "door"}, {"NN", "box"}, {"IN", "of"}, {"TO", "to"}};
  static const std::vector<std::string> labels{"VP", "NP", "PP"};
  std::function<std::string(int)> build = [&](int n) -> std::string {
    std::string out = "(" + labels[rng() % labels.size()];
    const auto& w = words[rng() % words.size()];
    out += " (" + w.first + " " + w.second + ")";
    int remaining = n - 1;
    while (remaining > 0) {
      const int take = 1 + static_cast<int>(rng() % static_cast<unsigned>(remaining));
      out += " " + build(take);
      remaining -= take;
    }
    return out + ")";
  };
  return build(phrases);
}

/// Central finite-difference derivative of f along coordinate k.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f, std::vector<double> w,
                                  std::size_t k, double h) {
  const double x = w[k];
  w[k] = x + h;
  const double up = f(w);
  w[k] = x - h;
  const double down = f(w);
  return (up - down) / (2 * h);
}

/// Regularized log-likelihood of one example, summed directly from the
/// feature templates with children conditioned on the gold expressions.
inline double example_log_likelihood(const dcg::TrainingExample& ex, dcg::GraphKind kind,
                                     const symbols::SymbolSpace& space, const dcg::Model& m, double l2) {
  const auto g = dcg::make_graph(ex, kind, space);
  std::vector<std::set<std::string>> gold(g.phrase_count());
  for (std::size_t i = 0; i < ex.gold.size(); ++i) gold[i].insert(ex.gold[i].begin(), ex.gold[i].end());
  double total = 0;
  for (std::size_t i = 0; i < g.phrase_count(); ++i) {
    std::vector<dcg::GroundingSymbol> children;
    std::set<std::string> seen;
    for (const auto& c : g.tree().phrase(static_cast<int>(i)).children)
      for (const auto& k : gold[static_cast<std::size_t>(c.index)]) seen.insert(k);
    // Children in symbol-id order, as the graph would list them.
    for (const auto& s : g.symbols())
      if (seen.count(dcg::key(s))) children.push_back(s);
    const auto ctx = dcg::phrase_context(g.tree(), static_cast<int>(i));
    for (const auto& s : g.symbols()) {
      const double st = score(m, dcg::feature_names(ctx, s, true, children, g.feature_world()));
      const double sf = score(m, dcg::feature_names(ctx, s, false, children, g.feature_world()));
      const bool is_gold = gold[i].count(dcg::key(s)) > 0;
      total += std::log(std::exp(is_gold ? st : sf) / (std::exp(st) + std::exp(sf)));
    }
  }
  double sq = 0;
  for (double v : m.weights) sq += v * v;
  return total - 0.5 * l2 * sq;
}

}  // namespace apg::oracle
