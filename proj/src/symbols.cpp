#include "apg/symbols.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace apg::symbols {
namespace {

constexpr std::array<std::pair<DetectorCategory, std::string_view>, 6> kCategories{{
    {DetectorCategory::color, "color"},
    {DetectorCategory::geometry, "geometry"},
    {DetectorCategory::semantic_label, "semantic_label"},
    {DetectorCategory::bounding_box, "bounding_box"},
    {DetectorCategory::spatial_relation, "spatial_relation"},
    {DetectorCategory::pose, "pose"},
}};

constexpr std::array<std::pair<Action, std::string_view>, 4> kActions{{
    {Action::navigate, "navigate"},
    {Action::open, "open"},
    {Action::turn, "turn"},
    {Action::look, "look"},
}};

std::string key_of(const IndependentDetectorSymbol& s) {
  if (s.category == DetectorCategory::semantic_label) return "label:" + s.value;
  return std::string(to_string(s.category)) + ":" + s.value;
}

std::string target_key(const TargetRef& t) {
  std::string out = t.label.name;
  if (t.object_id) out += "#" + std::to_string(*t.object_id);
  return out;
}

void add_detector(DetectorSet& out, const IndependentDetectorSymbol& s) {
  if (s.category == DetectorCategory::semantic_label)
    out.detectors.insert(s.value);
  else
    out.detectors.insert(std::string(to_string(s.category)) + ":" + s.value);
}

}  // namespace

std::string_view to_string(DetectorCategory c) {
  for (const auto& [cat, name] : kCategories)
    if (cat == c) return name;
  return "unknown";
}

DetectorCategory parse_category(std::string_view s) {
  for (const auto& [cat, name] : kCategories)
    if (name == s) return cat;
  throw SymbolError("unknown detector category '" + std::string(s) + "'");
}

std::string_view to_string(Action a) {
  for (const auto& [act, name] : kActions)
    if (act == a) return name;
  return "unknown";
}

std::optional<Action> parse_action(std::string_view s) {
  for (const auto& [act, name] : kActions)
    if (name == s) return act;
  return std::nullopt;
}

ConditionalPairSymbol make_conditional_pair(IndependentDetectorSymbol a, IndependentDetectorSymbol b) {
  if (a.category == b.category) throw SymbolError("conditional pair needs two distinct categories");
  if (b < a) std::swap(a, b);
  return {std::move(a), std::move(b)};
}

BehaviorSymbol make_behavior(Action action, TargetRef a, std::optional<TargetRef> b) {
  if (a.label.name.empty()) throw SymbolError("behavior needs a primary target");
  if (action == Action::navigate && b) throw SymbolError("navigate takes a single target");
  return {action, std::move(a), std::move(b)};
}

std::string key(const PerceptionSymbol& s) {
  return std::visit(
      [](const auto& sym) -> std::string {
        using T = std::decay_t<decltype(sym)>;
        if constexpr (std::is_same_v<T, IndependentDetectorSymbol>) {
          return key_of(sym);
        } else if constexpr (std::is_same_v<T, ConditionalPairSymbol>) {
          return "pair:" + key_of(sym.first) + "+" + key_of(sym.second);
        } else {
          return "hier:" + sym.parent_type.name + ">" + sym.subtype.name;
        }
      },
      s);
}

std::string key(const BehaviorSymbol& s) {
  std::string out = std::string(to_string(s.action)) + "(" + target_key(s.target_a);
  if (s.target_b) out += "," + target_key(*s.target_b);
  return out + ")";
}

std::string subtype_detector_id(const SemanticLabel& parent_type, const SemanticLabel& subtype) {
  return parent_type.name + "_" + subtype.name;
}

SymbolSpace::SymbolSpace(std::set<SemanticLabel> labels, std::vector<PerceptionSymbol> perception,
                         std::vector<BehaviorSymbol> behavior, std::set<Action> actions)
    : labels_(std::move(labels)),
      actions_(std::move(actions)),
      perception_(std::move(perception)),
      behavior_(std::move(behavior)) {
  for (std::size_t i = 0; i < perception_.size(); ++i) {
    if (const auto* h = std::get_if<HierarchicalDetectorSymbol>(&perception_[i])) {
      if (!has_label(h->parent_type) || !has_label(h->subtype))
        throw SymbolError("hierarchy " + key(perception_[i]) + " references an unregistered label");
    }
    if (!perception_ids_.emplace(key(perception_[i]), static_cast<int>(i)).second)
      throw SymbolError("duplicate perception symbol " + key(perception_[i]));
  }
}

std::optional<int> SymbolSpace::perception_id(const std::string& k) const {
  auto it = perception_ids_.find(k);
  if (it == perception_ids_.end()) return std::nullopt;
  return it->second;
}

std::vector<HierarchicalDetectorSymbol> SymbolSpace::subtypes_of(const SemanticLabel& parent) const {
  std::vector<HierarchicalDetectorSymbol> out;
  for (const auto& s : perception_)
    if (const auto* h = std::get_if<HierarchicalDetectorSymbol>(&s); h && h->parent_type == parent) out.push_back(*h);
  return out;
}

SymbolSpace build_symbol_space(const std::set<SemanticLabel>& labels,
                               const std::set<std::pair<SemanticLabel, SemanticLabel>>& hierarchy_pairs,
                               const std::set<Action>& actions,
                               const std::vector<IndependentDetectorSymbol>& placeholders) {
  for (const auto& l : labels)
    if (l.name.empty()) throw SymbolError("empty semantic label");

  std::vector<PerceptionSymbol> perception;
  for (const auto& l : labels) perception.emplace_back(IndependentDetectorSymbol{DetectorCategory::semantic_label, l.name});
  for (const auto& [parent, sub] : hierarchy_pairs) {
    if (!labels.count(parent) || !labels.count(sub))
      throw SymbolError("hierarchy pair (" + parent.name + "," + sub.name + ") references an unregistered label");
    if (parent == sub) throw SymbolError("hierarchy pair (" + parent.name + "," + sub.name + ") has parent == subtype");
    perception.emplace_back(HierarchicalDetectorSymbol{parent, sub});
  }
  auto extra = placeholders;
  std::sort(extra.begin(), extra.end());
  for (const auto& p : extra) {
    if (p.category == DetectorCategory::semantic_label)
      throw SymbolError("semantic labels belong in the label list, not placeholders");
    perception.emplace_back(p);
  }

  std::vector<BehaviorSymbol> behavior;
  for (Action a : actions)
    for (const auto& l : labels) behavior.push_back(make_behavior(a, TargetRef{l, std::nullopt}));

  return SymbolSpace(labels, std::move(perception), std::move(behavior), actions);
}

SymbolSpace symbol_space_from_json_text(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  std::set<SemanticLabel> labels;
  for (const auto& l : j.at("labels")) labels.insert(SemanticLabel{l.get<std::string>()});
  std::set<std::pair<SemanticLabel, SemanticLabel>> pairs;
  for (const auto& p : j.value("hierarchy", nlohmann::json::array())) {
    if (!p.is_array() || p.size() != 2) throw SymbolError("hierarchy entries must be [parent, subtype]");
    pairs.emplace(SemanticLabel{p[0].get<std::string>()}, SemanticLabel{p[1].get<std::string>()});
  }
  std::set<Action> actions;
  for (const auto& a : j.value("actions", nlohmann::json::array())) {
    auto act = parse_action(a.get<std::string>());
    if (!act) throw SymbolError("unknown action '" + a.get<std::string>() + "'");
    actions.insert(*act);
  }
  std::vector<IndependentDetectorSymbol> placeholders;
  for (const auto& p : j.value("placeholders", nlohmann::json::array()))
    placeholders.push_back({parse_category(p.at("category").get<std::string>()), p.at("value").get<std::string>()});
  return build_symbol_space(labels, pairs, actions, placeholders);
}

SymbolSpace load_symbol_space(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return symbol_space_from_json_text(ss.str());
}

DetectorSet detectors_from_groundings(std::span<const PerceptionSymbol> expressed) {
  DetectorSet out;
  for (const auto& s : expressed) {
    std::visit(
        [&](const auto& sym) {
          using T = std::decay_t<decltype(sym)>;
          if constexpr (std::is_same_v<T, IndependentDetectorSymbol>) {
            add_detector(out, sym);
          } else if constexpr (std::is_same_v<T, ConditionalPairSymbol>) {
            add_detector(out, sym.first);
            add_detector(out, sym.second);
          } else {
            HierarchyLink link{sym.parent_type, sym.subtype};
            out.detectors.insert(link.parent_detector());
            out.detectors.insert(link.child_detector());
            out.links.insert(std::move(link));
          }
        },
        s);
  }
  return out;
}

}  // namespace apg::symbols
