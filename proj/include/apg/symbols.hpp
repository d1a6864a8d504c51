// Grounding symbol spaces: perception detector symbols (independent,
// conditional pairs, one-level hierarchies) and behavior symbols.
#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace apg::symbols {

class SymbolError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct SemanticLabel {
  std::string name;
  auto operator<=>(const SemanticLabel&) const = default;
};

enum class DetectorCategory { color, geometry, semantic_label, bounding_box, spatial_relation, pose };

std::string_view to_string(DetectorCategory c);
DetectorCategory parse_category(std::string_view s);

// Only semantic_label carries detector semantics; the other categories are
// placeholders that can appear in corpora and symbol files.
struct IndependentDetectorSymbol {
  DetectorCategory category = DetectorCategory::semantic_label;
  std::string value;
  auto operator<=>(const IndependentDetectorSymbol&) const = default;
};

struct ConditionalPairSymbol {
  IndependentDetectorSymbol first;
  IndependentDetectorSymbol second;
  auto operator<=>(const ConditionalPairSymbol&) const = default;
};

/// A subtype detector that only operates as a constituent of its parent type
/// (e.g. the handle of a door). One level deep by construction.
struct HierarchicalDetectorSymbol {
  SemanticLabel parent_type;
  SemanticLabel subtype;
  auto operator<=>(const HierarchicalDetectorSymbol&) const = default;
};

using PerceptionSymbol = std::variant<IndependentDetectorSymbol, ConditionalPairSymbol, HierarchicalDetectorSymbol>;

ConditionalPairSymbol make_conditional_pair(IndependentDetectorSymbol a, IndependentDetectorSymbol b);

enum class Action { navigate, open, turn, look };

std::string_view to_string(Action a);
std::optional<Action> parse_action(std::string_view s);

/// Either a bare semantic label or a concrete world object of that label.
struct TargetRef {
  SemanticLabel label;
  std::optional<int> object_id;
  auto operator<=>(const TargetRef&) const = default;
};

struct BehaviorSymbol {
  Action action = Action::navigate;
  TargetRef target_a;
  std::optional<TargetRef> target_b;
  auto operator<=>(const BehaviorSymbol&) const = default;
};

/// Throws SymbolError when `navigate` is given a second target.
BehaviorSymbol make_behavior(Action action, TargetRef a, std::optional<TargetRef> b = std::nullopt);

/// Stable text keys used in corpus and model files:
///   label:door   color:red   hier:door>handle   pair:color:red+geometry:box
///   navigate(door)   open(door#3)
std::string key(const PerceptionSymbol& s);
std::string key(const BehaviorSymbol& s);

/// Name of the detector that finds `subtype` parts of `parent_type` objects.
std::string subtype_detector_id(const SemanticLabel& parent_type, const SemanticLabel& subtype);

/// Immutable once built. Perception symbol ids and behavior symbol ids are
/// dense, each starting at 0, in sorted order.
class SymbolSpace {
public:
  SymbolSpace() = default;
  SymbolSpace(std::set<SemanticLabel> labels, std::vector<PerceptionSymbol> perception,
              std::vector<BehaviorSymbol> behavior, std::set<Action> actions);

  const std::set<SemanticLabel>& labels() const noexcept { return labels_; }
  const std::set<Action>& actions() const noexcept { return actions_; }
  const std::vector<PerceptionSymbol>& perception_symbols() const noexcept { return perception_; }
  const std::vector<BehaviorSymbol>& behavior_symbols() const noexcept { return behavior_; }
  bool has_label(const SemanticLabel& l) const { return labels_.count(l) > 0; }

  std::optional<int> perception_id(const std::string& key) const;
  /// Hierarchy pairs whose parent type is `parent`.
  std::vector<HierarchicalDetectorSymbol> subtypes_of(const SemanticLabel& parent) const;

private:
  std::set<SemanticLabel> labels_;
  std::set<Action> actions_;
  std::vector<PerceptionSymbol> perception_;
  std::vector<BehaviorSymbol> behavior_;
  std::map<std::string, int> perception_ids_;
};

SymbolSpace build_symbol_space(const std::set<SemanticLabel>& labels,
                               const std::set<std::pair<SemanticLabel, SemanticLabel>>& hierarchy_pairs,
                               const std::set<Action>& actions,
                               const std::vector<IndependentDetectorSymbol>& placeholders = {});

/// {"labels": [...], "hierarchy": [["door","handle"]], "actions": [...],
///  "placeholders": [{"category": "color", "value": "red"}]}
SymbolSpace load_symbol_space(const std::string& path);
SymbolSpace symbol_space_from_json_text(const std::string& text);

struct HierarchyLink {
  SemanticLabel parent_type;
  SemanticLabel subtype;
  std::string parent_detector() const { return parent_type.name; }
  std::string child_detector() const { return subtype_detector_id(parent_type, subtype); }
  auto operator<=>(const HierarchyLink&) const = default;
};

/// P*: detectors to run, plus the parent->subtype links between them.
struct DetectorSet {
  std::set<std::string> detectors;
  std::set<HierarchyLink> links;
  bool operator==(const DetectorSet&) const = default;
};

DetectorSet detectors_from_groundings(std::span<const PerceptionSymbol> expressed);

}  // namespace apg::symbols
