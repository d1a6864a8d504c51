// Constituency parse trees for instructions: PTB-style bracketed reader,
// writer, traversal, and lexicon checks.
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace apg::parse {

/// Thrown for malformed bracketed text. `offset()` is the byte position in
/// the input where the problem was detected.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, std::size_t offset);
  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

/// Part-of-speech tag. Any non-empty uppercase-alphabetic string is valid;
/// the lexicon decides which ones a corpus actually uses.
class PosTag {
public:
  explicit PosTag(std::string tag);
  const std::string& str() const noexcept { return tag_; }
  static bool is_valid(std::string_view tag);
  auto operator<=>(const PosTag&) const = default;

private:
  std::string tag_;
};

struct Word {
  std::string text;  // lowercase
  PosTag tag;
};

/// A non-terminal of the parse. Words and child phrases keep their relative
/// order through `layout`: the k-th `Item::word` entry refers to words[k],
/// the k-th `Item::child` entry to children[k].
struct Phrase {
  enum class Item { word, child };

  std::string label;
  std::vector<Word> words;
  std::vector<Phrase> children;
  std::vector<Item> layout;
  int index = -1;
};

/// Immutable after construction.
class ParseTree {
public:
  ParseTree(Phrase root, std::string instruction);
  ParseTree(const ParseTree& other);
  ParseTree(ParseTree&& other) noexcept;
  ParseTree& operator=(const ParseTree& other);
  ParseTree& operator=(ParseTree&& other) noexcept;
  ~ParseTree() = default;

  const Phrase& root() const noexcept { return root_; }
  const std::string& instruction() const noexcept { return instruction_; }
  std::size_t phrase_count() const noexcept { return by_index_.size(); }

  /// Phrase with the given pre-order index.
  const Phrase& phrase(int index) const;
  /// Index of the parent phrase, or nullopt for the root.
  std::optional<int> parent(int index) const;
  /// Leaf words left to right.
  std::vector<std::string> tokens() const;

private:
  void link();

  Phrase root_;
  std::string instruction_;
  std::vector<const Phrase*> by_index_;
  std::vector<int> parent_;
};

/// Reads one bracketed tree, e.g. "(VP (VB open) (NP (DT the) (NN door)))".
/// An unlabeled outer wrapper "( (VP ...) )" is stripped. Phrase indices are
/// assigned in pre-order, so the root is phrase 0.
ParseTree load_parse_tree(std::string_view text);

/// Reads every non-blank, non-comment ('#') line of a file as one tree.
std::vector<ParseTree> load_parse_trees_file(const std::string& path);

/// Canonical single-line form: single spaces, lowercase words.
std::string serialize(const ParseTree& tree);

/// Every phrase after all of its descendants (post-order).
std::vector<const Phrase*> phrases_bottom_up(const ParseTree& tree);

/// First VB-tagged word of the nearest VP at or above `index`; empty when the
/// phrase is not governed by a verb.
std::string governing_verb(const ParseTree& tree, int index);

class Lexicon {
public:
  Lexicon() = default;
  /// Throws std::invalid_argument if any word set is empty.
  explicit Lexicon(std::map<std::string, std::set<std::string>> entries);

  static Lexicon from_json_file(const std::string& path);

  bool allows(const std::string& tag, const std::string& word) const;
  const std::map<std::string, std::set<std::string>>& entries() const noexcept { return entries_; }

private:
  std::map<std::string, std::set<std::string>> entries_;
};

struct LexiconViolation {
  int phrase_index;
  std::string tag;
  std::string word;

  bool operator==(const LexiconViolation&) const = default;
};

std::vector<LexiconViolation> validate_against_lexicon(const ParseTree& tree, const Lexicon& lex);

}  // namespace apg::parse
