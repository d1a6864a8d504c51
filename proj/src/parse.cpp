#include "apg/parse.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>

#include <json.hpp>

namespace apg::parse {

ParseError::ParseError(const std::string& what, std::size_t offset)
    : std::runtime_error(what + " at offset " + std::to_string(offset)), offset_(offset) {}

PosTag::PosTag(std::string tag) : tag_(std::move(tag)) {
  if (!is_valid(tag_)) throw std::invalid_argument("invalid POS tag '" + tag_ + "'");
}

bool PosTag::is_valid(std::string_view tag) {
  return !tag.empty() &&
         std::all_of(tag.begin(), tag.end(), [](unsigned char c) { return c >= 'A' && c <= 'Z'; });
}

namespace {

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

struct Token {
  enum class Kind { open, close, atom, end } kind;
  std::string_view text;
  std::size_t offset;
};

class Lexer {
public:
  explicit Lexer(std::string_view src) : src_(src) { advance(); }

  const Token& peek() const { return current_; }

  Token take() {
    Token t = current_;
    advance();
    return t;
  }

private:
  void advance() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    if (pos_ >= src_.size()) {
      current_ = {Token::Kind::end, {}, src_.size()};
      return;
    }
    const std::size_t start = pos_;
    if (src_[pos_] == '(') {
      ++pos_;
      current_ = {Token::Kind::open, src_.substr(start, 1), start};
      return;
    }
    if (src_[pos_] == ')') {
      ++pos_;
      current_ = {Token::Kind::close, src_.substr(start, 1), start};
      return;
    }
    while (pos_ < src_.size() && src_[pos_] != '(' && src_[pos_] != ')' &&
           !std::isspace(static_cast<unsigned char>(src_[pos_])))
      ++pos_;
    current_ = {Token::Kind::atom, src_.substr(start, pos_ - start), start};
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  Token current_{Token::Kind::end, {}, 0};
};

// Raw s-expression node before it is classified as leaf or phrase.
struct Node {
  std::string label;
  std::size_t offset = 0;
  std::vector<std::pair<std::string_view, std::size_t>> atoms;
  std::vector<Node> kids;
  std::vector<Phrase::Item> layout;
};

Node read_node(Lexer& lex) {
  Token open = lex.take();
  if (open.kind != Token::Kind::open) {
    if (open.kind == Token::Kind::end) throw ParseError("unexpected end of input, expected '('", open.offset);
    throw ParseError("expected '('", open.offset);
  }
  Node node;
  node.offset = open.offset;
  if (lex.peek().kind == Token::Kind::atom) node.label = std::string(lex.take().text);
  for (;;) {
    const Token& t = lex.peek();
    switch (t.kind) {
      case Token::Kind::end:
        throw ParseError("unbalanced brackets: missing ')'", t.offset);
      case Token::Kind::close:
        lex.take();
        return node;
      case Token::Kind::open:
        node.kids.push_back(read_node(lex));
        node.layout.push_back(Phrase::Item::child);
        break;
      case Token::Kind::atom: {
        Token a = lex.take();
        node.atoms.emplace_back(a.text, a.offset);
        node.layout.push_back(Phrase::Item::word);
        break;
      }
    }
  }
}

bool is_leaf(const Node& n) { return n.kids.empty() && n.atoms.size() == 1 && !n.label.empty(); }

Phrase to_phrase(const Node& n) {
  if (n.label.empty()) throw ParseError("phrase without a label", n.offset);
  if (n.kids.empty() && n.atoms.empty()) throw ParseError("empty phrase '" + n.label + "'", n.offset);
  if (!n.atoms.empty()) throw ParseError("bare word '" + std::string(n.atoms.front().first) + "' outside a (TAG word) leaf", n.atoms.front().second);

  Phrase p;
  p.label = n.label;
  for (const Node& k : n.kids) {
    if (is_leaf(k)) {
      if (!PosTag::is_valid(k.label)) throw ParseError("invalid POS tag '" + k.label + "'", k.offset);
      p.words.push_back(Word{lowercase(k.atoms.front().first), PosTag(k.label)});
      p.layout.push_back(Phrase::Item::word);
    } else {
      p.children.push_back(to_phrase(k));
      p.layout.push_back(Phrase::Item::child);
    }
  }
  return p;
}

void assign_preorder(Phrase& p, int& next) {
  p.index = next++;
  for (Phrase& c : p.children) assign_preorder(c, next);
}

void collect_tokens(const Phrase& p, std::vector<std::string>& out) {
  std::size_t w = 0, c = 0;
  for (Phrase::Item item : p.layout) {
    if (item == Phrase::Item::word)
      out.push_back(p.words[w++].text);
    else
      collect_tokens(p.children[c++], out);
  }
}

void write_phrase(const Phrase& p, std::ostringstream& os) {
  os << '(' << p.label;
  std::size_t w = 0, c = 0;
  for (Phrase::Item item : p.layout) {
    os << ' ';
    if (item == Phrase::Item::word) {
      const Word& word = p.words[w++];
      os << '(' << word.tag.str() << ' ' << word.text << ')';
    } else {
      write_phrase(p.children[c++], os);
    }
  }
  os << ')';
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& s : parts) {
    if (!out.empty()) out += ' ';
    out += s;
  }
  return out;
}

}  // namespace

ParseTree::ParseTree(Phrase root, std::string instruction)
    : root_(std::move(root)), instruction_(std::move(instruction)) {
  link();
  std::istringstream is(lowercase(instruction_));
  std::vector<std::string> expected{std::istream_iterator<std::string>(is), std::istream_iterator<std::string>()};
  if (expected != tokens()) throw std::invalid_argument("instruction text does not match the tree's leaves");
}

ParseTree::ParseTree(const ParseTree& other) : root_(other.root_), instruction_(other.instruction_) { link(); }

ParseTree::ParseTree(ParseTree&& other) noexcept
    : root_(std::move(other.root_)), instruction_(std::move(other.instruction_)) {
  link();
}

ParseTree& ParseTree::operator=(const ParseTree& other) {
  if (this != &other) {
    root_ = other.root_;
    instruction_ = other.instruction_;
    link();
  }
  return *this;
}

ParseTree& ParseTree::operator=(ParseTree&& other) noexcept {
  if (this != &other) {
    root_ = std::move(other.root_);
    instruction_ = std::move(other.instruction_);
    link();
  }
  return *this;
}

// Validated trees only reach the copy/move paths, so link() cannot throw there.
void ParseTree::link() {
  by_index_.clear();
  parent_.clear();
  std::function<void(const Phrase&, int)> visit = [&](const Phrase& p, int parent) {
    if (p.words.empty() && p.children.empty()) throw std::invalid_argument("phrase " + p.label + " has no words or children");
    if (p.index < 0) throw std::invalid_argument("phrase index not assigned");
    const auto idx = static_cast<std::size_t>(p.index);
    if (idx >= by_index_.size()) {
      by_index_.resize(idx + 1, nullptr);
      parent_.resize(idx + 1, -1);
    }
    if (by_index_[idx] != nullptr) throw std::invalid_argument("duplicate phrase index " + std::to_string(idx));
    by_index_[idx] = &p;
    parent_[idx] = parent;
    for (const Phrase& c : p.children) visit(c, p.index);
  };
  visit(root_, -1);
  if (std::find(by_index_.begin(), by_index_.end(), nullptr) != by_index_.end())
    throw std::invalid_argument("phrase indices are not contiguous");
}

const Phrase& ParseTree::phrase(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= by_index_.size())
    throw std::out_of_range("phrase index " + std::to_string(index));
  return *by_index_[static_cast<std::size_t>(index)];
}

std::optional<int> ParseTree::parent(int index) const {
  phrase(index);
  const int p = parent_[static_cast<std::size_t>(index)];
  if (p < 0) return std::nullopt;
  return p;
}

std::vector<std::string> ParseTree::tokens() const {
  std::vector<std::string> out;
  collect_tokens(root_, out);
  return out;
}

ParseTree load_parse_tree(std::string_view text) {
  Lexer lex(text);
  if (lex.peek().kind == Token::Kind::end) throw ParseError("empty input", 0);
  if (lex.peek().kind == Token::Kind::close) throw ParseError("unbalanced brackets: unexpected ')'", lex.peek().offset);
  Node node = read_node(lex);
  if (lex.peek().kind != Token::Kind::end) {
    const Token& extra = lex.peek();
    throw ParseError(extra.kind == Token::Kind::close ? "unbalanced brackets: unexpected ')'"
                                                      : "trailing input after tree",
                     extra.offset);
  }
  // PTB files often wrap the tree in an unlabeled pair of brackets.
  if (node.label.empty() && node.atoms.empty() && node.kids.size() == 1) {
    auto inner = std::move(node.kids.front());
    node = std::move(inner);
  }
  if (is_leaf(node)) throw ParseError("tree has no phrase above the leaf", node.offset);

  Phrase root = to_phrase(node);
  int next = 0;
  assign_preorder(root, next);
  std::vector<std::string> toks;
  collect_tokens(root, toks);
  return ParseTree(std::move(root), join(toks));
}

std::vector<ParseTree> load_parse_trees_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<ParseTree> trees;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    trees.push_back(load_parse_tree(line));
  }
  return trees;
}

std::string serialize(const ParseTree& tree) {
  std::ostringstream os;
  write_phrase(tree.root(), os);
  return os.str();
}

std::vector<const Phrase*> phrases_bottom_up(const ParseTree& tree) {
  std::vector<const Phrase*> out;
  out.reserve(tree.phrase_count());
  std::function<void(const Phrase&)> visit = [&](const Phrase& p) {
    for (const Phrase& c : p.children) visit(c);
    out.push_back(&p);
  };
  visit(tree.root());
  return out;
}

std::string governing_verb(const ParseTree& tree, int index) {
  for (std::optional<int> at = index; at; at = tree.parent(*at)) {
    const Phrase& p = tree.phrase(*at);
    if (p.label != "VP") continue;
    for (const Word& w : p.words)
      if (w.tag.str().rfind("VB", 0) == 0) return w.text;
  }
  return {};
}

Lexicon::Lexicon(std::map<std::string, std::set<std::string>> entries) : entries_(std::move(entries)) {
  for (const auto& [tag, words] : entries_) {
    if (!PosTag::is_valid(tag)) throw std::invalid_argument("lexicon: invalid tag '" + tag + "'");
    if (words.empty()) throw std::invalid_argument("lexicon: empty word set for " + tag);
  }
}

Lexicon Lexicon::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  const auto j = nlohmann::json::parse(in);
  std::map<std::string, std::set<std::string>> entries;
  for (const auto& [tag, words] : j.items()) {
    auto& set = entries[tag];
    for (const auto& w : words) set.insert(lowercase(w.get<std::string>()));
  }
  return Lexicon(std::move(entries));
}

bool Lexicon::allows(const std::string& tag, const std::string& word) const {
  auto it = entries_.find(tag);
  return it != entries_.end() && it->second.count(word) > 0;
}

std::vector<LexiconViolation> validate_against_lexicon(const ParseTree& tree, const Lexicon& lex) {
  std::vector<LexiconViolation> out;
  std::function<void(const Phrase&)> visit = [&](const Phrase& p) {
    std::size_t w = 0, c = 0;
    for (Phrase::Item item : p.layout) {
      if (item == Phrase::Item::child) {
        visit(p.children[c++]);
        continue;
      }
      const Word& word = p.words[w++];
      if (!lex.allows(word.tag.str(), word.text)) out.push_back({p.index, word.tag.str(), word.text});
    }
  };
  visit(tree.root());
  return out;
}

}  // namespace apg::parse
