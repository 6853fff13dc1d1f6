#include <charconv>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "phylocorr/csv.hpp"
#include "phylocorr/tree.hpp"

namespace phylocorr {

NewickError::NewickError(const std::string& what, std::size_t offset)
    : TreeError(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

namespace {

class NewickReader {
 public:
  NewickReader(std::string_view text, std::vector<NewickWarning>* warnings)
      : s_(text), warnings_(warnings) {}

  Tree read() {
    skip();
    if (pos_ >= s_.size()) fail("empty input");

    // Iterative descent: `open` holds internal nodes whose ')' is pending.
    std::vector<int> open;
    bool expect_child = true;
    while (true) {
      skip();
      if (expect_child) {
        if (peek() == '(') {
          const int v = add_node(open.empty() ? -1 : open.back());
          open.push_back(v);
          ++pos_;
          continue;
        }
        const std::size_t at = pos_;
        const int v = add_node(open.empty() ? -1 : open.back());
        nodes_[v].label = read_label();
        if (nodes_[v].label.empty()) fail("missing tip label", at);
        auto [it, fresh] = tip_offsets_.emplace(nodes_[v].label, at);
        if (!fresh) fail("duplicate tip label '" + nodes_[v].label + "'", at);
        read_length(v);
        expect_child = false;
        if (open.empty()) break;
        continue;
      }

      skip();
      const char c = peek();
      if (c == ',') {
        ++pos_;
        expect_child = true;
      } else if (c == ')') {
        const int v = open.back();
        if (nodes_[v].children.empty()) fail("empty subtree");
        ++pos_;
        open.pop_back();
        skip();
        nodes_[v].label = read_label();
        read_length(v);
        if (open.empty()) break;
      } else if (pos_ >= s_.size()) {
        fail("unterminated tree: missing ')'");
      } else {
        fail(std::string("unexpected character '") + c + "'");
      }
    }

    skip();
    if (pos_ >= s_.size()) fail("missing terminating ';'");
    if (s_[pos_] != ';') fail(std::string("unexpected character '") + s_[pos_] + "'");
    ++pos_;
    skip();
    if (pos_ < s_.size()) fail("trailing content after ';'");

    try {
      return Tree(std::move(nodes_), 0);
    } catch (const TreeError& e) {
      throw NewickError(e.what(), pos_);
    }
  }

 private:
  [[noreturn]] void fail(const std::string& msg) { throw NewickError(msg, pos_); }
  [[noreturn]] void fail(const std::string& msg, std::size_t at) { throw NewickError(msg, at); }

  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

  // Whitespace and [bracket comments].
  void skip() {
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos_;
      } else if (c == '[') {
        const std::size_t start = pos_;
        const auto close = s_.find(']', pos_);
        if (close == std::string_view::npos) fail("unterminated comment", start);
        pos_ = close + 1;
      } else {
        break;
      }
    }
  }

  int add_node(int parent) {
    const int v = static_cast<int>(nodes_.size());
    nodes_.push_back(TreeNode{parent, {}, 0.0, {}});
    if (parent >= 0) nodes_[parent].children.push_back(v);
    return v;
  }

  std::string read_label() {
    std::string out;
    if (peek() == '\'') {
      const std::size_t start = pos_;
      ++pos_;
      while (true) {
        if (pos_ >= s_.size()) fail("unterminated quoted label", start);
        const char c = s_[pos_++];
        if (c == '\'') {
          if (peek() == '\'') {
            out.push_back('\'');
            ++pos_;
          } else {
            break;
          }
        } else {
          out.push_back(c);
        }
      }
      skip();
      return out;
    }
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (c == '(' || c == ')' || c == ',' || c == ':' || c == ';' || c == '[' || c == '\'' ||
          c == ' ' || c == '\t' || c == '\n' || c == '\r')
        break;
      out.push_back(c);
      ++pos_;
    }
    skip();
    return out;
  }

  void read_length(int v) {
    skip();
    if (peek() != ':') {
      if (warnings_) warnings_->push_back({pos_, "missing branch length; using 0"});
      return;
    }
    ++pos_;
    skip();
    const std::size_t start = pos_;
    const char* first = s_.data() + pos_;
    const char* last = s_.data() + s_.size();
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr == first) fail("malformed branch length", start);
    if (!std::isfinite(value) || value < 0.0) fail("negative or non-finite branch length", start);
    pos_ += static_cast<std::size_t>(ptr - first);
    nodes_[v].length = value;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  std::vector<NewickWarning>* warnings_;
  std::vector<TreeNode> nodes_;
  std::unordered_map<std::string, std::size_t> tip_offsets_;
};

bool needs_quotes(const std::string& label) {
  return label.find_first_of("()[]':;, \t\r\n") != std::string::npos;
}

void write_label(std::string& out, const std::string& label) {
  if (!needs_quotes(label)) {
    out += label;
    return;
  }
  out.push_back('\'');
  for (char c : label) {
    if (c == '\'') out.push_back('\'');
    out.push_back(c);
  }
  out.push_back('\'');
}

void write_length(std::string& out, double len, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, ":%.*g", precision, len);
  out += buf;
}

}  // namespace

Tree parse_newick(std::string_view text, std::vector<NewickWarning>* warnings) {
  return NewickReader(text, warnings).read();
}

Tree read_newick_file(const std::string& path, std::vector<NewickWarning>* warnings) {
  return parse_newick(read_text_file(path), warnings);
}

std::string to_newick(const Tree& tree, const NewickFormat& format) {
  std::string out;
  // Explicit stack of (node, next child index) to avoid deep recursion.
  std::vector<std::pair<int, std::size_t>> stack{{tree.root(), 0}};
  while (!stack.empty()) {
    auto& [v, next] = stack.back();
    const TreeNode& nd = tree.node(v);
    if (!nd.is_tip() && next < nd.children.size()) {
      out.push_back(next == 0 ? '(' : ',');
      const int child = nd.children[next++];
      stack.emplace_back(child, 0);
      continue;
    }
    if (!nd.is_tip()) out.push_back(')');
    if (nd.is_tip() || format.internal_labels) write_label(out, nd.label);
    if (auto it = format.comments.find(v); it != format.comments.end())
      out += "[" + it->second + "]";
    write_length(out, nd.length, format.precision);
    stack.pop_back();
  }
  out.push_back(';');
  return out;
}

}  // namespace phylocorr
