#pragma once

// Node addressing for rooted ordered trees. A node is the word of child
// indices along the path from the root; the root is the empty word. Letters
// are 0-based internally; textual I/O is 1-based ("root", "1", "1.3.2") to
// match the usual convention for child numbering.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "treechain/errors.hpp"

namespace treechain {

using Letter = std::uint32_t;

class NodeWord {
 public:
  NodeWord() = default;
  explicit NodeWord(std::vector<Letter> letters) : letters_(std::move(letters)) {}

  static NodeWord root() { return NodeWord(); }

  bool is_root() const { return letters_.empty(); }
  std::size_t depth() const { return letters_.size(); }
  Letter letter(std::size_t i) const { return letters_[i]; }
  Letter last() const { return letters_.back(); }
  const std::vector<Letter>& letters() const { return letters_; }

  NodeWord parent() const {
    if (is_root()) throw DomainError("node_word", "root has no parent");
    return prefix(depth() - 1);
  }

  // In-place moves, for walkers that must not copy long words every step.
  void push(Letter k) { letters_.push_back(k); }
  void pop() { letters_.pop_back(); }

  NodeWord concat(const NodeWord& rel) const {
    std::vector<Letter> w = letters_;
    w.insert(w.end(), rel.letters_.begin(), rel.letters_.end());
    return NodeWord(std::move(w));
  }

  NodeWord child(Letter k) const {
    std::vector<Letter> w = letters_;
    w.push_back(k);
    return NodeWord(std::move(w));
  }

  NodeWord prefix(std::size_t len) const {
    return NodeWord(std::vector<Letter>(letters_.begin(), letters_.begin() + len));
  }

  // Ancestor-or-equal relation: *this lies on the root path of v.
  bool is_prefix_of(const NodeWord& v) const {
    if (depth() > v.depth()) return false;
    for (std::size_t i = 0; i < depth(); ++i)
      if (letters_[i] != v.letters_[i]) return false;
    return true;
  }

  bool in_subtree_of(const NodeWord& v) const { return v.is_prefix_of(*this); }

  std::size_t common_prefix_len(const NodeWord& v) const {
    std::size_t n = std::min(depth(), v.depth());
    std::size_t i = 0;
    while (i < n && letters_[i] == v.letters_[i]) ++i;
    return i;
  }

  friend bool operator==(const NodeWord& a, const NodeWord& b) {
    return a.letters_ == b.letters_;
  }
  friend bool operator!=(const NodeWord& a, const NodeWord& b) { return !(a == b); }

  // Breadth-first order: by depth, then lexicographically. Gives every
  // container of NodeWords a deterministic, output-friendly iteration order.
  friend bool operator<(const NodeWord& a, const NodeWord& b) {
    if (a.depth() != b.depth()) return a.depth() < b.depth();
    return a.letters_ < b.letters_;
  }

  std::string to_string() const {
    if (is_root()) return "root";
    std::string s;
    for (std::size_t i = 0; i < depth(); ++i) {
      if (i) s += '.';
      s += std::to_string(letters_[i] + 1);
    }
    return s;
  }

  static NodeWord parse(const std::string& text) {
    if (text.empty() || text == "root" || text == "e") return NodeWord();
    std::vector<Letter> letters;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      std::size_t dot = text.find('.', pos);
      std::string part = text.substr(pos, dot == std::string::npos ? dot : dot - pos);
      if (part.empty()) throw UsageError("bad_node", "bad node word: '" + text + "'");
      unsigned long v;
      try {
        v = std::stoul(part);
      } catch (const std::exception&) {
        throw UsageError("bad_node", "bad node word: '" + text + "'");
      }
      if (v == 0) throw UsageError("bad_node", "node letters are 1-based: '" + text + "'");
      letters.push_back(static_cast<Letter>(v - 1));
      if (dot == std::string::npos) break;
      pos = dot + 1;
    }
    return NodeWord(std::move(letters));
  }

 private:
  std::vector<Letter> letters_;
};

}  // namespace treechain
