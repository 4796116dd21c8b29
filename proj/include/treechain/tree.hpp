#pragma once

// Tree sources: finite trees stored explicitly and lazily generated infinite
// families (complete d-ary, line, bundles of rays, decorated spine), plus
// breadth-first truncations and end (infinite ray) descriptions.
//
// Lazy sources are pure functions of the node word — no hidden state — so
// concurrent queries are trivially consistent and every downstream
// computation is reproducible.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "treechain/errors.hpp"
#include "treechain/node_word.hpp"

namespace treechain {

enum class Finiteness { Finite, Infinite, Unknown };

// An end is an infinite injective path from the root, described as an
// eventually periodic word: prefix . period . period . ...
struct EndDescription {
  NodeWord prefix;
  std::vector<Letter> period;  // non-empty
  std::string label;           // display name, e.g. "P+"

  // Node of the ray at the given depth (depth 0 = root).
  NodeWord node_at(std::size_t depth) const {
    if (depth <= prefix.depth()) return prefix.prefix(depth);
    std::vector<Letter> w = prefix.letters();
    std::size_t extra = depth - prefix.depth();
    for (std::size_t i = 0; i < extra; ++i) w.push_back(period[i % period.size()]);
    return NodeWord(std::move(w));
  }

  bool contains(const NodeWord& u) const { return node_at(u.depth()) == u; }
};

class TreeSource {
 public:
  virtual ~TreeSource() = default;

  // Number of children of a node that is in the tree.
  virtual std::size_t child_count(const NodeWord& u) const = 0;

  virtual bool contains(const NodeWord& u) const {
    NodeWord cur;
    for (std::size_t i = 0; i < u.depth(); ++i) {
      if (u.letter(i) >= child_count(cur)) return false;
      cur = cur.child(u.letter(i));
    }
    return true;
  }

  // Whether the subtree rooted at u is finite; families answer from
  // structure, finite trees always answer Finite.
  virtual Finiteness subtree_finiteness(const NodeWord& u) const = 0;

  // Total node count if the tree is finite.
  virtual std::optional<std::size_t> size() const = 0;

  // |T_u| for finite subtrees (needed by the uniform/geometric families).
  virtual std::optional<std::size_t> subtree_size(const NodeWord&) const {
    return std::nullopt;
  }

  // Declared end structure. ends_exhaustive() == true certifies the list is
  // complete (the tree has exactly these ends).
  virtual const std::vector<EndDescription>& declared_ends() const {
    static const std::vector<EndDescription> none;
    return none;
  }
  virtual bool ends_exhaustive() const { return false; }

  // Certified leaf structure: false = provably has a leaf, true = provably
  // leafless, nullopt = unknown.
  virtual std::optional<bool> leafless() const = 0;

  virtual std::string describe() const = 0;
};

using TreePtr = std::shared_ptr<const TreeSource>;

// ------------------------------------------------------------------------
// Finite trees, stored as breadth-first child counts.
// ------------------------------------------------------------------------

class FiniteTree final : public TreeSource {
 public:
  explicit FiniteTree(const std::vector<std::size_t>& children_bfs) {
    if (children_bfs.empty())
      throw UsageError("bad_tree", "finite tree needs at least the root");
    nodes_.push_back(NodeWord::root());
    // Breadth-first reconstruction: counts are consumed in BFS order.
    for (std::size_t i = 0; i < children_bfs.size(); ++i) {
      if (i >= nodes_.size())
        throw UsageError("bad_tree", "children list longer than the tree it describes");
      child_count_.push_back(children_bfs[i]);
      children_.emplace_back();
      for (std::size_t k = 0; k < children_bfs[i]; ++k) {
        children_[i].push_back(nodes_.size());
        nodes_.push_back(nodes_[i].child(static_cast<Letter>(k)));
      }
    }
    if (child_count_.size() != nodes_.size())
      throw UsageError("bad_tree", "children list shorter than the tree it describes");
    for (std::size_t i = 0; i < nodes_.size(); ++i) index_[nodes_[i]] = i;
    // Subtree sizes by reverse BFS accumulation.
    subtree_size_.assign(nodes_.size(), 1);
    for (std::size_t i = nodes_.size(); i-- > 0;)
      for (std::size_t c : children_[i]) subtree_size_[i] += subtree_size_[c];
  }

  static std::shared_ptr<const FiniteTree> make(const std::vector<std::size_t>& bfs) {
    return std::make_shared<const FiniteTree>(bfs);
  }

  std::size_t child_count(const NodeWord& u) const override {
    return child_count_[index_of(u)];
  }
  bool contains(const NodeWord& u) const override { return index_.count(u) > 0; }
  Finiteness subtree_finiteness(const NodeWord&) const override {
    return Finiteness::Finite;
  }
  std::optional<std::size_t> size() const override { return nodes_.size(); }
  std::optional<std::size_t> subtree_size(const NodeWord& u) const override {
    return subtree_size_[index_of(u)];
  }
  std::optional<bool> leafless() const override { return false; }
  std::string describe() const override {
    return "finite(n=" + std::to_string(nodes_.size()) + ")";
  }

  // BFS-ordered node list; index 0 is the root.
  const std::vector<NodeWord>& nodes() const { return nodes_; }
  std::size_t index_of(const NodeWord& u) const {
    auto it = index_.find(u);
    if (it == index_.end())
      throw DomainError("bad_node", "node not in tree: " + u.to_string());
    return it->second;
  }
  const std::vector<std::size_t>& children_of(std::size_t i) const { return children_[i]; }
  std::size_t subtree_size_at(std::size_t i) const { return subtree_size_[i]; }
  std::size_t parent_index_of(std::size_t i) const {
    return index_of(nodes_[i].parent());
  }
  std::vector<std::size_t> children_bfs() const {
    return std::vector<std::size_t>(child_count_.begin(), child_count_.end());
  }

 private:
  std::vector<NodeWord> nodes_;
  std::vector<std::size_t> child_count_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::size_t> subtree_size_;
  std::map<NodeWord, std::size_t> index_;
};

// ------------------------------------------------------------------------
// Lazy families.
// ------------------------------------------------------------------------

// Complete d-ary tree: every node has exactly d children.
class CompleteTree final : public TreeSource {
 public:
  explicit CompleteTree(std::size_t arity) : arity_(arity) {
    if (arity == 0) throw UsageError("bad_tree", "complete tree needs arity >= 1");
  }
  std::size_t child_count(const NodeWord&) const override { return arity_; }
  bool contains(const NodeWord& u) const override {
    for (std::size_t i = 0; i < u.depth(); ++i)
      if (u.letter(i) >= arity_) return false;
    return true;
  }
  Finiteness subtree_finiteness(const NodeWord&) const override {
    return Finiteness::Infinite;
  }
  std::optional<std::size_t> size() const override { return std::nullopt; }
  std::optional<bool> leafless() const override { return true; }
  // For arity 1 this is the line with its single end; for arity >= 2 the end
  // space is uncountable and no declared list can be exhaustive.
  const std::vector<EndDescription>& declared_ends() const override {
    static const std::vector<EndDescription> none;
    if (arity_ > 1) return none;
    static const std::vector<EndDescription> line_end = {
        EndDescription{NodeWord::root(), {0}, "P"}};
    return line_end;
  }
  bool ends_exhaustive() const override { return arity_ == 1; }
  std::size_t arity() const { return arity_; }
  std::string describe() const override {
    return "complete(arity=" + std::to_string(arity_) + ")";
  }

 private:
  std::size_t arity_;
};

// Bundle of k infinite rays glued at the root: the root has k children and
// every other node exactly one. k=1 is the half-line; k=2 is the integer
// line folded at 0 (two ends P+ = ray 0 and P- = ray 1).
class RaysTree final : public TreeSource {
 public:
  explicit RaysTree(std::size_t rays, std::string family_name = "rays")
      : rays_(rays), family_name_(std::move(family_name)) {
    if (rays == 0) throw UsageError("bad_tree", "rays tree needs >= 1 ray");
    for (std::size_t i = 0; i < rays_; ++i) {
      EndDescription e;
      if (rays_ == 1) {
        e.prefix = NodeWord::root();
      } else {
        e.prefix = NodeWord::root().child(static_cast<Letter>(i));
      }
      e.period = {0};
      e.label = rays_ == 2 ? (i == 0 ? "P+" : "P-") : "ray" + std::to_string(i);
      ends_.push_back(std::move(e));
    }
  }
  std::size_t child_count(const NodeWord& u) const override {
    return u.is_root() ? rays_ : 1;
  }
  bool contains(const NodeWord& u) const override {
    if (u.is_root()) return true;
    if (u.letter(0) >= rays_) return false;
    for (std::size_t i = 1; i < u.depth(); ++i)
      if (u.letter(i) != 0) return false;
    return true;
  }
  Finiteness subtree_finiteness(const NodeWord&) const override {
    return Finiteness::Infinite;
  }
  std::optional<std::size_t> size() const override { return std::nullopt; }
  std::optional<bool> leafless() const override { return true; }
  const std::vector<EndDescription>& declared_ends() const override { return ends_; }
  bool ends_exhaustive() const override { return true; }
  std::size_t rays() const { return rays_; }
  std::string describe() const override {
    return family_name_ + "(rays=" + std::to_string(rays_) + ")";
  }

 private:
  std::size_t rays_;
  std::string family_name_;
  std::vector<EndDescription> ends_;
};

inline TreePtr make_line() { return std::make_shared<const RaysTree>(1, "line"); }
inline TreePtr make_zline() { return std::make_shared<const RaysTree>(2, "zline"); }

// Infinite spine (child 0 chain) with the same finite decoration grafted as
// child 1 of every spine node. One end; finite subtrees hang off the spine.
class SpineTree final : public TreeSource {
 public:
  explicit SpineTree(std::shared_ptr<const FiniteTree> decoration)
      : decoration_(std::move(decoration)) {
    ends_.push_back(EndDescription{NodeWord::root(), {0}, "spine"});
  }

  std::size_t child_count(const NodeWord& u) const override {
    auto loc = locate(u);
    if (!loc) throw DomainError("bad_node", "node not in tree: " + u.to_string());
    if (loc->on_spine) return decoration_ ? 2 : 1;
    return decoration_->child_count(loc->decoration_addr);
  }
  bool contains(const NodeWord& u) const override { return locate(u).has_value(); }
  Finiteness subtree_finiteness(const NodeWord& u) const override {
    auto loc = locate(u);
    if (!loc) throw DomainError("bad_node", "node not in tree: " + u.to_string());
    return loc->on_spine ? Finiteness::Infinite : Finiteness::Finite;
  }
  std::optional<std::size_t> size() const override { return std::nullopt; }
  std::optional<std::size_t> subtree_size(const NodeWord& u) const override {
    auto loc = locate(u);
    if (!loc || loc->on_spine) return std::nullopt;
    return decoration_->subtree_size(loc->decoration_addr);
  }
  std::optional<bool> leafless() const override { return !decoration_; }
  const std::vector<EndDescription>& declared_ends() const override { return ends_; }
  bool ends_exhaustive() const override { return true; }
  std::string describe() const override {
    return "spine(decoration=" + (decoration_ ? decoration_->describe() : "none") + ")";
  }

 private:
  struct Location {
    bool on_spine;
    NodeWord decoration_addr;  // address inside the decoration copy if off-spine
  };

  // Spine nodes are 0^j; off-spine nodes are 0^j.1.w with w in the decoration.
  std::optional<Location> locate(const NodeWord& u) const {
    std::size_t j = 0;
    while (j < u.depth() && u.letter(j) == 0) ++j;
    if (j == u.depth()) return Location{true, NodeWord::root()};
    if (u.letter(j) != 1 || !decoration_) return std::nullopt;
    std::vector<Letter> rest(u.letters().begin() + j + 1, u.letters().end());
    NodeWord addr(std::move(rest));
    if (!decoration_->contains(addr)) return std::nullopt;
    return Location{false, std::move(addr)};
  }

  std::shared_ptr<const FiniteTree> decoration_;
  std::vector<EndDescription> ends_;
};

// ------------------------------------------------------------------------
// Truncation: breadth-first enumeration of {u in T_base : depth(u) <= cap}.
// ------------------------------------------------------------------------

inline constexpr std::size_t kDefaultNodeCap = 1u << 20;

struct Truncation {
  TreePtr tree;
  NodeWord base;                               // nodes[0]
  std::size_t levels = 0;                      // relative depth bound
  std::vector<NodeWord> nodes;                 // BFS order from base
  std::vector<std::vector<std::size_t>> children;  // indices into nodes
  std::vector<std::ptrdiff_t> parent;          // -1 for base
  std::map<NodeWord, std::size_t> index;

  std::size_t size() const { return nodes.size(); }
  std::size_t rel_depth(std::size_t i) const { return nodes[i].depth() - base.depth(); }
  bool contains(const NodeWord& u) const { return index.count(u) > 0; }
  std::size_t index_of(const NodeWord& u) const {
    auto it = index.find(u);
    if (it == index.end())
      throw DomainError("bad_node", "node not in truncation: " + u.to_string());
    return it->second;
  }
  // True when every child of nodes[i] (in the tree) is present here.
  bool interior(std::size_t i) const {
    return children[i].size() == tree->child_count(nodes[i]);
  }
};

inline Truncation truncate(TreePtr tree, const NodeWord& base, std::size_t levels,
                           std::size_t node_cap = kDefaultNodeCap) {
  if (!tree->contains(base))
    throw DomainError("bad_node", "truncation base not in tree: " + base.to_string());
  Truncation t;
  t.tree = tree;
  t.base = base;
  t.levels = levels;
  t.nodes.push_back(base);
  t.parent.push_back(-1);
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    t.children.emplace_back();
    if (t.nodes[i].depth() - base.depth() >= levels) continue;
    std::size_t c = tree->child_count(t.nodes[i]);
    for (std::size_t k = 0; k < c; ++k) {
      if (t.nodes.size() >= node_cap)
        throw resource_limit("truncation exceeds node cap (" + std::to_string(node_cap) + ")");
      t.children[i].push_back(t.nodes.size());
      t.nodes.push_back(t.nodes[i].child(static_cast<Letter>(k)));
      t.parent.push_back(static_cast<std::ptrdiff_t>(i));
    }
  }
  for (std::size_t i = 0; i < t.nodes.size(); ++i) t.index[t.nodes[i]] = i;
  return t;
}

inline Truncation truncate(TreePtr tree, std::size_t levels,
                           std::size_t node_cap = kDefaultNodeCap) {
  return truncate(std::move(tree), NodeWord::root(), levels, node_cap);
}

// Materializes a truncation as a standalone finite tree (used by subtree
// projection). Node i of the result corresponds to trunc.nodes[i].
inline std::shared_ptr<const FiniteTree> freeze(const Truncation& t) {
  std::vector<std::size_t> bfs;
  bfs.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) bfs.push_back(t.children[i].size());
  return FiniteTree::make(bfs);
}

// ------------------------------------------------------------------------
// End detection.
// ------------------------------------------------------------------------

// Source(p): the node of p closest to the root whose hanging subtree meets
// no other end; with a single end this is the root itself.
struct EndReport {
  enum class Status { Declared, FiniteTree, Undetermined };
  Status status = Status::Undetermined;
  std::vector<EndDescription> ends;
  std::vector<NodeWord> sources;  // aligned with ends
  std::size_t probe_depth = 0;
  std::size_t frontier_branching = 0;  // probed mode: nodes still branching
};

inline EndReport detect_ends(TreePtr tree, std::size_t probe_depth = 16,
                             std::size_t node_cap = kDefaultNodeCap) {
  EndReport r;
  r.probe_depth = probe_depth;
  if (tree->size().has_value()) {
    r.status = EndReport::Status::FiniteTree;
    return r;
  }
  if (tree->ends_exhaustive()) {
    r.status = EndReport::Status::Declared;
    r.ends = tree->declared_ends();
    // Pairwise divergence depth; two declared ends must split at finite depth.
    for (std::size_t i = 0; i < r.ends.size(); ++i) {
      std::size_t deepest_shared = 0;
      for (std::size_t j = 0; j < r.ends.size(); ++j) {
        if (i == j) continue;
        std::size_t d = 0;
        std::size_t guard = r.ends[i].prefix.depth() + r.ends[j].prefix.depth() +
                            r.ends[i].period.size() * r.ends[j].period.size() + 2;
        while (d <= guard && r.ends[i].node_at(d + 1) == r.ends[j].node_at(d + 1)) ++d;
        if (d > guard)
          throw DomainError("bad_ends", "declared ends do not diverge: " +
                                            r.ends[i].label + " vs " + r.ends[j].label);
        deepest_shared = std::max(deepest_shared, d);
      }
      r.sources.push_back(r.ends.size() == 1
                              ? NodeWord::root()
                              : r.ends[i].node_at(deepest_shared + 1));
    }
    return r;
  }
  // Best-effort probe: expand to probe_depth; if the tree dies out it was
  // finite after all, otherwise we cannot certify the end structure.
  Truncation t = truncate(tree, probe_depth, node_cap);
  bool any_frontier = false;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.rel_depth(i) == probe_depth && tree->child_count(t.nodes[i]) > 0) {
      any_frontier = true;
      if (tree->child_count(t.nodes[i]) > 1) ++r.frontier_branching;
    }
  }
  r.status = any_frontier ? EndReport::Status::Undetermined : EndReport::Status::FiniteTree;
  return r;
}

}  // namespace treechain
