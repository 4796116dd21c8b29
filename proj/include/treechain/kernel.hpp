#pragma once

// Transition kernels whose rows are supported on {parent} ∪ subtree (the
// upward-or-descendant shape), together with the built-in families, structural
// validation, irreducibility checks, subtree/end projections, pruning, and
// time reversal.  Subtree masses — the total weight a row places on a whole
// subtree — are a first-class capability of every kernel: all the determinant
// and leaf-addition formulas downstream consume masses, and the built-in
// families supply masses in closed form even when rows have infinite support.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "treechain/errors.hpp"
#include "treechain/linalg.hpp"
#include "treechain/node_word.hpp"
#include "treechain/rational.hpp"
#include "treechain/rng.hpp"
#include "treechain/tree.hpp"

namespace treechain {

// One sampled transition, expressed relative to the current node so that a
// walker can apply it in place without copying the whole address word.
struct StepMove {
  enum class Kind { ToParent, Within };
  Kind kind = Kind::Within;
  NodeWord relative;  // for Within: empty = stay, otherwise the descent word

  static StepMove to_parent() { return StepMove{Kind::ToParent, NodeWord::root()}; }
  static StepMove within(NodeWord rel) { return StepMove{Kind::Within, std::move(rel)}; }
};

inline NodeWord apply_move(const NodeWord& u, const StepMove& move) {
  if (move.kind == StepMove::Kind::ToParent) return u.parent();
  return u.concat(move.relative);
}

template <typename S>
class AudKernel {
 public:
  virtual ~AudKernel() = default;

  virtual const TreeSource& tree() const = 0;
  virtual TreePtr tree_ptr() const = 0;

  // Weight of the step u -> parent(u).  Undefined at the root.
  virtual S parent_weight(const NodeWord& u) const = 0;

  // Total weight the row of u places on the subtree rooted at v; v must be a
  // descendant of u (or u itself).  Rows are stochastic, so for u != root
  // subtree_mass(u, u) = 1 - parent_weight(u), and subtree_mass(root, root) = 1.
  virtual S subtree_mass(const NodeWord& u, const NodeWord& v) const = 0;

  // Single-entry weight of the step u -> v.  The default derives it from
  // masses: weight(u, v) = mass(u, v) - sum of masses of v's children.  For
  // targets outside {parent} ∪ subtree it returns 0; explicit matrix kernels
  // override this so that validation can see genuine support violations.
  virtual S point_weight(const NodeWord& u, const NodeWord& v) const {
    if (!u.is_root() && v == u.parent()) return parent_weight(u);
    if (!v.in_subtree_of(u)) return scalar_traits<S>::zero();
    S m = subtree_mass(u, v);
    const std::size_t nc = tree().child_count(v);
    for (std::size_t k = 0; k < nc; ++k) m -= subtree_mass(u, v.child(static_cast<Letter>(k)));
    return m;
  }

  // When the asymptotic ratio of consecutive level sums of the invariant
  // measure is known in closed form for this kernel/tree pair, families
  // advertise it here; classification uses it as an exact certificate.
  virtual std::optional<S> level_sum_ratio() const { return std::nullopt; }

  // Draws one transition from the row of u.  Sampling always happens in
  // binary64 regardless of the scalar type; the generic implementation walks
  // down the tree by inverse-CDF over subtree masses.
  virtual StepMove sample_step(const NodeWord& u, Rng& rng) const {
    double r = rng.u01();
    if (!u.is_root()) {
      const double pw = scalar_traits<S>::to_double(parent_weight(u));
      if (r < pw) return StepMove::to_parent();
      r -= pw;
    }
    NodeWord rel = NodeWord::root();
    NodeWord cur = u;
    for (std::size_t guard = 0; guard < kDefaultNodeCap; ++guard) {
      const double here = scalar_traits<S>::to_double(point_weight(u, cur));
      if (r < here) return StepMove::within(std::move(rel));
      r -= here;
      const std::size_t nc = tree().child_count(cur);
      bool descended = false;
      for (std::size_t k = 0; k < nc; ++k) {
        const double m =
            scalar_traits<S>::to_double(subtree_mass(u, cur.child(static_cast<Letter>(k))));
        if (r < m) {
          cur.push(static_cast<Letter>(k));
          rel.push(static_cast<Letter>(k));
          descended = true;
          break;
        }
        r -= m;
      }
      // Rounding dust can exhaust the children; land at the current node.
      if (!descended) return StepMove::within(std::move(rel));
    }
    throw resource_limit("step sampler descended past the node cap");
  }

  virtual std::string describe() const = 0;
};

template <typename S>
using KernelPtr = std::shared_ptr<const AudKernel<S>>;

// ---------------------------------------------------------------------------
// Explicit dense kernel on a finite tree.

template <typename S>
class ExplicitKernel : public AudKernel<S> {
 public:
  ExplicitKernel(std::shared_ptr<const FiniteTree> tree, Matrix<S> rows)
      : tree_(std::move(tree)), rows_(std::move(rows)) {
    const std::size_t n = tree_->nodes().size();
    if (rows_.rows() != n || rows_.cols() != n)
      throw DomainError("bad_kernel", "matrix size does not match tree size");
    // Preorder positions make every subtree a contiguous range, so per-row
    // prefix sums give O(1) subtree masses.
    dfs_pos_.assign(n, 0);
    dfs_order_.reserve(n);
    build_dfs(NodeWord::root());
    prefix_ = std::vector<S>((n + 1) * n, scalar_traits<S>::zero());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        prefix_at(i, j + 1) = prefix_at(i, j) + rows_.at(i, dfs_order_[j]);
  }

  const TreeSource& tree() const override { return *tree_; }
  TreePtr tree_ptr() const override { return tree_; }
  const FiniteTree& finite_tree() const { return *tree_; }
  std::shared_ptr<const FiniteTree> finite_tree_ptr() const { return tree_; }
  const Matrix<S>& matrix() const { return rows_; }

  S parent_weight(const NodeWord& u) const override {
    if (u.is_root()) throw DomainError("bad_node", "root has no parent edge");
    return rows_.at(tree_->index_of(u), tree_->index_of(u.parent()));
  }

  S subtree_mass(const NodeWord& u, const NodeWord& v) const override {
    if (!v.in_subtree_of(u))
      throw DomainError("bad_node", "subtree mass requires a descendant node");
    const std::size_t i = tree_->index_of(u);
    const std::size_t j = tree_->index_of(v);
    const std::size_t lo = dfs_pos_[j];
    const std::size_t hi = lo + tree_->subtree_size_at(j);
    return prefix_at(i, hi) - prefix_at(i, lo);
  }

  // Raw matrix entry, including any off-support weight the data may carry.
  S point_weight(const NodeWord& u, const NodeWord& v) const override {
    return rows_.at(tree_->index_of(u), tree_->index_of(v));
  }

  std::string describe() const override {
    return "explicit kernel on " + std::to_string(tree_->nodes().size()) + " nodes";
  }

 private:
  void build_dfs(const NodeWord& u) {
    const std::size_t idx = tree_->index_of(u);
    dfs_pos_[idx] = dfs_order_.size();
    dfs_order_.push_back(idx);
    const std::size_t nc = tree_->child_count(u);
    for (std::size_t k = 0; k < nc; ++k) build_dfs(u.child(static_cast<Letter>(k)));
  }

  S& prefix_at(std::size_t i, std::size_t j) {
    return prefix_[i * (tree_->nodes().size() + 1) + j];
  }
  const S& prefix_at(std::size_t i, std::size_t j) const {
    return prefix_[i * (tree_->nodes().size() + 1) + j];
  }

  std::shared_ptr<const FiniteTree> tree_;
  Matrix<S> rows_;
  std::vector<std::size_t> dfs_order_, dfs_pos_;
  std::vector<S> prefix_;
};

// ---------------------------------------------------------------------------
// Built-in families.

// Uniform choice in {parent} ∪ subtree (uniform in the whole tree at the
// root).  Finite trees only.
template <typename S>
class UniformKernel : public AudKernel<S> {
 public:
  explicit UniformKernel(TreePtr tree) : tree_(std::move(tree)) {
    if (!tree_->size().has_value())
      throw DomainError("bad_parameter", "uniform family needs a finite tree");
  }

  const TreeSource& tree() const override { return *tree_; }
  TreePtr tree_ptr() const override { return tree_; }

  S parent_weight(const NodeWord& u) const override {
    if (u.is_root()) throw DomainError("bad_node", "root has no parent edge");
    return scalar_traits<S>::from_ratio(1, static_cast<long long>(subtree_count(u)) + 1);
  }

  S subtree_mass(const NodeWord& u, const NodeWord& v) const override {
    if (!v.in_subtree_of(u))
      throw DomainError("bad_node", "subtree mass requires a descendant node");
    const long long denom = static_cast<long long>(subtree_count(u)) + (u.is_root() ? 0 : 1);
    return scalar_traits<S>::from_ratio(static_cast<long long>(subtree_count(v)), denom);
  }

  std::string describe() const override { return "uniform descendant-or-parent kernel"; }

 private:
  std::size_t subtree_count(const NodeWord& u) const {
    auto c = tree_->subtree_size(u);
    if (!c) throw DomainError("bad_parameter", "uniform family met an unsized subtree");
    return *c;
  }
  TreePtr tree_;
};

// With probability p jump to a uniform node of the subtree, otherwise move to
// the parent (at the root the parent mass becomes a self-loop).  Finite trees.
template <typename S>
class GeometricKernel : public AudKernel<S> {
 public:
  GeometricKernel(TreePtr tree, S p) : tree_(std::move(tree)), p_(std::move(p)) {
    const S one = scalar_traits<S>::one();
    if (!(p_ > scalar_traits<S>::zero()) || !(p_ < one))
      throw DomainError("bad_parameter", "descendant probability must lie in (0,1)");
    if (!tree_->size().has_value())
      throw DomainError("bad_parameter", "geometric family needs a finite tree");
  }

  const TreeSource& tree() const override { return *tree_; }
  TreePtr tree_ptr() const override { return tree_; }

  S parent_weight(const NodeWord& u) const override {
    if (u.is_root()) throw DomainError("bad_node", "root has no parent edge");
    return scalar_traits<S>::one() - p_;
  }

  S subtree_mass(const NodeWord& u, const NodeWord& v) const override {
    if (!v.in_subtree_of(u))
      throw DomainError("bad_node", "subtree mass requires a descendant node");
    S frac = scalar_traits<S>::from_ratio(static_cast<long long>(subtree_count(v)),
                                          static_cast<long long>(subtree_count(u)));
    S m = p_ * frac;
    if (u.is_root() && v.is_root()) m += scalar_traits<S>::one() - p_;
    return m;
  }

  std::string describe() const override {
    return "geometric descendant kernel, p = " + scalar_traits<S>::str(p_);
  }

 private:
  std::size_t subtree_count(const NodeWord& u) const {
    auto c = tree_->subtree_size(u);
    if (!c) throw DomainError("bad_parameter", "geometric family met an unsized subtree");
    return *c;
  }
  TreePtr tree_;
  S p_;
};

// Height laws drive the distance-to-root projection families: down(h) is the
// weight of h -> h-1 and tail(h, k) the total weight of jumps h -> {k, k+1, ...}
// for k >= h.
template <typename S>
class HeightLaw {
 public:
  virtual ~HeightLaw() = default;
  virtual S down(std::size_t h) const = 0;
  virtual S tail(std::size_t h, std::size_t k) const = 0;
  virtual std::string describe() const = 0;
};

// Finite-band rows given as a table; heights beyond the table reuse the last
// row.  Row h holds the downward weight and the weights of jumps to heights
// h, h+1, ..., h+B.
template <typename S>
class TableHeightLaw : public HeightLaw<S> {
 public:
  struct Row {
    S down;
    std::vector<S> up;  // weights for relative heights 0, 1, ..., B
  };

  explicit TableHeightLaw(std::vector<Row> rows) : rows_(std::move(rows)) {
    if (rows_.empty()) throw DomainError("bad_parameter", "height law needs at least one row");
    for (std::size_t h = 0; h < rows_.size(); ++h) {
      S sum = (h == 0) ? scalar_traits<S>::zero() : rows_[h].down;
      for (const S& w : rows_[h].up) sum += w;
      if (!row_is_stochastic(sum))
        throw DomainError("bad_parameter", "height law row does not sum to 1");
    }
  }

  S down(std::size_t h) const override {
    if (h == 0) throw DomainError("bad_node", "height 0 has no downward step");
    return row(h).down;
  }

  S tail(std::size_t h, std::size_t k) const override {
    const Row& r = row(h);
    S sum = scalar_traits<S>::zero();
    for (std::size_t j = (k > h ? k - h : 0); j < r.up.size(); ++j) sum += r.up[j];
    return sum;
  }

  std::string describe() const override {
    return "table height law with " + std::to_string(rows_.size()) + " rows";
  }

 private:
  static bool row_is_stochastic(const S& sum) {
    if constexpr (scalar_traits<S>::is_exact) {
      return sum == scalar_traits<S>::one();
    } else {
      return scalar_traits<S>::abs(sum - 1.0) <= 1e-12;
    }
  }
  const Row& row(std::size_t h) const { return rows_[std::min(h, rows_.size() - 1)]; }
  std::vector<Row> rows_;
};

// Distance-to-root projection family on the complete d-ary tree: the height
// process follows the given law and the landing node is uniform among the
// d^(k-h) descendants at the landing height, so subtree masses are
// d^(h-k) * tail(h, k).
template <typename S>
class HeightDrivenKernel : public AudKernel<S> {
 public:
  HeightDrivenKernel(std::size_t arity, std::shared_ptr<const HeightLaw<S>> law)
      : tree_(std::make_shared<CompleteTree>(arity)), arity_(arity), law_(std::move(law)) {}

  const TreeSource& tree() const override { return *tree_; }
  TreePtr tree_ptr() const override { return tree_; }
  const HeightLaw<S>& law() const { return *law_; }
  std::size_t arity() const { return arity_; }

  S parent_weight(const NodeWord& u) const override {
    if (u.is_root()) throw DomainError("bad_node", "root has no parent edge");
    return law_->down(u.depth());
  }

  S subtree_mass(const NodeWord& u, const NodeWord& v) const override {
    if (!v.in_subtree_of(u))
      throw DomainError("bad_node", "subtree mass requires a descendant node");
    const std::size_t h = u.depth(), k = v.depth();
    return law_->tail(h, k) * scalar_pow<S>(scalar_traits<S>::from_int(
                                                static_cast<long long>(arity_)),
                                            -static_cast<long long>(k - h));
  }

  std::string describe() const override {
    return "height-driven kernel on the complete " + std::to_string(arity_) + "-ary tree (" +
           law_->describe() + ")";
  }

 private:
  std::shared_ptr<const CompleteTree> tree_;
  std::size_t arity_;
  std::shared_ptr<const HeightLaw<S>> law_;
};

// Jump-to-the-leaves family on a tree in which every node has d children or
// none: with probability 1-p step to the parent, otherwise descend to a leaf
// of the current subtree, a leaf at distance m receiving weight d^-m.  At the
// root the parent mass becomes a self-loop.
template <typename S>
class LeafJumpKernel : public AudKernel<S> {
 public:
  LeafJumpKernel(TreePtr tree, S p)
      : tree_(std::move(tree)), p_(std::move(p)),
        arity_(tree_->child_count(NodeWord::root())) {
    if (!(p_ > scalar_traits<S>::zero()) || !(p_ < scalar_traits<S>::one()))
      throw DomainError("bad_parameter", "leaf-jump probability must lie in (0,1)");
    if (arity_ == 0) throw DomainError("bad_parameter", "leaf-jump tree must branch at the root");
  }

  const TreeSource& tree() const override { return *tree_; }
  TreePtr tree_ptr() const override { return tree_; }

  S parent_weight(const NodeWord& u) const override {
    if (u.is_root()) throw DomainError("bad_node", "root has no parent edge");
    return scalar_traits<S>::one() - p_;
  }

  S subtree_mass(const NodeWord& u, const NodeWord& v) const override {
    if (!v.in_subtree_of(u))
      throw DomainError("bad_node", "subtree mass requires a descendant node");
    check_branching(v);
    S m = p_ * scalar_pow<S>(scalar_traits<S>::from_int(static_cast<long long>(arity_)),
                             -static_cast<long long>(v.depth() - u.depth()));
    if (u.is_root() && v.is_root()) m += scalar_traits<S>::one() - p_;
    return m;
  }

  std::string describe() const override {
    return "leaf-jump kernel, p = " + scalar_traits<S>::str(p_);
  }

 private:
  void check_branching(const NodeWord& v) const {
    const std::size_t nc = tree_->child_count(v);
    if (nc != 0 && nc != arity_)
      throw DomainError("bad_parameter", "leaf-jump tree must give every node " +
                                             std::to_string(arity_) + " children or none");
  }
  TreePtr tree_;
  S p_;
  std::size_t arity_;
};

// ---------------------------------------------------------------------------
// Nearest-neighbour random walks (simultaneously upward-or-descendant and its
// mirror).  The row function returns the full one-step distribution at a node.

template <typename S>
struct RwRow {
  S up = scalar_traits<S>::zero();  // folded into stay at the root
  S stay = scalar_traits<S>::zero();
  std::vector<S> down;  // one weight per child, in letter order
};

template <typename S>
class RandomWalkKernel : public AudKernel<S> {
 public:
  using RowFn = std::function<RwRow<S>(const TreeSource&, const NodeWord&)>;

  RandomWalkKernel(TreePtr tree, RowFn row, std::string name)
      : tree_(std::move(tree)), row_(std::move(row)), name_(std::move(name)) {}

  const TreeSource& tree() const override { return *tree_; }
  TreePtr tree_ptr() const override { return tree_; }

  RwRow<S> row(const NodeWord& u) const { return row_(*tree_, u); }

  S parent_weight(const NodeWord& u) const override {
    if (u.is_root()) throw DomainError("bad_node", "root has no parent edge");
    return row(u).up;
  }

  S subtree_mass(const NodeWord& u, const NodeWord& v) const override {
    if (!v.in_subtree_of(u))
      throw DomainError("bad_node", "subtree mass requires a descendant node");
    if (v == u)
      return u.is_root() ? scalar_traits<S>::one() : scalar_traits<S>::one() - row(u).up;
    if (v.depth() == u.depth() + 1) return row(u).down[v.last()];
    return scalar_traits<S>::zero();
  }

  S point_weight(const NodeWord& u, const NodeWord& v) const override {
    if (!u.is_root() && v == u.parent()) return row(u).up;
    if (v == u) return row(u).stay;
    if (v.in_subtree_of(u) && v.depth() == u.depth() + 1) return row(u).down[v.last()];
    return scalar_traits<S>::zero();
  }

  StepMove sample_step(const NodeWord& u, Rng& rng) const override {
    RwRow<S> r = row(u);
    double x = rng.u01();
    if (!u.is_root()) {
      const double up = scalar_traits<S>::to_double(r.up);
      if (x < up) return StepMove::to_parent();
      x -= up;
    }
    const double stay = scalar_traits<S>::to_double(r.stay);
    if (x < stay) return StepMove::within(NodeWord::root());
    x -= stay;
    for (std::size_t k = 0; k < r.down.size(); ++k) {
      const double w = scalar_traits<S>::to_double(r.down[k]);
      if (x < w) return StepMove::within(NodeWord(std::vector<Letter>{static_cast<Letter>(k)}));
      x -= w;
    }
    return StepMove::within(NodeWord::root());
  }

  std::optional<S> level_sum_ratio() const override { return level_sum_ratio_; }
  void set_level_sum_ratio(S ratio) { level_sum_ratio_ = std::move(ratio); }

  std::string describe() const override { return name_; }

 private:
  TreePtr tree_;
  RowFn row_;
  std::string name_;
  std::optional<S> level_sum_ratio_;
};

// Uniform step to the closed neighbourhood: each child and the parent get
// weight 1/(c+1); at the root the parent share becomes a self-loop.
template <typename S>
std::shared_ptr<RandomWalkKernel<S>> make_simple_walk(TreePtr tree) {
  auto row = [](const TreeSource& t, const NodeWord& u) {
    const std::size_t c = t.child_count(u);
    RwRow<S> r;
    const S share = scalar_traits<S>::from_ratio(1, static_cast<long long>(c) + 1);
    r.up = share;
    r.stay = u.is_root() ? share : scalar_traits<S>::zero();
    r.down.assign(c, share);
    return r;
  };
  return std::make_shared<RandomWalkKernel<S>>(std::move(tree), row, "simple random walk");
}

// Homogeneous walk: fixed upward weight, fixed per-child weight, remainder
// stays put; at the root the upward weight folds into the self-loop.
template <typename S>
std::shared_ptr<RandomWalkKernel<S>> make_homogeneous_walk(TreePtr tree, S up, S per_child) {
  auto row = [up, per_child](const TreeSource& t, const NodeWord& u) {
    const std::size_t c = t.child_count(u);
    RwRow<S> r;
    r.up = up;
    r.down.assign(c, per_child);
    S used = per_child * scalar_traits<S>::from_int(static_cast<long long>(c));
    if (!u.is_root()) used += up;
    r.stay = scalar_traits<S>::one() - used;
    if (r.stay < scalar_traits<S>::zero())
      throw DomainError("bad_parameter", "homogeneous walk row exceeds total mass 1");
    return r;
  };
  return std::make_shared<RandomWalkKernel<S>>(std::move(tree), row, "homogeneous walk");
}

// Degree-homogeneous walk: upward weight F(k) and per-child weight G(k)
// depend only on the number k of children; requires 1 - F(k) - kG(k) >= 0.
// At the root the upward weight folds into the self-loop.
template <typename S>
std::shared_ptr<RandomWalkKernel<S>> make_degree_homogeneous_walk(
    TreePtr tree, std::function<S(std::size_t)> F, std::function<S(std::size_t)> G) {
  auto row = [F, G](const TreeSource& t, const NodeWord& u) {
    const std::size_t c = t.child_count(u);
    RwRow<S> r;
    r.up = F(c);
    S g = G(c);
    if (!(r.up > scalar_traits<S>::zero()) || !(g > scalar_traits<S>::zero()))
      throw DomainError("bad_parameter", "degree-homogeneous weights must be positive");
    r.down.assign(c, g);
    S stay = scalar_traits<S>::one() - r.up - g * scalar_traits<S>::from_int(static_cast<long long>(c));
    if (stay < scalar_traits<S>::zero()) {
      if constexpr (scalar_traits<S>::is_exact) {
        throw DomainError("bad_parameter", "degree-homogeneous weights exceed total mass 1");
      } else {
        if (stay < -1e-12)
          throw DomainError("bad_parameter", "degree-homogeneous weights exceed total mass 1");
        stay = 0.0;
      }
    }
    r.stay = u.is_root() ? stay + r.up : stay;
    return r;
  };
  auto kernel = std::make_shared<RandomWalkKernel<S>>(tree, row, "degree-homogeneous walk");
  if (auto complete = dynamic_cast<const CompleteTree*>(tree.get())) {
    const std::size_t d = complete->arity();
    kernel->set_level_sum_ratio(scalar_traits<S>::from_int(static_cast<long long>(d)) * G(d) /
                                F(d));
  }
  return kernel;
}

// Birth-death chain on the half-line: per-height toward-root/away/stay rates,
// heights beyond the tables reusing the last entry.  Height 0 folds its
// toward-root rate into the self-loop.
template <typename S>
std::shared_ptr<RandomWalkKernel<S>> make_birth_death(std::vector<S> toward_root,
                                                      std::vector<S> away,
                                                      std::vector<S> stay) {
  if (toward_root.empty() || toward_root.size() != away.size() ||
      toward_root.size() != stay.size())
    throw DomainError("bad_parameter", "birth-death rate tables must be non-empty, equal length");
  auto row = [toward_root, away, stay](const TreeSource&, const NodeWord& u) {
    auto pick = [](const std::vector<S>& v, std::size_t h) {
      return v[std::min(h, v.size() - 1)];
    };
    const std::size_t h = u.depth();
    RwRow<S> r;
    r.up = pick(toward_root, h);
    r.down = {pick(away, h)};
    r.stay = pick(stay, h);
    if (u.is_root()) r.stay += r.up;
    return r;
  };
  auto kernel = std::make_shared<RandomWalkKernel<S>>(make_line(), row, "birth-death chain");
  if (toward_root.size() == 1 && !scalar_traits<S>::is_zero(toward_root[0]))
    kernel->set_level_sum_ratio(away[0] / toward_root[0]);
  return kernel;
}

// Walk on a star of rays: along ray i the away-from-root weight is away[i],
// the rest goes toward the root; the root splits root_to_ray among the rays
// and keeps the remainder as a self-loop.
template <typename S>
std::shared_ptr<RandomWalkKernel<S>> make_ray_walk(std::shared_ptr<const RaysTree> tree,
                                                   std::vector<S> away,
                                                   std::vector<S> root_to_ray) {
  const std::size_t rays = tree->rays();
  if (away.size() != rays || root_to_ray.size() != rays)
    throw DomainError("bad_parameter", "ray walk needs one rate per ray");
  auto row = [away, root_to_ray](const TreeSource&, const NodeWord& u) {
    RwRow<S> r;
    if (u.is_root()) {
      r.down = root_to_ray;
      S used = scalar_traits<S>::zero();
      for (const S& w : root_to_ray) used += w;
      r.stay = scalar_traits<S>::one() - used;
    } else {
      const std::size_t ray = u.letter(0);
      r.down = {away[ray]};
      r.up = scalar_traits<S>::one() - away[ray];
    }
    return r;
  };
  return std::make_shared<RandomWalkKernel<S>>(std::move(tree), row, "ray walk");
}

// ---------------------------------------------------------------------------
// Skeleton subtrees and redirected kernels (end projection / pruning).
//
// Both constructions keep a parent-closed subset of the base tree and
// redirect every dropped transition to its closest kept ancestor.  Because a
// kept node's full base subtree maps onto its skeleton subtree under that
// redirection, subtree masses and parent weights restrict *unchanged*; the
// redirected point weights then emerge from the default mass-difference
// derivation computed over the skeleton's children.

class SkeletonTree : public TreeSource {
 public:
  // keep(base, child_word) decides whether a child of a kept node is kept.
  using Filter = std::function<bool(const TreeSource&, const NodeWord&)>;

  SkeletonTree(TreePtr base, Filter keep, std::optional<bool> leafless, std::string name)
      : base_(std::move(base)), keep_(std::move(keep)), leafless_(leafless),
        name_(std::move(name)) {}

  // The base-tree word a skeleton word stands for.
  NodeWord original(const NodeWord& u) const {
    std::lock_guard<std::mutex> lock(mu_);
    return original_locked(u);
  }

  std::size_t child_count(const NodeWord& u) const override {
    std::lock_guard<std::mutex> lock(mu_);
    return kept_children_locked(u).size();
  }

  std::optional<std::size_t> size() const override { return std::nullopt; }

  std::optional<std::size_t> subtree_size(const NodeWord& u) const override {
    NodeWord orig = original(u);
    if (base_->subtree_finiteness(orig) == Finiteness::Finite) return base_->subtree_size(orig);
    return std::nullopt;
  }

  Finiteness subtree_finiteness(const NodeWord& u) const override {
    return base_->subtree_finiteness(original(u));
  }

  std::optional<bool> leafless() const override { return leafless_; }

  const TreeSource& base() const { return *base_; }

  std::string describe() const override { return name_; }

 private:
  NodeWord original_locked(const NodeWord& u) const {
    auto it = original_.find(u);
    if (it != original_.end()) return it->second;
    if (u.is_root()) return original_.emplace(u, NodeWord::root()).first->second;
    NodeWord parent_orig = original_locked(u.parent());
    const auto& kept = kept_children_locked(u.parent());
    if (u.last() >= kept.size())
      throw DomainError("bad_node", "node is outside the skeleton tree");
    NodeWord orig = parent_orig.child(kept[u.last()]);
    return original_.emplace(u, std::move(orig)).first->second;
  }

  const std::vector<Letter>& kept_children_locked(const NodeWord& u) const {
    auto it = kept_children_.find(u);
    if (it != kept_children_.end()) return it->second;
    NodeWord orig = original_locked(u);
    std::vector<Letter> kept;
    const std::size_t nc = base_->child_count(orig);
    for (std::size_t k = 0; k < nc; ++k)
      if (keep_(*base_, orig.child(static_cast<Letter>(k))))
        kept.push_back(static_cast<Letter>(k));
    return kept_children_.emplace(u, std::move(kept)).first->second;
  }

  TreePtr base_;
  Filter keep_;
  std::optional<bool> leafless_;
  std::string name_;
  mutable std::mutex mu_;
  mutable std::map<NodeWord, NodeWord> original_;
  mutable std::map<NodeWord, std::vector<Letter>> kept_children_;
};

template <typename S>
class RedirectedKernel : public AudKernel<S> {
 public:
  RedirectedKernel(KernelPtr<S> base, std::shared_ptr<const SkeletonTree> skeleton)
      : base_(std::move(base)), skeleton_(std::move(skeleton)) {}

  const TreeSource& tree() const override { return *skeleton_; }
  TreePtr tree_ptr() const override { return skeleton_; }
  const SkeletonTree& skeleton() const { return *skeleton_; }

  S parent_weight(const NodeWord& u) const override {
    if (u.is_root()) throw DomainError("bad_node", "root has no parent edge");
    return base_->parent_weight(skeleton_->original(u));
  }

  S subtree_mass(const NodeWord& u, const NodeWord& v) const override {
    if (!v.in_subtree_of(u))
      throw DomainError("bad_node", "subtree mass requires a descendant node");
    return base_->subtree_mass(skeleton_->original(u), skeleton_->original(v));
  }

  std::string describe() const override {
    return skeleton_->describe() + " of (" + base_->describe() + ")";
  }

 private:
  KernelPtr<S> base_;
  std::shared_ptr<const SkeletonTree> skeleton_;
};

namespace detail {

inline Finiteness decided_finiteness(const TreeSource& tree, const NodeWord& u) {
  Finiteness f = tree.subtree_finiteness(u);
  if (f == Finiteness::Unknown)
    throw DomainError("finiteness_unknown",
                      "subtree finiteness of " + u.to_string() +
                          " is not annotated; projection is undecidable");
  return f;
}

}  // namespace detail

// Projection of the kernel onto one end: keeps the ray and the finite
// subtrees hanging from it, and redirects every transition into a dropped
// (infinite, off-ray) subtree to its closest ray ancestor.
template <typename S>
KernelPtr<S> project_end(KernelPtr<S> kernel, const EndDescription& end) {
  TreePtr tree = kernel->tree_ptr();
  // The ray must actually lie in the tree.
  for (std::size_t d = 1; d <= end.prefix.depth() + 2 * end.period.size() + 2; ++d)
    if (!tree->contains(end.node_at(d)))
      throw DomainError("bad_ends", "declared end leaves the tree at depth " + std::to_string(d));
  auto keep = [end](const TreeSource& base, const NodeWord& child) {
    if (end.contains(child)) return true;
    return detail::decided_finiteness(base, child) == Finiteness::Finite;
  };
  auto skeleton = std::make_shared<SkeletonTree>(std::move(tree), keep,
                                                 /*leafless=*/std::nullopt,
                                                 "end projection onto " + end.label);
  return std::make_shared<RedirectedKernel<S>>(std::move(kernel), std::move(skeleton));
}

// Pruning of all finite subtrees: keeps exactly the nodes with infinite
// subtrees (the union of the ends) and redirects dropped transitions to the
// closest kept ancestor.
template <typename S>
KernelPtr<S> prune_finite_subtrees(KernelPtr<S> kernel) {
  TreePtr tree = kernel->tree_ptr();
  if (detail::decided_finiteness(*tree, NodeWord::root()) == Finiteness::Finite)
    throw DomainError("bad_parameter", "cannot prune a finite tree down to its ends");
  auto keep = [](const TreeSource& base, const NodeWord& child) {
    return detail::decided_finiteness(base, child) == Finiteness::Infinite;
  };
  auto skeleton = std::make_shared<SkeletonTree>(std::move(tree), keep, /*leafless=*/true,
                                                 "leafless-skeleton projection");
  return std::make_shared<RedirectedKernel<S>>(std::move(kernel), std::move(skeleton));
}

// ---------------------------------------------------------------------------
// Projection onto a truncation (a finite subtree containing the root): every
// transition to the exterior is redirected to the nearest truncation node,
// giving the dense rows mass(u, v) - sum over kept children of mass(u, child).

template <typename S>
std::shared_ptr<ExplicitKernel<S>> project_subtree(const AudKernel<S>& kernel,
                                                   const Truncation& trunc) {
  if (!trunc.base.is_root())
    throw DomainError("bad_parameter", "subtree projection requires a root-based truncation");
  auto frozen = freeze(trunc);
  const auto& nodes = frozen->nodes();
  const std::size_t n = nodes.size();
  Matrix<S> rows(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const NodeWord& u = nodes[i];
    if (!u.is_root()) rows.at(i, frozen->index_of(u.parent())) = kernel.parent_weight(u);
    for (std::size_t j = 0; j < n; ++j) {
      const NodeWord& v = nodes[j];
      if (!v.in_subtree_of(u)) continue;
      S m = kernel.subtree_mass(u, v);
      const std::size_t nc = frozen->child_count(v);
      for (std::size_t k = 0; k < nc; ++k)
        m -= kernel.subtree_mass(u, v.child(static_cast<Letter>(k)));
      rows.at(i, j) = m;
    }
  }
  return std::make_shared<ExplicitKernel<S>>(std::move(frozen), std::move(rows));
}

// ---------------------------------------------------------------------------
// Structural validation and irreducibility.

struct KernelViolation {
  std::string kind;  // "row_sum" | "support" | "negative" | "consistency" | "monotonicity"
  NodeWord node;
  std::string detail;
};

template <typename S>
std::vector<KernelViolation> validate_aud(const AudKernel<S>& kernel, const Truncation& trunc,
                                          double tol = 1e-12) {
  std::vector<KernelViolation> out;
  auto is_off = [tol](const S& x) {
    if constexpr (scalar_traits<S>::is_exact)
      return !scalar_traits<S>::is_zero(x);
    else
      return scalar_traits<S>::abs(x) > tol;
  };
  for (const NodeWord& u : trunc.nodes) {
    // Row mass: parent share plus own-subtree mass must be exactly 1.
    S row = kernel.subtree_mass(u, u);
    if (!u.is_root()) row += kernel.parent_weight(u);
    if (is_off(row - scalar_traits<S>::one()))
      out.push_back({"row_sum", u, "parent weight + subtree mass = " + scalar_traits<S>::str(row)});
    if (!u.is_root() && kernel.parent_weight(u) < scalar_traits<S>::zero())
      out.push_back({"negative", u, "negative parent weight"});
    for (const NodeWord& v : trunc.nodes) {
      const S w = kernel.point_weight(u, v);
      const bool supported = (!u.is_root() && v == u.parent()) || v.in_subtree_of(u);
      if (!supported && is_off(w))
        out.push_back({"support", u, "positive weight to " + v.to_string() +
                                         ", which is neither parent nor descendant"});
      if (supported && w < scalar_traits<S>::zero())
        out.push_back({"negative", u, "negative weight to " + v.to_string()});
      if (v.in_subtree_of(u)) {
        // Masses must dominate their children's and equal point + children.
        S children = scalar_traits<S>::zero();
        const std::size_t nc = trunc.tree->child_count(v);
        bool all_children_inside = true;
        for (std::size_t k = 0; k < nc; ++k) {
          if (!trunc.contains(v.child(static_cast<Letter>(k)))) {
            all_children_inside = false;
            break;
          }
          children += kernel.subtree_mass(u, v.child(static_cast<Letter>(k)));
        }
        if (all_children_inside) {
          const S m = kernel.subtree_mass(u, v);
          if (m - children < scalar_traits<S>::zero() && is_off(m - children))
            out.push_back({"monotonicity", u,
                           "subtree mass at " + v.to_string() + " is below its children's"});
          if (is_off(m - children - w))
            out.push_back({"consistency", u,
                           "mass minus children's masses differs from the point weight at " +
                               v.to_string()});
        }
      }
    }
  }
  return out;
}

struct IrreducibilityReport {
  bool pass = true;
  std::optional<NodeWord> counterexample;
  std::string reason;
};

// Certifies the irreducibility conditions on the truncation: every non-root
// node can step to its parent, and every non-root subtree receives mass from
// some strict ancestor.  On infinite trees this is a certificate up to the
// truncation depth, not a global proof.
template <typename S>
IrreducibilityReport check_irreducible(const AudKernel<S>& kernel, const Truncation& trunc) {
  for (const NodeWord& u : trunc.nodes) {
    if (u.is_root()) continue;
    if (!(kernel.parent_weight(u) > scalar_traits<S>::zero()))
      return {false, u, "no positive step toward the parent"};
    bool reachable = false;
    for (NodeWord a = u.parent();; a = a.parent()) {
      if (kernel.subtree_mass(a, u) > scalar_traits<S>::zero()) {
        reachable = true;
        break;
      }
      if (a.is_root()) break;
    }
    if (!reachable) return {false, u, "no strict ancestor places mass on this subtree"};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Dense mirrored kernels (rows supported on children and ancestors) and time
// reversal.

template <typename S>
class AldExplicit {
 public:
  AldExplicit(std::shared_ptr<const FiniteTree> tree, Matrix<S> rows)
      : tree_(std::move(tree)), rows_(std::move(rows)) {
    const std::size_t n = tree_->nodes().size();
    if (rows_.rows() != n || rows_.cols() != n)
      throw DomainError("bad_kernel", "matrix size does not match tree size");
  }

  const FiniteTree& finite_tree() const { return *tree_; }
  std::shared_ptr<const FiniteTree> finite_tree_ptr() const { return tree_; }
  const Matrix<S>& matrix() const { return rows_; }

  S child_weight(const NodeWord& u, Letter k) const {
    return rows_.at(tree_->index_of(u), tree_->index_of(u.child(k)));
  }
  S ancestor_weight(const NodeWord& u, const NodeWord& a) const {
    if (!u.in_subtree_of(a)) throw DomainError("bad_node", "not an ancestor");
    return rows_.at(tree_->index_of(u), tree_->index_of(a));
  }

  std::vector<KernelViolation> validate(double tol = 1e-12) const {
    std::vector<KernelViolation> out;
    auto is_off = [tol](const S& x) {
      if constexpr (scalar_traits<S>::is_exact)
        return !scalar_traits<S>::is_zero(x);
      else
        return scalar_traits<S>::abs(x) > tol;
    };
    const auto& nodes = tree_->nodes();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      S row = scalar_traits<S>::zero();
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        const S w = rows_.at(i, j);
        row += w;
        if (w < scalar_traits<S>::zero())
          out.push_back({"negative", nodes[i], "negative weight to " + nodes[j].to_string()});
        const bool is_child =
            nodes[j].depth() == nodes[i].depth() + 1 && nodes[j].in_subtree_of(nodes[i]);
        const bool is_ancestor = nodes[i].in_subtree_of(nodes[j]);  // includes self
        if (!is_child && !is_ancestor && is_off(w))
          out.push_back({"support", nodes[i],
                         "positive weight to " + nodes[j].to_string() +
                             ", which is neither child nor ancestor"});
      }
      if (is_off(row - scalar_traits<S>::one()))
        out.push_back({"row_sum", nodes[i], "row sums to " + scalar_traits<S>::str(row)});
    }
    return out;
  }

  // Mirrored irreducibility: every child is reachable from its parent, and
  // from inside every subtree one can exit to a strict ancestor.
  IrreducibilityReport check_irreducible() const {
    const auto& nodes = tree_->nodes();
    for (const NodeWord& v : nodes) {
      if (v.is_root()) continue;
      if (!(rows_.at(tree_->index_of(v.parent()), tree_->index_of(v)) > scalar_traits<S>::zero()))
        return {false, v, "parent places no mass on this child"};
      bool exits = false;
      for (const NodeWord& w : nodes) {
        if (!w.in_subtree_of(v)) continue;
        for (NodeWord a = v.parent();; a = a.parent()) {
          if (rows_.at(tree_->index_of(w), tree_->index_of(a)) > scalar_traits<S>::zero()) {
            exits = true;
            break;
          }
          if (a.is_root()) break;
        }
        if (exits) break;
      }
      if (!exits) return {false, v, "no descendant steps to a strict ancestor"};
    }
    return {};
  }

 private:
  std::shared_ptr<const FiniteTree> tree_;
  Matrix<S> rows_;
};

namespace detail {

template <typename S>
Matrix<S> reverse_dense(const Matrix<S>& p, const std::vector<S>& pi) {
  const std::size_t n = p.rows();
  Matrix<S> q(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) q.at(j, i) = pi[i] * p.at(i, j) / pi[j];
  return q;
}

template <typename S>
void require_invariant(const Matrix<S>& p, const std::vector<S>& pi, double tol) {
  if (pi.size() != p.rows())
    throw DomainError("bad_measure", "measure length does not match the kernel");
  for (const S& x : pi)
    if (!(x > scalar_traits<S>::zero()))
      throw DomainError("bad_measure", "time reversal needs a strictly positive measure");
  std::vector<S> lhs = p.apply_left(pi);
  for (std::size_t j = 0; j < pi.size(); ++j) {
    const S diff = lhs[j] - pi[j];
    bool off;
    if constexpr (scalar_traits<S>::is_exact)
      off = !scalar_traits<S>::is_zero(diff);
    else
      off = scalar_traits<S>::abs(diff) > tol;
    if (off) throw DomainError("bad_measure", "measure is not invariant for the kernel");
  }
}

}  // namespace detail

// Time reversal of a dense kernel on a finite tree with respect to an
// invariant measure pi: the reversed chain steps from descendants back up, so
// the result lives in the mirrored (children-or-ancestors) class.
template <typename S>
AldExplicit<S> reverse(const ExplicitKernel<S>& kernel, const std::vector<S>& pi,
                       double tol = 1e-9) {
  detail::require_invariant(kernel.matrix(), pi, tol);
  return AldExplicit<S>(kernel.finite_tree_ptr(), detail::reverse_dense(kernel.matrix(), pi));
}

// Reversing the reversal (with the same measure) restores the original kernel.
template <typename S>
ExplicitKernel<S> reverse(const AldExplicit<S>& kernel, const std::vector<S>& pi,
                          double tol = 1e-9) {
  detail::require_invariant(kernel.matrix(), pi, tol);
  return ExplicitKernel<S>(kernel.finite_tree_ptr(), detail::reverse_dense(kernel.matrix(), pi));
}

}  // namespace treechain
