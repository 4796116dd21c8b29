#pragma once

// Critical Galton-Watson trees conditioned to survive (size-biased spine
// construction), degree-homogeneous walks on them, the {f, m, L}
// positive-recurrence classifier, and exact per-sample mass estimation along
// the spine.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "treechain/classify.hpp"
#include "treechain/errors.hpp"
#include "treechain/invariant.hpp"
#include "treechain/kernel.hpp"
#include "treechain/node_word.hpp"
#include "treechain/rational.hpp"
#include "treechain/rng.hpp"
#include "treechain/tree.hpp"

namespace treechain {

// A finitely supported critical offspring law: probabilities p_0..p_K with
// sum one, mean exactly one, and p_0 + p_1 < 1 (so the size-biased law does
// not degenerate to a bare ray, and extinction is a.s. but not immediate).
template <typename S>
class OffspringLaw {
 public:
  explicit OffspringLaw(std::vector<S> p) : p_(std::move(p)) {
    using T = scalar_traits<S>;
    if (p_.empty()) throw DomainError("bad_parameter", "empty offspring law");
    while (p_.size() > 1 && T::is_zero(p_.back())) p_.pop_back();
    S sum = T::zero();
    S mean = T::zero();
    for (std::size_t k = 0; k < p_.size(); ++k) {
      if (T::to_double(p_[k]) < 0.0)
        throw DomainError("bad_parameter", "negative offspring probability");
      sum = sum + p_[k];
      mean = mean + T::from_int(static_cast<long long>(k)) * p_[k];
    }
    auto near_one = [](const S& v) {
      if constexpr (T::is_exact)
        return v == T::one();
      else
        return std::abs(T::to_double(v) - 1.0) <= 1e-12;
    };
    if (!near_one(sum))
      throw DomainError("bad_parameter", "offspring probabilities must sum to one");
    if (!near_one(mean))
      throw DomainError("bad_parameter", "offspring law must be critical (mean one)");
    S low = p_[0];
    if (p_.size() > 1) low = low + p_[1];
    if (!(T::to_double(low) < 1.0))
      throw DomainError("bad_parameter", "offspring law needs mass on degrees >= 2");
  }

  const std::vector<S>& probabilities() const { return p_; }
  std::size_t max_degree() const { return p_.size() - 1; }

  // The size-biased law: weight k * p_k on degree k (a probability law by
  // criticality).
  std::vector<S> biased() const {
    using T = scalar_traits<S>;
    std::vector<S> out(p_.size(), T::zero());
    for (std::size_t k = 1; k < p_.size(); ++k)
      out[k] = T::from_int(static_cast<long long>(k)) * p_[k];
    return out;
  }

 private:
  std::vector<S> p_;
};

// Degree-homogeneous walk parameters: up-probability F(k) and per-child
// probability G(k) as functions of the child count k, with
// stay(k) = 1 - F(k) - k G(k).
template <typename S>
struct HomogeneousWalkParams {
  std::function<S(std::size_t)> F;
  std::function<S(std::size_t)> G;
};

// Check positivity of F and G and non-negativity of the stay weight on all
// degrees up to kmax.
template <typename S>
void validate_walk_params(const HomogeneousWalkParams<S>& params, std::size_t kmax) {
  using T = scalar_traits<S>;
  for (std::size_t k = 0; k <= kmax; ++k) {
    const S f = params.F(k);
    const S g = params.G(k);
    if (!(T::to_double(f) > 0.0))
      throw DomainError("bad_parameter", "F must be positive at degree " + std::to_string(k));
    if (!(T::to_double(g) > 0.0))
      throw DomainError("bad_parameter", "G must be positive at degree " + std::to_string(k));
    const S stay = T::one() - f - T::from_int(static_cast<long long>(k)) * g;
    const double sd = T::to_double(stay);
    if (sd < (T::is_exact ? 0.0 : -1e-12))
      throw DomainError("bad_parameter",
                        "stay weight negative at degree " + std::to_string(k));
  }
}

struct SampleOptions {
  std::size_t graft_node_cap = 1'000'000;  // per grafted subtree
  std::size_t max_resamples = 64;          // per graft before giving up
  std::size_t total_node_cap = std::size_t{1} << 22;
};

enum class NodeOrigin { Spine, Graft };

// One sampled surviving tree, frozen: spine nodes u_0..u_n all carry sampled
// size-biased degrees; the spine continuation below u_n is kept as a leaf.
struct KestenSample {
  std::shared_ptr<const FiniteTree> tree;
  std::vector<NodeWord> spine;  // u_0..u_n (degree-carrying spine nodes)
  std::map<NodeWord, NodeOrigin> origin;
  std::uint64_t seed = 0;
  std::size_t graft_count = 0;
  std::size_t resampled_grafts = 0;  // grafts re-drawn after hitting the cap
};

namespace detail {

// Sample one unconditioned tree from the law into `degree`, rooted at
// `root`, breadth-first, bounded by node_cap.  Returns false when the cap is
// hit (partial growth is discarded by the caller).
template <typename S>
bool sample_gw_graft(const std::vector<double>& law_weights, const NodeWord& root,
                     Rng& rng, std::size_t node_cap,
                     std::map<NodeWord, std::size_t>& degree) {
  std::map<NodeWord, std::size_t> local;
  std::queue<NodeWord> todo;
  todo.push(root);
  while (!todo.empty()) {
    NodeWord u = todo.front();
    todo.pop();
    const std::size_t d = rng.categorical(law_weights);
    local[u] = d;
    if (local.size() > node_cap) return false;
    for (std::size_t k = 0; k < d; ++k) todo.push(u.child(static_cast<Letter>(k)));
  }
  degree.insert(local.begin(), local.end());
  return true;
}

// Least-squares line through (xs, ys): returns {slope, intercept}.
inline std::pair<double, double> linear_fit(const std::vector<double>& xs,
                                            const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw DomainError("bad_parameter", "linear fit needs at least two points");
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw DomainError("bad_parameter", "degenerate abscissas in linear fit");
  const double slope = (n * sxy - sx * sy) / denom;
  return {slope, (sy - slope * sx) / n};
}

// Extract the subtree rooted at `root` of a finite tree as a standalone
// finite tree (the root of the result is the former `root`).
inline std::shared_ptr<const FiniteTree> subtree_as_tree(const FiniteTree& tree,
                                                         const NodeWord& root) {
  std::vector<std::size_t> counts;
  std::queue<NodeWord> todo;
  todo.push(root);
  while (!todo.empty()) {
    NodeWord u = todo.front();
    todo.pop();
    const std::size_t d = tree.child_count(u);
    counts.push_back(d);
    for (std::size_t k = 0; k < d; ++k) todo.push(u.child(static_cast<Letter>(k)));
  }
  return FiniteTree::make(counts);
}

}  // namespace detail

// The spine marginal of the surviving-tree sampler: the i.i.d. size-biased
// degrees c_0..c_n of the spine nodes, without growing the grafted subtrees.
// Spine functionals (the measure along the spine, its logarithmic drift)
// depend on the sample only through these degrees, so Monte Carlo studies of
// long spines can skip the grafts entirely.
template <typename S>
std::vector<std::size_t> sample_spine_degrees(const OffspringLaw<S>& law,
                                              std::size_t spine_length,
                                              std::uint64_t seed) {
  using T = scalar_traits<S>;
  if (spine_length < 1)
    throw DomainError("bad_parameter", "spine length must be at least 1");
  std::vector<double> biased_weights;
  for (const S& p : law.biased()) biased_weights.push_back(T::to_double(p));
  Rng rng(derive_seed(seed, 0x6b59ULL));
  std::vector<std::size_t> degrees;
  degrees.reserve(spine_length + 1);
  for (std::size_t j = 0; j <= spine_length; ++j)
    degrees.push_back(rng.categorical(biased_weights));
  return degrees;
}

// Sample a surviving critical tree down to spine depth `spine_length`:
// spine degrees are i.i.d. size-biased, the spine child is uniform among
// them, and every off-spine child of a spine node carries an independent
// unconditioned tree grown to extinction (capped, with resampling).
template <typename S>
KestenSample sample_kesten(const OffspringLaw<S>& law, std::size_t spine_length,
                           std::uint64_t seed, SampleOptions opts = {}) {
  using T = scalar_traits<S>;
  if (spine_length < 1)
    throw DomainError("bad_parameter", "spine length must be at least 1");
  std::vector<double> base_weights;
  for (const S& p : law.probabilities()) base_weights.push_back(T::to_double(p));
  std::vector<double> biased_weights;
  for (const S& p : law.biased()) biased_weights.push_back(T::to_double(p));

  Rng rng(derive_seed(seed, 0x6b57ULL));
  KestenSample out;
  out.seed = seed;
  std::map<NodeWord, std::size_t> degree;  // NodeWord order is BFS-compatible
  std::size_t total = 0;

  NodeWord cur = NodeWord::root();
  for (std::size_t j = 0; j <= spine_length; ++j) {
    const std::size_t d = rng.categorical(biased_weights);
    degree[cur] = d;
    out.spine.push_back(cur);
    out.origin[cur] = NodeOrigin::Spine;
    const std::size_t spine_slot = static_cast<std::size_t>(rng.below(d));
    for (std::size_t k = 0; k < d; ++k) {
      if (k == spine_slot) continue;
      const NodeWord graft_root = cur.child(static_cast<Letter>(k));
      bool grown = false;
      for (std::size_t attempt = 0; attempt < opts.max_resamples; ++attempt) {
        if (detail::sample_gw_graft<S>(base_weights, graft_root, rng,
                                       opts.graft_node_cap, degree)) {
          grown = true;
          if (attempt > 0) ++out.resampled_grafts;
          break;
        }
      }
      if (!grown)
        throw resource_limit("graft sampling exhausted the node cap " +
                             std::to_string(opts.graft_node_cap));
      out.origin[graft_root] = NodeOrigin::Graft;
      ++out.graft_count;
    }
    cur = cur.child(static_cast<Letter>(spine_slot));
    total = degree.size();
    if (total > opts.total_node_cap)
      throw resource_limit("sample exceeds the total node cap");
  }
  degree[cur] = 0;  // the spine continuation is kept as a leaf
  out.origin[cur] = NodeOrigin::Spine;

  std::vector<std::size_t> counts;
  counts.reserve(degree.size());
  for (const auto& [word, d] : degree) counts.push_back(d);
  out.tree = FiniteTree::make(counts);
  return out;
}

template <typename S>
struct GwClassification {
  S f;                 // E[X G(X)/F(X)]
  S mean_inverse_f;    // E[1/F(X)]
  S m;                 // E[1/F(X)] / (1 - f); zero when f >= 1
  double log_drift;    // L = E[X log(G(X)/F(X))]
  Outcome outcome = Outcome::Inconclusive;
  bool summability_automatic = true;  // finite support makes the tail condition vacuous
  std::string reason;
};

// The three statistics deciding almost-sure positive recurrence of the
// degree-homogeneous walk on a surviving critical tree: positive recurrent
// when f is in (0,1) and the logarithmic drift L is negative; not positive
// recurrent when L is positive; inconclusive on the boundary.
template <typename S>
GwClassification<S> gw_classifier(const OffspringLaw<S>& law,
                                  const HomogeneousWalkParams<S>& params) {
  using T = scalar_traits<S>;
  validate_walk_params(params, law.max_degree());
  GwClassification<S> out{T::zero(), T::zero(), T::zero(), 0.0,
                          Outcome::Inconclusive, true, ""};
  const auto& p = law.probabilities();
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (T::is_zero(p[k])) continue;
    const S kk = T::from_int(static_cast<long long>(k));
    out.f = out.f + p[k] * kk * params.G(k) / params.F(k);
    out.mean_inverse_f = out.mean_inverse_f + p[k] / params.F(k);
    out.log_drift += T::to_double(p[k]) * static_cast<double>(k) *
                     std::log(T::to_double(params.G(k)) / T::to_double(params.F(k)));
  }
  const double fd = T::to_double(out.f);
  if (fd < 1.0) out.m = out.mean_inverse_f / (T::one() - out.f);
  if (out.log_drift > 0.0) {
    out.outcome = Outcome::NotPositiveRecurrent;
    out.reason = "logarithmic drift L > 0: the spine measure diverges a.s.";
  } else if (out.log_drift < 0.0 && fd > 0.0 && fd < 1.0) {
    out.outcome = Outcome::PositiveRecurrent;
    out.reason = "f in (0,1) and L < 0; the tail summability condition holds "
                 "automatically for finite-support laws";
  } else {
    out.outcome = Outcome::Inconclusive;
    out.reason = fd <= 0.0 || fd >= 1.0 ? "f outside (0,1)"
                                        : "boundary case L = 0";
  }
  return out;
}

template <typename S>
struct TotalEstimateRow {
  std::size_t depth = 0;  // spine depth of u
  S pi;                   // invariant value at the spine node
  S bracket;              // 1 + sum over grafts of G S / F
  S cumulative;           // running sum of pi * bracket
};

template <typename S>
struct TotalEstimate {
  std::vector<TotalEstimateRow<S>> rows;
  S total;  // cumulative mass over the sampled spine range
};

// Exact invariant-mass bookkeeping over one sample: the invariant value
// along the spine by the product formula, the graft masses by leaf addition
// on each graft as a standalone tree, and the cumulative totals per depth.
template <typename S>
TotalEstimate<S> estimate_total(const KestenSample& sample,
                                const HomogeneousWalkParams<S>& params) {
  using T = scalar_traits<S>;
  if (!sample.tree || sample.spine.empty())
    throw DomainError("bad_parameter", "empty sample");
  const FiniteTree& tree = *sample.tree;
  std::size_t kmax = 0;
  for (const NodeWord& w : tree.nodes()) kmax = std::max(kmax, tree.child_count(w));
  validate_walk_params(params, kmax);

  TotalEstimate<S> out;
  out.total = T::zero();
  S pi = T::one();
  for (std::size_t j = 0; j < sample.spine.size(); ++j) {
    const NodeWord& u = sample.spine[j];
    const std::size_t cu = tree.child_count(u);
    if (j > 0) {
      const NodeWord& prev = sample.spine[j - 1];
      pi = pi * params.G(tree.child_count(prev)) / params.F(cu);
    }
    S bracket = T::one();
    for (std::size_t k = 0; k < cu; ++k) {
      const NodeWord child = u.child(static_cast<Letter>(k));
      auto org = sample.origin.find(child);
      if (org != sample.origin.end() && org->second == NodeOrigin::Spine)
        continue;  // the spine continuation (or terminal leaf) is not a graft
      auto graft = detail::subtree_as_tree(tree, child);
      auto kernel = make_degree_homogeneous_walk<S>(graft, params.F, params.G);
      Measure<S> rho = h_invariant_leaf_addition(*kernel, graft->nodes());
      S mass = T::zero();
      for (const auto& [w, v] : rho.entries()) mass = mass + v;
      bracket = bracket +
                params.G(cu) * mass / params.F(graft->child_count(NodeWord::root()));
    }
    out.total = out.total + pi * bracket;
    out.rows.push_back({j, pi, bracket, out.total});
  }
  return out;
}

}  // namespace treechain
