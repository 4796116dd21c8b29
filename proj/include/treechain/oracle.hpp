#pragma once

// Brute-force reference implementations used to cross-validate every fast
// algorithm in the library: dense chain materialization, stationary
// distributions via principal cofactors double-checked against a null-space
// solve, directed spanning-tree (arborescence) weights with exhaustive
// enumeration, exact path-weight enumeration by length, and Monte Carlo
// simulation of kernel walks.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "treechain/errors.hpp"
#include "treechain/kernel.hpp"
#include "treechain/linalg.hpp"
#include "treechain/node_word.hpp"
#include "treechain/rational.hpp"
#include "treechain/rng.hpp"
#include "treechain/tree.hpp"

namespace treechain {

// A fully materialized finite-state chain: node words in BFS order plus a
// dense weight matrix aligned with them.  Rows may be defective (sum < 1)
// when the chain was cut out of a larger tree.
template <typename S>
struct DenseChain {
  std::vector<NodeWord> nodes;
  std::map<NodeWord, std::size_t> index;
  Matrix<S> p;

  std::size_t size() const { return nodes.size(); }

  std::size_t at(const NodeWord& u) const {
    auto it = index.find(u);
    if (it == index.end())
      throw DomainError("bad_node", "node not in dense chain: " + u.to_string());
    return it->second;
  }

  bool is_stochastic(double tol = 1e-12) const {
    using T = scalar_traits<S>;
    for (std::size_t i = 0; i < size(); ++i) {
      S sum = T::zero();
      for (std::size_t j = 0; j < size(); ++j) sum = sum + p.at(i, j);
      if constexpr (T::is_exact) {
        if (!(sum == T::one())) return false;
      } else {
        if (std::abs(T::to_double(sum) - 1.0) > tol) return false;
      }
    }
    return true;
  }
};

template <typename S>
DenseChain<S> chain_from_matrix(std::vector<NodeWord> nodes, Matrix<S> p) {
  if (p.rows() != nodes.size() || p.cols() != nodes.size())
    throw DomainError("bad_parameter", "chain matrix shape does not match node list");
  DenseChain<S> c;
  c.nodes = std::move(nodes);
  for (std::size_t i = 0; i < c.nodes.size(); ++i) c.index[c.nodes[i]] = i;
  if (c.index.size() != c.nodes.size())
    throw DomainError("bad_parameter", "duplicate node in chain node list");
  c.p = std::move(p);
  return c;
}

// Materialize the restriction of a kernel to a truncation.  Transitions that
// leave the truncation are dropped, so the result is defective unless the
// truncation covers the whole tree.
template <typename S>
DenseChain<S> densify(const AudKernel<S>& kernel, const Truncation& trunc) {
  const std::size_t n = trunc.size();
  Matrix<S> p(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const NodeWord& u = trunc.nodes[i];
    if (!u.is_root() && trunc.contains(u.parent()))
      p.at(i, trunc.index_of(u.parent())) = kernel.parent_weight(u);
    for (std::size_t j = 0; j < n; ++j) {
      const NodeWord& v = trunc.nodes[j];
      if (u.is_prefix_of(v)) p.at(i, j) = p.at(i, j) + kernel.point_weight(u, v);
    }
  }
  DenseChain<S> c;
  c.nodes = trunc.nodes;
  c.index = trunc.index;
  c.p = std::move(p);
  return c;
}

// Materialize a kernel on a full finite tree (always stochastic).
template <typename S>
DenseChain<S> densify(const AudKernel<S>& kernel) {
  const TreeSource& t = kernel.tree();
  auto sz = t.size();
  if (!sz.has_value())
    throw DomainError("bad_parameter", "densify without a truncation needs a finite tree");
  Truncation trunc = truncate(kernel.tree_ptr(), *sz + 1, *sz + 2);
  return densify(kernel, trunc);
}

namespace detail {

// Strong connectivity of the support digraph: forward and backward
// reachability from state 0.
template <typename S>
bool strongly_connected(const Matrix<S>& p) {
  using T = scalar_traits<S>;
  const std::size_t n = p.rows();
  if (n == 0) return false;
  auto reach = [&](bool forward) {
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      std::size_t i = stack.back();
      stack.pop_back();
      for (std::size_t j = 0; j < n; ++j) {
        const S& w = forward ? p.at(i, j) : p.at(j, i);
        if (!T::is_zero(w) && !seen[j]) {
          seen[j] = 1;
          stack.push_back(j);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
  };
  return reach(true) && reach(false);
}

}  // namespace detail

// Stationary distribution of a stochastic irreducible dense chain, computed
// two independent ways (principal cofactors of Id - P, and a null-space
// solve) that must agree.
template <typename S>
std::vector<S> stationary_dense(const DenseChain<S>& chain, double tol = 1e-9) {
  using T = scalar_traits<S>;
  const std::size_t n = chain.size();
  if (n == 0) throw DomainError("bad_parameter", "empty chain");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (T::to_double(chain.p.at(i, j)) < 0.0)
        throw DomainError("negative_entry", "chain has a negative transition weight");
  if (!chain.is_stochastic(tol))
    throw DomainError("not_stochastic", "chain rows do not sum to one");
  if (!detail::strongly_connected(chain.p))
    throw DomainError("reducible", "chain support graph is not strongly connected");

  Matrix<S> a = Matrix<S>::identity(n) - chain.p;
  std::vector<S> cof(n);
  S total = T::zero();
  for (std::size_t r = 0; r < n; ++r) {
    cof[r] = n == 1 ? T::one() : determinant(a.without_row_col(r, r));
    total = total + cof[r];
  }
  if (T::is_zero(total))
    throw DomainError("reducible", "all principal cofactors vanish");
  std::vector<S> pi(n);
  for (std::size_t r = 0; r < n; ++r) pi[r] = cof[r] / total;

  std::vector<S> alt = stationary_from_nullspace(chain.p);
  S alt_total = T::zero();
  for (const S& v : alt) alt_total = alt_total + v;
  for (std::size_t r = 0; r < n; ++r) {
    S b = alt[r] / alt_total;
    if constexpr (T::is_exact) {
      if (!(pi[r] == b))
        throw DomainError("oracle_mismatch", "cofactor and null-space routes disagree");
    } else {
      if (std::abs(T::to_double(pi[r]) - T::to_double(b)) > tol * (1.0 + std::abs(T::to_double(pi[r]))))
        throw DomainError("oracle_mismatch", "cofactor and null-space routes disagree");
    }
    if (T::to_double(pi[r]) <= 0.0)
      throw DomainError("reducible", "stationary weight vanishes at state " + std::to_string(r));
  }
  return pi;
}

// Total weight of spanning arborescences oriented toward `root`, as the
// principal minor of the out-degree Laplacian.  Diagonal entries of the
// weight matrix are ignored.
template <typename S>
S spanning_tree_weight(const Matrix<S>& w, std::size_t root) {
  using T = scalar_traits<S>;
  const std::size_t n = w.rows();
  if (w.cols() != n || root >= n) throw DomainError("bad_parameter", "bad arborescence query");
  if (n == 1) return T::one();
  Matrix<S> lap(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      lap.at(i, j) = lap.at(i, j) - w.at(i, j);
      lap.at(i, i) = lap.at(i, i) + w.at(i, j);
    }
  return determinant(lap.without_row_col(root, root));
}

// Same quantity by exhaustive enumeration of parent assignments (each node
// other than the root picks one outgoing edge; cycles are pruned).  Guarded
// to at most 10 vertices.
template <typename S>
S spanning_tree_weight_enumerated(const Matrix<S>& w, std::size_t root) {
  using T = scalar_traits<S>;
  const std::size_t n = w.rows();
  if (w.cols() != n || root >= n) throw DomainError("bad_parameter", "bad arborescence query");
  if (n > 10) throw resource_limit("arborescence enumeration limited to 10 vertices");
  if (n == 1) return T::one();

  std::vector<std::size_t> order;  // nodes other than the root, in index order
  for (std::size_t i = 0; i < n; ++i)
    if (i != root) order.push_back(i);
  std::vector<std::size_t> choice(n, n);  // choice[i] = successor of i, n = unset
  auto creates_cycle = [&](std::size_t i) {
    std::vector<char> on_path(n, 0);
    while (i != root && choice[i] != n) {
      if (on_path[i]) return true;
      on_path[i] = 1;
      i = choice[i];
    }
    return false;
  };
  S total = T::zero();
  std::function<void(std::size_t, const S&)> go = [&](std::size_t pos, const S& acc) {
    if (pos == order.size()) {
      total = total + acc;
      return;
    }
    std::size_t node = order[pos];
    for (std::size_t j = 0; j < n; ++j) {
      if (j == node || T::is_zero(w.at(node, j))) continue;
      choice[node] = j;
      if (!creates_cycle(node)) go(pos + 1, acc * w.at(node, j));
      choice[node] = n;
    }
  };
  go(0, T::one());
  return total;
}

// A path-enumeration request.  With first_hit set, paths stop at the first
// visit to `end` (intermediate states avoid `end` and everything in
// `forbidden`); otherwise all walks from start to end are counted.
struct PathQuery {
  NodeWord start;
  NodeWord end;
  bool first_hit = true;
  std::vector<NodeWord> forbidden;
  std::size_t max_length = 16;
};

namespace detail {

template <typename S>
std::vector<char> allowed_states(const DenseChain<S>& chain, const PathQuery& q) {
  std::vector<char> ok(chain.size(), 1);
  for (const NodeWord& f : q.forbidden) {
    auto it = chain.index.find(f);
    if (it != chain.index.end()) ok[it->second] = 0;
  }
  if (!ok[chain.at(q.start)])
    throw DomainError("bad_parameter", "path start is forbidden");
  if (!ok[chain.at(q.end)])
    throw DomainError("bad_parameter", "path end is forbidden");
  return ok;
}

}  // namespace detail

// Weight of paths from start to end, split by length: coefficient k of the
// result is the total weight of admissible length-k paths.  Exhaustive and
// exact; the length budget is capped at 24.
template <typename S>
std::vector<S> path_polynomial(const DenseChain<S>& chain, const PathQuery& q) {
  using T = scalar_traits<S>;
  if (q.max_length > 24)
    throw resource_limit("path enumeration limited to length 24");
  const std::size_t n = chain.size();
  const std::size_t s = chain.at(q.start);
  const std::size_t e = chain.at(q.end);
  std::vector<char> ok = detail::allowed_states(chain, q);

  std::vector<S> poly(q.max_length + 1, T::zero());
  if (q.first_hit && s == e) {
    poly[0] = T::one();  // the empty path is the unique first-hit path
    return poly;
  }
  // dp[i] = weight of length-t paths from start to i through allowed
  // intermediate states (excluding end when first_hit).
  std::vector<S> dp(n, T::zero());
  dp[s] = T::one();
  if (!q.first_hit && s == e) poly[0] = T::one();
  for (std::size_t t = 1; t <= q.max_length; ++t) {
    std::vector<S> next(n, T::zero());
    for (std::size_t i = 0; i < n; ++i) {
      if (T::is_zero(dp[i])) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (!ok[j] || T::is_zero(chain.p.at(i, j))) continue;
        next[j] = next[j] + dp[i] * chain.p.at(i, j);
      }
    }
    poly[t] = next[e];
    if (q.first_hit) next[e] = T::zero();
    dp = std::move(next);
  }
  return poly;
}

// Value of the full path-weight generating function at x (all lengths), via
// a linear solve.  Throws on a singular system, which signals divergence.
template <typename S>
S path_value(const DenseChain<S>& chain, const PathQuery& q, const S& x) {
  using T = scalar_traits<S>;
  const std::size_t n = chain.size();
  const std::size_t s = chain.at(q.start);
  const std::size_t e = chain.at(q.end);
  std::vector<char> ok = detail::allowed_states(chain, q);

  if (q.first_hit) {
    if (s == e) return T::one();
    // States or order: allowed minus {end}.
    std::vector<std::size_t> states;
    for (std::size_t i = 0; i < n; ++i)
      if (ok[i] && i != e) states.push_back(i);
    std::map<std::size_t, std::size_t> pos;
    for (std::size_t k = 0; k < states.size(); ++k) pos[states[k]] = k;
    const std::size_t m = states.size();
    Matrix<S> a = Matrix<S>::identity(m);
    std::vector<S> b(m, T::zero());
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t l = 0; l < m; ++l)
        a.at(k, l) = a.at(k, l) - x * chain.p.at(states[k], states[l]);
      b[k] = x * chain.p.at(states[k], e);
    }
    std::vector<S> y = solve(a, b);
    return y[pos.at(s)];
  }
  std::vector<std::size_t> states;
  for (std::size_t i = 0; i < n; ++i)
    if (ok[i]) states.push_back(i);
  std::map<std::size_t, std::size_t> pos;
  for (std::size_t k = 0; k < states.size(); ++k) pos[states[k]] = k;
  const std::size_t m = states.size();
  Matrix<S> a = Matrix<S>::identity(m);
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t l = 0; l < m; ++l)
      a.at(k, l) = a.at(k, l) - x * chain.p.at(states[k], states[l]);
  std::vector<S> rhs(m, T::zero());
  rhs[pos.at(e)] = T::one();
  std::vector<S> z = solve(a, rhs);
  return z[pos.at(s)];
}

struct SimulateOptions {
  std::size_t occupancy_depth = 16;   // only nodes this shallow are tallied
  bool record_heights = false;        // keep the whole |X_t| trace
  bool detect_cycles = false;         // report the first state revisit
};

struct SimulationReport {
  std::map<NodeWord, std::uint64_t> occupancy;
  std::vector<std::uint64_t> first_return_times;  // gaps between visits to start
  std::vector<std::uint32_t> heights;
  NodeWord final_node;
  std::uint64_t steps = 0;
  double mean_height = 0.0;
  std::optional<std::uint64_t> cycle_length;
};

// Walk the kernel for `steps` transitions.  Deterministic for a fixed seed.
template <typename S>
SimulationReport simulate(const AudKernel<S>& kernel, const NodeWord& start,
                          std::uint64_t steps, std::uint64_t seed,
                          SimulateOptions opts = {}) {
  Rng rng(derive_seed(seed, 0x5157ULL));
  SimulationReport rep;
  NodeWord cur = start;
  std::map<NodeWord, std::uint64_t> last_seen;
  std::uint64_t last_at_start = 0;
  double height_sum = 0.0;
  if (opts.record_heights) rep.heights.reserve(static_cast<std::size_t>(steps) + 1);
  auto record = [&](std::uint64_t t) {
    if (cur.depth() <= opts.occupancy_depth) ++rep.occupancy[cur];
    if (opts.record_heights) rep.heights.push_back(static_cast<std::uint32_t>(cur.depth()));
    height_sum += static_cast<double>(cur.depth());
    if (opts.detect_cycles && !rep.cycle_length.has_value()) {
      auto it = last_seen.find(cur);
      if (it != last_seen.end()) rep.cycle_length = t - it->second;
      last_seen[cur] = t;
    }
  };
  record(0);
  for (std::uint64_t t = 1; t <= steps; ++t) {
    StepMove move = kernel.sample_step(cur, rng);
    cur = apply_move(cur, move);
    record(t);
    if (cur == start) {
      rep.first_return_times.push_back(t - last_at_start);
      last_at_start = t;
    }
  }
  rep.final_node = cur;
  rep.steps = steps;
  rep.mean_height = height_sum / static_cast<double>(steps + 1);
  return rep;
}

}  // namespace treechain
