#pragma once

// Generating functions of weighted lattice and tree paths: classical
// continued-fraction convergents for line models, Green functions for
// nearest-neighbor and general almost-upper-directed kernels evaluated by
// bottom-up multicontinued fractions, the coupled quadratic system for
// zero-count-homogeneous binary-tree walks, and small helpers (ascending
// towers, the Dyck closed form) used as cross-checks.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "treechain/errors.hpp"
#include "treechain/kernel.hpp"
#include "treechain/node_word.hpp"
#include "treechain/rational.hpp"
#include "treechain/series.hpp"
#include "treechain/tree.hpp"

namespace treechain {

namespace detail {

inline bool value_is_invertible(double v) { return std::abs(v) > 1e-300; }
inline bool value_is_invertible(const BigRational& v) { return v != 0; }
template <typename S>
bool value_is_invertible(const PowerSeries<S>& v) {
  return !scalar_traits<S>::is_zero(v[0]);
}

}  // namespace detail

// Step weights of a line model: stay(a) = w_{a,a}, up(a) = w_{a,a+1},
// down(a) = w_{a,a-1} (down is queried for a >= 1 only).  Values may be
// numbers or truncated power series.
template <typename V>
struct StepWeights {
  std::function<V(std::size_t)> stay;
  std::function<V(std::size_t)> up;
  std::function<V(std::size_t)> down;
};

// Dyck steps: no stay weight, up and down both x at every level.
template <typename V>
StepWeights<V> dyck_weights(const V& x, const V& zero) {
  return {[zero](std::size_t) { return zero; },
          [x](std::size_t) { return x; },
          [x](std::size_t) { return x; }};
}

// Closed form of the Dyck excursion generating function at a numeric point.
inline double dyck_closed_form(double x) {
  return (1.0 - std::sqrt(1.0 - 4.0 * x * x)) / (2.0 * x * x);
}

// Tail convention for truncated towers: Zero gives the exact depth-h
// convergent (paths staying strictly below level h+1); One seeds the frontier
// with the empty-excursion weight instead.
enum class CfTail { Zero, One };

template <typename V>
struct Convergent {
  std::size_t depth = 0;
  V value;
  std::vector<V> history;  // history[j] = depth-j convergent
  bool diverged = false;
  std::size_t diverged_at = 0;
};

namespace detail {

// One tower evaluation: W_j = 1/(1 - stay(j) - up(j) down(j+1) W_{j+1}),
// W_{h+1} = tail.  Returns nullopt when a denominator is not invertible.
template <typename V>
std::optional<V> cf_tower(const StepWeights<V>& w, std::size_t h, const V& one,
                          CfTail tail, std::size_t* bad_level) {
  V cur = tail == CfTail::One ? one : one - one;
  for (std::size_t jj = h + 1; jj-- > 0;) {
    V denom = one - w.stay(jj) - w.up(jj) * w.down(jj + 1) * cur;
    if (!value_is_invertible(denom)) {
      if (bad_level) *bad_level = jj;
      return std::nullopt;
    }
    cur = one / denom;
  }
  return cur;
}

}  // namespace detail

// Depth-h convergent of the path-weight continued fraction, with the full
// monotone history of shallower convergents.  A vanishing denominator is
// reported as divergence rather than thrown.
template <typename V>
Convergent<V> cf_convergent(const StepWeights<V>& w, std::size_t h, const V& one,
                            CfTail tail = CfTail::Zero) {
  Convergent<V> out;
  out.depth = h;
  out.value = one;
  for (std::size_t j = 0; j <= h; ++j) {
    std::size_t bad = 0;
    auto v = detail::cf_tower(w, j, one, tail, &bad);
    if (!v.has_value()) {
      out.diverged = true;
      out.diverged_at = j;
      return out;
    }
    out.history.push_back(*v);
  }
  out.value = out.history.back();
  return out;
}

// Ascending tower b_0 + a_0/(b_1 + a_1/(b_2 + ...)), cut after depth terms.
template <typename V>
V ascending_tower(const std::function<V(std::size_t)>& a,
                  const std::function<V(std::size_t)>& b, std::size_t depth) {
  V cur = b(depth);
  for (std::size_t j = depth; j-- > 0;) {
    if (!detail::value_is_invertible(cur))
      throw DomainError("divergent_tower", "vanishing denominator at level " + std::to_string(j));
    cur = b(j) + a(j) / cur;
  }
  return cur;
}

// The all-ones ascending tower converges to the golden ratio.
inline double golden_ratio_tower(std::size_t depth) {
  return ascending_tower<double>([](std::size_t) { return 1.0; },
                                 [](std::size_t) { return 1.0; }, depth);
}

struct GreenOptions {
  std::size_t depth = 16;     // truncation depth below the queried node
  bool frontier_one = true;   // frontier sub-values: empty-excursion weight 1 (else 0)
  double tol = 1e-9;          // convergence test across successive depths
  std::size_t node_cap = kDefaultNodeCap;
};

template <typename V>
struct GreenValue {
  V value;
  bool converged = true;
  double delta = 0.0;  // |value(depth) - value(depth-1)| in numeric mode
};

namespace detail {

// Bottom-up evaluation of the excursion generating function over a
// truncation.  `lift` embeds kernel scalars into the value type and `xv` is
// the (lifted) step-counting variable.  When nearest_neighbor is set, only
// child blocks are accumulated (the classical tree recursion); otherwise a
// block is formed for every strict descendant v of u with weight
// x w_{u,v} prod_{a in ]]u,v]]} (W_a x w_{a,p(a)}).
template <typename S, typename V, typename Lift>
V green_eval(const AudKernel<S>& kernel, const NodeWord& u, const V& xv, const V& one,
             Lift lift, std::size_t depth, bool frontier_one, bool nearest_neighbor,
             std::size_t node_cap) {
  using T = scalar_traits<S>;
  Truncation trunc = truncate(kernel.tree_ptr(), u, depth, node_cap);
  const std::size_t n = trunc.size();
  std::vector<V> g(n, one);
  const V zero = one - one;
  for (std::size_t idx = n; idx-- > 0;) {
    const NodeWord& a = trunc.nodes[idx];
    const bool frontier =
        trunc.rel_depth(idx) == depth && kernel.tree().child_count(a) > 0;
    if (frontier) {
      g[idx] = frontier_one ? one : zero;
      continue;
    }
    V bracket = xv * lift(kernel.point_weight(a, a));
    if (nearest_neighbor) {
      for (std::size_t c : trunc.children[idx]) {
        S down = kernel.subtree_mass(a, trunc.nodes[c]);
        if (T::is_zero(down)) continue;
        S up = kernel.parent_weight(trunc.nodes[c]);
        bracket = bracket + xv * lift(down) * g[c] * xv * lift(up);
      }
    } else {
      // Depth-first over strict descendants inside the truncation, carrying
      // prod_{b in ]]a,m]]} (W_b x w_{b,p(b)}).
      std::vector<std::pair<std::size_t, V>> stack;
      for (std::size_t c : trunc.children[idx])
        stack.emplace_back(c, g[c] * xv * lift(kernel.parent_weight(trunc.nodes[c])));
      while (!stack.empty()) {
        auto [m, prod] = stack.back();
        stack.pop_back();
        S w = kernel.point_weight(a, trunc.nodes[m]);
        if (!T::is_zero(w)) bracket = bracket + xv * lift(w) * prod;
        for (std::size_t c : trunc.children[m])
          stack.emplace_back(c, prod * g[c] * xv * lift(kernel.parent_weight(trunc.nodes[c])));
      }
    }
    V denom = one - bracket;
    if (!value_is_invertible(denom))
      throw DomainError("divergent_green",
                        "Green denominator vanishes at " + a.to_string());
    g[idx] = one / denom;
  }
  return g[0];
}

template <typename S>
GreenValue<S> green_numeric(const AudKernel<S>& kernel, const NodeWord& u, const S& x,
                            const GreenOptions& opts, bool nearest_neighbor) {
  using T = scalar_traits<S>;
  auto lift = [](const S& v) { return v; };
  S cur = green_eval(kernel, u, x, T::one(), lift, opts.depth, opts.frontier_one,
                     nearest_neighbor, opts.node_cap);
  GreenValue<S> out;
  out.value = cur;
  if (opts.depth > 0) {
    S prev = green_eval(kernel, u, x, T::one(), lift, opts.depth - 1, opts.frontier_one,
                        nearest_neighbor, opts.node_cap);
    out.delta = std::abs(T::to_double(cur) - T::to_double(prev));
    out.converged = out.delta <= opts.tol;
  }
  return out;
}

}  // namespace detail

// Green function at u: the weight of all excursions from u staying in T_u,
// each step counted by a factor x.  Certified nearest-neighbor kernels use
// the classical children-only recursion; anything else falls back to the
// general block decomposition (which agrees on nearest-neighbor kernels).
template <typename S>
GreenValue<S> green_rw(const AudKernel<S>& kernel, const NodeWord& u, const S& x,
                       GreenOptions opts = {}) {
  const bool nn = dynamic_cast<const RandomWalkKernel<S>*>(&kernel) != nullptr;
  return detail::green_numeric(kernel, u, x, opts, nn);
}

// Green function of a general AUD kernel at u, with one block per reachable
// strict descendant (jump, then climb back one excursion per level).
template <typename S>
GreenValue<S> green_aud(const AudKernel<S>& kernel, const NodeWord& u, const S& x,
                        GreenOptions opts = {}) {
  return detail::green_numeric(kernel, u, x, opts, false);
}

// Formal-series versions: coefficients of x^0..x^cap, exact over S.
template <typename S>
PowerSeries<S> green_rw_series(const AudKernel<S>& kernel, const NodeWord& u,
                               std::size_t degree_cap, GreenOptions opts = {}) {
  using P = PowerSeries<S>;
  auto lift = [degree_cap](const S& v) { return P::constant(v, degree_cap); };
  P xv = P::monomial(scalar_traits<S>::one(), 1, degree_cap);
  const bool nn = dynamic_cast<const RandomWalkKernel<S>*>(&kernel) != nullptr;
  return detail::green_eval(kernel, u, xv, P::one(degree_cap), lift, opts.depth,
                            opts.frontier_one, nn, opts.node_cap);
}

template <typename S>
PowerSeries<S> green_aud_series(const AudKernel<S>& kernel, const NodeWord& u,
                                std::size_t degree_cap, GreenOptions opts = {}) {
  using P = PowerSeries<S>;
  auto lift = [degree_cap](const S& v) { return P::constant(v, degree_cap); };
  P xv = P::monomial(scalar_traits<S>::one(), 1, degree_cap);
  return detail::green_eval(kernel, u, xv, P::one(degree_cap), lift, opts.depth,
                            opts.frontier_one, false, opts.node_cap);
}

// Return-time generating function at the root: H(x) = 1 - 1/G_root(x).
// H(1) = 1 characterizes recurrence.
template <typename S>
S return_time_gf(const AudKernel<S>& kernel, const S& x, GreenOptions opts = {}) {
  using T = scalar_traits<S>;
  GreenValue<S> g = green_aud(kernel, NodeWord::root(), x, opts);
  if (!detail::value_is_invertible(g.value))
    throw DomainError("divergent_green", "Green value vanishes at the root");
  return T::one() - T::one() / g.value;
}

// Parameters of a zero-count-homogeneous binary-tree walk, already scaled by
// the step-counting variable: at a node with zero-count k the stay weight is
// s(k), one child keeps k with weight l(k), the other child moves to k+1
// with weight r(k), and the up weight is p(k).
struct BinaryHomogeneousParams {
  std::function<double(std::size_t)> s;
  std::function<double(std::size_t)> l;
  std::function<double(std::size_t)> r;
  std::function<double(std::size_t)> p;
};

struct BinaryHomogeneousResult {
  std::vector<double> g;     // g[j] = g_{k+j} for j = 0..depth
  double value = 0.0;        // g_k
  bool diverged = false;     // negative discriminant or vanishing denominator
  std::size_t diverged_at = 0;
  double max_residual = 0.0; // worst |alpha g^2 - (1 - beta g' - s) g + 1|
};

// Solve the coupled system g_k = 1/(1 - [s_k + l_k p_k g_k + r_k p_{k+1}
// g_{k+1}]) by backward truncation: seed g_{k+depth} with the empty-excursion
// weight 1, then per level solve the quadratic
// alpha_k g^2 - (1 - beta_k g_{k+1} - s_k) g + 1 = 0 (alpha_k = l_k p_k,
// beta_k = r_k p_{k+1}) on the power-series branch (the smaller root).
inline BinaryHomogeneousResult binary_homogeneous_g(const BinaryHomogeneousParams& par,
                                                    std::size_t k, std::size_t depth) {
  BinaryHomogeneousResult out;
  out.g.assign(depth + 1, 1.0);
  for (std::size_t j = depth; j-- > 0;) {
    const std::size_t idx = k + j;
    const double alpha = par.l(idx) * par.p(idx);
    const double beta = par.r(idx) * par.p(idx + 1);
    const double a_lin = 1.0 - beta * out.g[j + 1] - par.s(idx);
    double gj;
    if (std::abs(alpha) < 1e-300) {
      if (std::abs(a_lin) < 1e-300) {
        out.diverged = true;
        out.diverged_at = idx;
        return out;
      }
      gj = 1.0 / a_lin;
    } else {
      const double disc = a_lin * a_lin - 4.0 * alpha;
      if (disc < 0.0) {
        out.diverged = true;
        out.diverged_at = idx;
        return out;
      }
      gj = (a_lin - std::sqrt(disc)) / (2.0 * alpha);
    }
    out.g[j] = gj;
    const double residual = std::abs(alpha * gj * gj - a_lin * gj + 1.0);
    out.max_residual = std::max(out.max_residual, residual);
  }
  out.value = out.g[0];
  return out;
}

}  // namespace treechain
