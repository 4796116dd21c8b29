#pragma once

// Recurrence and positive-recurrence classification: exact return
// probabilities before a level via determinant ratios (computed by a
// fill-free sparse elimination), heuristic recurrence verdicts from those
// curves, positive recurrence from invariant-measure level sums, and
// end-by-end classification through end projections.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "treechain/errors.hpp"
#include "treechain/invariant.hpp"
#include "treechain/kernel.hpp"
#include "treechain/node_word.hpp"
#include "treechain/rational.hpp"
#include "treechain/tree.hpp"

namespace treechain {

enum class Outcome {
  Recurrent,
  Transient,
  PositiveRecurrent,
  NotPositiveRecurrent,
  Inconclusive,
};

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Recurrent: return "recurrent";
    case Outcome::Transient: return "transient";
    case Outcome::PositiveRecurrent: return "positive-recurrent";
    case Outcome::NotPositiveRecurrent: return "not-positive-recurrent";
    case Outcome::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

struct Verdict {
  Outcome outcome = Outcome::Inconclusive;
  // Evidence rows: (probe index, value).  For recurrence the probe index is
  // the level h and the value is the worst first-generation return
  // probability; for positive recurrence the index is the level k and the
  // value is the invariant-measure level sum S_k.
  std::vector<std::pair<std::size_t, double>> evidence;
  std::size_t certification_depth = 0;
  double tolerance = 0.0;
  bool heuristic = true;  // only closed-form certificates clear this
  std::string reason;
};

struct ClassifyOptions {
  std::size_t h_max = 64;        // deepest level probed by return_before_level
  double eps = 1e-9;             // closeness-to-one threshold
  std::size_t depth = 24;        // levels of invariant-measure sums
  std::size_t growth_window = 8; // trailing levels used for the tail-ratio fit
  std::size_t node_cap = kDefaultNodeCap;
};

// P(return to the root before reaching level h | start at first-generation
// node i).  Computed as U_{i,root} / s_i where s_i is the last pivot of a
// deepest-first elimination of Id - U restricted to the nodes of T_i of
// depth < h.  The elimination creates fill only in ancestor-row /
// ancestor-column positions, which we track in per-row maps; cost is
// O(nodes * h).
template <typename S>
S return_before_level(const AudKernel<S>& kernel, const NodeWord& i, std::size_t h,
                      std::size_t node_cap = kDefaultNodeCap) {
  using T = scalar_traits<S>;
  if (i.depth() != 1)
    throw DomainError("bad_parameter", "start node must be a child of the root");
  if (h < 2) throw DomainError("bad_parameter", "level must be at least 2");
  Truncation trunc = truncate(kernel.tree_ptr(), i, h - 2, node_cap);
  const std::size_t n = trunc.size();

  // diag[a] = current diagonal of Id - U at a; fill[b][col] = accumulated
  // elimination updates to row b at an ancestor-path column.
  std::vector<S> diag(n);
  std::vector<std::map<std::size_t, S>> fill(n);
  for (std::size_t a = 0; a < n; ++a)
    diag[a] = T::one() - kernel.point_weight(trunc.nodes[a], trunc.nodes[a]);

  // BFS order lists parents before children, so the reverse order is
  // deepest-first; the base i sits at index 0 and is eliminated last.
  for (std::size_t idx = n; idx-- > 1;) {
    const std::size_t a = idx;
    const S s_a = diag[a];
    if (T::is_zero(s_a))
      throw DomainError("internal_error",
                        "singular pivot in defective elimination at " +
                            trunc.nodes[a].to_string());
    const std::size_t pa = static_cast<std::size_t>(trunc.parent[a]);
    const S up = kernel.parent_weight(trunc.nodes[a]);  // -up is row a's parent entry
    // Walk the strict ancestors of a inside the window.
    std::ptrdiff_t b = static_cast<std::ptrdiff_t>(pa);
    while (b >= 0) {
      const std::size_t bb = static_cast<std::size_t>(b);
      S entry = T::zero() - kernel.point_weight(trunc.nodes[bb], trunc.nodes[a]);
      auto it = fill[bb].find(a);
      if (it != fill[bb].end()) entry = entry + it->second;
      if (!T::is_zero(entry)) {
        const S f = entry / s_a;
        // row_b -= f * row_a touches only columns a (cleared) and pa.
        if (pa == bb)
          diag[bb] = diag[bb] + f * up;
        else
          fill[bb][pa] = (fill[bb].count(pa) ? fill[bb][pa] : T::zero()) + f * up;
      }
      fill[bb].erase(a);
      b = trunc.parent[bb];
    }
    fill[a].clear();
  }
  const S s_i = diag[0];
  if (T::is_zero(s_i))
    throw DomainError("internal_error", "singular pivot at the window base");
  return kernel.parent_weight(i) / s_i;
}

namespace detail {

struct CurveAnalysis {
  bool reaches_one = false;     // last value above 1 - eps
  bool plateau = false;         // geometric increments with small tail estimate
  std::size_t certified_h = 0;  // first h where the value exceeded 1 - eps
  double last_value = 0.0;
};

inline CurveAnalysis analyze_return_curve(const std::vector<std::pair<std::size_t, double>>& curve,
                                          double eps) {
  CurveAnalysis out;
  if (curve.empty()) return out;
  out.last_value = curve.back().second;
  for (const auto& [h, v] : curve) {
    if (v > 1.0 - eps) {
      out.reaches_one = true;
      out.certified_h = h;
      break;
    }
  }
  if (out.reaches_one) return out;
  // Plateau detection: trailing increments shrinking geometrically with
  // ratio bounded away from one, and the implied tail too small to ever
  // reach one.
  if (curve.size() < 6) return out;
  std::vector<double> inc;
  for (std::size_t k = 1; k < curve.size(); ++k)
    inc.push_back(curve[k].second - curve[k - 1].second);
  const std::size_t w = std::min<std::size_t>(4, inc.size() - 1);
  double ratio_max = 0.0;
  bool ratios_valid = true;
  for (std::size_t k = inc.size() - w; k < inc.size(); ++k) {
    if (inc[k - 1] <= 0.0) {
      if (inc[k] <= 1e-18 && inc[k - 1] > -1e-15) continue;  // flat curve
      ratios_valid = false;
      break;
    }
    ratio_max = std::max(ratio_max, inc[k] / inc[k - 1]);
  }
  if (!ratios_valid) return out;
  const double r = ratio_max;
  const double d_last = std::max(inc.back(), 0.0);
  const double tail = r < 1.0 ? d_last * r / (1.0 - r) : 1.0;
  if (r < 0.9 && out.last_value + tail < 1.0 - 10.0 * eps) out.plateau = true;
  return out;
}

}  // namespace detail

// Heuristic recurrence verdict from the return-probability curves of every
// first-generation child.  Recurrent when every curve exceeds 1 - eps;
// Transient when some curve plateaus strictly below one; otherwise
// Inconclusive.  Only Inconclusive is guaranteed never wrong.
template <typename S>
Verdict classify_recurrence(const AudKernel<S>& kernel, ClassifyOptions opts = {}) {
  using T = scalar_traits<S>;
  Verdict v;
  v.tolerance = opts.eps;
  const std::size_t degree = kernel.tree().child_count(NodeWord::root());
  if (degree == 0) {
    v.outcome = Outcome::Recurrent;
    v.heuristic = false;
    v.reason = "single-state tree";
    return v;
  }
  std::vector<std::vector<std::pair<std::size_t, double>>> curves(degree);
  bool budget_hit = false;
  for (std::size_t h = 2; h <= opts.h_max && !budget_hit; ++h) {
    for (std::size_t k = 0; k < degree; ++k) {
      const NodeWord child = NodeWord::root().child(static_cast<Letter>(k));
      try {
        S p = return_before_level(kernel, child, h, opts.node_cap);
        curves[k].emplace_back(h, T::to_double(p));
      } catch (const TreechainError& e) {
        if (std::string(e.kind()) == "resource_limit") {
          budget_hit = true;
          break;
        }
        throw;
      }
    }
  }
  std::size_t pass_count = 0;
  bool any_plateau = false;
  std::size_t cert = 0;
  for (std::size_t k = 0; k < degree; ++k) {
    auto an = detail::analyze_return_curve(curves[k], opts.eps);
    if (an.reaches_one) {
      ++pass_count;
      cert = std::max(cert, an.certified_h);
    }
    if (an.plateau) any_plateau = true;
  }
  // Evidence: per level, the minimum across children.
  if (!curves.empty() && !curves[0].empty()) {
    for (std::size_t t = 0; t < curves[0].size(); ++t) {
      double mn = curves[0][t].second;
      bool complete = true;
      for (std::size_t k = 1; k < degree; ++k) {
        if (t >= curves[k].size()) {
          complete = false;
          break;
        }
        mn = std::min(mn, curves[k][t].second);
      }
      if (complete) v.evidence.emplace_back(curves[0][t].first, mn);
    }
  }
  if (any_plateau) {
    v.outcome = Outcome::Transient;
    v.certification_depth = v.evidence.empty() ? 0 : v.evidence.back().first;
    v.reason = "some return curve plateaus strictly below one (heuristic)";
  } else if (pass_count == degree) {
    v.outcome = Outcome::Recurrent;
    v.certification_depth = cert;
    v.reason = "every first-generation return curve exceeds 1 - eps (heuristic)";
  } else {
    v.outcome = Outcome::Inconclusive;
    v.certification_depth = v.evidence.empty() ? 0 : v.evidence.back().first;
    v.reason = budget_hit ? "node budget exhausted before a certificate appeared"
                          : "no certificate within h_max; boundary case or probe too short";
  }
  return v;
}

// Positive recurrence from invariant-measure level sums S_k.  A closed-form
// level-sum ratio supplied by the kernel gives a non-heuristic certificate;
// otherwise the trailing window of empirical ratios S_{k+1}/S_k decides.
template <typename S>
Verdict classify_positive_recurrence(const AudKernel<S>& kernel, ClassifyOptions opts = {}) {
  using T = scalar_traits<S>;
  Verdict v;
  v.tolerance = opts.eps;

  std::optional<Truncation> trunc;
  std::size_t depth = opts.depth;
  while (true) {
    try {
      trunc = truncate(kernel.tree_ptr(), depth, opts.node_cap);
      break;
    } catch (const TreechainError& e) {
      if (std::string(e.kind()) == "resource_limit" && depth > 2) {
        --depth;
        continue;
      }
      throw;
    }
  }
  const bool capped = depth < opts.depth;

  // Leaf addition over the whole truncation, accumulating level sums.
  std::vector<S> level_sum(depth + 1, T::zero());
  Measure<S> mu;
  std::size_t reached = 0;
  for (std::size_t idx = 0; idx < trunc->size(); ++idx) {
    const NodeWord& u = trunc->nodes[idx];
    if (u.is_root()) {
      mu.set(u, T::one());
      level_sum[0] = T::one();
      continue;
    }
    S pw = kernel.parent_weight(u);
    if (T::is_zero(pw))
      throw DomainError("zero_parent_weight", "vanishing parent weight at " + u.to_string());
    S inflow = T::zero();
    for (std::size_t d = 0; d < u.depth(); ++d)
      inflow = inflow + mu.at(u.prefix(d)) * kernel.subtree_mass(u.prefix(d), u);
    S val = inflow / pw;
    mu.set(u, val);
    level_sum[u.depth()] = level_sum[u.depth()] + val;
    reached = std::max(reached, u.depth());
  }
  level_sum.resize(reached + 1);
  for (std::size_t k = 0; k < level_sum.size(); ++k)
    v.evidence.emplace_back(k, T::to_double(level_sum[k]));
  v.certification_depth = reached;

  // Closed-form certificate, if the kernel knows its level-sum ratio.
  if (auto ratio = kernel.level_sum_ratio(); ratio.has_value()) {
    double r = T::to_double(*ratio);
    v.heuristic = false;
    if (r < 1.0) {
      v.outcome = Outcome::PositiveRecurrent;
      v.reason = "closed-form level-sum ratio " + std::to_string(r) + " < 1";
    } else {
      v.outcome = Outcome::NotPositiveRecurrent;
      v.reason = "closed-form level-sum ratio " + std::to_string(r) + " >= 1";
    }
    return v;
  }

  if (reached < opts.growth_window + 2) {
    v.outcome = Outcome::Inconclusive;
    v.reason = capped ? "node budget left too few levels for a tail fit"
                      : "probe depth too small for the requested growth window";
    return v;
  }
  double r_min = 1e300, r_max = 0.0;
  bool degenerate = false;
  for (std::size_t k = reached - opts.growth_window; k < reached; ++k) {
    double a = T::to_double(level_sum[k]);
    double b = T::to_double(level_sum[k + 1]);
    if (a <= 0.0) {
      degenerate = true;
      break;
    }
    double r = b / a;
    r_min = std::min(r_min, r);
    r_max = std::max(r_max, r);
  }
  if (degenerate) {
    v.outcome = Outcome::Inconclusive;
    v.reason = "level sums vanish inside the fit window";
  } else if (r_max < 0.999) {
    v.outcome = Outcome::PositiveRecurrent;
    v.reason = "trailing level-sum ratios bounded below one (heuristic geometric tail)";
  } else if (r_min >= 0.999) {
    v.outcome = Outcome::NotPositiveRecurrent;
    v.reason = "level sums are not decaying: total mass diverges (heuristic)";
  } else {
    v.outcome = Outcome::Inconclusive;
    v.reason = "level-sum ratios straddle one; no stable tail";
  }
  return v;
}

struct EndVerdicts {
  std::string label;
  Verdict recurrence;
  Verdict positive;
};

struct EndsVerdict {
  Verdict recurrence;
  Verdict positive;
  std::vector<EndVerdicts> per_end;
};

namespace detail {

inline Verdict combine_recurrence(const std::vector<EndVerdicts>& per_end, double eps) {
  Verdict v;
  v.tolerance = eps;
  bool all_recurrent = !per_end.empty();
  bool any_transient = false;
  std::size_t cert = 0;
  for (const auto& e : per_end) {
    if (e.recurrence.outcome != Outcome::Recurrent) all_recurrent = false;
    if (e.recurrence.outcome == Outcome::Transient) any_transient = true;
    cert = std::max(cert, e.recurrence.certification_depth);
  }
  v.certification_depth = cert;
  if (any_transient) {
    v.outcome = Outcome::Transient;
    v.reason = "some end projection is transient, so the kernel is transient";
  } else if (all_recurrent) {
    v.outcome = Outcome::Recurrent;
    v.reason = "every end projection is recurrent";
  } else {
    v.outcome = Outcome::Inconclusive;
    v.reason = "at least one end projection was inconclusive";
  }
  return v;
}

inline Verdict combine_positive(const std::vector<EndVerdicts>& per_end, double eps) {
  Verdict v;
  v.tolerance = eps;
  bool all_pr = !per_end.empty();
  bool any_not = false;
  std::size_t cert = 0;
  for (const auto& e : per_end) {
    if (e.positive.outcome != Outcome::PositiveRecurrent) all_pr = false;
    if (e.positive.outcome == Outcome::NotPositiveRecurrent) any_not = true;
    cert = std::max(cert, e.positive.certification_depth);
  }
  v.certification_depth = cert;
  if (all_pr) {
    v.outcome = Outcome::PositiveRecurrent;
    v.reason = "every end projection is positive recurrent";
  } else if (any_not) {
    v.outcome = Outcome::NotPositiveRecurrent;
    v.reason = "some end projection is not positive recurrent";
  } else {
    v.outcome = Outcome::Inconclusive;
    v.reason = "at least one end projection was inconclusive";
  }
  return v;
}

}  // namespace detail

// Classify through the declared ends: project the kernel onto each end's
// skeleton, classify the projections, and combine (recurrent iff every end
// is; positive recurrent iff every end is; transient as soon as one end is).
template <typename S>
EndsVerdict classify_by_ends(const KernelPtr<S>& kernel,
                             const std::vector<EndDescription>& ends,
                             ClassifyOptions opts = {}) {
  if (ends.empty())
    throw DomainError("no_ends", "end classification needs at least one declared end");
  EndsVerdict out;
  for (const EndDescription& end : ends) {
    KernelPtr<S> projected = project_end(kernel, end);
    EndVerdicts ev;
    ev.label = end.label;
    ev.recurrence = classify_recurrence(*projected, opts);
    ev.positive = classify_positive_recurrence(*projected, opts);
    out.per_end.push_back(std::move(ev));
  }
  out.recurrence = detail::combine_recurrence(out.per_end, opts.eps);
  out.positive = detail::combine_positive(out.per_end, opts.eps);
  return out;
}

// Convenience overload pulling the end set from the kernel's tree; refuses
// trees whose declared end set is not exhaustive, since the end-by-end
// combination theorem needs every end.
template <typename S>
EndsVerdict classify_by_ends(const KernelPtr<S>& kernel, ClassifyOptions opts = {}) {
  const TreeSource& tree = kernel->tree();
  if (!tree.ends_exhaustive())
    throw DomainError("ends_not_exhaustive",
                      "tree does not declare an exhaustive finite end set; "
                      "use classify_recurrence directly");
  return classify_by_ends(kernel, tree.declared_ends(), opts);
}

}  // namespace treechain
