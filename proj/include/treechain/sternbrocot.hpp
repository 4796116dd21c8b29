#pragma once

// The Stern-Brocot correspondence between binary address words and positive
// rationals in lowest terms, and Markov chains on the positive rationals
// driven by (right, left, parent, stay) transition families.  Every chain on
// the rationals is the image of a nearest-neighbor walk on the infinite
// binary tree under the encoding, which is how it plugs into the rest of the
// library.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "treechain/errors.hpp"
#include "treechain/kernel.hpp"
#include "treechain/node_word.hpp"
#include "treechain/rational.hpp"
#include "treechain/rng.hpp"
#include "treechain/tree.hpp"

namespace treechain {

namespace detail {

inline void require_positive_rational(const BigRational& x) {
  if (!(numerator(x) >= 1 && denominator(x) >= 1))
    throw DomainError("bad_parameter", "expected a positive rational");
}

}  // namespace detail

// Left child: a/b -> a/(a+b).  Stays in lowest terms automatically.
inline BigRational sb_left(const BigRational& x) {
  detail::require_positive_rational(x);
  return BigRational(numerator(x), numerator(x) + denominator(x));
}

// Right child: a/b -> (a+b)/b.
inline BigRational sb_right(const BigRational& x) {
  detail::require_positive_rational(x);
  return BigRational(numerator(x) + denominator(x), denominator(x));
}

// Parent: inverts whichever of L or R produced x; the root 1/1 is its own
// parent.
inline BigRational sb_parent(const BigRational& x) {
  detail::require_positive_rational(x);
  const BigInt a = numerator(x);
  const BigInt b = denominator(x);
  if (a > b) return BigRational(a - b, b);
  if (a < b) return BigRational(a, b - a);
  return BigRational(1);
}

struct SbTriple {
  BigRational left;
  BigRational right;
  BigRational parent;
};

inline SbTriple sb_maps(const BigRational& x) {
  return {sb_left(x), sb_right(x), sb_parent(x)};
}

// Binary address word -> rational: start at 1/1 and apply L for letter 0,
// R for letter 1, innermost letter first.
inline BigRational sb_encode(const NodeWord& u) {
  BigRational q(1);
  for (Letter k : u.letters()) {
    if (k > 1)
      throw DomainError("bad_parameter", "encoding needs a binary address word");
    q = (k == 0) ? sb_left(q) : sb_right(q);
  }
  return q;
}

// Rational -> binary address word, by running the parent map back to 1/1.
// Terminates because numerator+denominator strictly decreases.
inline NodeWord sb_decode(const BigRational& q) {
  detail::require_positive_rational(q);
  std::vector<Letter> letters;
  BigRational x = q;
  while (!(numerator(x) == 1 && denominator(x) == 1)) {
    letters.push_back(numerator(x) > denominator(x) ? Letter{1} : Letter{0});
    x = sb_parent(x);
  }
  NodeWord u;
  for (std::size_t i = letters.size(); i-- > 0;) u.push(letters[i]);
  return u;
}

// One chain step goes right / left / to the parent / stays with the four
// probabilities evaluated at the current state.  At 1/1 the parent move is a
// self-loop (merged with stay within the dynamics, kept separate here so the
// row stays stochastic).
struct TransitionFamily {
  std::function<double(const BigRational&)> r;
  std::function<double(const BigRational&)> l;
  std::function<double(const BigRational&)> p;
  std::function<double(const BigRational&)> s;

  void validate_at(const BigRational& x, double tol = 1e-9) const {
    const double rr = r(x), ll = l(x), pp = p(x), ss = s(x);
    if (rr < -tol || ll < -tol || pp < -tol || ss < -tol)
      throw DomainError("bad_parameter", "negative transition probability");
    if (std::abs(rr + ll + pp + ss - 1.0) > tol)
      throw DomainError("bad_parameter", "transition probabilities do not sum to one");
  }
};

// Constant-probability family (the CLI shape): r, l, p fixed, stay the rest.
inline TransitionFamily constant_family(double r, double l, double p) {
  const double s = 1.0 - r - l - p;
  if (r < 0 || l < 0 || p < 0 || s < -1e-12)
    throw DomainError("bad_parameter", "family probabilities must be non-negative and sum to at most one");
  return {[r](const BigRational&) { return r; },
          [l](const BigRational&) { return l; },
          [p](const BigRational&) { return p; },
          [s](const BigRational&) { return s < 0 ? 0.0 : s; }};
}

inline BigRational sb_step(const TransitionFamily& fam, const BigRational& x, Rng& rng) {
  const std::vector<double> w{fam.r(x), fam.l(x), fam.p(x), fam.s(x)};
  switch (rng.categorical(w)) {
    case 0: return sb_right(x);
    case 1: return sb_left(x);
    case 2: return sb_parent(x);
    default: return x;
  }
}

struct SbReport {
  std::map<BigRational, std::uint64_t> occupancy;  // capped; see skipped_states
  std::uint64_t returns_to_root = 0;               // visits to 1/1 after time 0
  std::uint64_t steps = 0;
  std::uint64_t skipped_states = 0;  // visits not tallied once the cap was hit
  BigRational final_state;
  double mean_word_depth = 0.0;
  std::vector<BigRational> trajectory_head;
};

// Deterministic-per-seed simulation of the rational chain.  Word depth is
// tracked incrementally (L/R descend, P ascends), so no decoding per step.
inline SbReport sb_simulate(const TransitionFamily& fam, const BigRational& start,
                            std::uint64_t steps, std::uint64_t seed,
                            std::size_t occupancy_cap = 4096,
                            std::size_t trajectory_head = 32) {
  detail::require_positive_rational(start);
  fam.validate_at(start);
  Rng rng(derive_seed(seed, 0x5b5bULL));
  SbReport rep;
  rep.steps = steps;
  BigRational cur = start;
  std::uint64_t depth = sb_decode(start).depth();
  double depth_sum = static_cast<double>(depth);
  auto tally = [&](const BigRational& q) {
    auto it = rep.occupancy.find(q);
    if (it != rep.occupancy.end()) {
      ++it->second;
    } else if (rep.occupancy.size() < occupancy_cap) {
      rep.occupancy[q] = 1;
    } else {
      ++rep.skipped_states;
    }
  };
  tally(cur);
  if (trajectory_head > 0) rep.trajectory_head.push_back(cur);
  const BigRational one(1);
  for (std::uint64_t t = 1; t <= steps; ++t) {
    const std::vector<double> w{fam.r(cur), fam.l(cur), fam.p(cur), fam.s(cur)};
    switch (rng.categorical(w)) {
      case 0:
        cur = sb_right(cur);
        ++depth;
        break;
      case 1:
        cur = sb_left(cur);
        ++depth;
        break;
      case 2:
        cur = sb_parent(cur);
        if (depth > 0) --depth;
        break;
      default:
        break;
    }
    tally(cur);
    if (cur == one) ++rep.returns_to_root;
    if (t < trajectory_head) rep.trajectory_head.push_back(cur);
    depth_sum += static_cast<double>(depth);
  }
  rep.final_state = cur;
  rep.mean_word_depth = depth_sum / static_cast<double>(steps + 1);
  return rep;
}

// The tree image of a rational chain: a nearest-neighbor walk on the
// infinite binary tree whose row at address u is the family evaluated at
// the rational encoded by u.  Letter 0 is the left child.  At the root the
// parent probability folds into the stay weight.
inline std::shared_ptr<RandomWalkKernel<double>> make_sb_kernel(const TransitionFamily& fam) {
  auto tree = std::make_shared<CompleteTree>(2);
  auto row_fn = [fam](const TreeSource&, const NodeWord& u) {
    const BigRational q = sb_encode(u);
    RwRow<double> row;
    row.down = {fam.l(q), fam.r(q)};
    if (u.is_root()) {
      row.up = 0.0;
      row.stay = fam.s(q) + fam.p(q);
    } else {
      row.up = fam.p(q);
      row.stay = fam.s(q);
    }
    return row;
  };
  return std::make_shared<RandomWalkKernel<double>>(tree, row_fn, "stern-brocot image walk");
}

}  // namespace treechain
