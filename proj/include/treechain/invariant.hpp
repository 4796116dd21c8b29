#pragma once

// Invariant measures and eigenvectors for almost-upper-directed kernels:
// the branch-matrix determinant formula, the leaf-addition recursion, the
// reversible product formula for nearest-neighbor walks, balance residuals,
// lambda-eigenvector construction on branches and on finite matrices, and a
// probe for the dimension of the invariant-measure eigenspace.

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
#include "treechain/tree.hpp"

namespace treechain {

// A measure supported on finitely many explicitly listed nodes.
template <typename S>
class Measure {
 public:
  Measure() = default;

  void set(const NodeWord& u, S value) { values_[u] = std::move(value); }

  const S& at(const NodeWord& u) const {
    auto it = values_.find(u);
    if (it == values_.end())
      throw DomainError("bad_node", "measure has no value at " + u.to_string());
    return it->second;
  }

  bool contains(const NodeWord& u) const { return values_.count(u) > 0; }
  std::size_t size() const { return values_.size(); }
  const std::map<NodeWord, S>& entries() const { return values_; }

 private:
  std::map<NodeWord, S> values_;
};

// The branch matrix of the kernel along the root-to-u path a_0, ..., a_m:
// the transition matrix of the chain watched on the path, with each
// below-path excursion collapsed onto the deepest path node it keeps above
// itself.  Rows above u sum to one; row u carries the parent weight and the
// complementary stay weight.
template <typename S>
Matrix<S> branch_matrix(const AudKernel<S>& kernel, const NodeWord& u) {
  using T = scalar_traits<S>;
  const std::size_t m = u.depth();
  Matrix<S> b(m + 1, m + 1);
  if (m == 0) {
    b.at(0, 0) = kernel.subtree_mass(u, u);
    return b;
  }
  std::vector<NodeWord> path;
  path.reserve(m + 1);
  for (std::size_t i = 0; i <= m; ++i) path.push_back(u.prefix(i));
  for (std::size_t i = 0; i < m; ++i) {
    const NodeWord& a = path[i];
    if (i >= 1) b.at(i, i - 1) = kernel.parent_weight(a);
    for (std::size_t j = i; j + 1 <= m; ++j)
      b.at(i, j) = kernel.subtree_mass(a, path[j]) - kernel.subtree_mass(a, path[j + 1]);
    b.at(i, m) = kernel.subtree_mass(a, u);
  }
  b.at(m, m - 1) = kernel.parent_weight(u);
  b.at(m, m) = T::one() - kernel.parent_weight(u);
  return b;
}

// Invariant-measure value at u from the branch-matrix determinant formula:
// root_value * det((Id - B)^(u)) / prod of parent weights along ]root, u].
template <typename S>
S h_invariant_det(const AudKernel<S>& kernel, const NodeWord& u, const S& root_value) {
  using T = scalar_traits<S>;
  const std::size_t m = u.depth();
  if (m == 0) return root_value;
  Matrix<S> b = branch_matrix(kernel, u);
  Matrix<S> a = Matrix<S>::identity(m + 1) - b;
  S num = determinant(a.without_row_col(m, m));
  S denom = T::one();
  for (std::size_t i = 1; i <= m; ++i) {
    S pw = kernel.parent_weight(u.prefix(i));
    if (T::is_zero(pw))
      throw DomainError("zero_parent_weight",
                        "vanishing parent weight at " + u.prefix(i).to_string());
    denom = denom * pw;
  }
  return root_value * num / denom;
}

// Invariant measure on the ancestral closure of `targets`, built level by
// level: the value at a new leaf u is the closure-internal inflow
// sum_{v strictly above u} pi(v) * mass(v, T_u), divided by u's parent
// weight.  The root gets value one.
template <typename S>
Measure<S> h_invariant_leaf_addition(const AudKernel<S>& kernel,
                                     const std::vector<NodeWord>& targets) {
  using T = scalar_traits<S>;
  std::set<NodeWord> closure;  // NodeWord order = depth, then lexicographic
  for (const NodeWord& t : targets)
    for (std::size_t d = 0; d <= t.depth(); ++d) closure.insert(t.prefix(d));
  closure.insert(NodeWord::root());

  Measure<S> mu;
  for (const NodeWord& u : closure) {
    if (u.is_root()) {
      mu.set(u, T::one());
      continue;
    }
    S pw = kernel.parent_weight(u);
    if (T::is_zero(pw))
      throw DomainError("zero_parent_weight",
                        "vanishing parent weight at " + u.to_string());
    S inflow = T::zero();
    for (std::size_t d = 0; d < u.depth(); ++d) {
      const NodeWord v = u.prefix(d);
      inflow = inflow + mu.at(v) * kernel.subtree_mass(v, u);
    }
    mu.set(u, inflow / pw);
  }
  return mu;
}

// Invariant measure of a nearest-neighbor walk by the reversibility product:
// the ratio of down-step to up-step weights along the root-to-u path.
template <typename S>
S rw_invariant(const AudKernel<S>& kernel, const NodeWord& u) {
  using T = scalar_traits<S>;
  S value = T::one();
  for (std::size_t d = 1; d <= u.depth(); ++d) {
    const NodeWord child = u.prefix(d);
    S down = kernel.subtree_mass(child.parent(), child);
    S up = kernel.parent_weight(child);
    if (T::is_zero(up))
      throw DomainError("zero_parent_weight",
                        "vanishing up-step weight at " + child.to_string());
    value = value * down / up;
  }
  return value;
}

// |mu(u) - inflow(u)| where the inflow collects every state that can reach u
// in one step: ancestors and u itself via their point weights, children via
// their parent weights.  mu must be defined on all of these.
template <typename S>
S balance_residual(const AudKernel<S>& kernel, const Measure<S>& mu, const NodeWord& u) {
  using T = scalar_traits<S>;
  S inflow = T::zero();
  for (std::size_t d = 0; d <= u.depth(); ++d) {
    const NodeWord v = u.prefix(d);
    inflow = inflow + mu.at(v) * kernel.point_weight(v, u);
  }
  const std::size_t degree = kernel.tree().child_count(u);
  for (std::size_t k = 0; k < degree; ++k) {
    const NodeWord c = u.child(static_cast<Letter>(k));
    inflow = inflow + mu.at(c) * kernel.parent_weight(c);
  }
  return T::abs(mu.at(u) - inflow);
}

// Lambda-eigenvector value at u on a certified-leafless tree, by the same
// branch-determinant route with Id replaced by lambda*Id.  At lambda = 1
// this is exactly h_invariant_det.
template <typename S>
S lambda_eigenvector_branch(const AudKernel<S>& kernel, const S& lambda,
                            const NodeWord& u, const S& root_value) {
  using T = scalar_traits<S>;
  if (kernel.tree().leafless() != std::optional<bool>(true))
    throw DomainError("requires_leafless",
                      "branch eigenvector route needs a certified leafless tree");
  const std::size_t m = u.depth();
  if (m == 0) return root_value;
  Matrix<S> b = branch_matrix(kernel, u);
  Matrix<S> lam = Matrix<S>::identity(m + 1);
  for (std::size_t i = 0; i <= m; ++i) lam.at(i, i) = lambda;
  Matrix<S> a = lam - b;
  S num = determinant(a.without_row_col(m, m));
  S denom = T::one();
  for (std::size_t i = 1; i <= m; ++i) {
    S pw = kernel.parent_weight(u.prefix(i));
    if (T::is_zero(pw))
      throw DomainError("zero_parent_weight",
                        "vanishing parent weight at " + u.prefix(i).to_string());
    denom = denom * pw;
  }
  return root_value * num / denom;
}

namespace detail {

// Check whether v * m == lambda * v (exactly, or within tol in float mode).
template <typename S>
bool is_left_eigenvector(const Matrix<S>& m, const S& lambda, const std::vector<S>& v,
                         double tol) {
  using T = scalar_traits<S>;
  bool nonzero = false;
  for (const S& x : v)
    if (!T::is_zero(x)) nonzero = true;
  if (!nonzero) return false;
  std::vector<S> w = m.apply_left(v);
  double scale = 0.0;
  for (const S& x : v) scale = std::max(scale, std::abs(T::to_double(x)));
  for (std::size_t j = 0; j < v.size(); ++j) {
    S r = w[j] - lambda * v[j];
    if constexpr (T::is_exact) {
      if (!T::is_zero(r)) return false;
    } else {
      if (std::abs(T::to_double(r)) > tol * (1.0 + scale)) return false;
    }
  }
  return true;
}

// Solve v * (lambda*Id - m) = 0 subject to v[k] = 1, by Gaussian elimination
// on the overdetermined transposed system.  Returns nullopt if inconsistent.
template <typename S>
std::optional<std::vector<S>> left_kernel_with_pivot(const Matrix<S>& m, const S& lambda,
                                                     std::size_t k, double tol) {
  using T = scalar_traits<S>;
  const std::size_t n = m.rows();
  // Unknowns: v[j] for j != k.  Equations: for each column i of (lambda*Id - m),
  // sum_j v[j] * a(j, i) = 0, i.e. sum_{j != k} a(j, i) v[j] = -a(k, i).
  std::vector<std::size_t> unknowns;
  for (std::size_t j = 0; j < n; ++j)
    if (j != k) unknowns.push_back(j);
  const std::size_t uc = unknowns.size();
  std::vector<std::vector<S>> rows(n, std::vector<S>(uc + 1, T::zero()));
  auto a = [&](std::size_t r, std::size_t c) -> S {
    S v = T::zero() - m.at(r, c);
    if (r == c) v = v + lambda;
    return v;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t jj = 0; jj < uc; ++jj) rows[i][jj] = a(unknowns[jj], i);
    rows[i][uc] = T::zero() - a(k, i);
  }
  // Forward elimination with partial pivoting by magnitude.
  std::vector<std::size_t> pivot_col;
  std::size_t row = 0;
  for (std::size_t col = 0; col < uc && row < n; ++col) {
    std::size_t best = row;
    double best_mag = std::abs(T::to_double(rows[row][col]));
    for (std::size_t r = row + 1; r < n; ++r) {
      double mag = std::abs(T::to_double(rows[r][col]));
      if (mag > best_mag) {
        best = r;
        best_mag = mag;
      }
    }
    bool zero_pivot;
    if constexpr (T::is_exact)
      zero_pivot = T::is_zero(rows[best][col]);
    else
      zero_pivot = best_mag <= tol;
    if (zero_pivot) continue;
    std::swap(rows[row], rows[best]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == row || T::is_zero(rows[r][col])) continue;
      S f = rows[r][col] / rows[row][col];
      for (std::size_t c = col; c <= uc; ++c) rows[r][c] = rows[r][c] - f * rows[row][c];
    }
    pivot_col.push_back(col);
    ++row;
  }
  // Consistency: any remaining row with zero coefficients but nonzero rhs?
  for (std::size_t r = row; r < n; ++r) {
    bool coeffs_zero = true;
    for (std::size_t c = 0; c < uc; ++c)
      if (!T::is_zero(rows[r][c])) coeffs_zero = false;
    if (!coeffs_zero) continue;
    if constexpr (T::is_exact) {
      if (!T::is_zero(rows[r][uc])) return std::nullopt;
    } else {
      if (std::abs(T::to_double(rows[r][uc])) > tol) return std::nullopt;
    }
  }
  std::vector<S> v(n, T::zero());
  v[k] = T::one();
  for (std::size_t r = 0; r < pivot_col.size(); ++r)
    v[unknowns[pivot_col[r]]] = rows[r][uc] / rows[r][pivot_col[r]];
  return v;
}

}  // namespace detail

// Left eigenvector of a finite matrix at a simple eigenvalue lambda.
// Simplicity is certified through the characteristic polynomial (p(lambda)=0,
// p'(lambda)!=0); multiple eigenvalues are refused.  The primary route takes
// diagonal cofactors of (lambda*Id - m) with its last column replaced by the
// negated sum of the others (forcing zero row sums); if that degenerates, the
// unit-coordinate constraint is pivoted through every index until a
// consistent solve appears.
template <typename S>
std::vector<S> lambda_eigenvector_finite(const Matrix<S>& m, const S& lambda,
                                         double tol = 1e-9) {
  using T = scalar_traits<S>;
  const std::size_t n = m.rows();
  if (n == 0 || m.cols() != n)
    throw DomainError("bad_parameter", "eigenvector needs a nonempty square matrix");
  std::vector<S> p = characteristic_polynomial(m);
  S p_at = evaluate_polynomial(p, lambda);
  std::vector<S> dp = differentiate_polynomial(p);
  S dp_at = evaluate_polynomial(dp, lambda);
  double poly_scale = 1.0;
  for (const S& c : p) poly_scale = std::max(poly_scale, std::abs(T::to_double(c)));
  if constexpr (T::is_exact) {
    if (!T::is_zero(p_at))
      throw DomainError("not_eigenvalue", "lambda is not an eigenvalue");
    if (T::is_zero(dp_at))
      throw DomainError("eigenvalue_not_simple",
                        "lambda has multiplicity at least 2; eigenvector is not unique");
  } else {
    if (std::abs(T::to_double(p_at)) > tol * poly_scale)
      throw DomainError("not_eigenvalue", "lambda is not an eigenvalue (within tolerance)");
    if (std::abs(T::to_double(dp_at)) <= tol * poly_scale)
      throw DomainError("eigenvalue_not_simple",
                        "lambda is numerically non-simple; eigenvector is not unique");
  }

  if (n == 1) return {T::one()};

  Matrix<S> a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      a.at(i, j) = T::zero() - m.at(i, j);
      if (i == j) a.at(i, j) = a.at(i, j) + lambda;
    }
  Matrix<S> bar = a;
  for (std::size_t i = 0; i < n; ++i) {
    S s = T::zero();
    for (std::size_t j = 0; j + 1 < n; ++j) s = s + a.at(i, j);
    bar.at(i, n - 1) = T::zero() - s;
  }
  std::vector<S> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = determinant(bar.without_row_col(i, i));
  if (detail::is_left_eigenvector(m, lambda, v, tol)) return v;

  for (std::size_t k = 0; k < n; ++k) {
    auto cand = detail::left_kernel_with_pivot(m, lambda, k, tol);
    if (cand.has_value() && detail::is_left_eigenvector(m, lambda, *cand, tol))
      return *cand;
  }
  throw DomainError("eigenvector_failed",
                    "no consistent eigenvector found despite certified simplicity");
}

// Probe parameters for the eigenspace-dimension walk over the leafless
// skeleton: how deep to look, how much total branching to tolerate, and how
// many branching-free levels certify stabilization.
struct EigenspaceProbe {
  std::size_t depth_budget = 64;
  std::size_t branch_budget = 4096;
  std::size_t stable_window = 16;
};

struct EigenspaceDimension {
  std::optional<std::size_t> dimension;  // nullopt = infinite (or not stabilized)
  std::size_t probed_depth = 0;
  std::string note;
};

// Dimension of the space of invariant measures: one plus the total branching
// excess of the leafless skeleton.  Finite trees have dimension one.  Needs
// decidable subtree finiteness along the walk.
inline EigenspaceDimension eigenspace_dimension(const TreeSource& tree,
                                                EigenspaceProbe probe = {}) {
  if (tree.size().has_value())
    return {std::size_t{1}, 0, "finite tree: unique invariant measure"};
  std::vector<NodeWord> frontier{NodeWord::root()};
  std::size_t excess = 0;
  std::size_t last_branch_depth = 0;
  for (std::size_t d = 0; d < probe.depth_budget; ++d) {
    std::vector<NodeWord> next;
    for (const NodeWord& u : frontier) {
      const std::size_t degree = tree.child_count(u);
      std::size_t kept = 0;
      for (std::size_t k = 0; k < degree; ++k) {
        const NodeWord c = u.child(static_cast<Letter>(k));
        Finiteness f = tree.subtree_finiteness(c);
        if (f == Finiteness::Unknown)
          throw DomainError("finiteness_unknown",
                            "subtree finiteness undecided at " + c.to_string());
        if (f == Finiteness::Infinite) {
          ++kept;
          next.push_back(c);
        }
      }
      if (kept == 0)
        throw DomainError("bad_annotations",
                          "infinite subtree with no infinite child at " + u.to_string());
      if (kept > 1) {
        excess += kept - 1;
        last_branch_depth = d;
      }
    }
    if (excess > probe.branch_budget)
      return {std::nullopt, d, "branching exceeded budget: eigenspace is infinite-dimensional"};
    if (d - last_branch_depth >= probe.stable_window)
      return {excess + 1, d, "skeleton branching stabilized"};
    frontier = std::move(next);
  }
  return {std::nullopt, probe.depth_budget,
          "no stabilization within probe depth; treat as infinite or deepen the probe"};
}

}  // namespace treechain
