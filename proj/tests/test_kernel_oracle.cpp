// Unit tests for transition kernels (explicit, families, walks, projections,
// reversal) and for the dense brute-force oracle.
#include <catch2/catch_amalgamated.hpp>

#include <memory>
#include <vector>

#include "treechain/kernel.hpp"
#include "treechain/oracle.hpp"

namespace tc = treechain;
using tc::BigRational;
using tc::FiniteTree;
using tc::Matrix;
using tc::NodeWord;
using R = BigRational;

namespace {

R rat(long long a, long long b) { return R(a, b); }

// Star: root with three leaf children; the running worked example.
std::shared_ptr<const FiniteTree> star3() { return FiniteTree::make({3, 0, 0, 0}); }

tc::ExplicitKernel<R> star3_kernel() {
  Matrix<R> m(4, 4);
  m.at(0, 0) = rat(1, 20);
  m.at(0, 1) = rat(1, 4);
  m.at(0, 2) = rat(1, 5);
  m.at(0, 3) = rat(1, 2);
  for (std::size_t i = 1; i < 4; ++i) {
    m.at(i, 0) = rat(1, 3);
    m.at(i, i) = rat(2, 3);
  }
  return tc::ExplicitKernel<R>(star3(), m);
}

}  // namespace

TEST_CASE("explicit kernels expose point, parent, and subtree weights", "[kernel]") {
  auto k = star3_kernel();
  CHECK(k.point_weight(NodeWord::root(), NodeWord::root()) == rat(1, 20));
  CHECK(k.point_weight(NodeWord::root(), NodeWord::parse("2")) == rat(1, 5));
  CHECK(k.parent_weight(NodeWord::parse("1")) == rat(1, 3));
  CHECK(k.subtree_mass(NodeWord::root(), NodeWord::root()) == R(1));
  CHECK(k.subtree_mass(NodeWord::parse("3"), NodeWord::parse("3")) == rat(2, 3));
  CHECK_THROWS_AS(k.parent_weight(NodeWord::root()), tc::DomainError);
}

TEST_CASE("structural validation flags bad rows, sibling support, irreducibility",
          "[kernel]") {
  auto window = tc::truncate(star3(), 1);
  CHECK(tc::validate_aud(star3_kernel(), window).empty());
  CHECK(tc::check_irreducible(star3_kernel(), window).pass);

  Matrix<R> short_row = star3_kernel().matrix();
  short_row.at(0, 0) = R(0);  // root row now sums to 19/20
  tc::ExplicitKernel<R> bad_sum(star3(), short_row);
  auto violations = tc::validate_aud(bad_sum, window);
  REQUIRE_FALSE(violations.empty());
  CHECK(violations.front().kind == "row_sum");

  Matrix<R> sibling = star3_kernel().matrix();
  sibling.at(1, 1) = rat(1, 3);
  sibling.at(1, 2) = rat(1, 3);  // mass from one leaf to a sibling
  tc::ExplicitKernel<R> bad_support(star3(), sibling);
  bool saw_support = false;
  for (const auto& v : tc::validate_aud(bad_support, window))
    saw_support = saw_support || v.kind == "support";
  CHECK(saw_support);

  Matrix<R> stuck = star3_kernel().matrix();
  stuck.at(2, 0) = R(0);  // leaf 2 can no longer reach its parent
  stuck.at(2, 2) = R(1);
  tc::ExplicitKernel<R> not_irreducible(star3(), stuck);
  auto report = tc::check_irreducible(not_irreducible, window);
  CHECK_FALSE(report.pass);
  CHECK(report.counterexample.value() == NodeWord::parse("2"));
}

TEST_CASE("uniform family: equal weight on parent and each descendant", "[kernel]") {
  tc::UniformKernel<R> k(star3());
  // Root row: uniform over the 4 nodes of its subtree.
  CHECK(k.point_weight(NodeWord::root(), NodeWord::root()) == rat(1, 4));
  CHECK(k.subtree_mass(NodeWord::root(), NodeWord::parse("1")) == rat(1, 4));
  // Leaf row: parent and self split evenly.
  CHECK(k.parent_weight(NodeWord::parse("2")) == rat(1, 2));
  CHECK(k.subtree_mass(NodeWord::parse("2"), NodeWord::parse("2")) == rat(1, 2));
}

TEST_CASE("geometric family: subtree share p, parent share 1-p", "[kernel]") {
  const R p = rat(2, 5);
  tc::GeometricKernel<R> k(star3(), p);
  CHECK(k.parent_weight(NodeWord::parse("1")) == R(1) - p);
  CHECK(k.subtree_mass(NodeWord::parse("1"), NodeWord::parse("1")) == p);
  // Root: subtree share lands proportionally to subtree sizes.
  CHECK(k.subtree_mass(NodeWord::root(), NodeWord::parse("3")) == p * rat(1, 4));
  CHECK(k.point_weight(NodeWord::root(), NodeWord::root()) == R(1) - p * rat(3, 4));
  CHECK_THROWS_AS(tc::GeometricKernel<R>(star3(), R(1)), tc::DomainError);
}

TEST_CASE("leaf-jump family: halving mass per level on a regular tree", "[kernel]") {
  // Complete binary tree of height 2: 7 nodes.
  auto tree = FiniteTree::make({2, 2, 2, 0, 0, 0, 0});
  const R p = rat(3, 7);
  tc::LeafJumpKernel<R> k(tree, p);
  CHECK(k.parent_weight(NodeWord::parse("1.2")) == R(1) - p);
  CHECK(k.subtree_mass(NodeWord::root(), NodeWord::parse("2")) == p / 2);
  CHECK(k.subtree_mass(NodeWord::root(), NodeWord::parse("2.1")) == p / 4);
  // Interior rows put nothing on themselves: all subtree mass descends.
  CHECK(k.point_weight(NodeWord::parse("1"), NodeWord::parse("1")) == R(0));
  CHECK(k.point_weight(NodeWord::parse("1"), NodeWord::parse("1.2")) == p / 2);
  // Trees with mixed arity are refused once the offending node is touched.
  auto lopsided = FiniteTree::make({2, 1, 0, 0});
  tc::LeafJumpKernel<R> on_lopsided(lopsided, p);
  CHECK_THROWS_AS(on_lopsided.subtree_mass(NodeWord::root(), NodeWord::parse("1")),
                  tc::DomainError);
}

TEST_CASE("simple walk: uniform over the closed neighbourhood", "[kernel]") {
  auto k = tc::make_simple_walk<R>(std::make_shared<tc::CompleteTree>(2));
  // Every node has 2 children: shares are thirds.
  CHECK(k->parent_weight(NodeWord::parse("1.1")) == rat(1, 3));
  CHECK(k->point_weight(NodeWord::parse("1.1"), NodeWord::parse("1.1.2")) == rat(1, 3));
  CHECK(k->point_weight(NodeWord::parse("1.1"), NodeWord::parse("1.1")) == R(0));
  CHECK(k->point_weight(NodeWord::root(), NodeWord::root()) == rat(1, 3));
}

TEST_CASE("homogeneous walk: fixed up and per-child weights, stay absorbs the rest",
          "[kernel]") {
  auto k = tc::make_homogeneous_walk<R>(std::make_shared<tc::CompleteTree>(2), rat(9, 23),
                                        rat(7, 23));
  NodeWord u = NodeWord::parse("2.1");
  CHECK(k->parent_weight(u) == rat(9, 23));
  CHECK(k->point_weight(u, u.child(0)) == rat(7, 23));
  CHECK(k->point_weight(u, u) == R(0));  // 1 - 9/23 - 2*7/23
  // Root folds the upward weight into the self-loop.
  CHECK(k->point_weight(NodeWord::root(), NodeWord::root()) == rat(9, 23));
  CHECK_THROWS_AS(tc::make_homogeneous_walk<R>(std::make_shared<tc::CompleteTree>(4),
                                               rat(1, 2), rat(1, 2))
                      ->point_weight(NodeWord::root(), NodeWord::root()),
                  tc::DomainError);
}

TEST_CASE("birth-death rates index by height and clamp at the last entry", "[kernel]") {
  auto k = tc::make_birth_death<R>({rat(2, 3), rat(3, 5)}, {rat(1, 3), rat(1, 5)},
                                   {R(0), rat(1, 5)});
  NodeWord one = NodeWord::parse("1");
  NodeWord deep = NodeWord::parse("1.1.1.1");
  // Height 1 uses the second row; heights beyond reuse it.
  CHECK(k->parent_weight(one) == rat(3, 5));
  CHECK(k->point_weight(one, one) == rat(1, 5));
  CHECK(k->parent_weight(deep) == rat(3, 5));
  CHECK(k->point_weight(deep, deep.child(0)) == rat(1, 5));
  // Height 0 folds the toward-root rate into the self-loop.
  CHECK(k->point_weight(NodeWord::root(), NodeWord::root()) == rat(2, 3));
  CHECK(k->point_weight(NodeWord::root(), one) == rat(1, 3));

  // Constant rates advertise the closed-form level-sum ratio away/toward.
  auto flat = tc::make_birth_death<R>({rat(2, 3)}, {rat(1, 3)}, {R(0)});
  CHECK(flat->level_sum_ratio().value() == rat(1, 2));
}

TEST_CASE("ray walk: per-ray away rates and a root self-loop remainder", "[kernel]") {
  auto tree = std::make_shared<tc::RaysTree>(2);
  auto k = tc::make_ray_walk<R>(tree, {rat(2, 3), rat(1, 3)}, {rat(1, 3), rat(1, 3)});
  CHECK(k->point_weight(NodeWord::root(), NodeWord::root()) == rat(1, 3));
  CHECK(k->point_weight(NodeWord::root(), NodeWord::parse("2")) == rat(1, 3));
  NodeWord on_ray0 = NodeWord::parse("1.1.1");
  CHECK(k->point_weight(on_ray0, on_ray0.child(0)) == rat(2, 3));
  CHECK(k->parent_weight(on_ray0) == rat(1, 3));
  CHECK_THROWS_AS(tc::make_ray_walk<R>(tree, {rat(1, 2)}, {rat(1, 2)}), tc::DomainError);
}

TEST_CASE("height-law table rows clamp beyond the last row", "[kernel]") {
  using Law = tc::TableHeightLaw<R>;
  // Row 0: stay 1/2, up-one 1/2.  Row 1+: down 1/2, stay 1/4, up-one 1/4.
  auto law = std::make_shared<const Law>(std::vector<Law::Row>{
      {R(0), {rat(1, 2), rat(1, 2)}},
      {rat(1, 2), {rat(1, 4), rat(1, 4)}},
  });
  CHECK(law->down(1) == rat(1, 2));
  CHECK(law->down(9) == rat(1, 2));
  CHECK(law->tail(9, 9) == rat(1, 2));   // stay + up-one
  CHECK(law->tail(9, 10) == rat(1, 4));  // up-one only
  CHECK(law->tail(9, 11) == R(0));
  CHECK_THROWS_AS(law->down(0), tc::DomainError);
  // Rows must be stochastic (row 0 ignores its unusable down weight).
  CHECK_THROWS_AS(Law(std::vector<Law::Row>{{R(0), {rat(1, 2)}}}), tc::DomainError);
}

TEST_CASE("end projection keeps ray weights and redirects the rest upward", "[kernel]") {
  auto tree = std::make_shared<tc::RaysTree>(3);
  std::vector<R> away = {rat(1, 4), rat(1, 2), rat(1, 8)};
  std::vector<R> root_to = {rat(1, 4), rat(1, 4), rat(1, 4)};
  tc::KernelPtr<R> k = tc::make_ray_walk<R>(tree, away, root_to);

  tc::EndDescription end;
  end.prefix = NodeWord::parse("2");  // second ray, then straight down
  end.period = {0};
  end.label = "ray2";
  auto proj = tc::project_end(k, end);

  // Projected chain lives on a single ray relabelled with letter 0.
  NodeWord child = NodeWord::root().child(0);
  CHECK(proj->tree().child_count(NodeWord::root()) == 1);
  // Root keeps its step onto the ray; everything else becomes a self-loop.
  CHECK(proj->point_weight(NodeWord::root(), child) == rat(1, 4));
  CHECK(proj->point_weight(NodeWord::root(), NodeWord::root()) == rat(3, 4));
  // On the ray, away/toward weights are untouched and nothing stays.
  NodeWord deep = child.child(0).child(0);
  CHECK(proj->parent_weight(deep) == rat(1, 2));
  CHECK(proj->point_weight(deep, deep.child(0)) == rat(1, 2));
  CHECK(proj->point_weight(deep, deep) == R(0));
}

TEST_CASE("time reversal with respect to the stationary law is an involution",
          "[kernel]") {
  auto k = star3_kernel();
  std::vector<R> pi = {rat(20, 77), rat(15, 77), rat(12, 77), rat(30, 77)};
  auto rev = tc::reverse(k, pi);
  auto back = tc::reverse(rev, pi);
  const auto& a = k.matrix();
  const auto& b = back.matrix();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(a.at(i, j) == b.at(i, j));
  // Reversal transposes flows: pi_i P_{ij} = pi_j P*_{ji}.
  const auto& r = rev.matrix();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(pi[i] * a.at(i, j) == pi[j] * r.at(j, i));
}

TEST_CASE("densify lists states in the tree's breadth-first order", "[oracle]") {
  auto k = star3_kernel();
  auto chain = tc::densify(k);
  REQUIRE(chain.size() == 4);
  auto tree = star3();
  for (std::size_t i = 0; i < 4; ++i) CHECK(chain.nodes[i] == tree->nodes()[i]);
  CHECK(chain.p.at(0, 3) == rat(1, 2));
  CHECK(chain.p.at(2, 0) == rat(1, 3));
}

TEST_CASE("dense stationary solve returns the normalized invariant law", "[oracle]") {
  auto chain = tc::densify(star3_kernel());
  auto pi = tc::stationary_dense(chain);
  REQUIRE(pi.size() == 4);
  CHECK(pi[0] == rat(20, 77));
  CHECK(pi[1] == rat(15, 77));
  CHECK(pi[2] == rat(12, 77));
  CHECK(pi[3] == rat(30, 77));
}

TEST_CASE("path weights by length match transition matrix powers", "[oracle]") {
  auto chain = tc::densify(star3_kernel());
  tc::PathQuery q;
  q.start = NodeWord::root();
  q.end = NodeWord::parse("1");
  q.first_hit = false;
  q.max_length = 5;
  auto coeffs = tc::path_polynomial(chain, q);
  REQUIRE(coeffs.size() == 6);
  Matrix<R> power = Matrix<R>::identity(4);
  for (std::size_t n = 0; n <= 5; ++n) {
    CHECK(coeffs[n] == power.at(0, 1));
    power = power * chain.p;
  }
}

TEST_CASE("first-hit path weights stop at the target", "[oracle]") {
  auto chain = tc::densify(star3_kernel());
  tc::PathQuery q;
  q.start = NodeWord::parse("1");
  q.end = NodeWord::parse("2");
  q.max_length = 3;
  auto coeffs = tc::path_polynomial(chain, q);
  REQUIRE(coeffs.size() == 4);
  CHECK(coeffs[0] == R(0));
  CHECK(coeffs[1] == R(0));            // no direct sibling step
  CHECK(coeffs[2] == rat(1, 15));      // 1 -> root -> 2
  CHECK(coeffs[3] == rat(1, 3) * (rat(1, 20) + rat(2, 3)) * rat(1, 5));

  // Starting at the target, the first hit is immediate: weight 1 at length 0.
  tc::PathQuery self = q;
  self.end = q.start;
  auto at_self = tc::path_polynomial(chain, self);
  CHECK(at_self[0] == R(1));
  for (std::size_t n = 1; n < at_self.size(); ++n) CHECK(at_self[n] == R(0));
}

TEST_CASE("path generating value solves the linear first-hit system", "[oracle]") {
  auto chain = tc::densify(star3_kernel());
  tc::PathQuery q;
  q.start = NodeWord::parse("1");
  q.end = NodeWord::parse("2");
  const R x = rat(1, 2);
  // Compare the exact linear solve against the longest enumerable series.
  q.max_length = 24;
  auto coeffs = tc::path_polynomial(chain, q);
  R series = R(0);
  R xn = R(1);
  for (const R& c : coeffs) {
    series += c * xn;
    xn *= x;
  }
  R value = tc::path_value(chain, q, x);
  R gap = value - series;
  CHECK(gap >= R(0));
  CHECK(gap < R(1, 1000000));  // tail beyond length 24 at x = 1/2
}

TEST_CASE("forbidden states restrict paths and cannot swallow the endpoints", "[oracle]") {
  auto chain = tc::densify(star3_kernel());
  tc::PathQuery q;
  q.start = NodeWord::parse("1");
  q.end = NodeWord::parse("2");
  q.forbidden = {NodeWord::parse("3")};
  q.max_length = 4;
  auto restricted = tc::path_polynomial(chain, q);
  CHECK(restricted[2] == rat(1, 15));  // 1 -> root -> 2 avoids node 3 anyway

  q.forbidden = {NodeWord::root()};    // every 1 -> 2 path passes the root
  auto blocked = tc::path_polynomial(chain, q);
  for (const R& c : blocked) CHECK(c == R(0));

  q.forbidden = {NodeWord::parse("1")};
  CHECK_THROWS_AS(tc::path_polynomial(chain, q), tc::DomainError);
}
