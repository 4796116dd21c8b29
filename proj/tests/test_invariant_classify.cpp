// Unit tests for invariant-measure computation (determinant, leaf-addition,
// eigenvectors, balance residuals) and for recurrence classification.
#include <catch2/catch_amalgamated.hpp>

#include <memory>
#include <vector>

#include "treechain/classify.hpp"
#include "treechain/invariant.hpp"
#include "treechain/oracle.hpp"

namespace tc = treechain;
using tc::BigRational;
using tc::FiniteTree;
using tc::Matrix;
using tc::NodeWord;
using R = BigRational;

namespace {

R rat(long long a, long long b) { return R(a, b); }

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

TEST_CASE("determinant route reproduces the stationary law up to scale", "[invariant]") {
  auto k = star3_kernel();
  // Root value 1: the other values are the stationary ratios 15/20, 12/20, 30/20.
  CHECK(tc::h_invariant_det(k, NodeWord::root(), R(1)) == R(1));
  CHECK(tc::h_invariant_det(k, NodeWord::parse("1"), R(1)) == rat(3, 4));
  CHECK(tc::h_invariant_det(k, NodeWord::parse("2"), R(1)) == rat(3, 5));
  CHECK(tc::h_invariant_det(k, NodeWord::parse("3"), R(1)) == rat(3, 2));
}

TEST_CASE("leaf-addition route agrees with the determinant route", "[invariant]") {
  auto k = star3_kernel();
  std::vector<NodeWord> targets;
  auto tree = star3();
  for (const auto& u : tree->nodes()) targets.push_back(u);
  auto mu = tc::h_invariant_leaf_addition(k, targets);
  for (const auto& u : targets) {
    // Both routes normalize to value 1 at the root.
    CHECK(mu.at(u) == tc::h_invariant_det(k, u, R(1)));
  }
}

TEST_CASE("balance residuals vanish exactly at an invariant measure", "[invariant]") {
  auto k = star3_kernel();
  tc::Measure<R> mu;
  mu.set(NodeWord::root(), rat(20, 77));
  mu.set(NodeWord::parse("1"), rat(15, 77));
  mu.set(NodeWord::parse("2"), rat(12, 77));
  mu.set(NodeWord::parse("3"), rat(30, 77));
  auto tree = star3();
  for (const auto& u : tree->nodes()) CHECK(tc::balance_residual(k, mu, u) == R(0));

  tc::Measure<R> off = mu;
  off.set(NodeWord::parse("2"), rat(13, 77));
  CHECK(tc::balance_residual(k, off, NodeWord::parse("2")) != R(0));
}

TEST_CASE("left eigenvectors of simple eigenvalues, with refusals", "[invariant]") {
  auto m = star3_kernel().matrix();

  // lambda = 1 recovers the stationary direction.
  auto v1 = tc::lambda_eigenvector_finite(m, R(1));
  REQUIRE(v1.size() == 4);
  CHECK(v1[1] * R(20) == v1[0] * R(15));
  CHECK(v1[2] * R(20) == v1[0] * R(12));
  CHECK(v1[3] * R(20) == v1[0] * R(30));

  // lambda = -17/60 is simple with direction (-19, 5, 4, 10).
  auto v2 = tc::lambda_eigenvector_finite(m, rat(-17, 60));
  CHECK(v2[1] * R(-19) == v2[0] * R(5));
  CHECK(v2[2] * R(-19) == v2[0] * R(4));
  CHECK(v2[3] * R(-19) == v2[0] * R(10));
  // It really is a left eigenvector.
  auto prod = m.apply_left(v2);
  for (std::size_t j = 0; j < 4; ++j) CHECK(prod[j] == rat(-17, 60) * v2[j]);

  // lambda = 2/3 has a two-dimensional eigenspace: refused, with the reason named.
  try {
    tc::lambda_eigenvector_finite(m, rat(2, 3));
    FAIL("expected a domain error for a repeated eigenvalue");
  } catch (const tc::DomainError& e) {
    CHECK(std::string(e.kind()) == "eigenvalue_not_simple");
  }

  try {
    tc::lambda_eigenvector_finite(m, rat(1, 2));
    FAIL("expected a domain error for a non-eigenvalue");
  } catch (const tc::DomainError& e) {
    CHECK(std::string(e.kind()) == "not_eigenvalue");
  }
}

TEST_CASE("escape probabilities follow the gambler's-ruin formula on a line",
          "[classify]") {
  // Toward-root rate 2/3, away 1/3: return before level h is (2^h - 2)/(2^h - 1).
  auto k = tc::make_birth_death<R>({rat(2, 3)}, {rat(1, 3)}, {R(0)});
  NodeWord one = NodeWord::parse("1");
  for (std::size_t h = 2; h <= 8; ++h) {
    R denom = R((1LL << h) - 1);
    CHECK(tc::return_before_level(*k, one, h) == R((1LL << h) - 2) / denom);
  }
  // Lazy steps do not change first-passage probabilities.
  auto lazy = tc::make_birth_death<R>({rat(1, 2)}, {rat(1, 4)}, {rat(1, 4)});
  for (std::size_t h = 2; h <= 8; ++h)
    CHECK(tc::return_before_level(*lazy, one, h) ==
          tc::return_before_level(*k, one, h));
}

TEST_CASE("return-probe preconditions: depth-one start, level at least two",
          "[classify]") {
  auto k = tc::make_birth_death<R>({rat(2, 3)}, {rat(1, 3)}, {R(0)});
  CHECK_THROWS_AS(tc::return_before_level(*k, NodeWord::root(), 4), tc::DomainError);
  CHECK_THROWS_AS(tc::return_before_level(*k, NodeWord::parse("1.1"), 4), tc::DomainError);
  CHECK_THROWS_AS(tc::return_before_level(*k, NodeWord::parse("1"), 1), tc::DomainError);
}

TEST_CASE("downward drift on the half-line: recurrent and positive recurrent",
          "[classify]") {
  auto k = tc::make_birth_death<R>({rat(2, 3)}, {rat(1, 3)}, {R(0)});
  auto rec = tc::classify_recurrence(*k);
  CHECK(rec.outcome == tc::Outcome::Recurrent);
  auto pos = tc::classify_positive_recurrence(*k);
  CHECK(pos.outcome == tc::Outcome::PositiveRecurrent);
  CHECK_FALSE(pos.heuristic);  // certified by the closed-form level-sum ratio
  CHECK(tc::outcome_name(rec.outcome) == std::string("recurrent"));
  CHECK(tc::outcome_name(pos.outcome) == std::string("positive-recurrent"));
}

TEST_CASE("upward drift on the half-line: transient, not positive recurrent",
          "[classify]") {
  auto k = tc::make_birth_death<R>({rat(1, 3)}, {rat(2, 3)}, {R(0)});
  auto rec = tc::classify_recurrence(*k);
  CHECK(rec.outcome == tc::Outcome::Transient);
  auto pos = tc::classify_positive_recurrence(*k);
  CHECK(pos.outcome == tc::Outcome::NotPositiveRecurrent);
  CHECK_FALSE(pos.heuristic);
  CHECK(tc::outcome_name(rec.outcome) == std::string("transient"));
  CHECK(tc::outcome_name(pos.outcome) == std::string("not-positive-recurrent"));
}

TEST_CASE("verdict evidence records the probed levels", "[classify]") {
  auto k = tc::make_birth_death<R>({rat(2, 3)}, {rat(1, 3)}, {R(0)});
  tc::ClassifyOptions opts;
  opts.h_max = 12;
  auto rec = tc::classify_recurrence(*k, opts);
  REQUIRE_FALSE(rec.evidence.empty());
  CHECK(rec.evidence.front().first == 2);
  CHECK(rec.evidence.front().second == Catch::Approx(2.0 / 3.0));
  // Return probabilities increase with the escape level.
  for (std::size_t t = 1; t < rec.evidence.size(); ++t)
    CHECK(rec.evidence[t].second >= rec.evidence[t - 1].second);
}

TEST_CASE("per-end classification separates a transient and a recurrent ray",
          "[classify]") {
  auto tree = std::make_shared<tc::RaysTree>(2);
  tc::KernelPtr<R> k =
      tc::make_ray_walk<R>(tree, {rat(2, 3), rat(1, 3)}, {rat(2, 3), rat(1, 3)});
  tc::ClassifyOptions opts;
  opts.depth = 24;
  auto verdict = tc::classify_by_ends<R>(k, tree->declared_ends(), opts);
  REQUIRE(verdict.per_end.size() == 2);
  CHECK(verdict.per_end[0].recurrence.outcome == tc::Outcome::Transient);
  CHECK(verdict.per_end[1].recurrence.outcome == tc::Outcome::Recurrent);
  CHECK(verdict.per_end[1].positive.outcome == tc::Outcome::PositiveRecurrent);
  // One escaping direction makes the whole chain transient.
  CHECK(verdict.recurrence.outcome == tc::Outcome::Transient);
}

TEST_CASE("classification is scalar-agnostic: rational and double agree", "[classify]") {
  auto exact = tc::make_birth_death<R>({rat(3, 5)}, {rat(2, 5)}, {R(0)});
  auto approx = tc::make_birth_death<double>({0.6}, {0.4}, {0.0});
  CHECK(tc::classify_recurrence(*exact).outcome ==
        tc::classify_recurrence(*approx).outcome);
  CHECK(tc::classify_positive_recurrence(*exact).outcome ==
        tc::classify_positive_recurrence(*approx).outcome);
}
