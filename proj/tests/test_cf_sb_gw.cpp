// Unit tests for continued-fraction excursion towers, the mediant-tree
// rational chain, and the critical branching-walk classifier.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "treechain/contfrac.hpp"
#include "treechain/gw.hpp"
#include "treechain/oracle.hpp"
#include "treechain/series.hpp"
#include "treechain/sternbrocot.hpp"

namespace tc = treechain;
using tc::BigRational;
using tc::NodeWord;
using R = BigRational;

namespace {
R rat(long long a, long long b) { return R(a, b); }
}  // namespace

TEST_CASE("excursion towers converge to the closed form on lazy-free steps",
          "[contfrac]") {
  for (double x : {0.1, 0.25, 0.4}) {
    auto w = tc::dyck_weights<double>(x, 0.0);
    auto conv = tc::cf_convergent(w, 64, 1.0);
    REQUIRE_FALSE(conv.diverged);
    CHECK(conv.value == Catch::Approx(tc::dyck_closed_form(x)).epsilon(1e-10));
  }
}

TEST_CASE("convergent history grows monotonically and brackets the value",
          "[contfrac]") {
  auto w = tc::dyck_weights<double>(0.3, 0.0);
  auto lo = tc::cf_convergent(w, 24, 1.0, tc::CfTail::Zero);
  auto hi = tc::cf_convergent(w, 24, 1.0, tc::CfTail::One);
  REQUIRE(lo.history.size() == 25);
  for (std::size_t j = 1; j < lo.history.size(); ++j)
    CHECK(lo.history[j] >= lo.history[j - 1]);
  // The one-seeded tower dominates the zero-seeded one at every depth.
  for (std::size_t j = 0; j < lo.history.size(); ++j)
    CHECK(hi.history[j] >= lo.history[j]);
  const double exact = tc::dyck_closed_form(0.3);
  CHECK(lo.value <= exact + 1e-15);
  CHECK(hi.value >= exact - 1e-15);
}

TEST_CASE("formal excursion series counts Dyck paths by the Catalan numbers",
          "[contfrac]") {
  using PS = tc::PowerSeries<R>;
  const std::size_t cap = 13;
  PS x = PS::monomial(R(1), 1, cap);
  auto w = tc::dyck_weights<PS>(x, PS::zero(cap));
  auto conv = tc::cf_convergent(w, 16, PS::one(cap));
  REQUIRE_FALSE(conv.diverged);
  // Coefficient of x^{2n} is the n-th Catalan number; odd coefficients vanish.
  std::vector<long long> catalan = {1, 1, 2, 5, 14, 42, 132};
  for (std::size_t n = 0; n < catalan.size(); ++n)
    CHECK(conv.value[2 * n] == R(catalan[n]));
  for (std::size_t odd = 1; odd <= cap; odd += 2) CHECK(conv.value[odd] == R(0));
}

TEST_CASE("a vanishing tower denominator is reported, not thrown", "[contfrac]") {
  tc::StepWeights<R> w{[](std::size_t) { return R(1); },
                       [](std::size_t) { return R(0); },
                       [](std::size_t) { return R(0); }};
  auto conv = tc::cf_convergent(w, 3, R(1));
  CHECK(conv.diverged);
  CHECK(conv.diverged_at == 0);
}

TEST_CASE("ascending towers reproduce simple continued fractions", "[contfrac]") {
  // All-ones tower of depth 4: 1 + 1/(1 + 1/(1 + 1/(1 + 1/1))) = 8/5.
  auto one = [](std::size_t) { return R(1); };
  CHECK(tc::ascending_tower<R>(one, one, 4) == rat(8, 5));
  CHECK(tc::golden_ratio_tower(40) ==
        Catch::Approx((1.0 + std::sqrt(5.0)) / 2.0).epsilon(1e-12));
}

TEST_CASE("Green value at the root equals the dense resolvent", "[contfrac]") {
  auto tree = tc::FiniteTree::make({3, 0, 0, 0});
  tc::Matrix<R> m(4, 4);
  m.at(0, 0) = rat(1, 20);
  m.at(0, 1) = rat(1, 4);
  m.at(0, 2) = rat(1, 5);
  m.at(0, 3) = rat(1, 2);
  for (std::size_t i = 1; i < 4; ++i) {
    m.at(i, 0) = rat(1, 3);
    m.at(i, i) = rat(2, 3);
  }
  tc::ExplicitKernel<R> k(tree, m);

  tc::GreenOptions opts;
  opts.depth = 4;  // the tree has depth 1; the tower closes exactly
  auto g = tc::green_aud(k, NodeWord::root(), rat(1, 2), opts);
  CHECK(g.value == rat(160, 137));
  CHECK(g.converged);

  // Cross-check: sum of x^n (P^n)_{root,root} via the oracle's linear solve.
  auto chain = tc::densify(k);
  tc::PathQuery q;
  q.start = NodeWord::root();
  q.end = NodeWord::root();
  q.first_hit = false;
  CHECK(tc::path_value(chain, q, rat(1, 2)) == rat(160, 137));
}

TEST_CASE("mediant moves: right, left, parent, and the fixed root", "[sternbrocot]") {
  CHECK(tc::sb_right(rat(7, 5)) == rat(12, 5));
  CHECK(tc::sb_left(rat(7, 5)) == rat(7, 12));
  CHECK(tc::sb_parent(rat(7, 5)) == rat(2, 5));
  CHECK(tc::sb_parent(rat(2, 5)) == rat(2, 3));
  CHECK(tc::sb_parent(R(1)) == R(1));
  CHECK_THROWS_AS(tc::sb_right(R(0)), tc::TreechainError);
}

TEST_CASE("address words and rationals are inverse encodings", "[sternbrocot]") {
  // Letter 0 maps a/b to a/(a+b) (left), letter 1 to (a+b)/b (right).
  NodeWord rl = NodeWord::root().child(1).child(0);
  CHECK(tc::sb_encode(rl) == rat(2, 3));
  CHECK(tc::sb_decode(rat(2, 3)) == rl);
  CHECK(tc::sb_decode(rat(3, 2)) == NodeWord::root().child(0).child(1));
  CHECK(tc::sb_decode(R(1)).is_root());

  // Round trip over every word of depth <= 8.
  for (unsigned mask = 0; mask < (1u << 8); ++mask) {
    for (std::size_t len = 0; len <= 8; ++len) {
      if (len < 8 && mask >= (1u << len)) continue;
      NodeWord u;
      for (std::size_t i = 0; i < len; ++i) u.push((mask >> i) & 1u);
      CHECK(tc::sb_decode(tc::sb_encode(u)) == u);
    }
  }
}

TEST_CASE("degenerate families walk deterministically", "[sternbrocot]") {
  auto always_right = tc::constant_family(1.0, 0.0, 0.0);
  tc::Rng rng(42);
  BigRational q(1);
  for (int i = 0; i < 5; ++i) q = tc::sb_step(always_right, q, rng);
  CHECK(q == R(6));  // 1 -> 2 -> 3 -> 4 -> 5 -> 6

  auto always_up = tc::constant_family(0.0, 0.0, 1.0);
  BigRational r = rat(7, 5);
  r = tc::sb_step(always_up, r, rng);
  CHECK(r == rat(2, 5));
}

TEST_CASE("family validation rejects inconsistent probabilities", "[sternbrocot]") {
  CHECK_THROWS_AS(tc::constant_family(0.7, 0.7, 0.0), tc::DomainError);
  tc::TransitionFamily bad{[](const BigRational&) { return 0.9; },
                           [](const BigRational&) { return 0.9; },
                           [](const BigRational&) { return 0.0; },
                           [](const BigRational&) { return 0.0; }};
  CHECK_THROWS_AS(bad.validate_at(R(1)), tc::DomainError);
}

TEST_CASE("simulation reports are deterministic per seed", "[sternbrocot]") {
  auto fam = tc::constant_family(0.25, 0.25, 0.5);
  auto a = tc::sb_simulate(fam, rat(7, 5), 5000, 11);
  auto b = tc::sb_simulate(fam, rat(7, 5), 5000, 11);
  CHECK(a.final_state == b.final_state);
  CHECK(a.returns_to_root == b.returns_to_root);
  CHECK(a.occupancy == b.occupancy);
  CHECK(a.steps == 5000);

  auto c = tc::sb_simulate(fam, rat(7, 5), 5000, 12);
  CHECK(a.final_state != c.final_state);  // distinct seeds explore differently
}

TEST_CASE("simulation bookkeeping: occupancy totals and trajectory head",
          "[sternbrocot]") {
  auto fam = tc::constant_family(0.25, 0.25, 0.5);
  auto rep = tc::sb_simulate(fam, rat(7, 5), 600, 5, /*occupancy_cap=*/4096,
                             /*trajectory_head=*/16);
  std::uint64_t tallied = 0;
  for (const auto& [state, visits] : rep.occupancy) tallied += visits;
  CHECK(tallied + rep.skipped_states == 601);  // initial state plus each step
  CHECK(rep.trajectory_head.size() == 16);
  CHECK(rep.trajectory_head.front() == rat(7, 5));
  CHECK(rep.mean_word_depth >= 0.0);

  // A pure parent family collapses to the root and stays there.
  auto up = tc::constant_family(0.0, 0.0, 1.0);
  auto collapse = tc::sb_simulate(up, rat(3, 2), 10, 1);
  CHECK(collapse.final_state == R(1));
  CHECK(collapse.returns_to_root == 9);  // reached at step 2, counted each step after
}

TEST_CASE("offspring laws must be critical with mass beyond degree one", "[gw]") {
  CHECK_NOTHROW(tc::OffspringLaw<R>({rat(1, 2), R(0), rat(1, 2)}));
  CHECK_NOTHROW(tc::OffspringLaw<R>({rat(1, 4), rat(1, 2), rat(1, 4)}));
  // Probabilities must sum to one.
  CHECK_THROWS_AS(tc::OffspringLaw<R>({rat(1, 2), rat(1, 4)}), tc::DomainError);
  // Mean must be exactly one.
  CHECK_THROWS_AS(tc::OffspringLaw<R>({rat(3, 5), R(0), rat(2, 5)}), tc::DomainError);
  // Degenerate line (p0 + p1 = 1) is refused.
  CHECK_THROWS_AS(tc::OffspringLaw<R>({R(0), R(1)}), tc::DomainError);
  CHECK_THROWS_AS(tc::OffspringLaw<R>({rat(-1, 2), R(1), rat(1, 2)}), tc::DomainError);
}

TEST_CASE("size-biased law weights degree k by k times its probability", "[gw]") {
  tc::OffspringLaw<R> law({rat(1, 2), R(0), rat(1, 2)});
  auto biased = law.biased();
  REQUIRE(biased.size() == 3);
  CHECK(biased[0] == R(0));
  CHECK(biased[1] == R(0));
  CHECK(biased[2] == R(1));
  CHECK(law.max_degree() == 2);
}

TEST_CASE("branching-walk classifier: negative drift is positive recurrent", "[gw]") {
  tc::OffspringLaw<R> law({rat(1, 2), R(0), rat(1, 2)});
  tc::HomogeneousWalkParams<R> params{[](std::size_t) { return rat(1, 2); },
                                      [](std::size_t) { return rat(1, 4); }};
  auto cls = tc::gw_classifier(law, params);
  CHECK(cls.f == rat(1, 2));
  CHECK(cls.m == R(4));
  CHECK(cls.log_drift == Catch::Approx(std::log(0.5)).epsilon(1e-12));
  CHECK(cls.outcome == tc::Outcome::PositiveRecurrent);
  CHECK(cls.summability_automatic);
}

TEST_CASE("branching-walk classifier: positive drift is not positive recurrent",
          "[gw]") {
  tc::OffspringLaw<R> law({rat(1, 2), R(0), rat(1, 2)});
  tc::HomogeneousWalkParams<R> params{[](std::size_t) { return rat(1, 4); },
                                      [](std::size_t) { return rat(3, 8); }};
  auto cls = tc::gw_classifier(law, params);
  CHECK(cls.log_drift == Catch::Approx(std::log(1.5)).epsilon(1e-12));
  CHECK(cls.outcome == tc::Outcome::NotPositiveRecurrent);
  CHECK(cls.m == R(0));  // f = 3/2 >= 1: no finite mean total mass
}

TEST_CASE("walk parameters must leave a non-negative stay weight", "[gw]") {
  tc::HomogeneousWalkParams<R> bad{[](std::size_t) { return rat(1, 2); },
                                   [](std::size_t) { return rat(1, 3); }};
  CHECK_THROWS_AS(tc::validate_walk_params(bad, 2), tc::DomainError);
  CHECK_NOTHROW(tc::validate_walk_params(bad, 1));
}

TEST_CASE("spine degree samples are size-biased, valid, and seed-deterministic",
          "[gw]") {
  tc::OffspringLaw<R> two({rat(1, 2), R(0), rat(1, 2)});
  auto degs = tc::sample_spine_degrees(two, 50, 99);
  REQUIRE(degs.size() == 51);
  for (std::size_t d : degs) CHECK(d == 2);  // the biased law is a point mass at 2

  tc::OffspringLaw<R> mixed({rat(1, 4), rat(1, 2), rat(1, 4)});
  auto a = tc::sample_spine_degrees(mixed, 200, 7);
  auto b = tc::sample_spine_degrees(mixed, 200, 7);
  auto c = tc::sample_spine_degrees(mixed, 200, 8);
  CHECK(a == b);
  CHECK(a != c);
  bool saw1 = false, saw2 = false;
  for (std::size_t d : a) {
    CHECK(d >= 1);
    CHECK(d <= 2);
    saw1 = saw1 || d == 1;
    saw2 = saw2 || d == 2;
  }
  CHECK(saw1);
  CHECK(saw2);
}
