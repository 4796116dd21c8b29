// Randomized cross-checks between independent computation routes, run at a
// modest scale with fixed seeds so failures reproduce.
#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <memory>
#include <vector>

#include "treechain/classify.hpp"
#include "treechain/contfrac.hpp"
#include "treechain/invariant.hpp"
#include "treechain/kernel.hpp"
#include "treechain/oracle.hpp"
#include "treechain/sternbrocot.hpp"

namespace tc = treechain;
using tc::BigRational;
using tc::FiniteTree;
using tc::Matrix;
using tc::NodeWord;
using tc::Rng;
using R = BigRational;

namespace {

// Random tree with n nodes grown by attaching each new node to a uniformly
// chosen existing one; child letters stay contiguous by construction.
std::shared_ptr<const FiniteTree> random_tree(Rng& rng, std::size_t n) {
  std::vector<NodeWord> words = {NodeWord::root()};
  std::map<NodeWord, std::size_t> counts;
  counts[NodeWord::root()] = 0;
  while (words.size() < n) {
    NodeWord parent = words[rng.below(words.size())];
    NodeWord child = parent.child(static_cast<tc::Letter>(counts[parent]++));
    counts[child] = 0;
    words.push_back(child);
  }
  std::vector<std::size_t> bfs_counts;
  for (const auto& [word, c] : counts) bfs_counts.push_back(c);
  return FiniteTree::make(bfs_counts);
}

// Random row-stochastic kernel: positive integer weights on the parent and on
// every subtree node, normalized per row.
tc::ExplicitKernel<R> random_kernel(Rng& rng, std::shared_ptr<const FiniteTree> tree) {
  const auto& nodes = tree->nodes();
  const std::size_t n = nodes.size();
  Matrix<R> m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    long long total = 0;
    std::vector<std::pair<std::size_t, long long>> row;
    for (std::size_t j = 0; j < n; ++j) {
      const bool ok = (!nodes[i].is_root() && nodes[j] == nodes[i].parent()) ||
                      nodes[j].in_subtree_of(nodes[i]);
      if (!ok) continue;
      long long w = 1 + static_cast<long long>(rng.below(6));
      row.emplace_back(j, w);
      total += w;
    }
    for (const auto& [j, w] : row) m.at(i, j) = R(w, total);
  }
  return tc::ExplicitKernel<R>(tree, m);
}

}  // namespace

TEST_CASE("three invariant routes agree exactly on random kernels", "[property]") {
  Rng rng(20260814);
  for (int iter = 0; iter < 60; ++iter) {
    auto tree = random_tree(rng, 2 + rng.below(9));
    auto kernel = random_kernel(rng, tree);
    auto chain = tc::densify(kernel);
    auto pi = tc::stationary_dense(chain);

    std::vector<NodeWord> targets(tree->nodes().begin(), tree->nodes().end());
    auto leaf_route = tc::h_invariant_leaf_addition(kernel, targets);

    const R root_pi = pi[chain.index.at(NodeWord::root())];
    for (const auto& u : targets) {
      const R expected = pi[chain.index.at(u)] / root_pi;  // root-normalized
      REQUIRE(tc::h_invariant_det(kernel, u, R(1)) == expected);
      REQUIRE(leaf_route.at(u) == expected);
    }
  }
}

TEST_CASE("balance residuals vanish at the stationary law of random kernels",
          "[property]") {
  Rng rng(812814);
  for (int iter = 0; iter < 40; ++iter) {
    auto tree = random_tree(rng, 2 + rng.below(9));
    auto kernel = random_kernel(rng, tree);
    auto chain = tc::densify(kernel);
    auto pi = tc::stationary_dense(chain);
    tc::Measure<R> mu;
    for (const auto& u : tree->nodes()) mu.set(u, pi[chain.index.at(u)]);
    for (const auto& u : tree->nodes()) REQUIRE(tc::balance_residual(kernel, mu, u) == R(0));
  }
}

TEST_CASE("time reversal twice returns the original kernel", "[property]") {
  Rng rng(477);
  for (int iter = 0; iter < 60; ++iter) {
    auto tree = random_tree(rng, 2 + rng.below(9));
    auto kernel = random_kernel(rng, tree);
    auto pi = tc::stationary_dense(tc::densify(kernel));
    auto back = tc::reverse(tc::reverse(kernel, pi), pi);
    const std::size_t n = tree->nodes().size();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        REQUIRE(back.matrix().at(i, j) == kernel.matrix().at(i, j));
  }
}

TEST_CASE("return probabilities are monotone in the escape level", "[property]") {
  Rng rng(99123);
  for (int iter = 0; iter < 40; ++iter) {
    // Random birth-death rates with a genuine chance of both drifts.
    long long t = 1 + static_cast<long long>(rng.below(5));
    long long a = 1 + static_cast<long long>(rng.below(5));
    long long s = rng.below(3);
    long long total = t + a + s;
    auto k = tc::make_birth_death<R>({R(t, total)}, {R(a, total)}, {R(s, total)});
    R prev = R(0);
    for (std::size_t h = 2; h <= 9; ++h) {
      R cur = tc::return_before_level(*k, NodeWord::parse("1"), h);
      REQUIRE(cur >= prev);
      REQUIRE(cur >= R(0));
      REQUIRE(cur < R(1));
      prev = cur;
    }
  }
}

TEST_CASE("end projection is idempotent on random ray walks", "[property]") {
  Rng rng(5150);
  for (int iter = 0; iter < 40; ++iter) {
    const std::size_t rays = 2 + rng.below(3);
    auto tree = std::make_shared<tc::RaysTree>(rays);
    std::vector<R> away, root_to;
    for (std::size_t i = 0; i < rays; ++i) {
      away.push_back(R(1 + static_cast<long long>(rng.below(6)), 8));
      root_to.push_back(R(1 + static_cast<long long>(rng.below(6)),
                          8 * static_cast<long long>(rays)));
    }
    tc::KernelPtr<R> kernel = tc::make_ray_walk<R>(tree, away, root_to);
    tc::EndDescription end = tree->declared_ends()[rng.below(rays)];

    auto once = tc::project_end(kernel, end);
    tc::EndDescription line_end;
    line_end.prefix = NodeWord::root();
    line_end.period = {0};
    line_end.label = end.label;
    auto twice = tc::project_end(once, line_end);

    NodeWord u = NodeWord::root();
    for (std::size_t depth = 0; depth <= 5; ++depth) {
      REQUIRE(once->point_weight(u, u) == twice->point_weight(u, u));
      REQUIRE(once->subtree_mass(u, u) == twice->subtree_mass(u, u));
      if (!u.is_root()) REQUIRE(once->parent_weight(u) == twice->parent_weight(u));
      u = u.child(0);
    }
  }
}

TEST_CASE("mediant encoding round-trips random words", "[property]") {
  Rng rng(31337);
  for (int iter = 0; iter < 300; ++iter) {
    NodeWord u;
    const std::size_t len = rng.below(17);
    for (std::size_t i = 0; i < len; ++i) u.push(static_cast<tc::Letter>(rng.below(2)));
    REQUIRE(tc::sb_decode(tc::sb_encode(u)) == u);
  }
}

TEST_CASE("excursion convergents increase with depth for random step weights",
          "[property]") {
  Rng rng(8086);
  for (int iter = 0; iter < 60; ++iter) {
    // Strictly substochastic constant weights keep every tower finite.
    const double up = 0.05 + 0.4 * rng.u01();
    const double down = 0.05 + 0.4 * rng.u01();
    const double stay = (1.0 - up - down) * rng.u01() * 0.9;
    tc::StepWeights<double> w{[stay](std::size_t) { return stay; },
                              [up](std::size_t) { return up; },
                              [down](std::size_t) { return down; }};
    auto conv = tc::cf_convergent(w, 14, 1.0);
    REQUIRE_FALSE(conv.diverged);
    for (std::size_t j = 1; j < conv.history.size(); ++j)
      REQUIRE(conv.history[j] >= conv.history[j - 1] - 1e-15);
  }
}

TEST_CASE("first-hit weights at x = 1 are probabilities", "[property]") {
  Rng rng(271828);
  for (int iter = 0; iter < 40; ++iter) {
    auto tree = random_tree(rng, 3 + rng.below(6));
    auto kernel = random_kernel(rng, tree);
    auto chain = tc::densify(kernel);
    const auto& nodes = tree->nodes();
    tc::PathQuery q;
    q.start = nodes[rng.below(nodes.size())];
    q.end = nodes[rng.below(nodes.size())];
    R p = tc::path_value(chain, q, R(1));
    REQUIRE(p >= R(0));
    REQUIRE(p <= R(1));
  }
}
