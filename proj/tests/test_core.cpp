// Unit tests for node words, tree sources, and truncation windows.
#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <memory>
#include <vector>

#include "treechain/tree.hpp"

using treechain::CompleteTree;
using treechain::FiniteTree;
using treechain::NodeWord;
using treechain::RaysTree;
using treechain::Truncation;

TEST_CASE("node words print and parse in dotted 1-based form", "[core]") {
  CHECK(NodeWord::root().to_string() == "root");
  CHECK(NodeWord::parse("").is_root());
  CHECK(NodeWord::parse("root").is_root());
  CHECK(NodeWord::parse("e").is_root());

  NodeWord u = NodeWord::root().child(0).child(2).child(1);
  CHECK(u.to_string() == "1.3.2");
  CHECK(NodeWord::parse("1.3.2") == u);
  CHECK(u.depth() == 3);
  CHECK(u.letter(0) == 0);
  CHECK(u.letter(1) == 2);
  CHECK(u.letter(2) == 1);
}

TEST_CASE("node word parse rejects malformed labels", "[core]") {
  CHECK_THROWS_AS(NodeWord::parse("0"), treechain::TreechainError);
  CHECK_THROWS_AS(NodeWord::parse("1..2"), treechain::TreechainError);
  CHECK_THROWS_AS(NodeWord::parse("a.b"), treechain::TreechainError);
}

TEST_CASE("parent, prefix, and subtree relations", "[core]") {
  NodeWord u = NodeWord::parse("1.3.2");
  CHECK(u.parent() == NodeWord::parse("1.3"));
  CHECK(u.prefix(1) == NodeWord::parse("1"));
  CHECK(u.prefix(0).is_root());
  CHECK(NodeWord::parse("1.3").is_prefix_of(u));
  CHECK(u.in_subtree_of(NodeWord::parse("1")));
  CHECK_FALSE(u.in_subtree_of(NodeWord::parse("2")));
  CHECK(u.in_subtree_of(u));

  NodeWord w = u;
  w.pop();
  CHECK(w == u.parent());
  w.push(2);
  CHECK(w == NodeWord::parse("1.3.3"));
}

TEST_CASE("node word order is breadth-first: by depth, then lexicographic", "[core]") {
  std::vector<NodeWord> words = {
      NodeWord::parse("2.1"), NodeWord::root(),     NodeWord::parse("1.2"),
      NodeWord::parse("2"),   NodeWord::parse("1"), NodeWord::parse("1.1"),
  };
  std::sort(words.begin(), words.end());
  std::vector<std::string> got;
  for (const auto& w : words) got.push_back(w.to_string());
  CHECK(got == std::vector<std::string>{"root", "1", "2", "1.1", "1.2", "2.1"});
}

TEST_CASE("finite trees built from breadth-first child counts", "[core]") {
  // root with children 1,2; node 1 has one child 1.1.
  auto tree = FiniteTree::make({2, 1, 0, 0});
  CHECK(tree->size() == 4);
  CHECK(tree->child_count(NodeWord::root()) == 2);
  CHECK(tree->child_count(NodeWord::parse("1")) == 1);
  CHECK(tree->child_count(NodeWord::parse("1.1")) == 0);
  CHECK(tree->subtree_size(NodeWord::parse("1")).value() == 2);
  CHECK(tree->subtree_size(NodeWord::root()).value() == 4);

  const auto& nodes = tree->nodes();
  REQUIRE(nodes.size() == 4);
  CHECK(nodes[0].is_root());
  CHECK(nodes[1] == NodeWord::parse("1"));
  CHECK(nodes[2] == NodeWord::parse("2"));
  CHECK(nodes[3] == NodeWord::parse("1.1"));
}

TEST_CASE("complete trees and ray trees report child counts lazily", "[core]") {
  CompleteTree binary(2);
  CHECK(binary.child_count(NodeWord::root()) == 2);
  CHECK(binary.child_count(NodeWord::parse("1.2.1")) == 2);

  RaysTree three(3);
  CHECK(three.child_count(NodeWord::root()) == 3);
  CHECK(three.child_count(NodeWord::parse("2")) == 1);
  CHECK(three.child_count(NodeWord::parse("2.1.1")) == 1);

  auto line = treechain::make_line();
  CHECK(line->child_count(NodeWord::root()) == 1);
  CHECK(line->child_count(NodeWord::parse("1.1")) == 1);

  auto zline = treechain::make_zline();
  CHECK(zline->child_count(NodeWord::root()) == 2);
  CHECK(zline->child_count(NodeWord::parse("1")) == 1);
  CHECK(zline->child_count(NodeWord::parse("2")) == 1);
}

TEST_CASE("truncation windows enumerate breadth-first and index consistently", "[core]") {
  auto binary = std::make_shared<CompleteTree>(2);
  Truncation window = treechain::truncate(binary, 3);
  REQUIRE(window.nodes.size() == 15);  // 1 + 2 + 4 + 8
  for (std::size_t i = 0; i < window.nodes.size(); ++i) {
    CHECK(window.contains(window.nodes[i]));
    CHECK(window.index_of(window.nodes[i]) == i);
    if (i + 1 < window.nodes.size()) CHECK(window.nodes[i] < window.nodes[i + 1]);
  }
  CHECK_FALSE(window.contains(NodeWord::parse("1.1.1.1")));
}

TEST_CASE("truncation rooted at an interior node covers only that subtree", "[core]") {
  auto binary = std::make_shared<CompleteTree>(2);
  NodeWord base = NodeWord::parse("2.1");
  Truncation window = treechain::truncate(binary, base, 2);
  REQUIRE(window.nodes.size() == 7);
  CHECK(window.nodes.front() == base);
  for (const auto& u : window.nodes) CHECK(u.in_subtree_of(base));
  CHECK_FALSE(window.contains(NodeWord::parse("2.2")));
  CHECK_FALSE(window.contains(NodeWord::root()));
}

TEST_CASE("truncation refuses to exceed the node cap", "[core]") {
  auto wide = std::make_shared<CompleteTree>(16);
  CHECK_THROWS_AS(treechain::truncate(wide, 8, /*cap=*/1000), treechain::DomainError);
}
