// Acceptance gate: run every cross-validation criterion, print one line per
// criterion, exit nonzero if any failed.
#include <cstdlib>
#include <iostream>

#include "treechain/selftest.hpp"

int main() {
  const std::size_t failures = treechain::print_acceptance(std::cout);
  return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
