#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace swintr {

struct SelfCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Runs the built-in invariant suite (gradient checks, shuffle inversion,
// resizer reductions, metric oracles, loss and schedule identities). Each
// result is printed to out as it completes.
std::vector<SelfCheck> run_selftest(std::ostream& out);

}  // namespace swintr
