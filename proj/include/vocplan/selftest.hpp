#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vocplan {

struct SelftestResult {
  std::string name;
  bool passed;
  std::string detail;
};

// Invariant suites over every module, each against an independent oracle.
std::vector<SelftestResult> selftest(std::uint64_t seed = 1);

}  // namespace vocplan
