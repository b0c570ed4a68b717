#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qamw {

struct SelfTestResult {
  std::string name;
  bool pass = false;
  double worst = 0.0;      // worst observed residual or deviation
  double tolerance = 0.0;
  std::string detail;
};

// Deterministic identity suite: rotation isometry and round trip,
// pairwise decomposition, trace identity, KL bridge remainder, and
// codec error accounting. All randomness derives from the seed.
std::vector<SelfTestResult> run_selftest(std::uint64_t seed);

bool all_passed(const std::vector<SelfTestResult>& results);

}  // namespace qamw
