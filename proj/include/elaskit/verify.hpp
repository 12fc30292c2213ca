#pragma once

#include <string>
#include <vector>

#include "elaskit/graph_planner.hpp"
#include "elaskit/presets.hpp"
#include "elaskit/sim.hpp"

namespace elaskit {

struct VerifyResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Exhaustive enumeration of all contiguous P-way partitions; the reference
// for the dynamic-programming planner. Independent of plan_partition.
struct BruteForcePartition {
  bool feasible = false;
  double objective = 0.0;
  std::vector<int> boundaries;  // lexicographically smallest argmin
};
BruteForcePartition brute_force_partition(int L, int P,
                                          const std::vector<std::int64_t>& caps,
                                          const SegCost& cost, const SegMem& mem);

// Static (no events) and elastic (one unit lost, one layer migrated) toy
// runs whose transcripts and final parameters must agree bit-exactly.
struct ConsistencyPair {
  SimReport still;
  SimReport elastic;
};
ConsistencyPair run_consistency_pair(const RunConfig& base, bool inject_wrong_weights);

// The downsized consistency suite behind the --verify flag: RNG transcript
// equality, gradient/parameter equality, and partition oracle spot checks.
std::vector<VerifyResult> run_verify_suite(const RunConfig& cfg);

}  // namespace elaskit
