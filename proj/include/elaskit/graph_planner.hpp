#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace elaskit {

struct Infeasible final : std::runtime_error {
  Infeasible(const std::string& msg, int stage_, std::int64_t overflow_)
      : std::runtime_error(msg), stage(stage_), overflow_bytes(overflow_) {}
  int stage;                    // tightest violated stage
  std::int64_t overflow_bytes;  // smallest overflow seen there
};
struct IncompatibleL final : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Contiguous P-way layer partition. Stage j runs layers
// boundaries[j-2]+1 .. boundaries[j-1] (1-based layers, b_0 = 0, b_P = L).
struct LayerAssignment {
  int num_layers = 0;
  int num_stages = 0;
  std::vector<int> boundaries;  // b_1..b_{P-1}
  double objective_s = 0.0;     // worst-stage mini-step

  int stage_of_layer(int layer) const;                  // 1-based both
  std::pair<int, int> layers_of_stage(int stage) const;  // [lo, hi] inclusive
  int layer_count(int stage) const;
};

struct DpTable {
  int L = 0, P = 0;
  // f[p][l]: optimal minimax time for layers [1..l] over stages [1..p].
  std::vector<std::vector<double>> f;
  std::vector<std::vector<int>> k_star;  // optimal split for state (p, l)
};

// Segment cost/memory callbacks, layers lo..hi inclusive assigned to stage.
using SegCost = std::function<double(int stage, int lo, int hi)>;
using SegMem = std::function<std::int64_t(int stage, int lo, int hi)>;

struct PartitionResult {
  LayerAssignment assignment;
  DpTable table;
};

// Minimax layer partition under per-stage memory caps. Ties broken by the
// lexicographically smallest boundary vector. Throws Infeasible when no
// partition fits memory.
PartitionResult plan_partition(int L, int P, const std::vector<std::int64_t>& caps,
                               const SegCost& seg_cost, const SegMem& seg_mem);

struct LayerMove {
  int layer = 0;
  int src_stage = 0;
  int dst_stage = 0;

  bool operator==(const LayerMove&) const = default;
};

// Minimal move set between two assignments of the same layer range, ascending
// layer id. Layers keep identity.
std::vector<LayerMove> diff_assignments(const LayerAssignment& from,
                                        const LayerAssignment& to);

}  // namespace elaskit
