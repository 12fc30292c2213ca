#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "elaskit/graph_planner.hpp"
#include "elaskit/param_fabric.hpp"

namespace elaskit {

struct InsufficientTargetMemory final : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MismatchedDpDegree final : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class MigrationMode { Blocking, NonBlocking };

struct TransferSegment {
  std::string what;  // "params" | "payback_grad"
  double start_s = 0.0;
  double end_s = 0.0;
  std::int64_t bytes = 0;
};

struct MigrationSchedule {
  MigrationMode mode = MigrationMode::Blocking;
  std::vector<TransferSegment> transfers;
  // NonBlocking: the source's shadow instance produces gradients for
  // micro-batches [0, shadow_microbatches); the target covers the rest.
  int shadow_microbatches = 0;
  std::int64_t payback_bytes = 0;
  double stall_s = 0.0;       // critical-path pause caused by this move
  double total_time_s = 0.0;  // stall + per-move orchestration
};

struct MigrationContext {
  std::int64_t param_bytes = 0;  // migrating layer's parameters, per DP column
  std::int64_t grad_bytes = 0;   // payback gradient payload
  double link_bw_bytes_per_s = 1.0;
  double microbatch_slot_s = 0.0;  // target's per-micro-batch service time
  int num_microbatches = 0;
  std::int64_t target_headroom_bytes = 0;  // cap minus footprint with the layer
  double fixed_overhead_s = 0.0;           // orchestration per move
};

// Blocking: training pauses for the whole copy. NonBlocking: the copy
// overlaps the target's micro-batches; the source's shadow instance covers
// gradients for the micro-batches the target ran without the layer, and the
// payback gradient ships at lower priority. Ties at a micro-batch boundary
// resolve to the earlier boundary so the target never computes with stale
// parameters.
MigrationSchedule plan_layer_migration(const LayerMove& move, MigrationMode mode,
                                       const MigrationContext& ctx);

enum class ZeroKind { Contiguous, Interleaved };

// Ownership layout of one DP group's optimizer state. Contiguous: the group
// keeps a single flat array (layers in order) and rank j owns block
// [j*S/D, (j+1)*S/D). Interleaved: rank j owns the j-th equal shard of every
// layer, so cross-stage movement never reshapes the group.
struct ZeroLayout {
  ZeroKind kind = ZeroKind::Interleaved;
  int dp_degree = 1;
  std::vector<std::int64_t> layer_bytes;

  std::int64_t total_bytes() const;
  std::int64_t layer_offset(int layer_idx) const;
  // Interleaved only: rank's shard of a layer, offsets within the layer.
  ByteInterval shard(int layer_idx, int rank) const;
  // Contiguous only: rank owning flat byte p under cuts over total S.
  int owner_at(std::int64_t p, std::int64_t total) const;
};

struct ZeroTransfer {
  int src_rank = -1;
  int dst_rank = -1;
  bool cross_stage = false;
  ByteInterval iv;  // flat offsets in the source group's address space
  int round = 0;    // neighbor-round index for intra-stage exchanges
};

struct ZeroMigrationPlan {
  std::vector<ZeroTransfer> transfers;
  std::int64_t cross_bytes = 0;
  std::int64_t intra_bytes = 0;
  std::int64_t total_bytes = 0;
};

// Moves layer_idx's optimizer state between stages of equal DP degree.
// Interleaved reduces to D disjoint rank-j-to-rank-j sends totalling |O_i|.
// Contiguous adds the source group's re-sharding back to balanced cuts,
// (D-1)/2 * |O_i| more when the boundary layer leaves the flat array's tail.
ZeroMigrationPlan plan_zero_migration(int layer_idx, const ZeroLayout& src_layout,
                                      int dst_dp_degree);

nlohmann::ordered_json zero_plan_to_json(const ZeroMigrationPlan& plan);

}  // namespace elaskit
