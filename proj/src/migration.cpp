#include "elaskit/migration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace elaskit {

MigrationSchedule plan_layer_migration(const LayerMove& move, MigrationMode mode,
                                       const MigrationContext& ctx) {
  (void)move;
  if (!(ctx.link_bw_bytes_per_s > 0.0))
    throw std::invalid_argument("link bandwidth must be positive");

  const double param_time =
      static_cast<double>(ctx.param_bytes) / ctx.link_bw_bytes_per_s;
  const double grad_time =
      static_cast<double>(ctx.grad_bytes) / ctx.link_bw_bytes_per_s;

  MigrationSchedule s;
  s.mode = mode;

  if (mode == MigrationMode::Blocking) {
    s.transfers.push_back({"params", 0.0, param_time, ctx.param_bytes});
    s.stall_s = param_time;
    s.total_time_s = s.stall_s + ctx.fixed_overhead_s;
    return s;
  }

  if (ctx.target_headroom_bytes < ctx.param_bytes + ctx.grad_bytes)
    throw InsufficientTargetMemory(
        "shadow payback buffer plus migrated layer exceed target capacity (need " +
        std::to_string(ctx.param_bytes + ctx.grad_bytes) + ", have " +
        std::to_string(ctx.target_headroom_bytes) + ")");

  const double arrival = param_time;
  const double slot = ctx.microbatch_slot_s;
  const int M = ctx.num_microbatches;

  // micro-batches the target starts before the parameters land
  int k = 0;
  if (ctx.param_bytes > 0 && slot > 0.0) {
    const double exact = arrival / slot;
    const double floor_v = std::floor(exact);
    k = (exact == floor_v) ? static_cast<int>(floor_v)
                           : static_cast<int>(floor_v) + 1;
    k = std::min(k, M);
  }
  s.shadow_microbatches = k;
  s.payback_bytes = ctx.grad_bytes;

  const double step_end = slot * M;
  // payback ships after the params at lower priority; it only stalls the
  // step if it cannot land before the optimizer needs the gradient
  const double payback_end = arrival + grad_time;
  s.transfers.push_back({"params", 0.0, arrival, ctx.param_bytes});
  s.transfers.push_back({"payback_grad", arrival, payback_end, ctx.grad_bytes});
  s.stall_s = std::max({0.0, arrival - step_end, payback_end - step_end});
  s.total_time_s = s.stall_s + ctx.fixed_overhead_s;
  return s;
}

std::int64_t ZeroLayout::total_bytes() const {
  return std::accumulate(layer_bytes.begin(), layer_bytes.end(), std::int64_t{0});
}

std::int64_t ZeroLayout::layer_offset(int layer_idx) const {
  std::int64_t off = 0;
  for (int i = 0; i < layer_idx; ++i) off += layer_bytes[i];
  return off;
}

ByteInterval ZeroLayout::shard(int layer_idx, int rank) const {
  const std::int64_t sz = layer_bytes.at(layer_idx);
  const std::int64_t d = dp_degree;
  return {sz * rank / d, sz * (rank + 1) / d};
}

int ZeroLayout::owner_at(std::int64_t p, std::int64_t total) const {
  // rank j owns [j*total/D, (j+1)*total/D)
  const std::int64_t d = dp_degree;
  for (int j = 0; j < d; ++j)
    if (p >= total * j / d && p < total * (j + 1) / d) return j;
  return -1;
}

ZeroMigrationPlan plan_zero_migration(int layer_idx, const ZeroLayout& src_layout,
                                      int dst_dp_degree) {
  if (dst_dp_degree != src_layout.dp_degree)
    throw MismatchedDpDegree("source DP degree " + std::to_string(src_layout.dp_degree) +
                             " != destination " + std::to_string(dst_dp_degree) +
                             "; route through the overlap-matrix remap instead");
  const int D = src_layout.dp_degree;
  const std::int64_t layer_sz = src_layout.layer_bytes.at(layer_idx);

  ZeroMigrationPlan plan;

  if (src_layout.kind == ZeroKind::Interleaved) {
    for (int j = 0; j < D; ++j) {
      const ByteInterval sh = src_layout.shard(layer_idx, j);
      if (sh.size() == 0) continue;
      const std::int64_t off = src_layout.layer_offset(layer_idx);
      plan.transfers.push_back({j, j, true, {off + sh.lo, off + sh.hi}, 0});
      plan.cross_bytes += sh.size();
    }
    plan.total_bytes = plan.cross_bytes;
    return plan;
  }

  const std::int64_t S = src_layout.total_bytes();
  const std::int64_t off = src_layout.layer_offset(layer_idx);
  const std::int64_t S_rem = S - layer_sz;

  // Cross-stage: destination rank j receives the j-th equal slice of the
  // layer, sourced from whichever ranks own those bytes under the old cuts.
  for (int j = 0; j < D; ++j) {
    std::int64_t lo = off + layer_sz * j / D;
    const std::int64_t hi = off + layer_sz * (j + 1) / D;
    while (lo < hi) {
      const int owner = src_layout.owner_at(lo, S);
      const std::int64_t owner_end = S * (owner + 1) / D;
      const std::int64_t seg_hi = std::min(hi, owner_end);
      plan.transfers.push_back({owner, j, true, {lo, seg_hi}, 0});
      plan.cross_bytes += seg_hi - lo;
      lo = seg_hi;
    }
  }

  // Intra-stage: the remaining bytes compact and re-cut over S_rem; every
  // byte whose owner changes moves between the old and new owner. Rounds are
  // indexed by rank distance (neighbor rounds when the layer is one block).
  ZeroLayout rem = src_layout;
  std::int64_t p = 0;  // compacted position
  while (p < S_rem) {
    const std::int64_t orig = p < off ? p : p + layer_sz;
    const int old_owner = src_layout.owner_at(orig, S);
    const int new_owner = rem.owner_at(p, S_rem);
    // extend the run while both owners stay constant
    const std::int64_t old_end = (S * (old_owner + 1) / D) - (p < off ? 0 : layer_sz);
    const std::int64_t new_end = S_rem * (new_owner + 1) / D;
    std::int64_t run_end = std::min(new_end, old_end);
    if (p < off) run_end = std::min(run_end, off);
    run_end = std::min(run_end, S_rem);
    if (old_owner != new_owner) {
      plan.transfers.push_back(
          {old_owner, new_owner, false, {p, run_end}, std::abs(old_owner - new_owner)});
      plan.intra_bytes += run_end - p;
    }
    p = run_end;
  }

  plan.total_bytes = plan.cross_bytes + plan.intra_bytes;
  return plan;
}

nlohmann::ordered_json zero_plan_to_json(const ZeroMigrationPlan& plan) {
  nlohmann::ordered_json j;
  j["cross_bytes"] = plan.cross_bytes;
  j["intra_bytes"] = plan.intra_bytes;
  j["total_bytes"] = plan.total_bytes;
  auto& arr = j["transfers"] = nlohmann::ordered_json::array();
  for (const ZeroTransfer& t : plan.transfers)
    arr.push_back({{"src", t.src_rank},
                   {"dst", t.dst_rank},
                   {"cross_stage", t.cross_stage},
                   {"lo", t.iv.lo},
                   {"hi", t.iv.hi},
                   {"round", t.round}});
  return j;
}

}  // namespace elaskit
