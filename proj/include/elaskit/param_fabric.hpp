#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace elaskit {

struct CoverageMismatch final : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ByteInterval {
  std::int64_t lo = 0;
  std::int64_t hi = 0;  // half-open [lo, hi)

  std::int64_t size() const { return hi - lo; }
  bool operator==(const ByteInterval&) const = default;
};

// Ownership of the flat optimizer-state address space within one DP group.
struct PartitionLayout {
  std::map<int, std::vector<ByteInterval>> ranges;  // rank -> sorted disjoint intervals
  std::int64_t total_bytes = 0;

  int owner_of(std::int64_t byte) const;  // -1 if uncovered
  void validate() const;                  // disjoint, sorted, covering
};

// Equal contiguous split of [0, total) over the given ranks, sizes within one
// byte of total/n.
PartitionLayout contiguous_layout(const std::vector<int>& ranks, std::int64_t total);

// Worker i hosts the snapshot of worker (i+1) mod n's partition.
struct SnapshotRing {
  std::vector<int> members;  // ascending rank ids
  long step_tag = 0;

  int backed_up_by(int rank) const;  // rank holding this rank's host snapshot
  int backs_up(int rank) const;      // rank whose partition this rank hosts
};

struct IntegrityReport {
  bool recoverable = true;
  // failed rank -> its unreachable byte ranges (device dead, holder dead)
  std::map<int, std::vector<ByteInterval>> missing;
};

// A failed rank's state is available iff its device copy survives (it is
// alive) or the ring peer holding its host snapshot is alive.
IntegrityReport integrity_check(const SnapshotRing& ring, const PartitionLayout& layout,
                                const std::set<int>& failed);

enum class Medium { D2D, H2D_D2D };

struct TransferEntry {
  int src_rank = -1;  // physical source: prior owner, or its snapshot holder
  int dst_rank = -1;
  ByteInterval iv;
  Medium medium = Medium::D2D;
};

struct TransferPlan {
  std::vector<TransferEntry> entries;
  std::int64_t total_bytes_moved = 0;
};

// Intersects prior ownership with target ownership; every byte whose owner
// changes yields one entry. Bytes owned by a failed rank are sourced from the
// ring peer holding the snapshot (H2D_D2D); live owners transfer device to
// device. Diagonal (owner unchanged) stays local.
TransferPlan overlap_matrix(const PartitionLayout& src, const PartitionLayout& dst,
                            const std::set<int>& failed = {},
                            const SnapshotRing* ring = nullptr);

nlohmann::ordered_json plan_to_json(const TransferPlan& plan);

// Snapshot pipeline phases against the training intervals that hide them:
// D2D grad transfer under the optimizer step, D2H offload under All-Gather,
// host update under the next iteration's compute.
struct SnapshotTimeline {
  double d2d_grad_s = 0.0;
  double d2h_grad_s = 0.0;
  double host_update_s = 0.0;
  double step_window_s = 0.0;
  double allgather_window_s = 0.0;
  double next_iter_window_s = 0.0;
};

// Critical-path seconds added per step; zero when every phase overlaps.
double snapshot_overhead_s(const SnapshotTimeline& t);

}  // namespace elaskit
