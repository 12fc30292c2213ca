#include "elaskit/param_fabric.hpp"

#include <algorithm>

namespace elaskit {

int PartitionLayout::owner_of(std::int64_t byte) const {
  for (const auto& [rank, ivs] : ranges)
    for (const ByteInterval& iv : ivs)
      if (byte >= iv.lo && byte < iv.hi) return rank;
  return -1;
}

void PartitionLayout::validate() const {
  std::vector<ByteInterval> all;
  for (const auto& [rank, ivs] : ranges) {
    for (size_t i = 0; i < ivs.size(); ++i) {
      if (ivs[i].lo >= ivs[i].hi) throw CoverageMismatch("empty or inverted interval");
      if (i > 0 && ivs[i].lo < ivs[i - 1].hi)
        throw CoverageMismatch("intervals within a rank overlap or are unsorted");
      all.push_back(ivs[i]);
    }
  }
  std::sort(all.begin(), all.end(),
            [](const ByteInterval& a, const ByteInterval& b) { return a.lo < b.lo; });
  std::int64_t cursor = 0;
  for (const ByteInterval& iv : all) {
    if (iv.lo != cursor) throw CoverageMismatch("gap or overlap at byte " + std::to_string(cursor));
    cursor = iv.hi;
  }
  if (cursor != total_bytes)
    throw CoverageMismatch("layout covers " + std::to_string(cursor) + " of " +
                           std::to_string(total_bytes) + " bytes");
}

PartitionLayout contiguous_layout(const std::vector<int>& ranks, std::int64_t total) {
  std::vector<int> sorted = ranks;
  std::sort(sorted.begin(), sorted.end());
  PartitionLayout out;
  out.total_bytes = total;
  const std::int64_t n = static_cast<std::int64_t>(sorted.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t lo = total * i / n;
    const std::int64_t hi = total * (i + 1) / n;
    if (hi > lo) out.ranges[sorted[i]].push_back({lo, hi});
    else out.ranges[sorted[i]];
  }
  return out;
}

int SnapshotRing::backed_up_by(int rank) const {
  const auto it = std::find(members.begin(), members.end(), rank);
  if (it == members.end()) throw std::invalid_argument("rank not in ring");
  const int idx = static_cast<int>(it - members.begin());
  const int n = static_cast<int>(members.size());
  return members[(idx - 1 + n) % n];
}

int SnapshotRing::backs_up(int rank) const {
  const auto it = std::find(members.begin(), members.end(), rank);
  if (it == members.end()) throw std::invalid_argument("rank not in ring");
  const int idx = static_cast<int>(it - members.begin());
  return members[(idx + 1) % static_cast<int>(members.size())];
}

IntegrityReport integrity_check(const SnapshotRing& ring, const PartitionLayout& layout,
                                const std::set<int>& failed) {
  IntegrityReport rep;
  for (int f : failed) {
    if (std::find(ring.members.begin(), ring.members.end(), f) == ring.members.end())
      throw std::invalid_argument("failed rank " + std::to_string(f) + " not in ring");
    const int holder = ring.backed_up_by(f);
    if (failed.contains(holder)) {
      rep.recoverable = false;
      auto it = layout.ranges.find(f);
      rep.missing[f] = it == layout.ranges.end() ? std::vector<ByteInterval>{} : it->second;
    }
  }
  return rep;
}

TransferPlan overlap_matrix(const PartitionLayout& src, const PartitionLayout& dst,
                            const std::set<int>& failed, const SnapshotRing* ring) {
  if (src.total_bytes != dst.total_bytes)
    throw CoverageMismatch("source covers " + std::to_string(src.total_bytes) +
                           " bytes, target " + std::to_string(dst.total_bytes));
  src.validate();
  dst.validate();
  for (int f : failed)
    if (dst.ranges.contains(f) && !dst.ranges.at(f).empty())
      throw CoverageMismatch("target assigns bytes to failed rank " + std::to_string(f));

  TransferPlan plan;
  for (const auto& [owner, ivs] : src.ranges) {
    const bool dead = failed.contains(owner);
    int physical_src = owner;
    if (dead) {
      if (!ring) throw CoverageMismatch("failed owner but no snapshot ring supplied");
      physical_src = ring->backed_up_by(owner);
      if (failed.contains(physical_src))
        throw CoverageMismatch("rank " + std::to_string(owner) +
                               " is unrecoverable; integrity check must gate remap");
    }
    for (const ByteInterval& siv : ivs) {
      for (const auto& [dst_rank, divs] : dst.ranges) {
        if (dst_rank == owner) continue;  // diagonal stays local
        for (const ByteInterval& div : divs) {
          const std::int64_t lo = std::max(siv.lo, div.lo);
          const std::int64_t hi = std::min(siv.hi, div.hi);
          if (lo >= hi) continue;
          plan.entries.push_back({physical_src, dst_rank, {lo, hi},
                                  dead ? Medium::H2D_D2D : Medium::D2D});
        }
      }
    }
  }
  std::sort(plan.entries.begin(), plan.entries.end(),
            [](const TransferEntry& a, const TransferEntry& b) { return a.iv.lo < b.iv.lo; });
  for (const TransferEntry& e : plan.entries) plan.total_bytes_moved += e.iv.size();
  return plan;
}

nlohmann::ordered_json plan_to_json(const TransferPlan& plan) {
  nlohmann::ordered_json j;
  j["total_bytes_moved"] = plan.total_bytes_moved;
  auto& arr = j["entries"] = nlohmann::ordered_json::array();
  for (const TransferEntry& e : plan.entries)
    arr.push_back({{"src", e.src_rank},
                   {"dst", e.dst_rank},
                   {"lo", e.iv.lo},
                   {"hi", e.iv.hi},
                   {"medium", e.medium == Medium::D2D ? "d2d" : "h2d_d2d"}});
  return j;
}

double snapshot_overhead_s(const SnapshotTimeline& t) {
  double delta = 0.0;
  delta += std::max(0.0, t.d2d_grad_s - t.step_window_s);
  delta += std::max(0.0, t.d2h_grad_s - t.allgather_window_s);
  delta += std::max(0.0, t.host_update_s - t.next_iter_window_s);
  return delta;
}

}  // namespace elaskit
