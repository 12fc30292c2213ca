#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>
#include <random>

#include "elaskit/param_fabric.hpp"

using namespace elaskit;

namespace {

SnapshotRing ring_of(int n) {
  SnapshotRing r;
  for (int i = 0; i < n; ++i) r.members.push_back(i);
  return r;
}

// byte-level application oracle: owner map after executing the plan
std::map<std::int64_t, int> apply_plan(const PartitionLayout& src,
                                       const TransferPlan& plan) {
  std::map<std::int64_t, int> owner;
  for (const auto& [rank, ivs] : src.ranges)
    for (const ByteInterval& iv : ivs)
      for (std::int64_t b = iv.lo; b < iv.hi; ++b) owner[b] = rank;
  for (const TransferEntry& e : plan.entries)
    for (std::int64_t b = e.iv.lo; b < e.iv.hi; ++b) owner[b] = e.dst_rank;
  return owner;
}

}  // namespace

TEST_CASE("ring orientation: worker i hosts (i+1) mod n") {
  const SnapshotRing r = ring_of(4);
  CHECK(r.backs_up(0) == 1);
  CHECK(r.backs_up(3) == 0);
  CHECK(r.backed_up_by(2) == 1);  // O_2's host snapshot lives on rank 1
  CHECK(r.backed_up_by(0) == 3);
}

TEST_CASE("single failure is recoverable via the neighbor snapshot") {
  const auto layout = contiguous_layout({0, 1, 2, 3}, 12);
  const auto rep = integrity_check(ring_of(4), layout, {2});
  CHECK(rep.recoverable);
}

TEST_CASE("empty failure set is trivially recoverable") {
  const auto layout = contiguous_layout({0, 1, 2, 3}, 12);
  CHECK(integrity_check(ring_of(4), layout, {}).recoverable);
}

TEST_CASE("rank and its holder failing together is unrecoverable") {
  const auto layout = contiguous_layout({0, 1, 2, 3}, 12);
  const auto rep = integrity_check(ring_of(4), layout, {1, 2});
  CHECK(!rep.recoverable);
  REQUIRE(rep.missing.contains(2));
  CHECK(rep.missing.at(2) == layout.ranges.at(2));
}

TEST_CASE("exhaustive failure sets up to two ranks match enumeration") {
  for (int n = 2; n <= 6; ++n) {
    const auto layout = contiguous_layout([n] {
      std::vector<int> v(n);
      for (int i = 0; i < n; ++i) v[i] = i;
      return v;
    }(), 64);
    const SnapshotRing ring = ring_of(n);
    for (int a = 0; a < n; ++a) {
      for (int b = a; b < n; ++b) {
        std::set<int> failed = {a, b};
        // enumeration oracle: rank f is covered iff f alive or (f-1+n)%n alive
        bool expect = true;
        for (int f : failed)
          if (failed.contains((f - 1 + n) % n)) expect = false;
        const auto rep = integrity_check(ring, layout, failed);
        CHECK(rep.recoverable == expect);
        // every single failure recoverable
        const auto single = integrity_check(ring, layout, {a});
        CHECK(single.recoverable);
      }
    }
  }
}

TEST_CASE("identity remap moves nothing") {
  const auto layout = contiguous_layout({0, 1, 2, 3}, 4096);
  const auto plan = overlap_matrix(layout, layout);
  CHECK(plan.entries.empty());
  CHECK(plan.total_bytes_moved == 0);
}

TEST_CASE("worked 12-byte scale-down") {
  // owners [0,3)[3,6)[6,9)[9,12); rank 2 fails; targets [0,4)[4,8)[8,12)
  const auto src = contiguous_layout({0, 1, 2, 3}, 12);
  PartitionLayout dst;
  dst.total_bytes = 12;
  dst.ranges[0] = {{0, 4}};
  dst.ranges[1] = {{4, 8}};
  dst.ranges[3] = {{8, 12}};
  const SnapshotRing ring = ring_of(4);
  const auto plan = overlap_matrix(src, dst, {2}, &ring);

  // moved bytes = ownership changes: byte 3 (1->0), bytes 6,7 (2->1), byte 8 (2->3)
  CHECK(plan.total_bytes_moved == 4);
  bool saw_h2d_to_1 = false, saw_h2d_to_3 = false, saw_d2d = false;
  for (const auto& e : plan.entries) {
    CHECK(e.src_rank != 2);  // never sourced from the dead rank
    if (e.iv == ByteInterval{3, 4}) {
      CHECK(e.src_rank == 1);
      CHECK(e.dst_rank == 0);
      CHECK(e.medium == Medium::D2D);
      saw_d2d = true;
    }
    if (e.iv == ByteInterval{6, 8}) {
      CHECK(e.src_rank == 1);  // snapshot holder of O_2
      CHECK(e.dst_rank == 1);
      CHECK(e.medium == Medium::H2D_D2D);
      saw_h2d_to_1 = true;
    }
    if (e.iv == ByteInterval{8, 9}) {
      CHECK(e.src_rank == 1);
      CHECK(e.dst_rank == 3);
      CHECK(e.medium == Medium::H2D_D2D);
      saw_h2d_to_3 = true;
    }
  }
  CHECK(saw_d2d);
  CHECK(saw_h2d_to_1);
  CHECK(saw_h2d_to_3);

  // plan completeness: applying the plan reproduces the target ownership
  const auto owner = apply_plan(src, plan);
  for (const auto& [rank, ivs] : dst.ranges)
    for (const ByteInterval& iv : ivs)
      for (std::int64_t b = iv.lo; b < iv.hi; ++b) CHECK(owner.at(b) == rank);
}

TEST_CASE("coverage mismatch rejected") {
  const auto a = contiguous_layout({0, 1}, 10);
  const auto b = contiguous_layout({0, 1}, 12);
  CHECK_THROWS_AS(overlap_matrix(a, b), CoverageMismatch);
}

TEST_CASE("random scale events reconstruct targets byte-exactly") {
  std::mt19937_64 gen(13);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(gen() % 5);
    const std::int64_t total = 64 + static_cast<std::int64_t>(gen() % 4033);  // <= 4 KB
    std::vector<int> ranks(n);
    for (int i = 0; i < n; ++i) ranks[i] = i;
    const auto src = contiguous_layout(ranks, total);
    const SnapshotRing ring = ring_of(n);

    // fail zero or one rank (ring keeps singles recoverable), survivors get
    // an equal contiguous retarget
    std::set<int> failed;
    if (gen() % 3 != 0) failed.insert(static_cast<int>(gen() % n));
    std::vector<int> survivors;
    for (int r : ranks)
      if (!failed.contains(r)) survivors.push_back(r);
    const auto dst = contiguous_layout(survivors, total);

    const auto plan = overlap_matrix(src, dst, failed, &ring);

    // minimality: moved bytes equal ownership-change bytes, nothing twice
    std::int64_t expect_moved = 0;
    for (std::int64_t b = 0; b < total; ++b)
      if (src.owner_of(b) != dst.owner_of(b)) ++expect_moved;
    CHECK(plan.total_bytes_moved == expect_moved);
    std::set<std::int64_t> touched;
    for (const auto& e : plan.entries)
      for (std::int64_t b = e.iv.lo; b < e.iv.hi; ++b) CHECK(touched.insert(b).second);

    const auto owner = apply_plan(src, plan);
    for (std::int64_t b = 0; b < total; ++b) CHECK(owner.at(b) == dst.owner_of(b));
  }
}

TEST_CASE("plan serializes to json") {
  const auto src = contiguous_layout({0, 1}, 8);
  const auto dst = [&] {
    PartitionLayout d;
    d.total_bytes = 8;
    d.ranges[0] = {{0, 6}};
    d.ranges[1] = {{6, 8}};
    return d;
  }();
  const auto plan = overlap_matrix(src, dst);
  const auto j = plan_to_json(plan);
  CHECK(j["total_bytes_moved"] == 2);
  CHECK(j["entries"].size() == 1);
  CHECK(j["entries"][0]["medium"] == "d2d");
}

TEST_CASE("snapshot timeline overheads") {
  SnapshotTimeline t;
  t.d2d_grad_s = 0.02;
  t.d2h_grad_s = 0.05;
  t.host_update_s = 0.4;
  t.step_window_s = 0.1;
  t.allgather_window_s = 0.1;
  t.next_iter_window_s = 5.0;

  SUBCASE("fully hidden pipeline adds nothing") {
    CHECK(snapshot_overhead_s(t) == 0.0);
  }
  SUBCASE("no-overlap limit surfaces the host update") {
    t.next_iter_window_s = 0.0;
    CHECK(snapshot_overhead_s(t) == doctest::Approx(0.4));
  }
  SUBCASE("every window closed serializes all phases") {
    t.step_window_s = 0.0;
    t.allgather_window_s = 0.0;
    t.next_iter_window_s = 0.0;
    CHECK(snapshot_overhead_s(t) == doctest::Approx(0.02 + 0.05 + 0.4));
  }
}

TEST_CASE("mixed-precision layout keeps grad shards at least 4x smaller") {
  // bf16 gradient shard vs fp32 master+moments optimizer state
  const std::int64_t grad_bytes_per_param = 2;
  const std::int64_t opt_bytes_per_param = 12;
  CHECK(opt_bytes_per_param / grad_bytes_per_param >= 4);
}
