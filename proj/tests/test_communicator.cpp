#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "elaskit/communicator.hpp"

using namespace elaskit;

namespace {

CommGroup mesh(const std::string& id, std::vector<int> members) {
  CommGroup g;
  g.id = id;
  g.members = std::move(members);
  g.topo = GroupTopology::Mesh;
  return g;
}

std::set<Link> pool_of(const std::vector<CommGroup>& groups) {
  std::set<Link> pool;
  for (const auto& g : groups)
    for (const Link& l : g.required_links()) pool.insert(l);
  return pool;
}

ElasticEvent departure(std::vector<int> targets) {
  ElasticEvent ev;
  ev.kind = EventKind::FailStop;
  ev.targets = std::move(targets);
  return ev;
}

}  // namespace

TEST_CASE("mesh scale-down removes incident links and adds none") {
  const std::vector<CommGroup> groups = {mesh("g", {0, 1, 2, 3, 4, 5, 6, 7})};
  const auto plan = plan_edit(groups, departure({5}), pool_of(groups));
  CHECK(plan.links_to_remove.size() == 7);
  CHECK(plan.links_to_add.empty());
  CHECK(plan.groups_touched == std::set<std::string>{"g"});
}

TEST_CASE("scale-up adds only the joiner's missing links") {
  std::vector<CommGroup> groups = {mesh("g", {0, 1, 2, 3, 4, 5, 6})};
  const auto pool = pool_of(groups);
  groups[0].members.push_back(7);  // membership updated before the edit
  ElasticEvent ev;
  ev.kind = EventKind::ScaleOut;
  ev.targets = {7};
  const auto plan = plan_edit(groups, ev, pool);
  CHECK(plan.links_to_add.size() == 7);
  CHECK(plan.links_to_remove.empty());
  // reuse: nothing added that the pool already holds
  for (const Link& l : plan.links_to_add) CHECK(!pool.contains(l));
}

TEST_CASE("edit-count dominance against both rebuild baselines") {
  const std::vector<CommGroup> groups = {mesh("dp0", {0, 1, 2, 3, 4, 5, 6, 7}),
                                         mesh("dp1", {8, 9, 10, 11, 12, 13, 14, 15})};
  const CommCostModel cost;
  const auto ev = departure({5});
  const auto plan = plan_edit(groups, ev, pool_of(groups));
  const auto partial = estimate_partial_rebuild(groups, ev, cost);
  const auto full = estimate_full_rebuild(groups, ev, cost);
  // edit creates 0 links; partial recreates C(7,2)=21; full also rebuilds dp1
  CHECK(plan.links_to_add.empty());
  CHECK(partial.links_created == 21);
  CHECK(full.links_created == 21 + 28);
  CHECK(static_cast<std::int64_t>(plan.links_to_add.size()) <= partial.links_created);
  CHECK(partial.links_created <= full.links_created);
  CHECK(estimate_recovery_time(plan, cost) < partial.time_s);
  CHECK(partial.time_s < full.time_s);
}

TEST_CASE("ring scale-down reconnects exactly one neighbor pair") {
  CommGroup g;
  g.id = "ring";
  g.members = {0, 1, 2, 3, 4};
  g.topo = GroupTopology::Ring;
  const std::vector<CommGroup> groups = {g};
  const auto plan = plan_edit(groups, departure({2}), pool_of(groups));
  CHECK(plan.links_to_remove == std::set<Link>{{1, 2}, {2, 3}});
  CHECK(plan.links_to_add == std::set<Link>{{1, 3}});
}

TEST_CASE("locality: unaffected group growth leaves the edit invariant") {
  std::vector<CommGroup> small = {mesh("hit", {0, 1, 2, 3}), mesh("other", {10, 11, 12})};
  const auto plan_small = plan_edit(small, departure({1}), pool_of(small));

  std::vector<int> big_members;
  for (int i = 10; i < 40; ++i) big_members.push_back(i);  // 10x the members
  std::vector<CommGroup> big = {mesh("hit", {0, 1, 2, 3}), mesh("other", big_members)};
  const auto plan_big = plan_edit(big, departure({1}), pool_of(big));

  CHECK(plan_small.links_to_add == plan_big.links_to_add);
  CHECK(plan_small.links_to_remove == plan_big.links_to_remove);
  CHECK(plan_small.groups_touched == plan_big.groups_touched);
}

TEST_CASE("empty plan estimates zero seconds") {
  const CommCostModel cost;
  CHECK(estimate_recovery_time({}, cost) == 0.0);
}

TEST_CASE("sparse custom link set can disconnect") {
  // star around rank 0; removal-only edit leaves the leaves isolated
  CommGroup g;
  g.id = "star";
  g.members = {0, 1, 2, 3};
  g.topo = GroupTopology::Mesh;
  std::set<Link> pool = {{0, 1}, {0, 2}, {0, 3}};
  CHECK_THROWS_AS(plan_edit({g}, departure({0}), pool), DisconnectedGroup);
}

TEST_CASE("calibrated constants keep single-failure edits in band") {
  // the shipped constants reproduce sub-second edits vs 12-16 s full rebuilds
  const CommCostModel cost;
  for (int world : {8, 16, 32, 64}) {
    // square-ish dp x pp decomposition of the world
    int dp = 2;
    while (dp * dp < world) dp *= 2;
    const int pp = world / dp;
    std::vector<CommGroup> groups;
    for (int s = 0; s < pp; ++s) {
      CommGroup g;
      g.id = "dp-" + std::to_string(s);
      g.topo = GroupTopology::Mesh;
      for (int c = 0; c < dp; ++c) g.members.push_back(c * pp + s);
      groups.push_back(g);
    }
    for (int c = 0; c < dp; ++c) {
      CommGroup g;
      g.id = "pp-" + std::to_string(c);
      g.topo = GroupTopology::Ring;
      for (int s = 0; s < pp; ++s) g.members.push_back(c * pp + s);
      groups.push_back(g);
    }
    const auto ev = departure({0});
    const auto plan = plan_edit(groups, ev, pool_of(groups));
    const double edit_s = estimate_recovery_time(plan, cost);
    const double full_s = estimate_full_rebuild(groups, ev, cost).time_s;
    CHECK(edit_s >= 0.15);
    CHECK(edit_s <= 0.37);
    CHECK(full_s >= 12.0);
    CHECK(full_s <= 16.0);
    const double speedup = full_s / edit_s;
    CHECK(speedup >= 30.0);
    CHECK(speedup <= 100.0);
    const double partial_s = estimate_partial_rebuild(groups, ev, cost).time_s;
    CHECK(partial_s / edit_s >= 2.0);  // partial restarts land in between
    CHECK(partial_s < full_s);
  }
}
