#include "elaskit/communicator.hpp"

#include <algorithm>
#include <map>

namespace elaskit {

Link make_link(int a, int b) { return a < b ? Link{a, b} : Link{b, a}; }

std::set<Link> CommGroup::required_links() const {
  std::set<Link> out;
  const int n = static_cast<int>(members.size());
  if (n < 2) return out;
  if (topo == GroupTopology::Mesh) {
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) out.insert(make_link(members[i], members[j]));
  } else {
    for (int i = 0; i < n; ++i) out.insert(make_link(members[i], members[(i + 1) % n]));
  }
  return out;
}

bool CommGroup::contains(int rank) const {
  return std::find(members.begin(), members.end(), rank) != members.end();
}

namespace {

bool connected(const std::vector<int>& members, const std::set<Link>& links) {
  if (members.size() <= 1) return true;
  std::map<int, std::vector<int>> adj;
  for (const Link& l : links) {
    adj[l.first].push_back(l.second);
    adj[l.second].push_back(l.first);
  }
  std::set<int> want(members.begin(), members.end());
  std::vector<int> stack = {members.front()};
  std::set<int> seen = {members.front()};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int w : adj[v]) {
      if (want.contains(w) && !seen.contains(w)) {
        seen.insert(w);
        stack.push_back(w);
      }
    }
  }
  return seen.size() == want.size();
}

}  // namespace

EditPlan plan_edit(const std::vector<CommGroup>& groups, const ElasticEvent& ev,
                   const std::set<Link>& global_link_pool) {
  EditPlan plan;
  const std::set<int> affected(ev.targets.begin(), ev.targets.end());
  const bool joining = ev.kind == EventKind::ScaleOut;

  for (const CommGroup& g : groups) {
    bool touched = false;
    for (int r : ev.targets)
      if (g.contains(r)) touched = true;
    if (!touched) continue;
    plan.groups_touched.insert(g.id);

    if (joining) {
      for (const Link& l : g.required_links()) {
        const bool incident = affected.contains(l.first) || affected.contains(l.second);
        if (incident && !global_link_pool.contains(l)) plan.links_to_add.insert(l);
      }
    } else {
      std::vector<int> survivors;
      for (int m : g.members)
        if (!affected.contains(m)) survivors.push_back(m);

      for (const Link& l : global_link_pool) {
        const bool incident = affected.contains(l.first) || affected.contains(l.second);
        if (!incident) continue;
        const bool in_group = g.contains(l.first) && g.contains(l.second);
        if (in_group) plan.links_to_remove.insert(l);
      }
      if (g.topo == GroupTopology::Ring && survivors.size() >= 2) {
        // reconnect around each hole: ring over survivors in member order
        CommGroup shrunk = g;
        shrunk.members = survivors;
        for (const Link& l : shrunk.required_links())
          if (!global_link_pool.contains(l) && !plan.links_to_add.contains(l))
            plan.links_to_add.insert(l);
      }

      std::set<Link> after;
      for (const Link& l : g.required_links())
        if (global_link_pool.contains(l) && !plan.links_to_remove.contains(l))
          after.insert(l);
      for (const Link& l : plan.links_to_add)
        if (g.contains(l.first) && g.contains(l.second)) after.insert(l);
      if (!connected(survivors, after))
        throw DisconnectedGroup("edit disconnects group " + g.id +
                                "; replanning must regroup");
    }
  }
  for (const Link& l : plan.links_to_add) plan.links_to_remove.erase(l);
  return plan;
}

double estimate_recovery_time(const EditPlan& plan, const CommCostModel& cost) {
  return cost.per_group_fixed_s * static_cast<double>(plan.groups_touched.size()) +
         cost.per_link_setup_s * static_cast<double>(plan.links_to_add.size());
}

RebuildEstimate estimate_partial_rebuild(const std::vector<CommGroup>& groups,
                                         const ElasticEvent& ev, const CommCostModel& cost) {
  const std::set<int> affected(ev.targets.begin(), ev.targets.end());
  RebuildEstimate est;
  est.time_s = cost.partial_restart_fixed_s;
  for (const CommGroup& g : groups) {
    bool touched = false;
    for (int r : ev.targets)
      if (g.contains(r)) touched = true;
    if (!touched) continue;
    CommGroup rebuilt = g;
    if (ev.kind != EventKind::ScaleOut) {
      rebuilt.members.clear();
      for (int m : g.members)
        if (!affected.contains(m)) rebuilt.members.push_back(m);
    }
    est.links_created += static_cast<std::int64_t>(rebuilt.required_links().size());
    est.time_s += cost.per_group_fixed_s;
  }
  est.time_s += cost.per_link_setup_s * static_cast<double>(est.links_created);
  return est;
}

RebuildEstimate estimate_full_rebuild(const std::vector<CommGroup>& groups,
                                      const ElasticEvent& ev, const CommCostModel& cost) {
  const std::set<int> affected(ev.targets.begin(), ev.targets.end());
  RebuildEstimate est;
  est.time_s = cost.full_restart_fixed_s;
  for (const CommGroup& g : groups) {
    CommGroup rebuilt = g;
    if (ev.kind != EventKind::ScaleOut) {
      rebuilt.members.clear();
      for (int m : g.members)
        if (!affected.contains(m)) rebuilt.members.push_back(m);
    }
    est.links_created += static_cast<std::int64_t>(rebuilt.required_links().size());
    est.time_s += cost.per_group_fixed_s;
  }
  est.time_s += cost.per_link_setup_s * static_cast<double>(est.links_created);
  return est;
}

}  // namespace elaskit
