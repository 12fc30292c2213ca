#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "elaskit/cluster.hpp"

namespace elaskit {

struct DisconnectedGroup final : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Link = std::pair<int, int>;  // unordered rank pair, stored lo < hi

Link make_link(int a, int b);

enum class GroupTopology { Mesh, Ring };

struct CommGroup {
  std::string id;
  std::vector<int> members;  // ordered
  GroupTopology topo = GroupTopology::Mesh;

  std::set<Link> required_links() const;  // full mesh or ring over members
  bool contains(int rank) const;
};

struct EditPlan {
  std::set<Link> links_to_add;
  std::set<Link> links_to_remove;
  std::set<std::string> groups_touched;
};

// In-place group edit for one elastic event. Scale-down removes links
// incident to departed ranks in the groups that contain them (ring topology
// additionally reconnects the severed neighbors); scale-up adds only the
// joining ranks' links that the global pool lacks. Untouched groups
// contribute nothing. Throws DisconnectedGroup when the surviving members of
// an affected group would lose connectivity under the edited link set.
EditPlan plan_edit(const std::vector<CommGroup>& groups, const ElasticEvent& ev,
                   const std::set<Link>& global_link_pool);

struct CommCostModel {
  double per_link_setup_s = 0.008;
  double per_group_fixed_s = 0.09;
  double partial_restart_fixed_s = 0.35;
  double full_restart_fixed_s = 12.0;
};

// Affine edit-time estimate; removals are free.
double estimate_recovery_time(const EditPlan& plan, const CommCostModel& cost);

// Baselines: rebuild affected groups from scratch, or tear down and rebuild
// every group. Link counts are also returned for dominance checks.
struct RebuildEstimate {
  double time_s = 0.0;
  std::int64_t links_created = 0;
};
RebuildEstimate estimate_partial_rebuild(const std::vector<CommGroup>& groups,
                                         const ElasticEvent& ev, const CommCostModel& cost);
RebuildEstimate estimate_full_rebuild(const std::vector<CommGroup>& groups,
                                      const ElasticEvent& ev, const CommCostModel& cost);

}  // namespace elaskit
