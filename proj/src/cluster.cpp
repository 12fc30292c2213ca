#include "elaskit/cluster.hpp"

#include <algorithm>

namespace elaskit {

std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::FailStop: return "fail_stop";
    case EventKind::FailSlow: return "fail_slow";
    case EventKind::ScaleIn: return "scale_in";
    case EventKind::ScaleOut: return "scale_out";
  }
  return "?";
}

std::optional<EventKind> event_kind_from_string(const std::string& s) {
  if (s == "fail_stop") return EventKind::FailStop;
  if (s == "fail_slow") return EventKind::FailSlow;
  if (s == "scale_in") return EventKind::ScaleIn;
  if (s == "scale_out") return EventKind::ScaleOut;
  return std::nullopt;
}

std::vector<int> Topology::dp_per_stage() const {
  std::vector<int> out;
  out.reserve(rank_grid.size());
  for (const auto& row : rank_grid) {
    int n = 0;
    for (DeviceId d : row)
      if (d >= 0) ++n;
    out.push_back(n);
  }
  return out;
}

ClusterState apply_event(const ClusterState& state, const ElasticEvent& ev) {
  if (ev.targets.empty()) throw BadEvent("event has no targets");
  ClusterState next = state;

  auto vacate = [&next](DeviceId id) {
    for (auto& row : next.topology.rank_grid)
      for (auto& cell : row)
        if (cell == id) cell = -1;
  };

  switch (ev.kind) {
    case EventKind::FailStop:
    case EventKind::ScaleIn:
      for (DeviceId id : ev.targets) {
        auto it = next.devices.find(id);
        if (it == next.devices.end())
          throw UnknownDevice("unknown device " + std::to_string(id));
        if (!it->second.alive)
          throw EventOnDeadDevice("device " + std::to_string(id) + " already dead");
        it->second.alive = false;
        vacate(id);
        std::erase(next.free_pool, id);
      }
      break;
    case EventKind::FailSlow:
      if (!(ev.slow_factor > 1.0))
        throw BadEvent("fail_slow requires slow_factor > 1");
      for (DeviceId id : ev.targets) {
        auto it = next.devices.find(id);
        if (it == next.devices.end())
          throw UnknownDevice("unknown device " + std::to_string(id));
        if (!it->second.alive)
          throw EventOnDeadDevice("device " + std::to_string(id) + " already dead");
        it->second.slow_factor = ev.slow_factor;
      }
      break;
    case EventKind::ScaleOut:
      for (DeviceId id : ev.targets) {
        if (next.devices.count(id) && next.devices.at(id).alive)
          throw DuplicateDeviceId("device id " + std::to_string(id) + " already present");
        Device d;
        if (!next.devices.empty()) {
          // inherit capacity/frequency envelope from the fleet
          const Device& ref = next.devices.begin()->second;
          d = ref;
          d.slow_factor = 1.0;
        }
        d.id = id;
        d.alive = true;
        d.node_id = -1;
        next.devices[id] = d;
        next.free_pool.push_back(id);
      }
      std::sort(next.free_pool.begin(), next.free_pool.end());
      break;
  }
  return next;
}

std::vector<DeviceId> dp_group(const ClusterState& state, int stage) {
  const auto& grid = state.topology.rank_grid;
  if (stage < 1 || stage > static_cast<int>(grid.size()))
    throw BadEvent("stage out of range: " + std::to_string(stage));
  std::vector<DeviceId> out;
  for (DeviceId d : grid[stage - 1])
    if (d >= 0 && state.devices.count(d) && state.devices.at(d).alive) out.push_back(d);
  if (out.empty()) throw EmptyStage("stage " + std::to_string(stage) + " has no alive members");
  return out;
}

std::pair<std::optional<int>, std::optional<int>> pp_neighbors(const ClusterState& state,
                                                               int stage) {
  const int pp = static_cast<int>(state.topology.rank_grid.size());
  if (stage < 1 || stage > pp)
    throw BadEvent("stage out of range: " + std::to_string(stage));
  std::optional<int> prev, next;
  if (stage > 1) prev = stage - 1;
  if (stage < pp) next = stage + 1;
  return {prev, next};
}

int alive_device_count(const ClusterState& state) {
  int n = 0;
  for (const auto& [id, d] : state.devices)
    if (d.alive) ++n;
  return n;
}

ClusterState make_uniform_cluster(int pp, int dp, std::int64_t mem_capacity_bytes,
                                  int freq_mhz, int freq_max_mhz, int devices_per_node,
                                  int tp) {
  ClusterState st;
  st.topology.tp = tp;
  st.topology.pp = pp;
  st.topology.rank_grid.assign(pp, std::vector<DeviceId>(dp, -1));
  const int units_per_node = std::max(1, devices_per_node / std::max(1, tp));
  int id = 0;
  // replica-major ids: column c occupies ids [c*pp, (c+1)*pp)
  for (int c = 0; c < dp; ++c) {
    for (int s = 0; s < pp; ++s) {
      Device d;
      d.id = id;
      d.node_id = id / units_per_node;
      d.mem_capacity_bytes = mem_capacity_bytes;
      d.freq_mhz = freq_mhz;
      d.freq_max_mhz = freq_max_mhz;
      st.devices[id] = d;
      st.topology.rank_grid[s][c] = id;
      ++id;
    }
  }
  return st;
}

}  // namespace elaskit
