#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace elaskit {

using DeviceId = int;

struct Device {
  DeviceId id = -1;
  int node_id = -1;
  std::int64_t mem_capacity_bytes = 0;
  int freq_mhz = 1400;
  int freq_max_mhz = 1650;
  double slow_factor = 1.0;  // >= 1, 1 = healthy
  bool alive = true;
};

enum class EventKind { FailStop, FailSlow, ScaleIn, ScaleOut };

std::string to_string(EventKind k);
std::optional<EventKind> event_kind_from_string(const std::string& s);

struct ElasticEvent {
  double time_s = 0.0;
  EventKind kind = EventKind::FailStop;
  std::vector<DeviceId> targets;
  double slow_factor = 0.0;  // FailSlow only, must be > 1
};

// Stage/DP grid of planning units. A planning unit is a whole TP group; TP is
// folded into the profiled compute cost, so tp only records the fold factor.
struct Topology {
  int tp = 1;
  int pp = 1;
  std::vector<std::vector<DeviceId>> rank_grid;  // [stage-1][slot] -> id, -1 = vacated

  std::vector<int> dp_per_stage() const;  // occupied slots per stage
};

struct ClusterState {
  std::map<DeviceId, Device> devices;
  Topology topology;
  std::vector<DeviceId> free_pool;  // ScaleOut arrivals await placement here
  long step = 0;
};

struct UnknownDevice final : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DuplicateDeviceId final : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EventOnDeadDevice final : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadEvent final : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyStage final : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Pure: returns the successor state, input untouched.
ClusterState apply_event(const ClusterState& state, const ElasticEvent& ev);

// Alive members of a stage's DP group in ascending slot order. Throws
// EmptyStage when every member is dead (graph replanning must repopulate).
std::vector<DeviceId> dp_group(const ClusterState& state, int stage);

std::pair<std::optional<int>, std::optional<int>> pp_neighbors(const ClusterState& state,
                                                               int stage);

int alive_device_count(const ClusterState& state);

// Uniform grid, one fresh device per cell, slot-major device ids.
ClusterState make_uniform_cluster(int pp, int dp, std::int64_t mem_capacity_bytes,
                                  int freq_mhz = 1400, int freq_max_mhz = 1650,
                                  int devices_per_node = 8, int tp = 1);

}  // namespace elaskit
