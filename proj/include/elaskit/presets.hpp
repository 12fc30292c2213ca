#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "elaskit/cluster.hpp"
#include "elaskit/communicator.hpp"
#include "elaskit/cost_model.hpp"
#include "elaskit/migration.hpp"

namespace elaskit {

struct ConfigError final : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelSpec {
  int layers = 0;
  std::int64_t param_bytes_per_layer = 0;
  std::int64_t grad_bytes_per_layer = 0;
  std::int64_t optstate_bytes_per_layer = 0;
  std::int64_t act_bytes_per_layer_per_sample = 0;
  std::int64_t fixed_overhead_bytes = 0;
};

struct ToyModelConfig {
  bool enabled = false;
  int params_per_layer = 4;
  int rand_ops_per_layer = 1;
  double learning_rate = 0.25;
  double keep_probability = 0.5;
  bool inject_wrong_weights = false;  // test fixture for the verify suite
};

struct RunConfig {
  std::string preset = "custom";
  int tp = 1;
  int pp = 1;
  int dp = 1;
  int devices_per_node = 8;
  int microbatch_size = 1;
  std::int64_t global_batch = 0;
  int scale_factor = 1;
  int steps = 10;

  ModelSpec model;
  CostProfile profile;
  MemModel mem;
  std::int64_t mem_cap_bytes = 0;
  CommCostModel comm;
  ZeroKind zero_kind = ZeroKind::Interleaved;
  MigrationMode migration_mode = MigrationMode::NonBlocking;

  double freq_base_mhz = 1400.0;
  double freq_max_mhz = 1650.0;
  double dvfs_delta_f_mhz = 10.0;
  double dvfs_epsilon_frac = 0.005;  // epsilon = frac * T*
  int dvfs_window = 3;

  double detect_s = 0.05;
  double plan_other_s = 0.05;
  double reroute_fixed_s = 0.5;
  double restart_other_s = 5.0;
  double migration_fixed_s = 0.03;
  double reroute_overhead_factor = 0.3;     // decoupled-backward cost inflation
  double reroute_deferred_retention = 0.25; // deferred weight-grad activation share
  double d2d_snapshot_bw = 50e9;
  double d2h_snapshot_bw = 16e9;
  double host_update_bw = 8e9;

  std::uint64_t seed = 0;
  ToyModelConfig toy;

  // derived
  int logical_devices() const { return pp * dp; }
  int units_per_node() const { return std::max(1, devices_per_node / std::max(1, tp)); }
  std::int64_t effective_global_batch() const { return global_batch / scale_factor; }
  int microbatches_per_slot() const;  // effective gb / (dp * mbs)
  void validate() const;
};

// Table-2 analogs (llama2-7b, llama2-13b, llama2-34b) plus "toy".
RunConfig make_preset(const std::string& name);
std::vector<std::string> preset_names();

// JSON config overlay on top of a preset (or defaults).
RunConfig load_config(const std::string& path);
void apply_config_overrides(RunConfig& cfg, const std::string& path);

struct TraceParseError final : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// JSON-lines trace; targets are physical device ids unless the config's tp
// is 1 (planning units then coincide with devices). Physical ids fold onto
// planning units by integer division with de-duplication.
std::vector<ElasticEvent> load_trace(const std::string& path, const RunConfig& cfg);
std::vector<ElasticEvent> parse_trace_text(const std::string& text, const RunConfig& cfg);

// Convenience for tests and docs: the 8 physical ids of one node.
std::vector<int> node_physical_ids(const RunConfig& cfg, int node);

}  // namespace elaskit
