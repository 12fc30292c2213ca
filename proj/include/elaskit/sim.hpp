#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "elaskit/cluster.hpp"
#include "elaskit/communicator.hpp"
#include "elaskit/cost_model.hpp"
#include "elaskit/dataflow.hpp"
#include "elaskit/dvfs.hpp"
#include "elaskit/graph_planner.hpp"
#include "elaskit/migration.hpp"
#include "elaskit/presets.hpp"
#include "elaskit/rng.hpp"
#include "json.hpp"

namespace elaskit {

struct NoRecoveryInRun final : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Policy { ElasWave, Reroute, ReplicaDrop };

std::string to_string(Policy p);
std::optional<Policy> policy_from_string(const std::string& s);

struct MttrEvent {
  int step = 0;
  double t_event_s = 0.0;
  std::string kind;
  double detect_s = 0.0;
  double comm_repair_s = 0.0;
  double remap_s = 0.0;
  double migration_stall_s = 0.0;
  double other_s = 0.0;
  double lost_work_s = 0.0;  // discarded partial step (FailStop)

  double total_s() const {
    return detect_s + comm_repair_s + remap_s + migration_stall_s + other_s;
  }
};

struct SimReport {
  std::string preset;
  std::string policy;
  std::uint64_t seed = 0;
  int scale_factor = 1;

  std::vector<double> step_time_s;
  std::vector<double> samples_per_s;
  std::vector<std::int64_t> samples_per_step;
  std::vector<int> active_devices;

  std::vector<double> bubble_ratio;                 // per stage, final config
  std::vector<std::int64_t> peak_mem_bytes;         // per stage, worst over run
  std::vector<int> peak_inflight_microbatches;      // per stage, measured

  double lse_raw = 1.0;
  double lse = 1.0;  // clipped to [0, 1 + eps]
  std::vector<MttrEvent> mttr;
  bool oom_flagged = false;
  double snapshot_overhead_s = 0.0;
  double snapshot_overhead_fraction = 0.0;

  // toy-model transcripts for consistency checking (cfg.toy.enabled)
  std::map<std::string, std::vector<double>> rng_transcript;  // "sample/layer/op"
  std::vector<std::vector<double>> final_params;              // per layer
  std::uint64_t rng_transcript_hash = 0;
  std::uint64_t grad_transcript_hash = 0;
};

SimReport run(const RunConfig& cfg, const std::vector<ElasticEvent>& trace, Policy policy);

// (T_after / T_before) / (N_after / N_before), throughput from the steady
// steps around the first event. Raw value retained, reported value clipped.
double compute_lse(const SimReport& report, int before_devices, int after_devices);

const std::vector<MttrEvent>& mttr_breakdown(const SimReport& report);

nlohmann::ordered_json report_to_json(const SimReport& report);
std::string summary_csv(const SimReport& report);  // step,time_s,samples_per_s,active_devices,lse_cum
std::string mttr_csv(const SimReport& report);

}  // namespace elaskit
