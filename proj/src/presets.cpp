#include "elaskit/presets.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace elaskit {

int RunConfig::microbatches_per_slot() const {
  const std::int64_t eff = effective_global_batch();
  const std::int64_t denom = static_cast<std::int64_t>(dp) * microbatch_size;
  if (denom == 0 || eff % denom != 0)
    throw ConfigError("effective global batch " + std::to_string(eff) +
                      " not divisible by dp*mbs = " + std::to_string(denom));
  return static_cast<int>(eff / denom);
}

void RunConfig::validate() const {
  if (pp < 1 || dp < 1 || tp < 1) throw ConfigError("tp/pp/dp must be >= 1");
  if (model.layers < pp) throw ConfigError("fewer layers than stages");
  if (microbatch_size < 1) throw ConfigError("microbatch_size must be >= 1");
  if (global_batch < 1) throw ConfigError("global_batch must be >= 1");
  if (scale_factor < 1) throw ConfigError("scale_factor must be >= 1");
  if (mem_cap_bytes < 1) throw ConfigError("mem_cap_bytes must be set");
  microbatches_per_slot();  // divisibility check
}

namespace {

RunConfig base_defaults() {
  RunConfig c;
  c.freq_base_mhz = 1400.0;
  c.freq_max_mhz = 1650.0;
  return c;
}

CostProfile analytic_profile(double fwd_a_ms, double p2p_bytes_per_sample) {
  CostProfile p;
  CostProfile::Analytic a;
  a.fwd_a_s = fwd_a_ms * 1e-3;
  a.bwd_a_s = 2.0 * fwd_a_ms * 1e-3;  // backward ~2x forward
  p.analytic = a;
  p.p2p_bytes_per_sample = p2p_bytes_per_sample;
  p.base_link_bw_bytes_per_s = 25e9;  // 200 Gbps RoCE
  p.sigma_f = 0.7;
  p.sigma_b = 0.7;
  return p;
}

constexpr std::int64_t MB = 1000 * 1000;
constexpr std::int64_t GB = 1000 * MB;

}  // namespace

RunConfig make_preset(const std::string& name) {
  RunConfig c = base_defaults();
  c.preset = name;

  if (name == "llama2-7b") {
    c.tp = 4; c.pp = 3; c.dp = 8;
    c.microbatch_size = 4;
    c.global_batch = 8192;
    c.model.layers = 32;
    c.model.param_bytes_per_layer = 105 * MB;
    c.model.grad_bytes_per_layer = 105 * MB;
    c.model.optstate_bytes_per_layer = 632 * MB;
    c.model.act_bytes_per_layer_per_sample = 67 * MB;
    c.model.fixed_overhead_bytes = 1 * GB;
    c.mem_cap_bytes = 24 * GB;
    c.profile = analytic_profile(4.77, 8.4e6);
  } else if (name == "llama2-13b") {
    c.tp = 4; c.pp = 6; c.dp = 4;
    c.microbatch_size = 2;
    c.global_batch = 2048;
    c.model.layers = 40;
    c.model.param_bytes_per_layer = 162 * MB;
    c.model.grad_bytes_per_layer = 162 * MB;
    c.model.optstate_bytes_per_layer = 975 * MB;
    c.model.act_bytes_per_layer_per_sample = 84 * MB;
    c.model.fixed_overhead_bytes = 1 * GB;
    c.mem_cap_bytes = 24 * GB;
    c.profile = analytic_profile(5.98, 10.5e6);
  } else if (name == "llama2-34b") {
    c.tp = 4; c.pp = 8; c.dp = 3;
    c.microbatch_size = 1;
    c.global_batch = 768;
    c.model.layers = 48;
    c.model.param_bytes_per_layer = 355 * MB;
    c.model.grad_bytes_per_layer = 355 * MB;
    c.model.optstate_bytes_per_layer = 2125 * MB;
    c.model.act_bytes_per_layer_per_sample = 134 * MB;
    c.model.fixed_overhead_bytes = 2 * GB;
    c.mem_cap_bytes = 24 * GB;
    c.profile = analytic_profile(18.99, 16.8e6);
  } else if (name == "toy") {
    c.tp = 1; c.pp = 2; c.dp = 8;
    c.devices_per_node = 8;
    c.microbatch_size = 1;
    c.global_batch = 16;  // 2 micro-batches of 8
    c.model.layers = 4;   // 2 per stage
    c.model.param_bytes_per_layer = 4 * MB;
    c.model.grad_bytes_per_layer = 4 * MB;
    c.model.optstate_bytes_per_layer = 24 * MB;
    c.model.act_bytes_per_layer_per_sample = 1 * MB;
    c.model.fixed_overhead_bytes = 16 * MB;
    c.mem_cap_bytes = 1 * GB;
    c.profile = analytic_profile(1.0, 1e5);
    c.steps = 4;
    c.toy.enabled = true;
  } else {
    throw ConfigError("unknown preset: " + name);
  }

  c.mem.bytes_param_per_layer = c.model.param_bytes_per_layer;
  c.mem.bytes_grad_per_layer = c.model.grad_bytes_per_layer;
  c.mem.bytes_optstate_per_layer = c.model.optstate_bytes_per_layer;
  c.mem.bytes_act_per_layer_per_sample = c.model.act_bytes_per_layer_per_sample;
  c.mem.fixed_overhead = c.model.fixed_overhead_bytes;
  return c;
}

std::vector<std::string> preset_names() {
  return {"llama2-7b", "llama2-13b", "llama2-34b", "toy"};
}

namespace {

void apply_json_overrides(RunConfig& c, const nlohmann::json& j) {
  if (j.contains("preset")) c.preset = j["preset"].get<std::string>();
  c.tp = j.value("tp", c.tp);
  c.pp = j.value("pp", c.pp);
  c.dp = j.value("dp", c.dp);
  c.devices_per_node = j.value("devices_per_node", c.devices_per_node);
  c.microbatch_size = j.value("microbatch_size", c.microbatch_size);
  c.global_batch = j.value("global_batch", c.global_batch);
  c.scale_factor = j.value("scale_factor", c.scale_factor);
  c.steps = j.value("steps", c.steps);
  c.seed = j.value("seed", c.seed);
  if (j.contains("layers")) c.model.layers = j["layers"].get<int>();
  if (j.contains("mem_cap_bytes")) c.mem_cap_bytes = j["mem_cap_bytes"].get<std::int64_t>();
  if (j.contains("cost_profile")) c.profile = load_cost_profile(j["cost_profile"].get<std::string>());
  if (j.contains("zero_kind")) {
    const std::string k = j["zero_kind"].get<std::string>();
    if (k == "contiguous") c.zero_kind = ZeroKind::Contiguous;
    else if (k == "interleaved") c.zero_kind = ZeroKind::Interleaved;
    else throw ConfigError("zero_kind must be contiguous or interleaved");
  }
  if (j.contains("migration_mode")) {
    const std::string m = j["migration_mode"].get<std::string>();
    if (m == "blocking") c.migration_mode = MigrationMode::Blocking;
    else if (m == "non_blocking") c.migration_mode = MigrationMode::NonBlocking;
    else throw ConfigError("migration_mode must be blocking or non_blocking");
  }
  c.detect_s = j.value("detect_s", c.detect_s);
  c.plan_other_s = j.value("plan_other_s", c.plan_other_s);
  c.reroute_fixed_s = j.value("reroute_fixed_s", c.reroute_fixed_s);
  c.restart_other_s = j.value("restart_other_s", c.restart_other_s);
  c.migration_fixed_s = j.value("migration_fixed_s", c.migration_fixed_s);
  c.reroute_overhead_factor = j.value("reroute_overhead_factor", c.reroute_overhead_factor);
  c.reroute_deferred_retention =
      j.value("reroute_deferred_retention", c.reroute_deferred_retention);
}

}  // namespace

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  RunConfig c = j.contains("preset") ? make_preset(j["preset"].get<std::string>())
                                     : base_defaults();
  apply_json_overrides(c, j);
  return c;
}

void apply_config_overrides(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  apply_json_overrides(cfg, j);
}

std::vector<ElasticEvent> parse_trace_text(const std::string& text, const RunConfig& cfg) {
  std::vector<ElasticEvent> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  double prev_t = -1.0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (line[first] == '#') continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw TraceParseError("trace line " + std::to_string(lineno) + ": " + e.what());
    }
    ElasticEvent ev;
    if (!j.contains("t") || !j["t"].is_number())
      throw TraceParseError("trace line " + std::to_string(lineno) + ": missing numeric 't'");
    ev.time_s = j["t"].get<double>();
    if (ev.time_s < 0)
      throw TraceParseError("trace line " + std::to_string(lineno) + ": t must be >= 0");
    if (ev.time_s < prev_t)
      throw TraceParseError("trace line " + std::to_string(lineno) +
                            ": timestamps must be non-decreasing");
    prev_t = ev.time_s;
    if (!j.contains("kind") || !j["kind"].is_string())
      throw TraceParseError("trace line " + std::to_string(lineno) + ": missing 'kind'");
    const auto kind = event_kind_from_string(j["kind"].get<std::string>());
    if (!kind)
      throw TraceParseError("trace line " + std::to_string(lineno) + ": unknown kind '" +
                            j["kind"].get<std::string>() + "'");
    ev.kind = *kind;
    if (!j.contains("targets") || !j["targets"].is_array() || j["targets"].empty())
      throw TraceParseError("trace line " + std::to_string(lineno) +
                            ": 'targets' must be a non-empty array");
    std::set<int> units;
    for (const auto& t : j["targets"]) {
      if (!t.is_number_integer())
        throw TraceParseError("trace line " + std::to_string(lineno) +
                              ": targets must be integers");
      const int phys = t.get<int>();
      if (phys < 0)
        throw TraceParseError("trace line " + std::to_string(lineno) +
                              ": negative device id");
      units.insert(phys / std::max(1, cfg.tp));
    }
    ev.targets.assign(units.begin(), units.end());
    if (ev.kind == EventKind::FailSlow) {
      if (!j.contains("slow_factor") || !j["slow_factor"].is_number())
        throw TraceParseError("trace line " + std::to_string(lineno) +
                              ": fail_slow needs 'slow_factor'");
      ev.slow_factor = j["slow_factor"].get<double>();
      if (!(ev.slow_factor > 1.0))
        throw TraceParseError("trace line " + std::to_string(lineno) +
                              ": slow_factor must be > 1");
    }
    out.push_back(ev);
  }
  return out;
}

std::vector<ElasticEvent> load_trace(const std::string& path, const RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw TraceParseError("cannot open trace: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_trace_text(ss.str(), cfg);
}

std::vector<int> node_physical_ids(const RunConfig& cfg, int node) {
  std::vector<int> ids;
  for (int i = 0; i < cfg.devices_per_node; ++i)
    ids.push_back(node * cfg.devices_per_node + i);
  return ids;
}

}  // namespace elaskit
