#include "elaskit/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

#include "elaskit/param_fabric.hpp"

namespace elaskit {

std::string to_string(Policy p) {
  switch (p) {
    case Policy::ElasWave: return "elaswave";
    case Policy::Reroute: return "reroute";
    case Policy::ReplicaDrop: return "replica_drop";
  }
  return "?";
}

std::optional<Policy> policy_from_string(const std::string& s) {
  if (s == "elaswave") return Policy::ElasWave;
  if (s == "reroute") return Policy::Reroute;
  if (s == "replica_drop") return Policy::ReplicaDrop;
  return std::nullopt;
}

namespace {

constexpr double kOptStepWindowFrac = 0.02;
constexpr double kAllGatherWindowFrac = 0.03;

std::uint64_t fnv1a_init() { return 1469598103934665603ULL; }
std::uint64_t fnv1a_u64(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (i * 8)) & 0xFFu;
    h *= 1099511628211ULL;
  }
  return h;
}
std::uint64_t fnv1a_double(std::uint64_t h, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof(bits));
  return fnv1a_u64(h, bits);
}

struct StagePlan {
  int layers = 0;
  MicrobatchAssignment mb;       // slots are dp-column indices
  double slow_factor = 1.0;      // worst over the stage's devices
  double freq_mhz = 1400.0;
  double busy_multiplier = 1.0;  // reroute inflation
  std::int64_t deferred_bytes = 0;

  int gating_mbs() const {
    int m = 1;
    for (int v : mb.per_slot_mbs) m = std::max(m, v);
    return m;
  }
  int width() const { return static_cast<int>(mb.slots.size()); }
};

struct PlanState {
  LayerAssignment assignment;
  std::vector<StagePlan> stages;  // index stage-1
  int mb_units = 0;               // gating micro-batch count per stage
  StreamStateMap rng_map;
  std::set<int> idled;  // alive units parked by a replica drop
};

struct StepSim {
  double makespan = 0.0;
  std::vector<double> busy;
  std::vector<double> bubble;
  std::vector<int> peak_inflight;
};

// Deterministic 1F1B event simulation. Stage-local order: warm-up forwards,
// then alternating forward/backward, gated by the neighbor dependencies.
// Event tie order: (time, class, sequence id).
StepSim simulate_step(int P, int M, const std::vector<double>& dur_f,
                      const std::vector<double>& dur_b) {
  struct Task {
    bool backward = false;
    int mb = 0;
  };
  std::vector<std::vector<Task>> seq(P);
  for (int i = 0; i < P; ++i) {
    const int w = std::min(M, P - 1 - i);
    for (int k = 0; k < w; ++k) seq[i].push_back({false, k});
    for (int k = 0; k < M; ++k) {
      if (w + k < M) seq[i].push_back({false, w + k});
      seq[i].push_back({true, k});
    }
  }

  std::vector<std::vector<char>> f_done(P, std::vector<char>(M, 0));
  std::vector<std::vector<char>> b_done(P, std::vector<char>(M, 0));
  std::vector<size_t> ptr(P, 0);
  std::vector<char> running(P, 0);

  struct Ev {
    double t;
    int klass;
    long seq_id;
    int stage;
    bool operator>(const Ev& o) const {
      return std::tie(t, klass, seq_id) > std::tie(o.t, o.klass, o.seq_id);
    }
  };
  std::priority_queue<Ev, std::vector<Ev>, std::greater<Ev>> heap;
  long seq_id = 0;

  StepSim out;
  out.busy.assign(P, 0.0);
  out.peak_inflight.assign(P, 0);
  std::vector<int> inflight(P, 0);

  auto ready = [&](int i) {
    if (running[i] || ptr[i] >= seq[i].size()) return false;
    const Task& t = seq[i][ptr[i]];
    if (!t.backward) return i == 0 || static_cast<bool>(f_done[i - 1][t.mb]);
    if (!f_done[i][t.mb]) return false;
    return i == P - 1 || static_cast<bool>(b_done[i + 1][t.mb]);
  };

  auto try_start = [&](int i, double now) {
    if (!ready(i)) return;
    const Task& t = seq[i][ptr[i]];
    running[i] = 1;
    if (!t.backward) {
      ++inflight[i];
      out.peak_inflight[i] = std::max(out.peak_inflight[i], inflight[i]);
    }
    const double dur = t.backward ? dur_b[i] : dur_f[i];
    out.busy[i] += dur;
    heap.push({now + dur, 0, seq_id++, i});
  };

  for (int i = 0; i < P; ++i) try_start(i, 0.0);

  double now = 0.0;
  while (!heap.empty()) {
    const Ev ev = heap.top();
    heap.pop();
    now = ev.t;
    const int i = ev.stage;
    const Task& t = seq[i][ptr[i]];
    running[i] = 0;
    if (t.backward) {
      b_done[i][t.mb] = 1;
      --inflight[i];
    } else {
      f_done[i][t.mb] = 1;
    }
    ++ptr[i];
    try_start(i, now);
    if (i + 1 < P) try_start(i + 1, now);
    if (i > 0) try_start(i - 1, now);
  }
  out.makespan = now;
  out.bubble.assign(P, 0.0);
  for (int i = 0; i < P; ++i)
    out.bubble[i] = out.makespan > 0 ? 1.0 - out.busy[i] / out.makespan : 0.0;
  return out;
}

class Simulation {
 public:
  Simulation(const RunConfig& cfg, const std::vector<ElasticEvent>& trace, Policy policy)
      : cfg_(cfg), trace_(trace), policy_(policy) {}

  SimReport run();

 private:
  const RunConfig& cfg_;
  std::vector<ElasticEvent> trace_;
  Policy policy_;

  ClusterState cluster_;
  PlanState plan_;
  std::set<Link> link_pool_;
  std::map<DeviceId, std::pair<int, int>> position_;  // device -> (stage, column)
  std::vector<int> base_width_;                       // reroute's reference widths
  double now_ = 0.0;
  double pending_pause_ = 0.0;
  SimReport rep_;

  std::vector<std::vector<double>> params_;  // toy model

  int num_stages() const { return cfg_.pp; }
  int num_columns() const { return cfg_.dp; }

  std::vector<int> survivors_of_stage(int stage) const;
  double stage_slow(int stage) const;
  double stage_cost(const std::vector<StagePlan>& stages, int stage, int layers,
                    double freq_mhz) const;
  LayerAssignment balanced_partition(const std::vector<StagePlan>& stages) const;
  double fluid_target(const std::vector<StagePlan>& stages) const;
  void apply_dvfs(std::vector<StagePlan>& stages, const LayerAssignment& asg);
  double plan_objective(const std::vector<StagePlan>& stages,
                        const LayerAssignment& asg) const;

  std::vector<CommGroup> groups_with(const std::set<DeviceId>& extra) const;
  void rebuild_link_pool();

  void initial_plan();
  MttrEvent recover(const ElasticEvent& ev, int step);
  MttrEvent recover_elaswave(const ElasticEvent& ev, int step);
  MttrEvent recover_reroute(const ElasticEvent& ev, int step);
  MttrEvent recover_replica_drop(const ElasticEvent& ev, int step);
  void refill_from_pool();
  void drop_to_uniform(std::vector<StagePlan>& stages, int& mb_units) const;
  double comm_edit_time(const std::vector<int>& affected, EventKind kind);
  double remap_time(const std::vector<StagePlan>& old_stages,
                    const std::vector<StagePlan>& new_stages) const;
  double migrate(const LayerAssignment& old_asg, const LayerAssignment& new_asg,
                 const std::vector<StagePlan>& new_stages);

  StepSim run_step_sim() const;
  void run_toy_step(int step);
  void account_memory();
  double snapshot_delta(double makespan) const;
};

std::vector<int> Simulation::survivors_of_stage(int stage) const {
  std::vector<int> out;
  const auto& row = cluster_.topology.rank_grid[stage - 1];
  for (int c = 0; c < static_cast<int>(row.size()); ++c) {
    const DeviceId d = row[c];
    if (d < 0) continue;
    if (!cluster_.devices.at(d).alive) continue;
    if (plan_.idled.contains(d)) continue;
    out.push_back(c);
  }
  return out;
}

double Simulation::stage_slow(int stage) const {
  double worst = 1.0;
  const auto& row = cluster_.topology.rank_grid[stage - 1];
  for (const DeviceId d : row)
    if (d >= 0 && cluster_.devices.at(d).alive && !plan_.idled.contains(d))
      worst = std::max(worst, cluster_.devices.at(d).slow_factor);
  return worst;
}

double Simulation::stage_cost(const std::vector<StagePlan>& stages, int stage, int layers,
                              double freq_mhz) const {
  const int P = num_stages();
  const StagePlan& sp = stages[stage - 1];
  std::optional<int> r_prev, r_next;
  if (stage > 1) r_prev = std::max(1, stages[stage - 2].width());
  if (stage < P) r_next = std::max(1, stages[stage].width());
  return mini_step_time(cfg_.profile, layers, sp.gating_mbs(), r_prev,
                        std::max(1, sp.width()), r_next, freq_mhz / cfg_.freq_base_mhz,
                        sp.slow_factor) *
         sp.busy_multiplier;
}

LayerAssignment Simulation::balanced_partition(const std::vector<StagePlan>& stages) const {
  const int P = num_stages();
  const std::vector<std::int64_t> caps(P, cfg_.mem_cap_bytes);
  SegCost cost = [this, &stages](int stage, int lo, int hi) {
    return stage_cost(stages, stage, hi - lo + 1, cfg_.freq_base_mhz);
  };
  SegMem mem = [this, &stages, P](int stage, int lo, int hi) {
    const StagePlan& sp = stages[stage - 1];
    return mem_footprint(cfg_.mem, hi - lo + 1, sp.gating_mbs(), stage, P,
                         std::max(1, sp.width()));
  };
  return plan_partition(cfg_.model.layers, P, caps, cost, mem).assignment;
}

// Continuous relaxation of the minimax objective: the smallest T at which the
// fractional layer counts each stage can carry sum to at least L. Stages above
// this bound are residual stragglers (a whole-layer move would overshoot) and
// become DVFS candidates.
double Simulation::fluid_target(const std::vector<StagePlan>& stages) const {
  const int P = num_stages();
  const int L = cfg_.model.layers;
  auto cost_at = [&](int stage, double layers_real) {
    const int lo = std::max(1, static_cast<int>(std::floor(layers_real)));
    const int hi = std::min(L, lo + 1);
    const double frac = layers_real - lo;
    const double c_lo = stage_cost(stages, stage, lo, cfg_.freq_base_mhz);
    if (frac <= 0.0 || hi == lo) return c_lo;
    const double c_hi = stage_cost(stages, stage, hi, cfg_.freq_base_mhz);
    return c_lo + (c_hi - c_lo) * frac;
  };
  auto layers_fitting = [&](int stage, double T) {
    if (cost_at(stage, 1.0) > T) return 0.0;
    double lo = 1.0, hi = L;
    if (cost_at(stage, hi) <= T) return hi;
    for (int it = 0; it < 50; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (cost_at(stage, mid) <= T)
        lo = mid;
      else
        hi = mid;
    }
    return lo;
  };
  double t_lo = 0.0, t_hi = 0.0;
  for (int s = 1; s <= P; ++s) t_hi = std::max(t_hi, cost_at(s, L));
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (t_lo + t_hi);
    double total = 0.0;
    for (int s = 1; s <= P; ++s) total += layers_fitting(s, mid);
    if (total >= static_cast<double>(L))
      t_hi = mid;
    else
      t_lo = mid;
  }
  return t_hi;
}

void Simulation::apply_dvfs(std::vector<StagePlan>& stages, const LayerAssignment& asg) {
  const double t_star = fluid_target(stages);
  const double eps = std::max(1e-9, cfg_.dvfs_epsilon_frac * t_star);
  for (int s = 1; s <= num_stages(); ++s) {
    StagePlan& sp = stages[s - 1];
    sp.freq_mhz = cfg_.freq_base_mhz;
    const int layers = asg.layer_count(s);
    const double cur = stage_cost(stages, s, layers, cfg_.freq_base_mhz);
    if (cur <= t_star + eps) continue;
    DvfsQuery q;
    q.f_cur_mhz = cfg_.freq_base_mhz;
    q.f_max_mhz = cfg_.freq_max_mhz;
    q.t_star_s = t_star;
    q.epsilon_s = eps;
    q.delta_f_min_mhz = cfg_.dvfs_delta_f_mhz;
    q.window_w = cfg_.dvfs_window;
    const DvfsResult r =
        plan_frequency(q, [&](double f) { return stage_cost(stages, s, layers, f); });
    sp.freq_mhz = r.f_star_mhz;  // f_max still helps when unachievable
  }
}

double Simulation::plan_objective(const std::vector<StagePlan>& stages,
                                  const LayerAssignment& asg) const {
  double worst = 0.0;
  for (int s = 1; s <= num_stages(); ++s)
    worst = std::max(
        worst, stage_cost(stages, s, asg.layer_count(s), stages[s - 1].freq_mhz));
  return worst;
}

std::vector<CommGroup> Simulation::groups_with(const std::set<DeviceId>& extra) const {
  std::vector<CommGroup> groups;
  const int P = num_stages();
  std::vector<std::vector<DeviceId>> dp_members(P);
  std::vector<std::vector<std::pair<int, DeviceId>>> col_members(num_columns());
  auto add = [&](DeviceId d, int stage, int col) {
    dp_members[stage - 1].push_back(d);
    col_members[col].push_back({stage, d});
  };
  for (int s = 1; s <= P; ++s) {
    const auto& row = cluster_.topology.rank_grid[s - 1];
    for (int c = 0; c < static_cast<int>(row.size()); ++c)
      if (row[c] >= 0 && cluster_.devices.at(row[c]).alive) add(row[c], s, c);
  }
  for (const DeviceId d : extra) {
    const auto it = position_.find(d);
    if (it != position_.end()) add(d, it->second.first, it->second.second);
  }
  for (int s = 1; s <= P; ++s) {
    CommGroup g;
    g.id = "dp-stage-" + std::to_string(s);
    g.topo = GroupTopology::Mesh;
    g.members = dp_members[s - 1];
    std::sort(g.members.begin(), g.members.end());
    g.members.erase(std::unique(g.members.begin(), g.members.end()), g.members.end());
    groups.push_back(std::move(g));
  }
  for (int c = 0; c < num_columns(); ++c) {
    auto& mem = col_members[c];
    if (mem.empty()) continue;
    std::sort(mem.begin(), mem.end());
    mem.erase(std::unique(mem.begin(), mem.end()), mem.end());
    CommGroup g;
    g.id = "pp-col-" + std::to_string(c);
    g.topo = GroupTopology::Ring;
    for (const auto& [stage, d] : mem) g.members.push_back(d);
    groups.push_back(std::move(g));
  }
  return groups;
}

void Simulation::rebuild_link_pool() {
  link_pool_.clear();
  for (const CommGroup& g : groups_with({}))
    for (const Link& l : g.required_links()) link_pool_.insert(l);
}

void Simulation::initial_plan() {
  cluster_ = make_uniform_cluster(cfg_.pp, cfg_.dp, cfg_.mem_cap_bytes,
                                  static_cast<int>(cfg_.freq_base_mhz),
                                  static_cast<int>(cfg_.freq_max_mhz),
                                  cfg_.devices_per_node, cfg_.tp);
  base_width_.assign(num_stages(), cfg_.dp);
  position_.clear();
  for (int s = 1; s <= num_stages(); ++s)
    for (int c = 0; c < num_columns(); ++c)
      position_[cluster_.topology.rank_grid[s - 1][c]] = {s, c};

  plan_.stages.assign(num_stages(), {});
  std::vector<int> all_slots(num_columns());
  for (int c = 0; c < num_columns(); ++c) all_slots[c] = c;
  for (int s = 1; s <= num_stages(); ++s) {
    StagePlan sp;
    sp.mb = make_even_assignment(all_slots, cfg_.microbatch_size,
                                 cfg_.microbatches_per_slot());
    sp.freq_mhz = cfg_.freq_base_mhz;
    plan_.stages[s - 1] = sp;
  }
  plan_.mb_units = cfg_.microbatches_per_slot();
  plan_.assignment = balanced_partition(plan_.stages);
  for (int s = 1; s <= num_stages(); ++s)
    plan_.stages[s - 1].layers = plan_.assignment.layer_count(s);
  plan_.rng_map = make_stream_map(cfg_.seed, num_columns(), num_stages());
  rebuild_link_pool();

  if (cfg_.toy.enabled) {
    params_.assign(cfg_.model.layers, std::vector<double>(cfg_.toy.params_per_layer));
    for (int l = 0; l < cfg_.model.layers; ++l)
      for (int k = 0; k < cfg_.toy.params_per_layer; ++k)
        params_[l][k] = 0.5 + 0.25 * l - 0.125 * k;
  }
}

double Simulation::comm_edit_time(const std::vector<int>& affected, EventKind kind) {
  if (affected.empty()) return 0.0;
  ElasticEvent ev;
  ev.kind = kind;
  ev.targets = affected;
  // for departures the groups must still contain the leaving members
  std::set<DeviceId> extra;
  if (kind != EventKind::ScaleOut)
    extra.insert(affected.begin(), affected.end());
  const auto groups = groups_with(extra);
  EditPlan plan = plan_edit(groups, ev, link_pool_);
  for (const Link& l : plan.links_to_remove) link_pool_.erase(l);
  for (const Link& l : plan.links_to_add) link_pool_.insert(l);
  return estimate_recovery_time(plan, cfg_.comm);
}

double Simulation::remap_time(const std::vector<StagePlan>& old_stages,
                              const std::vector<StagePlan>& new_stages) const {
  double worst = 0.0;
  for (int s = 1; s <= num_stages(); ++s) {
    const auto& old_slots = old_stages[s - 1].mb.slots;
    const auto& new_slots = new_stages[s - 1].mb.slots;
    if (old_slots == new_slots) continue;
    const std::int64_t opt_total =
        static_cast<std::int64_t>(old_stages[s - 1].layers) *
        cfg_.mem.bytes_optstate_per_layer;
    if (opt_total <= 0 || old_slots.empty() || new_slots.empty()) continue;
    PartitionLayout src = contiguous_layout(old_slots, opt_total);
    PartitionLayout dst = contiguous_layout(new_slots, opt_total);
    std::set<int> failed;
    for (int c : old_slots)
      if (std::find(new_slots.begin(), new_slots.end(), c) == new_slots.end())
        failed.insert(c);
    // new arrivals owning bytes they never held count as ownership changes
    SnapshotRing ring;
    ring.members = old_slots;
    const TransferPlan plan = overlap_matrix(src, dst, failed, &ring);
    std::map<std::pair<int, int>, std::int64_t> lanes;
    for (const TransferEntry& e : plan.entries)
      lanes[{e.src_rank, e.dst_rank}] += e.iv.size();
    double stage_time = 0.0;
    for (const auto& [lane, bytes] : lanes)
      stage_time = std::max(
          stage_time, static_cast<double>(bytes) / cfg_.profile.base_link_bw_bytes_per_s);
    worst = std::max(worst, stage_time);
  }
  return worst;
}

double Simulation::migrate(const LayerAssignment& old_asg, const LayerAssignment& new_asg,
                           const std::vector<StagePlan>& new_stages) {
  const auto moves = diff_assignments(old_asg, new_asg);
  double stall = 0.0;
  for (const LayerMove& mv : moves) {
    const StagePlan& dst = new_stages[mv.dst_stage - 1];
    MigrationContext ctx;
    ctx.param_bytes = cfg_.model.param_bytes_per_layer;
    ctx.grad_bytes = cfg_.model.grad_bytes_per_layer;
    ctx.link_bw_bytes_per_s = cfg_.profile.base_link_bw_bytes_per_s;
    ctx.microbatch_slot_s =
        stage_cost(new_stages, mv.dst_stage, new_asg.layer_count(mv.dst_stage), dst.freq_mhz);
    ctx.num_microbatches = plan_.mb_units;
    const std::int64_t footprint =
        mem_footprint(cfg_.mem, new_asg.layer_count(mv.dst_stage), dst.gating_mbs(),
                      mv.dst_stage, num_stages(), std::max(1, dst.width()));
    ctx.target_headroom_bytes = cfg_.mem_cap_bytes - footprint + ctx.param_bytes;
    ctx.fixed_overhead_s = cfg_.migration_fixed_s;

    MigrationSchedule sched;
    try {
      sched = plan_layer_migration(mv, cfg_.migration_mode, ctx);
    } catch (const InsufficientTargetMemory&) {
      sched = plan_layer_migration(mv, MigrationMode::Blocking, ctx);
    }

    const int src_width = std::max(1, new_stages[mv.src_stage - 1].width());
    const int dst_width = std::max(1, dst.width());
    double opt_time = 0.0;
    const std::int64_t opt_bytes = cfg_.mem.bytes_optstate_per_layer;
    if (opt_bytes > 0) {
      if (src_width == dst_width) {
        ZeroLayout layout;
        layout.kind = cfg_.zero_kind;
        layout.dp_degree = src_width;
        layout.layer_bytes.assign(std::max(1, old_asg.layer_count(mv.src_stage)), opt_bytes);
        const auto zplan = plan_zero_migration(
            static_cast<int>(layout.layer_bytes.size()) - 1, layout, dst_width);
        opt_time = static_cast<double>(zplan.total_bytes) /
                   (src_width * cfg_.profile.base_link_bw_bytes_per_s);
      } else {
        // unequal widths route through the overlap-matrix remap
        opt_time = static_cast<double>(opt_bytes) /
                   (dst_width * cfg_.profile.base_link_bw_bytes_per_s);
      }
    }
    stall += sched.total_time_s + opt_time;
  }
  return stall;
}

void Simulation::refill_from_pool() {
  while (!cluster_.free_pool.empty()) {
    int best_stage = -1, best_deficit = 0;
    for (int s = 1; s <= num_stages(); ++s) {
      const int deficit =
          base_width_[s - 1] - static_cast<int>(survivors_of_stage(s).size());
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best_stage = s;
      }
    }
    if (best_stage < 0) break;
    auto& row = cluster_.topology.rank_grid[best_stage - 1];
    int cell = -1;
    for (int c = 0; c < static_cast<int>(row.size()); ++c)
      if (row[c] < 0 || !cluster_.devices.at(row[c]).alive) {
        cell = c;
        break;
      }
    if (cell < 0) break;
    const DeviceId d = cluster_.free_pool.front();
    cluster_.free_pool.erase(cluster_.free_pool.begin());
    row[cell] = d;
    position_[d] = {best_stage, cell};
  }
}

void Simulation::drop_to_uniform(std::vector<StagePlan>& stages, int& mb_units) const {
  std::vector<int> full_columns;
  for (int c = 0; c < num_columns(); ++c) {
    bool full = true;
    for (int s = 1; s <= num_stages() && full; ++s) {
      const DeviceId d = cluster_.topology.rank_grid[s - 1][c];
      full = d >= 0 && cluster_.devices.at(d).alive && !plan_.idled.contains(d);
    }
    if (full) full_columns.push_back(c);
  }
  if (full_columns.empty()) throw EmptyStage("no intact replica column survives");

  const std::int64_t total_units = cfg_.effective_global_batch() / cfg_.microbatch_size;
  const int w = static_cast<int>(full_columns.size());
  mb_units = static_cast<int>((total_units + w - 1) / w);  // gating column count

  for (int s = 1; s <= num_stages(); ++s) {
    StagePlan& sp = stages[s - 1];
    sp.mb = make_even_assignment(full_columns, cfg_.microbatch_size, mb_units);
    sp.busy_multiplier = 1.0;
    sp.deferred_bytes = 0;
    sp.freq_mhz = cfg_.freq_base_mhz;
  }
}

MttrEvent Simulation::recover(const ElasticEvent& ev, int step) {
  switch (policy_) {
    case Policy::ElasWave: return recover_elaswave(ev, step);
    case Policy::Reroute: return recover_reroute(ev, step);
    case Policy::ReplicaDrop: return recover_replica_drop(ev, step);
  }
  return {};
}

MttrEvent Simulation::recover_elaswave(const ElasticEvent& ev, int step) {
  MttrEvent m;
  m.step = step;
  m.kind = to_string(ev.kind);
  m.detect_s = cfg_.detect_s;
  m.other_s = cfg_.plan_other_s;

  const auto old_stages = plan_.stages;
  const auto old_asg = plan_.assignment;

  cluster_ = apply_event(cluster_, ev);
  if (ev.kind == EventKind::ScaleOut) refill_from_pool();

  // candidate A: per-stage micro-batch reshard + minimax repartition + DVFS
  std::vector<StagePlan> stages_a = plan_.stages;
  bool a_ok = true;
  LayerAssignment asg_a;
  double est_a = std::numeric_limits<double>::infinity();
  try {
    for (int s = 1; s <= num_stages(); ++s) {
      StagePlan& sp = stages_a[s - 1];
      sp.slow_factor = stage_slow(s);
      sp.freq_mhz = cfg_.freq_base_mhz;
      sp.busy_multiplier = 1.0;
      sp.deferred_bytes = 0;
      sp.mb = reshard_microbatches(sp.mb, survivors_of_stage(s));
    }
    asg_a = balanced_partition(stages_a);
    for (int s = 1; s <= num_stages(); ++s)
      stages_a[s - 1].layers = asg_a.layer_count(s);
    apply_dvfs(stages_a, asg_a);
    est_a = (plan_.mb_units + num_stages() - 1) * plan_objective(stages_a, asg_a);
  } catch (const std::exception&) {
    a_ok = false;
  }

  // candidate B: retire partial columns, uniform width over intact replicas
  std::vector<StagePlan> stages_b = plan_.stages;
  int units_b = plan_.mb_units;
  bool b_ok = true;
  LayerAssignment asg_b;
  double est_b = std::numeric_limits<double>::infinity();
  try {
    for (int s = 1; s <= num_stages(); ++s) {
      stages_b[s - 1].slow_factor = stage_slow(s);
      stages_b[s - 1].freq_mhz = cfg_.freq_base_mhz;
      stages_b[s - 1].busy_multiplier = 1.0;
      stages_b[s - 1].deferred_bytes = 0;
    }
    drop_to_uniform(stages_b, units_b);
    asg_b = balanced_partition(stages_b);
    for (int s = 1; s <= num_stages(); ++s)
      stages_b[s - 1].layers = asg_b.layer_count(s);
    est_b = (units_b + num_stages() - 1) * plan_objective(stages_b, asg_b);
  } catch (const std::exception&) {
    b_ok = false;
  }

  if (!a_ok && !b_ok) throw EmptyStage("no feasible recovery plan");

  const bool use_a = a_ok && (!b_ok || est_a <= est_b);
  std::vector<StagePlan> new_stages = use_a ? stages_a : stages_b;
  LayerAssignment new_asg = use_a ? asg_a : asg_b;
  const int new_units = use_a ? plan_.mb_units : units_b;

  std::set<int> new_idled = plan_.idled;
  if (!use_a) {
    const std::set<int> kept(new_stages[0].mb.slots.begin(),
                             new_stages[0].mb.slots.end());
    for (int s = 1; s <= num_stages(); ++s) {
      const auto& row = cluster_.topology.rank_grid[s - 1];
      for (int c = 0; c < static_cast<int>(row.size()); ++c)
        if (!kept.contains(c) && row[c] >= 0 && cluster_.devices.at(row[c]).alive)
          new_idled.insert(row[c]);
    }
  }

  // communicator edits: the departed set is the event's targets plus any
  // newly idled units
  if (ev.kind == EventKind::ScaleOut) {
    m.comm_repair_s = comm_edit_time(ev.targets, EventKind::ScaleOut);
  } else {
    std::vector<int> departed = ev.targets;
    for (int d : new_idled)
      if (!plan_.idled.contains(d)) departed.push_back(d);
    std::sort(departed.begin(), departed.end());
    departed.erase(std::unique(departed.begin(), departed.end()), departed.end());
    m.comm_repair_s = comm_edit_time(departed, ev.kind);
  }
  plan_.idled = new_idled;

  m.remap_s = remap_time(old_stages, new_stages);
  m.migration_stall_s = migrate(old_asg, new_asg, new_stages);

  // RNG resharding: migrated layers keep origin-stage streams; reassigned
  // sample offsets must resolve through the new owner's backups
  const auto moves = diff_assignments(old_asg, new_asg);
  std::vector<SampleReassignment> reassigned;
  if (cfg_.toy.enabled && !old_stages.empty()) {
    const auto& old_mb = old_stages[0].mb;
    const auto& new_mb = new_stages[0].mb;
    const auto old_ranges = old_mb.sample_ranges(0, 0);
    const auto new_ranges = new_mb.sample_ranges(0, 0);
    auto slot_at = [](const MicrobatchAssignment& a,
                      const std::vector<std::pair<std::int64_t, std::int64_t>>& rs,
                      std::int64_t off) {
      for (size_t i = 0; i < rs.size(); ++i)
        if (off >= rs[i].first && off < rs[i].second) return a.slots[i];
      return -1;
    };
    const int total = std::min(old_mb.samples_per_microbatch(),
                               new_mb.samples_per_microbatch());
    for (int off = 0; off < total; ++off) {
      const int so = slot_at(old_mb, old_ranges, off);
      const int sn = slot_at(new_mb, new_ranges, off);
      if (so != sn && so >= 0 && sn >= 0)
        reassigned.push_back({static_cast<std::int64_t>(off), so, sn});
    }
  }
  plan_.rng_map = reshard_rng(plan_.rng_map, moves, reassigned);

  plan_.stages = std::move(new_stages);
  plan_.assignment = std::move(new_asg);
  plan_.mb_units = new_units;
  return m;
}

MttrEvent Simulation::recover_reroute(const ElasticEvent& ev, int step) {
  MttrEvent m;
  m.step = step;
  m.kind = to_string(ev.kind);
  m.detect_s = cfg_.detect_s;
  m.other_s = cfg_.reroute_fixed_s;

  cluster_ = apply_event(cluster_, ev);
  if (ev.kind == EventKind::ScaleOut) refill_from_pool();
  for (int s = 1; s <= num_stages(); ++s)
    plan_.stages[s - 1].slow_factor = stage_slow(s);
  if (ev.kind == EventKind::FailSlow) return m;

  // whole-replica losses degenerate to the replica-drop behavior
  bool whole_columns = true;
  std::set<int> first_lost;
  for (int s = 1; s <= num_stages() && whole_columns; ++s) {
    const auto survivors = survivors_of_stage(s);
    std::set<int> lost;
    for (int c = 0; c < num_columns(); ++c)
      if (std::find(survivors.begin(), survivors.end(), c) == survivors.end())
        lost.insert(c);
    if (s == 1)
      first_lost = lost;
    else if (lost != first_lost)
      whole_columns = false;
  }

  if (whole_columns) {
    drop_to_uniform(plan_.stages, plan_.mb_units);
    for (int s = 1; s <= num_stages(); ++s) {
      base_width_[s - 1] = plan_.stages[s - 1].width();
      plan_.stages[s - 1].layers = plan_.assignment.layer_count(s);
    }
    return m;
  }

  int affected_stages = 0;
  for (int s = 1; s <= num_stages(); ++s) {
    const int lost =
        base_width_[s - 1] - static_cast<int>(survivors_of_stage(s).size());
    if (lost > 0) ++affected_stages;
  }
  for (int s = 1; s <= num_stages(); ++s) {
    StagePlan& sp = plan_.stages[s - 1];
    const auto survivors = survivors_of_stage(s);
    if (survivors.empty()) throw EmptyStage("rerouting cannot fill an empty stage");
    const int lost = base_width_[s - 1] - static_cast<int>(survivors.size());
    sp.mb.slots = survivors;
    sp.mb.per_slot_mbs.assign(survivors.size(), cfg_.microbatch_size);
    if (lost <= 0) {
      sp.busy_multiplier = 1.0;
      sp.deferred_bytes = 0;
      continue;
    }
    const double ratio = static_cast<double>(lost) / static_cast<double>(survivors.size());
    sp.busy_multiplier = 1.0 + ratio * (1.0 + cfg_.reroute_overhead_factor);
    // deferred weight-gradient activations linger; queues deepen as more
    // stages straggle
    const std::int64_t rerouted = static_cast<std::int64_t>(
        std::ceil(static_cast<double>(plan_.mb_units) * ratio));
    sp.deferred_bytes = static_cast<std::int64_t>(
        static_cast<double>(rerouted) * cfg_.reroute_deferred_retention *
        affected_stages * sp.layers * cfg_.microbatch_size *
        static_cast<double>(cfg_.mem.bytes_act_per_layer_per_sample));
  }
  return m;
}

MttrEvent Simulation::recover_replica_drop(const ElasticEvent& ev, int step) {
  MttrEvent m;
  m.step = step;
  m.kind = to_string(ev.kind);
  m.detect_s = cfg_.detect_s;

  cluster_ = apply_event(cluster_, ev);
  for (int s = 1; s <= num_stages(); ++s)
    plan_.stages[s - 1].slow_factor = stage_slow(s);
  if (ev.kind == EventKind::FailSlow) return m;  // replicas only react to losses
  if (ev.kind == EventKind::ScaleOut) refill_from_pool();

  drop_to_uniform(plan_.stages, plan_.mb_units);
  for (int s = 1; s <= num_stages(); ++s) {
    base_width_[s - 1] = plan_.stages[s - 1].width();
    plan_.stages[s - 1].layers = plan_.assignment.layer_count(s);
  }
  const std::set<int> kept(plan_.stages[0].mb.slots.begin(),
                           plan_.stages[0].mb.slots.end());
  for (int s = 1; s <= num_stages(); ++s) {
    const auto& row = cluster_.topology.rank_grid[s - 1];
    for (int c = 0; c < static_cast<int>(row.size()); ++c)
      if (!kept.contains(c) && row[c] >= 0 && cluster_.devices.at(row[c]).alive)
        plan_.idled.insert(row[c]);
  }

  // full communicator rebuild plus optimizer reload from host snapshots
  const RebuildEstimate full = estimate_full_rebuild(groups_with({}), ev, cfg_.comm);
  m.comm_repair_s = full.time_s;
  rebuild_link_pool();

  std::int64_t worst_shard = 0;
  for (int s = 1; s <= num_stages(); ++s) {
    const int width = std::max(1, plan_.stages[s - 1].width());
    const std::int64_t shard = static_cast<std::int64_t>(plan_.stages[s - 1].layers) *
                               cfg_.mem.bytes_optstate_per_layer / width;
    worst_shard = std::max(worst_shard, shard);
  }
  m.remap_s = static_cast<double>(worst_shard) / cfg_.d2h_snapshot_bw;
  m.other_s = cfg_.restart_other_s;
  return m;
}

StepSim Simulation::run_step_sim() const {
  const int P = num_stages();
  std::vector<double> dur_f(P), dur_b(P);
  for (int s = 1; s <= P; ++s) {
    const StagePlan& sp = plan_.stages[s - 1];
    const int layers = plan_.assignment.layer_count(s);
    const double scale = sp.slow_factor / (sp.freq_mhz / cfg_.freq_base_mhz);
    const int mgate = sp.gating_mbs();
    const double tf = cfg_.profile.t_fwd(layers, mgate) * scale;
    const double tb = cfg_.profile.t_bwd(layers, mgate) * scale;
    double f = tf, b = tb;
    if (s < P)
      f += std::max(0.0, cfg_.profile.t_p2p(mgate, std::max(1, sp.width()),
                                            std::max(1, plan_.stages[s].width())) -
                             cfg_.profile.sigma_f * tf);
    if (s > 1)
      b += std::max(0.0, cfg_.profile.t_p2p(mgate, std::max(1, plan_.stages[s - 2].width()),
                                            std::max(1, sp.width())) -
                             cfg_.profile.sigma_b * tb);
    dur_f[s - 1] = f * sp.busy_multiplier;
    dur_b[s - 1] = b * sp.busy_multiplier;
  }
  return simulate_step(P, plan_.mb_units, dur_f, dur_b);
}

double Simulation::snapshot_delta(double makespan) const {
  std::int64_t worst_grad_shard = 0;
  std::int64_t worst_opt_shard = 0;
  for (int s = 1; s <= num_stages(); ++s) {
    const int width = std::max(1, plan_.stages[s - 1].width());
    const std::int64_t layers = plan_.assignment.layer_count(s);
    worst_grad_shard =
        std::max(worst_grad_shard, layers * cfg_.mem.bytes_grad_per_layer / width);
    worst_opt_shard =
        std::max(worst_opt_shard, layers * cfg_.mem.bytes_optstate_per_layer / width);
  }
  SnapshotTimeline t;
  t.d2d_grad_s = static_cast<double>(worst_grad_shard) / cfg_.d2d_snapshot_bw;
  t.d2h_grad_s = static_cast<double>(worst_grad_shard) / cfg_.d2h_snapshot_bw;
  t.host_update_s = static_cast<double>(worst_opt_shard) / cfg_.host_update_bw;
  t.step_window_s = kOptStepWindowFrac * makespan;
  t.allgather_window_s = kAllGatherWindowFrac * makespan;
  t.next_iter_window_s = makespan;
  return snapshot_overhead_s(t);
}

void Simulation::account_memory() {
  const int P = num_stages();
  if (rep_.peak_mem_bytes.empty()) rep_.peak_mem_bytes.assign(P, 0);
  for (int s = 1; s <= P; ++s) {
    const StagePlan& sp = plan_.stages[s - 1];
    std::int64_t fp = mem_footprint(cfg_.mem, plan_.assignment.layer_count(s),
                                    sp.gating_mbs(), s, P, std::max(1, sp.width()));
    fp += sp.deferred_bytes;
    rep_.peak_mem_bytes[s - 1] = std::max(rep_.peak_mem_bytes[s - 1], fp);
    if (fp > cfg_.mem_cap_bytes) rep_.oom_flagged = true;
  }
}

void Simulation::run_toy_step(int step) {
  const std::int64_t B = cfg_.effective_global_batch();
  const std::int64_t step_base = static_cast<std::int64_t>(step) * B;
  const int L = cfg_.model.layers;
  const int K = cfg_.toy.params_per_layer;

  std::vector<std::vector<double>> grad_sum(L, std::vector<double>(K, 0.0));

  for (int s = 1; s <= num_stages(); ++s) {
    const auto [lo, hi] = plan_.assignment.layers_of_stage(s);
    const StagePlan& sp = plan_.stages[s - 1];
    const int per_mb = sp.mb.samples_per_microbatch();
    for (int mb = 0; mb < plan_.mb_units; ++mb) {
      const auto ranges = sp.mb.sample_ranges(step_base, mb);
      for (size_t slot_idx = 0; slot_idx < ranges.size(); ++slot_idx) {
        const int slot = sp.mb.slots[slot_idx];
        for (std::int64_t sample = ranges[slot_idx].first;
             sample < ranges[slot_idx].second; ++sample) {
          if (sample >= step_base + B) continue;  // gating column tail
          for (int layer = lo; layer <= hi; ++layer) {
            (void)resolve_stream(plan_.rng_map, (sample - step_base) % per_mb, slot,
                                 layer, s);  // resolution must be total
            RngKey key{cfg_.seed, static_cast<std::uint64_t>(sample),
                       static_cast<std::uint32_t>(layer), 0};
            const auto u = draw(key, K);
            const std::string tkey =
                std::to_string(sample) + "/" + std::to_string(layer) + "/0";
            rep_.rng_transcript[tkey] = u;
            for (double v : u)
              rep_.rng_transcript_hash = fnv1a_double(rep_.rng_transcript_hash, v);
            for (int k = 0; k < K; ++k) {
              const double mask = u[k] < cfg_.toy.keep_probability
                                      ? 0.0
                                      : 1.0 / cfg_.toy.keep_probability;
              const double base = static_cast<double>(
                  ((sample + 1) * (layer + 1) * (k + 1)) % 7 - 3);
              const double g = base * mask;
              grad_sum[layer - 1][k] += g;  // ascending sample order: flat fold
              rep_.grad_transcript_hash = fnv1a_double(rep_.grad_transcript_hash, g);
            }
          }
        }
      }
    }
  }

  if (cfg_.toy.inject_wrong_weights) {
    // test fixture: mis-scale stage-1 layers by the surviving slot fraction
    const auto [lo, hi] = plan_.assignment.layers_of_stage(1);
    const double bad = static_cast<double>(plan_.stages[0].width()) /
                       static_cast<double>(cfg_.dp);
    for (int layer = lo; layer <= hi; ++layer)
      for (double& g : grad_sum[layer - 1]) g *= bad;
  }

  const double inv_b = 1.0 / static_cast<double>(B);
  for (int l = 0; l < L; ++l)
    for (int k = 0; k < K; ++k)
      params_[l][k] -= cfg_.toy.learning_rate * (grad_sum[l][k] * inv_b);
}

SimReport Simulation::run() {
  rep_ = SimReport{};
  rep_.preset = cfg_.preset;
  rep_.policy = to_string(policy_);
  rep_.seed = cfg_.seed;
  rep_.scale_factor = cfg_.scale_factor;
  rep_.rng_transcript_hash = fnv1a_init();
  rep_.grad_transcript_hash = fnv1a_init();

  initial_plan();

  size_t next_event = 0;
  int step = 0;
  while (step < cfg_.steps) {
    double pause = pending_pause_;
    pending_pause_ = 0.0;
    double lost = 0.0;

    StepSim sim = run_step_sim();
    while (next_event < trace_.size() &&
           trace_[next_event].time_s < now_ + pause + lost + sim.makespan) {
      const ElasticEvent ev = trace_[next_event];
      ++next_event;
      const bool abort_step =
          ev.kind == EventKind::FailStop || ev.kind == EventKind::ScaleIn;
      if (abort_step) {
        // partial work is discarded; the step re-runs on the new plan
        lost += std::max(0.0, ev.time_s - (now_ + pause + lost));
        MttrEvent m = recover(ev, step);
        m.t_event_s = ev.time_s;
        m.lost_work_s = lost;
        pause += m.total_s();
        rep_.mttr.push_back(m);
        sim = run_step_sim();
      } else {
        // the running step completes; the change lands at the boundary
        MttrEvent m = recover(ev, step);
        m.t_event_s = ev.time_s;
        pending_pause_ += m.total_s();
        rep_.mttr.push_back(m);
      }
    }

    const double snap = snapshot_delta(sim.makespan);
    const double step_time = pause + lost + sim.makespan + snap;
    now_ += step_time;

    rep_.step_time_s.push_back(step_time);
    rep_.samples_per_step.push_back(cfg_.effective_global_batch());
    rep_.samples_per_s.push_back(
        static_cast<double>(cfg_.effective_global_batch()) / step_time);
    rep_.active_devices.push_back(alive_device_count(cluster_));
    rep_.bubble_ratio = sim.bubble;
    if (rep_.peak_inflight_microbatches.empty())
      rep_.peak_inflight_microbatches = sim.peak_inflight;
    for (size_t i = 0; i < sim.peak_inflight.size(); ++i)
      rep_.peak_inflight_microbatches[i] =
          std::max(rep_.peak_inflight_microbatches[i], sim.peak_inflight[i]);
    rep_.snapshot_overhead_s = snap;
    rep_.snapshot_overhead_fraction = snap / step_time;
    account_memory();

    if (cfg_.toy.enabled) run_toy_step(step);
    ++step;
  }

  if (cfg_.toy.enabled) rep_.final_params = params_;

  if (!rep_.mttr.empty()) {
    rep_.lse_raw =
        compute_lse(rep_, rep_.active_devices.front(), rep_.active_devices.back());
    rep_.lse = std::clamp(rep_.lse_raw, 0.0, 1.0 + 1e-9);
  } else {
    rep_.lse_raw = 1.0;
    rep_.lse = 1.0;
  }
  return rep_;
}

}  // namespace

SimReport run(const RunConfig& cfg, const std::vector<ElasticEvent>& trace, Policy policy) {
  cfg.validate();
  std::vector<ElasticEvent> sorted = trace;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ElasticEvent& a, const ElasticEvent& b) {
                     return a.time_s < b.time_s;
                   });
  Simulation sim(cfg, sorted, policy);
  return sim.run();
}

double compute_lse(const SimReport& report, int before_devices, int after_devices) {
  if (before_devices <= 0 || after_devices <= 0)
    throw std::invalid_argument("device counts must be positive");
  if (report.samples_per_s.empty()) throw NoRecoveryInRun("empty report");
  const double t_before = report.samples_per_s.front();
  const double t_after = report.samples_per_s.back();
  const double device_ratio =
      static_cast<double>(after_devices) / static_cast<double>(before_devices);
  return (t_after / t_before) / device_ratio;
}

const std::vector<MttrEvent>& mttr_breakdown(const SimReport& report) {
  if (report.mttr.empty()) throw NoRecoveryInRun("no recovery occurred in this run");
  return report.mttr;
}

nlohmann::ordered_json report_to_json(const SimReport& r) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["preset"] = r.preset;
  j["policy"] = r.policy;
  j["seed"] = r.seed;
  j["scale_factor"] = r.scale_factor;
  j["step_time_s"] = r.step_time_s;
  j["samples_per_s"] = r.samples_per_s;
  j["samples_per_step"] = r.samples_per_step;
  j["active_devices"] = r.active_devices;
  j["bubble_ratio"] = r.bubble_ratio;
  j["peak_mem_bytes"] = r.peak_mem_bytes;
  j["peak_inflight_microbatches"] = r.peak_inflight_microbatches;
  j["lse"] = r.lse;
  j["lse_raw"] = r.lse_raw;
  j["oom_flagged"] = r.oom_flagged;
  j["snapshot_overhead_s"] = r.snapshot_overhead_s;
  j["snapshot_overhead_fraction"] = r.snapshot_overhead_fraction;
  auto& mt = j["mttr"] = nlohmann::ordered_json::array();
  for (const MttrEvent& m : r.mttr)
    mt.push_back({{"step", m.step},
                  {"t_event_s", m.t_event_s},
                  {"kind", m.kind},
                  {"detect_s", m.detect_s},
                  {"comm_repair_s", m.comm_repair_s},
                  {"remap_s", m.remap_s},
                  {"migration_stall_s", m.migration_stall_s},
                  {"other_s", m.other_s},
                  {"lost_work_s", m.lost_work_s},
                  {"total_s", m.total_s()}});
  j["rng_transcript_hash"] = r.rng_transcript_hash;
  j["grad_transcript_hash"] = r.grad_transcript_hash;
  if (!r.final_params.empty()) j["final_params"] = r.final_params;
  if (!r.rng_transcript.empty()) j["rng_transcript"] = r.rng_transcript;
  return j;
}

std::string summary_csv(const SimReport& r) {
  std::ostringstream out;
  out << "step,time_s,samples_per_s,active_devices,lse_cum\n";
  const double t0 = r.samples_per_s.empty() ? 1.0 : r.samples_per_s.front();
  const int n0 = r.active_devices.empty() ? 1 : r.active_devices.front();
  char buf[160];
  for (size_t i = 0; i < r.step_time_s.size(); ++i) {
    const double lse_cum =
        (r.samples_per_s[i] / t0) /
        (static_cast<double>(r.active_devices[i]) / static_cast<double>(n0));
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%d,%.9g\n", i, r.step_time_s[i],
                  r.samples_per_s[i], r.active_devices[i], lse_cum);
    out << buf;
  }
  return out.str();
}

std::string mttr_csv(const SimReport& r) {
  std::ostringstream out;
  out << "event,step,t_event_s,kind,detect_s,comm_repair_s,remap_s,migration_stall_s,"
         "other_s,lost_work_s,total_s\n";
  char buf[320];
  for (size_t i = 0; i < r.mttr.size(); ++i) {
    const MttrEvent& m = r.mttr[i];
    std::snprintf(buf, sizeof(buf), "%zu,%d,%.9g,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  i, m.step, m.t_event_s, m.kind.c_str(), m.detect_s, m.comm_repair_s,
                  m.remap_s, m.migration_stall_s, m.other_s, m.lost_work_s, m.total_s());
    out << buf;
  }
  return out.str();
}

}  // namespace elaskit
