// Trace-driven elastic-training planner and simulator front end.
//
// Run mode (default) replays an elastic-event trace through the simulator and
// writes report.json / summary.csv / mttr.csv into the output directory.
// Verify mode (--verify) runs the consistency suite on a downsized instance.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "elaskit/sim.hpp"
#include "elaskit/verify.hpp"

namespace fs = std::filesystem;

namespace {

int log_level() {
  const char* env = std::getenv("ELASKIT_LOG");
  if (!env) return 1;
  const std::string v(env);
  if (v == "quiet" || v == "0") return 0;
  if (v == "debug" || v == "2") return 2;
  return 1;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

struct RunOutcome {
  elaskit::SimReport report;
  double avg_post_event_sps = 0.0;
};

RunOutcome run_one(const elaskit::RunConfig& cfg,
                   const std::vector<elaskit::ElasticEvent>& trace,
                   elaskit::Policy policy, const fs::path& outdir) {
  RunOutcome o;
  o.report = elaskit::run(cfg, trace, policy);

  fs::create_directories(outdir);
  write_file(outdir / "report.json", elaskit::report_to_json(o.report).dump(2) + "\n");
  write_file(outdir / "summary.csv", elaskit::summary_csv(o.report));
  write_file(outdir / "mttr.csv", elaskit::mttr_csv(o.report));

  // average throughput over the post-event window (whole run when no event)
  size_t first = 0;
  if (!o.report.mttr.empty()) first = static_cast<size_t>(o.report.mttr.front().step);
  double t = 0.0;
  std::int64_t samples = 0;
  for (size_t i = first; i < o.report.step_time_s.size(); ++i) {
    t += o.report.step_time_s[i];
    samples += o.report.samples_per_step[i];
  }
  o.avg_post_event_sps = t > 0 ? static_cast<double>(samples) / t : 0.0;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"elastic-training recovery planner and trace simulator"};

  std::string preset = "llama2-7b";
  std::string config_path;
  std::string trace_path;
  std::string policy_str = "elaswave";
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  int scale_factor = 0;
  int steps = 0;
  bool verify = false;

  app.add_option("--preset", preset, "model preset: llama2-7b|llama2-13b|llama2-34b|toy");
  app.add_option("--config", config_path, "JSON config overriding the preset");
  app.add_option("--trace", trace_path, "JSON-lines elastic event trace");
  app.add_option("--policy", policy_str, "elaswave|reroute|replica_drop|all");
  app.add_option("--seed", seed, "RNG seed");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--scale-factor", scale_factor,
                 "divide micro-batch counts for desk-scale runs");
  app.add_option("--steps", steps, "number of training steps to simulate");
  app.add_flag("--verify", verify, "run the consistency suite and exit");

  CLI11_PARSE(app, argc, argv);

  try {
    elaskit::RunConfig cfg = elaskit::make_preset(preset);
    if (!config_path.empty()) elaskit::apply_config_overrides(cfg, config_path);
    if (scale_factor > 0) cfg.scale_factor = scale_factor;
    if (steps > 0) cfg.steps = steps;
    cfg.seed = seed;
    cfg.validate();

    if (verify) {
      const auto results = elaskit::run_verify_suite(cfg);
      bool all_ok = true;
      for (const auto& r : results) {
        std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name;
        if (!r.passed) std::cout << " — " << r.detail;
        std::cout << "\n";
        all_ok = all_ok && r.passed;
      }
      return all_ok ? 0 : 3;
    }

    std::vector<elaskit::ElasticEvent> trace;
    if (!trace_path.empty()) trace = elaskit::load_trace(trace_path, cfg);

    const fs::path out_root(out_dir);
    int exit_code = 0;

    if (policy_str == "all") {
      struct Row {
        std::string name;
        RunOutcome outcome;
      };
      std::vector<Row> rows;
      for (const auto p :
           {elaskit::Policy::ElasWave, elaskit::Policy::Reroute, elaskit::Policy::ReplicaDrop}) {
        const auto name = elaskit::to_string(p);
        rows.push_back({name, run_one(cfg, trace, p, out_root / name)});
      }
      std::cout << "policy comparison (avg samples/s after first event):\n";
      std::vector<size_t> order = {0, 1, 2};
      std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return rows[a].outcome.avg_post_event_sps > rows[b].outcome.avg_post_event_sps;
      });
      for (size_t idx : order) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "  %-12s %10.3f samples/s  lse=%.3f%s\n",
                      rows[idx].name.c_str(), rows[idx].outcome.avg_post_event_sps,
                      rows[idx].outcome.report.lse,
                      rows[idx].outcome.report.oom_flagged ? "  [OOM]" : "");
        std::cout << buf;
        if (rows[idx].outcome.report.oom_flagged) exit_code = 2;
      }
      return exit_code;
    }

    const auto policy = elaskit::policy_from_string(policy_str);
    if (!policy) {
      std::cerr << "error: unknown policy '" << policy_str << "'\n";
      return 1;
    }
    const RunOutcome o = run_one(cfg, trace, *policy, out_root);
    if (log_level() >= 1) {
      char buf[256];
      std::snprintf(buf, sizeof(buf),
                    "%s %s: %zu steps, %lld samples/step, avg %.3f samples/s, lse=%.3f%s\n",
                    cfg.preset.c_str(), policy_str.c_str(), o.report.step_time_s.size(),
                    static_cast<long long>(
                        o.report.samples_per_step.empty() ? 0 : o.report.samples_per_step[0]),
                    o.avg_post_event_sps, o.report.lse,
                    o.report.oom_flagged ? "  [OOM]" : "");
      std::cout << buf;
    }
    return o.report.oom_flagged ? 2 : 0;
  } catch (const elaskit::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const elaskit::TraceParseError& e) {
    std::cerr << "trace error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
