#include "elaskit/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace elaskit {

BruteForcePartition brute_force_partition(int L, int P,
                                          const std::vector<std::int64_t>& caps,
                                          const SegCost& cost, const SegMem& mem) {
  BruteForcePartition best;
  best.objective = std::numeric_limits<double>::infinity();

  std::vector<int> bounds(P - 1);
  auto evaluate = [&]() {
    double obj = 0.0;
    int prev = 0;
    for (int p = 1; p <= P; ++p) {
      const int hi = (p == P) ? L : bounds[p - 1];
      const int lo = prev + 1;
      if (mem(p, lo, hi) > caps[p - 1]) return;
      obj = std::max(obj, cost(p, lo, hi));
      prev = hi;
    }
    if (obj < best.objective ||
        (obj == best.objective && (!best.feasible || bounds < best.boundaries))) {
      best.feasible = true;
      best.objective = obj;
      best.boundaries = bounds;
    }
  };

  // enumerate 0 < b_1 < ... < b_{P-1} < L
  if (P == 1) {
    evaluate();
    return best;
  }
  std::vector<int> idx(P - 1);
  for (int i = 0; i < P - 1; ++i) idx[i] = i + 1;
  while (true) {
    bounds = idx;
    evaluate();
    int i = P - 2;
    while (i >= 0 && idx[i] == L - (P - 1 - i)) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < P - 1; ++j) idx[j] = idx[j - 1] + 1;
  }
  return best;
}

ConsistencyPair run_consistency_pair(const RunConfig& base, bool inject_wrong_weights) {
  RunConfig cfg = base;
  cfg.toy.enabled = true;

  ConsistencyPair pair;
  pair.still = run(cfg, {}, Policy::ElasWave);

  // lose one unit of stage 1 mid-run: 8 -> 7 slots plus a layer move
  RunConfig elastic = cfg;
  elastic.toy.inject_wrong_weights = inject_wrong_weights;
  ElasticEvent ev;
  ev.kind = EventKind::FailStop;
  ev.targets = {0};  // column 0, stage 1
  double t = 0.0;
  {
    // place the event inside the second step
    SimReport probe = pair.still;
    if (probe.step_time_s.size() >= 2)
      t = probe.step_time_s[0] + 0.5 * probe.step_time_s[1];
  }
  ev.time_s = t;
  pair.elastic = run(elastic, {ev}, Policy::ElasWave);
  return pair;
}

namespace {

std::string first_transcript_diff(const SimReport& a, const SimReport& b) {
  for (const auto& [key, va] : a.rng_transcript) {
    auto it = b.rng_transcript.find(key);
    if (it == b.rng_transcript.end()) return "key " + key + " missing from elastic run";
    if (va != it->second) return "draws differ at (sample/layer/op) = " + key;
  }
  if (a.rng_transcript.size() != b.rng_transcript.size())
    return "transcript sizes differ: " + std::to_string(a.rng_transcript.size()) +
           " vs " + std::to_string(b.rng_transcript.size());
  return "";
}

std::string first_param_diff(const SimReport& a, const SimReport& b) {
  if (a.final_params.size() != b.final_params.size()) return "layer counts differ";
  for (size_t l = 0; l < a.final_params.size(); ++l) {
    for (size_t k = 0; k < a.final_params[l].size(); ++k) {
      if (a.final_params[l][k] != b.final_params[l][k]) {
        std::ostringstream os;
        os.precision(17);
        os << "layer " << (l + 1) << " param " << k << ": " << a.final_params[l][k]
           << " vs " << b.final_params[l][k];
        return os.str();
      }
    }
  }
  return "";
}

}  // namespace

std::vector<VerifyResult> run_verify_suite(const RunConfig& cfg) {
  std::vector<VerifyResult> out;

  RunConfig toy = make_preset("toy");
  toy.seed = cfg.seed;

  {
    VerifyResult r;
    r.name = "rng-transcript-equality";
    try {
      const ConsistencyPair pair = run_consistency_pair(toy, false);
      r.detail = first_transcript_diff(pair.still, pair.elastic);
      r.passed = r.detail.empty() &&
                 pair.still.rng_transcript_hash == pair.elastic.rng_transcript_hash;
      if (!r.passed && r.detail.empty()) r.detail = "transcript hash mismatch";
    } catch (const std::exception& e) {
      r.detail = e.what();
    }
    out.push_back(r);
  }

  {
    VerifyResult r;
    r.name = "gradient-equality";
    try {
      const ConsistencyPair pair =
          run_consistency_pair(toy, cfg.toy.inject_wrong_weights);
      r.detail = first_param_diff(pair.still, pair.elastic);
      r.passed = r.detail.empty();
    } catch (const std::exception& e) {
      r.detail = e.what();
    }
    out.push_back(r);
  }

  {
    VerifyResult r;
    r.name = "partition-oracle-spot-check";
    std::mt19937_64 gen(cfg.seed + 17);
    int failures = 0;
    std::string first_failure;
    for (int trial = 0; trial < 100; ++trial) {
      std::uniform_int_distribution<int> pd(1, 4);
      const int P = pd(gen);
      std::uniform_int_distribution<int> ld(P, 10);
      const int L = ld(gen);
      std::vector<double> layer_cost(L + 1);
      std::uniform_real_distribution<double> cd(0.5, 4.0);
      for (int l = 1; l <= L; ++l) layer_cost[l] = cd(gen);
      std::uniform_int_distribution<std::int64_t> capd(L / P, 2 * L);
      std::vector<std::int64_t> caps(P);
      for (auto& c : caps) c = capd(gen);
      SegCost cost = [&](int, int lo, int hi) {
        double t = 0.0;
        for (int l = lo; l <= hi; ++l) t += layer_cost[l];
        return t;
      };
      SegMem mem = [](int, int lo, int hi) {
        return static_cast<std::int64_t>(hi - lo + 1);
      };
      const BruteForcePartition oracle = brute_force_partition(L, P, caps, cost, mem);
      bool ok = true;
      std::string why;
      try {
        const PartitionResult got = plan_partition(L, P, caps, cost, mem);
        ok = oracle.feasible && got.assignment.objective_s == oracle.objective &&
             got.assignment.boundaries == oracle.boundaries;
        if (!ok) why = "objective or boundaries differ from enumeration";
      } catch (const Infeasible&) {
        ok = !oracle.feasible;
        if (!ok) why = "planner infeasible but enumeration found a partition";
      }
      if (!ok) {
        ++failures;
        if (first_failure.empty()) {
          std::ostringstream os;
          os << why << " (L=" << L << ", P=" << P << ", trial " << trial << ")";
          first_failure = os.str();
        }
      }
    }
    r.passed = failures == 0;
    r.detail = first_failure;
    out.push_back(r);
  }

  return out;
}

}  // namespace elaskit
