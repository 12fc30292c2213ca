#include "elaskit/graph_planner.hpp"

#include <algorithm>
#include <limits>

namespace elaskit {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

int LayerAssignment::stage_of_layer(int layer) const {
  for (int s = 1; s <= num_stages; ++s) {
    auto [lo, hi] = layers_of_stage(s);
    if (layer >= lo && layer <= hi) return s;
  }
  throw std::out_of_range("layer " + std::to_string(layer));
}

std::pair<int, int> LayerAssignment::layers_of_stage(int stage) const {
  const int lo = (stage == 1) ? 1 : boundaries[stage - 2] + 1;
  const int hi = (stage == num_stages) ? num_layers : boundaries[stage - 1];
  return {lo, hi};
}

int LayerAssignment::layer_count(int stage) const {
  auto [lo, hi] = layers_of_stage(stage);
  return hi - lo + 1;
}

PartitionResult plan_partition(int L, int P, const std::vector<std::int64_t>& caps,
                               const SegCost& seg_cost, const SegMem& seg_mem) {
  if (P < 1 || L < P)
    throw Infeasible("need L >= P >= 1 (got L=" + std::to_string(L) +
                         ", P=" + std::to_string(P) + ")",
                     P, 0);
  if (static_cast<int>(caps.size()) != P)
    throw std::invalid_argument("caps must have one entry per stage");

  auto fits = [&](int stage, int lo, int hi) {
    return seg_mem(stage, lo, hi) <= caps[stage - 1];
  };

  DpTable dp;
  dp.L = L;
  dp.P = P;
  dp.f.assign(P + 1, std::vector<double>(L + 1, kInf));
  dp.k_star.assign(P + 1, std::vector<int>(L + 1, -1));

  for (int l = 1; l <= L; ++l)
    if (fits(1, 1, l)) dp.f[1][l] = seg_cost(1, 1, l);

  for (int p = 2; p <= P; ++p) {
    for (int l = p; l <= L; ++l) {
      double best = kInf;
      int best_k = -1;
      for (int k = p - 1; k <= l - 1; ++k) {
        if (dp.f[p - 1][k] == kInf) continue;
        if (!fits(p, k + 1, l)) continue;
        const double cand = std::max(dp.f[p - 1][k], seg_cost(p, k + 1, l));
        if (cand < best) {
          best = cand;
          best_k = k;
        }
      }
      dp.f[p][l] = best;
      dp.k_star[p][l] = best_k;
    }
  }

  if (dp.f[P][L] == kInf) {
    // locate the first stage where feasibility dies and its smallest overflow
    int bad_stage = 1;
    std::int64_t overflow = 0;
    for (int p = 1; p <= P; ++p) {
      bool any = false;
      for (int l = p; l <= L && !any; ++l) any = dp.f[p][l] < kInf;
      if (!any) {
        bad_stage = p;
        std::int64_t best_over = std::numeric_limits<std::int64_t>::max();
        for (int l = p; l <= L; ++l) {
          for (int k = p - 1; k <= l - 1; ++k) {
            if (p > 1 && dp.f[p - 1][k] == kInf) continue;
            const int lo = (p == 1) ? 1 : k + 1;
            best_over = std::min(best_over, seg_mem(p, lo, l) - caps[p - 1]);
            if (p == 1) break;
          }
        }
        overflow = best_over == std::numeric_limits<std::int64_t>::max() ? 0 : best_over;
        break;
      }
    }
    throw Infeasible("no memory-feasible partition; tightest stage " +
                         std::to_string(bad_stage) + " over by " +
                         std::to_string(overflow) + " bytes",
                     bad_stage, overflow);
  }

  const double opt = dp.f[P][L];

  // Suffix table g[p][l]: optimal minimax for layers l+1..L over stages
  // p+1..P. Drives the forward reconstruction that yields the
  // lexicographically smallest argmin.
  std::vector<std::vector<double>> g(P + 1, std::vector<double>(L + 1, kInf));
  g[P][L] = 0.0;
  for (int p = P - 1; p >= 0; --p) {
    for (int l = p; l <= L - (P - p); ++l) {
      double best = kInf;
      for (int k = l + 1; k <= L - (P - p - 1); ++k) {
        if (!fits(p + 1, l + 1, k)) continue;
        if (g[p + 1][k] == kInf) continue;
        best = std::min(best, std::max(seg_cost(p + 1, l + 1, k), g[p + 1][k]));
      }
      g[p][l] = best;
    }
  }

  LayerAssignment out;
  out.num_layers = L;
  out.num_stages = P;
  out.objective_s = opt;
  int prev = 0;
  for (int p = 1; p <= P - 1; ++p) {
    for (int b = prev + 1; b <= L - (P - p); ++b) {
      if (!fits(p, prev + 1, b)) continue;
      if (seg_cost(p, prev + 1, b) > opt) continue;
      if (g[p][b] > opt) continue;
      out.boundaries.push_back(b);
      prev = b;
      break;
    }
  }
  if (static_cast<int>(out.boundaries.size()) != P - 1)
    throw std::logic_error("partition reconstruction failed");

  PartitionResult res;
  res.assignment = out;
  res.table = std::move(dp);
  return res;
}

std::vector<LayerMove> diff_assignments(const LayerAssignment& from,
                                        const LayerAssignment& to) {
  if (from.num_layers != to.num_layers)
    throw IncompatibleL("assignments cover different layer ranges: " +
                        std::to_string(from.num_layers) + " vs " +
                        std::to_string(to.num_layers));
  std::vector<LayerMove> moves;
  for (int layer = 1; layer <= from.num_layers; ++layer) {
    const int a = from.stage_of_layer(layer);
    const int b = to.stage_of_layer(layer);
    if (a != b) moves.push_back({layer, a, b});
  }
  return moves;
}

}  // namespace elaskit
