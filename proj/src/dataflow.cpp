#include "elaskit/dataflow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace elaskit {

int MicrobatchAssignment::samples_per_microbatch() const {
  return std::accumulate(per_slot_mbs.begin(), per_slot_mbs.end(), 0);
}

std::int64_t MicrobatchAssignment::global_batch() const {
  return static_cast<std::int64_t>(samples_per_microbatch()) * num_microbatches;
}

std::vector<double> MicrobatchAssignment::weights() const {
  const double total = samples_per_microbatch();
  std::vector<double> w;
  w.reserve(per_slot_mbs.size());
  for (int m : per_slot_mbs) w.push_back(m / total);
  return w;
}

int MicrobatchAssignment::slot_of(int dp_slot) const {
  auto it = std::find(slots.begin(), slots.end(), dp_slot);
  return it == slots.end() ? -1 : static_cast<int>(it - slots.begin());
}

std::vector<std::pair<std::int64_t, std::int64_t>> MicrobatchAssignment::sample_ranges(
    std::int64_t step_base, int mb) const {
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  std::int64_t cursor = step_base +
      static_cast<std::int64_t>(mb) * samples_per_microbatch();
  for (int m : per_slot_mbs) {
    out.emplace_back(cursor, cursor + m);
    cursor += m;
  }
  return out;
}

MicrobatchAssignment make_even_assignment(const std::vector<int>& slots, int mbs,
                                          int num_microbatches) {
  MicrobatchAssignment a;
  a.slots = slots;
  std::sort(a.slots.begin(), a.slots.end());
  a.per_slot_mbs.assign(a.slots.size(), mbs);
  a.num_microbatches = num_microbatches;
  return a;
}

MicrobatchAssignment reshard_microbatches(const MicrobatchAssignment& old,
                                          const std::vector<int>& survivors) {
  if (survivors.empty())
    throw NoSurvivors("DP group emptied; graph replanning must repopulate the stage");

  const int total = old.samples_per_microbatch();
  MicrobatchAssignment next;
  next.slots = survivors;
  std::sort(next.slots.begin(), next.slots.end());
  next.num_microbatches = old.num_microbatches;

  const int n = static_cast<int>(next.slots.size());
  const int base = total / n;
  const int rem = total % n;
  next.per_slot_mbs.resize(n);
  for (int i = 0; i < n; ++i) next.per_slot_mbs[i] = base + (i < rem ? 1 : 0);
  return next;
}

std::vector<double> weighted_grad_average(
    const std::vector<std::pair<double, std::vector<double>>>& contributions) {
  if (contributions.empty()) return {};
  const size_t dim = contributions.front().second.size();
  std::vector<double> acc(dim, 0.0);
  for (const auto& [w, g] : contributions) {
    if (g.size() != dim)
      throw DimensionMismatch("gradient vectors differ in length: " +
                              std::to_string(g.size()) + " vs " + std::to_string(dim));
    for (size_t i = 0; i < dim; ++i) acc[i] += w * g[i];
  }
  return acc;
}

}  // namespace elaskit
