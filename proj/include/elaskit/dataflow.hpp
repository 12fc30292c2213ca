#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace elaskit {

struct NoSurvivors final : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionMismatch final : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-micro-batch sample split across a stage's DP slots. Slots own
// contiguous ranges of the global sample index, which keys per-sample RNG
// and makes gradient aggregation order well-defined.
struct MicrobatchAssignment {
  std::vector<int> slots;          // ascending dp-slot ids
  std::vector<int> per_slot_mbs;   // samples per micro-batch, parallel to slots
  int num_microbatches = 0;

  int samples_per_microbatch() const;
  std::int64_t global_batch() const;
  std::vector<double> weights() const;  // per_slot_mbs[j] / sum
  int slot_of(int dp_slot) const;       // index into slots, -1 if absent

  // Global sample id ranges [lo, hi) per slot for micro-batch mb, ascending
  // slot order, contiguous over the step's sample space.
  std::vector<std::pair<std::int64_t, std::int64_t>> sample_ranges(
      std::int64_t step_base, int mb) const;
};

MicrobatchAssignment make_even_assignment(const std::vector<int>& slots, int mbs,
                                          int num_microbatches);

// Redistributes the per-micro-batch sample total over the survivor set.
// Totals conserve exactly; skew across survivors <= 1 sample; remainder goes
// to survivors in ascending slot order. Scale-out passes an enlarged set.
MicrobatchAssignment reshard_microbatches(const MicrobatchAssignment& old,
                                          const std::vector<int>& survivors);

// Sum of w_j * g_j, folded left-to-right in the order given (callers pass
// ascending slot id, or ascending sample id for per-sample exactness).
std::vector<double> weighted_grad_average(
    const std::vector<std::pair<double, std::vector<double>>>& contributions);

}  // namespace elaskit
