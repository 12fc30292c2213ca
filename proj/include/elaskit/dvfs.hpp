#pragma once

#include <functional>

namespace elaskit {

struct DvfsQuery {
  double f_cur_mhz = 1400.0;
  double f_max_mhz = 1650.0;
  double t_star_s = 0.0;       // target mini-step time
  double epsilon_s = 1e-3;     // tolerance
  double delta_f_min_mhz = 10.0;
  int window_w = 1;            // observation window, folded into the callback
};

enum class DvfsStatus { Achievable, Unachievable };

struct DvfsResult {
  double f_star_mhz = 0.0;
  DvfsStatus status = DvfsStatus::Achievable;
  int observe_calls = 0;
};

// Minimum-uplift frequency search. Returns (f_cur, ACHIEVABLE) when already
// within epsilon of the target; (f_max, UNACHIEVABLE) when even f_max misses
// it; otherwise bisects the Δf_min grid anchored at f_cur for the smallest
// frequency whose observed time is <= T* + epsilon. Each distinct frequency
// is observed at most once.
DvfsResult plan_frequency(const DvfsQuery& q,
                          const std::function<double(double f_mhz)>& observe);

}  // namespace elaskit
