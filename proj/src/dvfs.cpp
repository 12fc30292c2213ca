#include "elaskit/dvfs.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

namespace elaskit {

DvfsResult plan_frequency(const DvfsQuery& q,
                          const std::function<double(double f_mhz)>& observe) {
  if (q.f_cur_mhz > q.f_max_mhz) throw std::invalid_argument("f_cur > f_max");
  if (!(q.epsilon_s > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (!(q.delta_f_min_mhz > 0.0)) throw std::invalid_argument("delta_f_min must be > 0");

  DvfsResult res;
  std::map<double, double> seen;
  auto obs = [&](double f) {
    auto it = seen.find(f);
    if (it != seen.end()) return it->second;
    ++res.observe_calls;
    return seen[f] = observe(f);
  };

  const double t_cur = obs(q.f_cur_mhz);
  if (std::abs(t_cur - q.t_star_s) <= q.epsilon_s) {
    res.f_star_mhz = q.f_cur_mhz;
    res.status = DvfsStatus::Achievable;
    return res;
  }

  const double t_max = obs(q.f_max_mhz);
  if (t_max > q.t_star_s + q.epsilon_s) {
    res.f_star_mhz = q.f_max_mhz;
    res.status = DvfsStatus::Unachievable;
    return res;
  }

  // Grid anchored at f_cur, f_max appended when it falls off-grid.
  std::vector<double> grid;
  for (long i = 0;; ++i) {
    const double f = q.f_cur_mhz + static_cast<double>(i) * q.delta_f_min_mhz;
    if (f >= q.f_max_mhz) break;
    grid.push_back(f);
  }
  grid.push_back(q.f_max_mhz);

  auto feasible = [&](int i) { return obs(grid[i]) <= q.t_star_s + q.epsilon_s; };

  // first feasible index; grid.back() is known feasible
  int lo = 0, hi = static_cast<int>(grid.size()) - 1;
  if (feasible(0)) {
    res.f_star_mhz = grid[0];
    res.status = DvfsStatus::Achievable;
    return res;
  }
  while (hi - lo > 1) {
    const int mid = lo + (hi - lo) / 2;
    if (feasible(mid))
      hi = mid;
    else
      lo = mid;
  }
  res.f_star_mhz = grid[hi];
  res.status = DvfsStatus::Achievable;
  return res;
}

}  // namespace elaskit
