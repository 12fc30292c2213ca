#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "elaskit/dvfs.hpp"

using namespace elaskit;

namespace {

// linear scan over the anchored grid; the reference for bisection
double grid_oracle(const DvfsQuery& q, const std::function<double(double)>& t) {
  std::vector<double> grid;
  for (long i = 0;; ++i) {
    const double f = q.f_cur_mhz + static_cast<double>(i) * q.delta_f_min_mhz;
    if (f >= q.f_max_mhz) break;
    grid.push_back(f);
  }
  grid.push_back(q.f_max_mhz);
  for (double f : grid)
    if (t(f) <= q.t_star_s + q.epsilon_s) return f;
  return -1.0;
}

}  // namespace

TEST_CASE("already within tolerance returns immediately") {
  DvfsQuery q;
  q.f_cur_mhz = 1400;
  q.f_max_mhz = 1650;
  q.t_star_s = 1.0;
  q.epsilon_s = 0.05;
  int calls = 0;
  const auto r = plan_frequency(q, [&](double) {
    ++calls;
    return 1.02;
  });
  CHECK(r.status == DvfsStatus::Achievable);
  CHECK(r.f_star_mhz == 1400);
  CHECK(calls == 1);
}

TEST_CASE("compute-fraction model that misses at f_max is unachievable") {
  // t(f) = C*(1400/f) + K with a floor K keeping t(1650) above target
  DvfsQuery q;
  q.f_cur_mhz = 1400;
  q.f_max_mhz = 1650;
  q.t_star_s = 0.5;
  q.epsilon_s = 0.01;
  q.delta_f_min_mhz = 10;
  const auto r = plan_frequency(
      q, [](double f) { return 0.4 * (1400.0 / f) + 0.3; });
  CHECK(r.status == DvfsStatus::Unachievable);
  CHECK(r.f_star_mhz == 1650);
}

TEST_CASE("t(f) = 1000/f lands on the smallest feasible grid point") {
  DvfsQuery q;
  q.f_cur_mhz = 1400;
  q.f_max_mhz = 1650;
  q.t_star_s = 0.65;
  q.epsilon_s = 0.01;
  q.delta_f_min_mhz = 10;
  auto t = [](double f) { return 1000.0 / f; };
  const auto r = plan_frequency(q, t);
  CHECK(r.status == DvfsStatus::Achievable);
  // oracle: smallest multiple of 10 above 1400 with 1000/f <= 0.66
  CHECK(r.f_star_mhz == grid_oracle(q, t));
  CHECK(r.f_star_mhz == 1520);
  CHECK(t(r.f_star_mhz) <= q.t_star_s + q.epsilon_s);
  CHECK(t(r.f_star_mhz - q.delta_f_min_mhz) > q.t_star_s + q.epsilon_s);
}

TEST_CASE("oracle equivalence over 500 random monotone curves") {
  std::mt19937_64 gen(23);
  std::uniform_real_distribution<double> cd(0.1, 5.0);
  for (int trial = 0; trial < 500; ++trial) {
    DvfsQuery q;
    q.f_cur_mhz = 1000.0 + (gen() % 500);
    const int points = 2 + static_cast<int>(gen() % 199);  // grids up to ~200 points
    q.delta_f_min_mhz = 1.0 + (gen() % 20);
    q.f_max_mhz = q.f_cur_mhz + q.delta_f_min_mhz * points -
                  ((gen() % 2) ? 0.5 * q.delta_f_min_mhz : 0.0);
    const double c = cd(gen);
    const double k = cd(gen) * 0.1;
    auto t = [&](double f) { return c * (q.f_cur_mhz / f) + k; };  // non-increasing
    q.epsilon_s = 1e-3 + 0.01 * cd(gen);
    // random target spanning achievable and unachievable cases
    q.t_star_s = t(q.f_cur_mhz + (gen() % (points + 1)) * q.delta_f_min_mhz) +
                 (static_cast<double>(gen() % 21) - 10.0) * 0.02;

    int calls = 0;
    auto counted = [&](double f) {
      ++calls;
      return t(f);
    };
    const auto r = plan_frequency(q, counted);

    if (std::abs(t(q.f_cur_mhz) - q.t_star_s) <= q.epsilon_s) {
      CHECK(r.status == DvfsStatus::Achievable);
      CHECK(r.f_star_mhz == q.f_cur_mhz);
      continue;
    }
    const double expect = grid_oracle(q, t);
    if (t(q.f_max_mhz) > q.t_star_s + q.epsilon_s) {
      CHECK(r.status == DvfsStatus::Unachievable);
      CHECK(r.f_star_mhz == q.f_max_mhz);
    } else {
      REQUIRE(r.status == DvfsStatus::Achievable);
      CHECK(r.f_star_mhz == expect);
      // observation budget: 2 + ceil(log2(range / delta))
      const double range = (q.f_max_mhz - q.f_cur_mhz) / q.delta_f_min_mhz;
      const int budget = 2 + static_cast<int>(std::ceil(std::log2(std::max(2.0, range))));
      CHECK(calls <= budget);
    }
  }
}
