#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace elaskit {

struct ProfileOutOfRange final : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Forward/backward compute tables plus the P2P/overlap constants of the
// mini-step cost. Compute times come either from an analytic law
// t = a*layers*mbs + b*mbs or from a profiled (layers, mbs) grid with
// bilinear interpolation; the analytic law doubles as the fallback for
// queries outside the grid hull.
struct CostProfile {
  struct Analytic {
    double fwd_a_s = 0.0, fwd_b_s = 0.0;
    double bwd_a_s = 0.0, bwd_b_s = 0.0;
  };
  std::optional<Analytic> analytic;

  std::vector<double> table_layers;                 // ascending
  std::vector<double> table_mbs;                    // ascending
  std::vector<std::vector<double>> table_fwd_s;     // [layer idx][mbs idx]
  std::vector<std::vector<double>> table_bwd_s;

  double p2p_bytes_per_sample = 0.0;
  double base_link_bw_bytes_per_s = 1.0;
  bool contention_by_width_gap = true;  // bw = base / max(1, |r_src - r_dst|)
  double sigma_f = 0.0;                 // overlap coefficients in [0,1]
  double sigma_b = 0.0;

  double t_fwd(double layers, double mbs) const;
  double t_bwd(double layers, double mbs) const;
  double link_bw(int r_src, int r_dst) const;
  double t_p2p(double mbs, int r_src, int r_dst) const;
};

struct MemModel {
  std::int64_t bytes_param_per_layer = 0;
  std::int64_t bytes_grad_per_layer = 0;
  std::int64_t bytes_optstate_per_layer = 0;  // pre-ZeRO-division
  std::int64_t bytes_act_per_layer_per_sample = 0;
  std::int64_t fixed_overhead = 0;
};

// Eq.-style mini-step time for one stage:
//   T = Tf + Tb + max(0, Tp2p_f - sigma_f*Tf) + max(0, Tp2p_b - sigma_b*Tb)
// with compute terms scaled by slow_factor/freq_scale. A missing neighbor
// (first stage backward, last stage forward) drops that P2P term. The
// bracketed terms clamp at zero: a stage is never faster than its compute.
double mini_step_time(const CostProfile& profile, int layers, int mbs,
                      std::optional<int> r_prev, int r_cur, std::optional<int> r_next,
                      double freq_scale = 1.0, double slow_factor = 1.0);

// 1F1B warm-up depth for stage i of P.
inline int in_flight_microbatches(int stage, int num_stages) {
  return num_stages - stage + 1;
}

// fixed + l*(param + grad + opt/D) + in_flight(i)*l*m*act
std::int64_t mem_footprint(const MemModel& mem, int layers, int mbs, int stage,
                           int num_stages, int zero_degree);

CostProfile load_cost_profile(const std::string& path);
void save_cost_profile(const CostProfile& profile, const std::string& path);

}  // namespace elaskit
