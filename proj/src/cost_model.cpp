#include "elaskit/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace elaskit {

namespace {

// Bilinear interpolation over a rectangular grid. Returns nullopt when the
// query falls outside the hull.
std::optional<double> table_lookup(const std::vector<double>& xs,
                                   const std::vector<double>& ys,
                                   const std::vector<std::vector<double>>& grid,
                                   double x, double y) {
  if (xs.size() < 1 || ys.size() < 1) return std::nullopt;
  if (x < xs.front() || x > xs.back() || y < ys.front() || y > ys.back())
    return std::nullopt;
  auto cell = [](const std::vector<double>& v, double q) {
    auto it = std::upper_bound(v.begin(), v.end(), q);
    int hi = static_cast<int>(it - v.begin());
    if (hi == 0) hi = 1;
    if (hi == static_cast<int>(v.size())) hi = static_cast<int>(v.size()) - 1;
    return hi;
  };
  if (xs.size() == 1 && ys.size() == 1) return grid[0][0];
  if (xs.size() == 1) {
    int j = cell(ys, y);
    double t = (y - ys[j - 1]) / (ys[j] - ys[j - 1]);
    return grid[0][j - 1] * (1 - t) + grid[0][j] * t;
  }
  if (ys.size() == 1) {
    int i = cell(xs, x);
    double t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    return grid[i - 1][0] * (1 - t) + grid[i][0] * t;
  }
  int i = cell(xs, x), j = cell(ys, y);
  double tx = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
  double ty = (y - ys[j - 1]) / (ys[j] - ys[j - 1]);
  double a = grid[i - 1][j - 1] * (1 - ty) + grid[i - 1][j] * ty;
  double b = grid[i][j - 1] * (1 - ty) + grid[i][j] * ty;
  return a * (1 - tx) + b * tx;
}

}  // namespace

double CostProfile::t_fwd(double layers, double mbs) const {
  if (!table_layers.empty()) {
    auto v = table_lookup(table_layers, table_mbs, table_fwd_s, layers, mbs);
    if (v) return *v;
    if (!analytic)
      throw ProfileOutOfRange("t_fwd(" + std::to_string(layers) + ", " +
                              std::to_string(mbs) + ") outside table hull");
  }
  if (!analytic) throw ProfileOutOfRange("profile has neither table nor analytic law");
  return analytic->fwd_a_s * layers * mbs + analytic->fwd_b_s * mbs;
}

double CostProfile::t_bwd(double layers, double mbs) const {
  if (!table_layers.empty()) {
    auto v = table_lookup(table_layers, table_mbs, table_bwd_s, layers, mbs);
    if (v) return *v;
    if (!analytic)
      throw ProfileOutOfRange("t_bwd(" + std::to_string(layers) + ", " +
                              std::to_string(mbs) + ") outside table hull");
  }
  if (!analytic) throw ProfileOutOfRange("profile has neither table nor analytic law");
  return analytic->bwd_a_s * layers * mbs + analytic->bwd_b_s * mbs;
}

double CostProfile::link_bw(int r_src, int r_dst) const {
  double bw = base_link_bw_bytes_per_s;
  if (contention_by_width_gap) bw /= std::max(1, std::abs(r_src - r_dst));
  return bw;
}

double CostProfile::t_p2p(double mbs, int r_src, int r_dst) const {
  if (p2p_bytes_per_sample <= 0.0) return 0.0;
  return mbs * p2p_bytes_per_sample / link_bw(r_src, r_dst);
}

double mini_step_time(const CostProfile& profile, int layers, int mbs,
                      std::optional<int> r_prev, int r_cur, std::optional<int> r_next,
                      double freq_scale, double slow_factor) {
  if (layers < 1 || mbs < 1) throw ProfileOutOfRange("layers and mbs must be >= 1");
  if (!(freq_scale > 0.0)) throw ProfileOutOfRange("freq_scale must be > 0");
  if (slow_factor < 1.0) throw ProfileOutOfRange("slow_factor must be >= 1");

  const double compute_scale = slow_factor / freq_scale;
  const double tf = profile.t_fwd(layers, mbs) * compute_scale;
  const double tb = profile.t_bwd(layers, mbs) * compute_scale;
  double total = tf + tb;
  if (r_next) {
    const double p2p_f = profile.t_p2p(mbs, r_cur, *r_next);
    total += std::max(0.0, p2p_f - profile.sigma_f * tf);
  }
  if (r_prev) {
    const double p2p_b = profile.t_p2p(mbs, *r_prev, r_cur);
    total += std::max(0.0, p2p_b - profile.sigma_b * tb);
  }
  return total;
}

std::int64_t mem_footprint(const MemModel& mem, int layers, int mbs, int stage,
                           int num_stages, int zero_degree) {
  if (stage < 1 || stage > num_stages) throw std::invalid_argument("stage out of range");
  if (zero_degree < 1) throw std::invalid_argument("zero_degree must be >= 1");
  const std::int64_t l = layers;
  const std::int64_t per_layer = mem.bytes_param_per_layer + mem.bytes_grad_per_layer +
                                 mem.bytes_optstate_per_layer / zero_degree;
  const std::int64_t act = static_cast<std::int64_t>(in_flight_microbatches(stage, num_stages)) *
                           l * mbs * mem.bytes_act_per_layer_per_sample;
  return mem.fixed_overhead + l * per_layer + act;
}

CostProfile load_cost_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open cost profile: " + path);
  nlohmann::json j;
  in >> j;

  CostProfile p;
  if (j.contains("analytic")) {
    CostProfile::Analytic a;
    a.fwd_a_s = j["analytic"].value("fwd_a_ms", 0.0) * 1e-3;
    a.fwd_b_s = j["analytic"].value("fwd_b_ms", 0.0) * 1e-3;
    a.bwd_a_s = j["analytic"].value("bwd_a_ms", 0.0) * 1e-3;
    a.bwd_b_s = j["analytic"].value("bwd_b_ms", 0.0) * 1e-3;
    p.analytic = a;
  }
  if (j.contains("table")) {
    // entries: {layers, mbs, t_fwd_ms, t_bwd_ms}; must form a rectangular grid
    std::vector<double> ls, ms;
    for (const auto& e : j["table"]) {
      ls.push_back(e.at("layers").get<double>());
      ms.push_back(e.at("mbs").get<double>());
    }
    std::sort(ls.begin(), ls.end());
    ls.erase(std::unique(ls.begin(), ls.end()), ls.end());
    std::sort(ms.begin(), ms.end());
    ms.erase(std::unique(ms.begin(), ms.end()), ms.end());
    p.table_layers = ls;
    p.table_mbs = ms;
    p.table_fwd_s.assign(ls.size(), std::vector<double>(ms.size(), -1.0));
    p.table_bwd_s = p.table_fwd_s;
    for (const auto& e : j["table"]) {
      auto li = std::lower_bound(ls.begin(), ls.end(), e.at("layers").get<double>()) - ls.begin();
      auto mi = std::lower_bound(ms.begin(), ms.end(), e.at("mbs").get<double>()) - ms.begin();
      p.table_fwd_s[li][mi] = e.at("t_fwd_ms").get<double>() * 1e-3;
      p.table_bwd_s[li][mi] = e.at("t_bwd_ms").get<double>() * 1e-3;
    }
    for (const auto& row : p.table_fwd_s)
      for (double v : row)
        if (v < 0.0) throw std::runtime_error("cost profile table is not a full grid");
  }
  p.p2p_bytes_per_sample = j.value("p2p_bytes_per_sample", 0.0);
  p.base_link_bw_bytes_per_s = j.value("link_bw_bytes_per_s", 1.0);
  p.contention_by_width_gap = j.value("contention_by_width_gap", true);
  p.sigma_f = j.value("sigma_f", 0.0);
  p.sigma_b = j.value("sigma_b", 0.0);
  if (p.sigma_f < 0 || p.sigma_f > 1 || p.sigma_b < 0 || p.sigma_b > 1)
    throw std::runtime_error("sigma coefficients must lie in [0,1]");
  return p;
}

void save_cost_profile(const CostProfile& p, const std::string& path) {
  nlohmann::ordered_json j;
  if (p.analytic) {
    j["analytic"] = {{"fwd_a_ms", p.analytic->fwd_a_s * 1e3},
                     {"fwd_b_ms", p.analytic->fwd_b_s * 1e3},
                     {"bwd_a_ms", p.analytic->bwd_a_s * 1e3},
                     {"bwd_b_ms", p.analytic->bwd_b_s * 1e3}};
  }
  if (!p.table_layers.empty()) {
    auto& t = j["table"] = nlohmann::ordered_json::array();
    for (size_t i = 0; i < p.table_layers.size(); ++i)
      for (size_t k = 0; k < p.table_mbs.size(); ++k)
        t.push_back({{"layers", p.table_layers[i]},
                     {"mbs", p.table_mbs[k]},
                     {"t_fwd_ms", p.table_fwd_s[i][k] * 1e3},
                     {"t_bwd_ms", p.table_bwd_s[i][k] * 1e3}});
  }
  j["p2p_bytes_per_sample"] = p.p2p_bytes_per_sample;
  j["link_bw_bytes_per_s"] = p.base_link_bw_bytes_per_s;
  j["contention_by_width_gap"] = p.contention_by_width_gap;
  j["sigma_f"] = p.sigma_f;
  j["sigma_b"] = p.sigma_b;
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

}  // namespace elaskit
