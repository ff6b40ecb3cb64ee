#pragma once

// Scalar reference implementations used as test oracles. They are written from the model
// equations directly and share no code with the library beyond its data containers.

#include <cmath>
#include <random>
#include <vector>

#include "orsched/channel.hpp"
#include "orsched/config.hpp"
#include "orsched/decision.hpp"

namespace ref {

inline double q(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// Q^-1 by bisection on the tail probability.
inline double q_inv(double x) {
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (q(mid) > x ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double dispersion(double s) { return 1.0 - 1.0 / ((1.0 + s) * (1.0 + s)); }

inline double embb_rate(double bandwidth, int minislots, int punctured, double s) {
  return bandwidth * (minislots - punctured) / minislots * std::log(1.0 + s) / std::log(2.0);
}

inline double urllc_rate(double bandwidth, int minislots, int symbols, int subcarriers, int punctured, double s,
                         double x) {
  const double w = static_cast<double>(punctured) * symbols * subcarriers;
  const double r = std::log(1.0 + s) / std::log(2.0) - std::sqrt(dispersion(s) / w) * q_inv(x);
  return bandwidth * punctured / minislots * r;
}

inline double noise_watts(const orsched::SimConfig& c) {
  return std::pow(10.0, (c.noise_psd - 30.0) / 10.0) * c.rb_bandwidth * std::pow(10.0, c.noise_figure / 10.0);
}

// Power a cell radiates on RB m averaged over the TTI.
inline double cell_power(const orsched::AllocationDecision& d, const orsched::SimConfig& c, int m) {
  double p = 0.0;
  for (int v = 0; v < c.embb_users_per_cell; ++v) p += d.power(v, m);
  int n = 0;
  for (int u = 0; u < c.urllc_users_per_cell; ++u)
    for (int l = 0; l < c.minislots_per_tti; ++l) n += d.puncture(u, m, l);
  const double up = c.urllc_power_mode == orsched::UrllcPowerMode::reuse ? p : c.p_max / c.num_rbs;
  const double f = static_cast<double>(n) / c.minislots_per_tti;
  return (1.0 - f) * p + f * up;
}

inline double embb_sinr(const orsched::ChannelRealization& ch, const std::vector<orsched::AllocationDecision>& ds,
                        const orsched::SimConfig& c, int k, int v, int m) {
  double inter = 0.0;
  for (int j = 0; j < c.num_cells; ++j)
    if (j != k) inter += cell_power(ds[j], c, m) * ch.embb(j, k, v, m);
  return ds[k].power(v, m) * ch.embb(k, k, v, m) / (inter + noise_watts(c));
}

inline double urllc_sinr(const orsched::ChannelRealization& ch, const std::vector<orsched::AllocationDecision>& ds,
                         const orsched::SimConfig& c, int k, int u, int m) {
  double inter = 0.0;
  for (int j = 0; j < c.num_cells; ++j)
    if (j != k) inter += cell_power(ds[j], c, m) * ch.urllc(j, k, u, m);
  double own = 0.0;
  for (int v = 0; v < c.embb_users_per_cell; ++v) own += ds[k].power(v, m);
  if (c.urllc_power_mode != orsched::UrllcPowerMode::reuse) own = c.p_max / c.num_rbs;
  return own * ch.urllc(k, k, u, m) / (inter + noise_watts(c));
}

// Number of broken allocation constraints: one owner per RB, one URLLC user per mini-slot,
// binary indicators, non-negative power only on owned RBs, total power within P_max.
inline int violations(const orsched::AllocationDecision& d, const orsched::SimConfig& c) {
  int bad = 0;
  double total = 0.0;
  for (int m = 0; m < c.num_rbs; ++m) {
    int owners = 0;
    for (int v = 0; v < c.embb_users_per_cell; ++v) {
      const int b = d.assignment(v, m);
      bad += (b != 0 && b != 1);
      owners += b;
      const double p = d.power(v, m);
      bad += !(p >= 0.0);
      bad += (p > 0.0 && b == 0);
      total += p;
    }
    bad += owners > 1;
    for (int l = 0; l < c.minislots_per_tti; ++l) {
      int occ = 0;
      for (int u = 0; u < c.urllc_users_per_cell; ++u) {
        const int e = d.puncture(u, m, l);
        bad += (e != 0 && e != 1);
        occ += e;
      }
      bad += occ > 1;
    }
  }
  bad += total > c.p_max * (1.0 + 1e-9);
  return bad;
}

// A valid configuration with a random grid and user population.
template <class R>
orsched::SimConfig random_config(R& rng) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  orsched::SimConfig c;
  c.num_cells = pick(1, 4);
  c.embb_users_per_cell = pick(1, 6);
  c.urllc_users_per_cell = pick(1, 6);
  c.num_rbs = pick(1, 16);
  const int sym = pick(1, 3);
  c.minislots_per_tti = pick(1, 14 / sym);
  c.symbols_per_minislot = sym;
  c.symbols_per_tti = c.minislots_per_tti * sym;
  c.minislot_duration = c.tti_duration / c.minislots_per_tti;
  c.power_levels = pick(0, 1) ? 0 : pick(2, 8);
  c.urllc_power_mode = pick(0, 1) ? orsched::UrllcPowerMode::reuse : orsched::UrllcPowerMode::fixed_share;
  return c;
}

// One random feasible-looking decision per cell: every RB owned, power within P_max / M,
// about 30% of mini-slots punctured.
inline std::vector<orsched::AllocationDecision> random_decisions(const orsched::SimConfig& cfg, orsched::Rng& rng) {
  std::vector<orsched::AllocationDecision> out;
  for (int k = 0; k < cfg.num_cells; ++k) {
    auto d = orsched::AllocationDecision::empty(cfg, k, 0);
    for (int m = 0; m < cfg.num_rbs; ++m) {
      const int v = std::uniform_int_distribution<int>(0, cfg.embb_users_per_cell - 1)(rng);
      d.assignment(v, m) = 1;
      d.power(v, m) = orsched::uniform01(rng) * cfg.p_max / cfg.num_rbs;
      for (int l = 0; l < cfg.minislots_per_tti; ++l)
        if (orsched::uniform01(rng) < 0.3)
          d.puncture(std::uniform_int_distribution<int>(0, cfg.urllc_users_per_cell - 1)(rng), m, l) = 1;
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace ref
