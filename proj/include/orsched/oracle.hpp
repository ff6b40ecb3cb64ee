#pragma once

// Exhaustive reference scheduler for single-cell toy instances. Intended for tests.
//
// The objective is the eMBB sum rate. A decision "meets demand" when the URLLC bits it carries in
// the TTI reach the arrival demand. If any decision meets demand, the best one among those wins;
// otherwise the decision delivering the most URLLC bits wins, eMBB rate breaking ties. Equal keys
// keep the first decision in enumeration order (owners, then power levels, then puncture patterns,
// each counted lowest index first).

#include <vector>

#include "orsched/channel.hpp"
#include "orsched/config.hpp"
#include "orsched/decision.hpp"
#include "orsched/errors.hpp"
#include "orsched/phyrates.hpp"

namespace orsched {

struct TinyObjective {
  double embb_bps = 0.0;
  double delivered_bits = 0.0;
  double demand_bits = 0.0;

  bool meets_demand() const { return delivered_bits >= demand_bits; }
};

/// True when `a` ranks strictly above `b`.
inline bool tiny_better(const TinyObjective& a, const TinyObjective& b) {
  if (a.meets_demand() != b.meets_demand()) return a.meets_demand();
  if (a.meets_demand()) return a.embb_bps > b.embb_bps;
  if (a.delivered_bits != b.delivered_bits) return a.delivered_bits > b.delivered_bits;
  return a.embb_bps > b.embb_bps;
}

/// Scores any decision of cell 0 under the toy objective.
inline TinyObjective evaluate_tiny(const AllocationDecision& d, const ChannelRealization& ch, int packets,
                                   const SimConfig& cfg) {
  const CellSinr sinr = compute_cell_sinr(ch, std::span<const AllocationDecision>(&d, 1), cfg, 0);
  const RateReport rep = compute_rates(d, sinr, cfg);
  return {rep.embb_sum(), rep.urllc_sum() * cfg.tti_duration,
          static_cast<double>(packets) * cfg.urllc_packet_bits};
}

struct TinyOracleResult {
  AllocationDecision decision;
  TinyObjective objective;
  long evaluated = 0;
};

inline TinyOracleResult solve_tiny_oracle(const SimConfig& cfg, const ChannelRealization& ch, int packets,
                                          int power_levels) {
  const int V = cfg.embb_users_per_cell, U = cfg.urllc_users_per_cell, M = cfg.num_rbs, L = cfg.minislots_per_tti;
  if (cfg.num_cells != 1 || M > 3 || V > 2 || U > 1 || L > 3 || power_levels < 2 || power_levels > 4)
    throw SizeError("solve_tiny_oracle: instance exceeds the enumeration bounds");
  const int G = power_levels - 1;  // grid units in P_max
  const double noise = cfg.noise_power_w();
  const double x = cfg.decode_error_target;

  // embb_t[m][v][j][n]: bit/s of user v on RB m at power level j with n punctured mini-slots.
  // urllc_t[m][u][j][n]: URLLC bits per TTI of user u on RB m with n mini-slots.
  auto at = [&](int m, int v, int j, int n, int users) {
    return ((std::size_t(m) * users + v) * (G + 1) + j) * (L + 1) + n;
  };
  std::vector<double> embb_t(std::size_t(M) * V * (G + 1) * (L + 1));
  std::vector<double> urllc_t(std::size_t(M) * U * (G + 1) * (L + 1), 0.0);
  for (int m = 0; m < M; ++m)
    for (int j = 0; j <= G; ++j) {
      const double p = cfg.p_max * j / G;
      const double pu = cfg.urllc_power_mode == UrllcPowerMode::reuse ? p : cfg.p_max / M;
      for (int n = 0; n <= L; ++n) {
        for (int v = 0; v < V; ++v) embb_t[at(m, v, j, n, V)] = embb_rb_rate(p * ch.embb(0, 0, v, m) / noise, n, cfg);
        if (n > 0)
          for (int u = 0; u < U; ++u)
            urllc_t[at(m, u, j, n, U)] =
                urllc_rb_rate(pu * ch.urllc(0, 0, u, m) / noise, n, x, cfg) * cfg.tti_duration;
      }
    }

  TinyOracleResult best;
  bool have = false;
  std::vector<int> owner(M, -1), level(M, 0), cell(std::size_t(M) * L, -1);
  std::vector<int> cnt(std::size_t(U) * M);
  const double demand = static_cast<double>(packets) * cfg.urllc_packet_bits;

  // Odometer over a vector of digits in [lo, hi]; returns false after the last combination.
  auto next = [](std::vector<int>& digits, int lo, int hi) {
    for (auto& d : digits) {
      if (d < hi) {
        ++d;
        return true;
      }
      d = lo;
    }
    return false;
  };

  std::fill(owner.begin(), owner.end(), -1);
  do {
    std::fill(level.begin(), level.end(), 0);
    do {
      int units = 0;
      bool ok = true;
      for (int m = 0; m < M; ++m) {
        units += level[m];
        if (level[m] > 0 && owner[m] < 0) ok = false;
      }
      if (!ok || units > G) continue;
      std::fill(cell.begin(), cell.end(), -1);
      do {
        std::fill(cnt.begin(), cnt.end(), 0);
        for (int m = 0; m < M; ++m)
          for (int l = 0; l < L; ++l)
            if (cell[std::size_t(m) * L + l] >= 0) ++cnt[std::size_t(cell[std::size_t(m) * L + l]) * M + m];
        TinyObjective obj{0.0, 0.0, demand};
        for (int m = 0; m < M; ++m) {
          int n = 0;
          for (int u = 0; u < U; ++u) {
            n += cnt[std::size_t(u) * M + m];
            obj.delivered_bits += urllc_t[at(m, u, level[m], cnt[std::size_t(u) * M + m], U)];
          }
          if (owner[m] >= 0) obj.embb_bps += embb_t[at(m, owner[m], level[m], n, V)];
        }
        ++best.evaluated;
        if (!have || tiny_better(obj, best.objective)) {
          have = true;
          best.objective = obj;
          auto d = AllocationDecision::empty(cfg, 0, 0);
          for (int m = 0; m < M; ++m) {
            if (owner[m] >= 0) {
              d.assignment(owner[m], m) = 1;
              d.power(owner[m], m) = cfg.p_max * level[m] / G;
            }
            for (int l = 0; l < L; ++l)
              if (cell[std::size_t(m) * L + l] >= 0) d.puncture(cell[std::size_t(m) * L + l], m, l) = 1;
          }
          best.decision = std::move(d);
        }
      } while (next(cell, -1, U - 1));
    } while (next(level, 0, G));
  } while (next(owner, -1, V - 1));
  // Rescore through the same path callers use so equal decisions compare equal to the last ulp.
  best.objective = evaluate_tiny(best.decision, ch, packets, cfg);
  return best;
}

}  // namespace orsched
