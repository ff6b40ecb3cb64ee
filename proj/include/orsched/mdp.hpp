#pragma once

// Per-cell observation encoding, action decoding onto the feasible allocation set, the reward
// and the dual-weight recursion.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "orsched/channel.hpp"
#include "orsched/config.hpp"
#include "orsched/decision.hpp"
#include "orsched/phyrates.hpp"
#include "orsched/traffic.hpp"

namespace orsched {

using CellState = std::vector<double>;
using RawAction = std::vector<double>;

inline constexpr double kGainFloor = 1e-30;

struct Experience {
  int cell = 0;
  long tti = 0;
  CellState state;
  RawAction action;
  double reward = 0.0;
  CellState next_state;
  bool terminal = false;
};

/// Observation of cell k: standardized serving-link gains in dB for its eMBB then URLLC users,
/// the normalized arrival count and the two user counts. Uses nothing from other cells.
inline CellState build_state(const ChannelRealization& ch, const UrllcArrivalRecord& arrivals, const SimConfig& cfg,
                             int k) {
  CellState s;
  s.reserve(cfg.state_dim());
  auto encode = [&](double g) {
    const double db = 10.0 * std::log10(std::max(g, kGainFloor));
    return (db - cfg.gain_db_mean) / cfg.gain_db_std;
  };
  for (int v = 0; v < cfg.embb_users_per_cell; ++v)
    for (int m = 0; m < cfg.num_rbs; ++m) s.push_back(encode(ch.embb(k, k, v, m)));
  for (int v = 0; v < cfg.urllc_users_per_cell; ++v)
    for (int m = 0; m < cfg.num_rbs; ++m) s.push_back(encode(ch.urllc(k, k, v, m)));
  s.push_back(arrivals.total() / cfg.phi_norm);
  s.push_back(static_cast<double>(cfg.embb_users_per_cell));
  s.push_back(static_cast<double>(cfg.urllc_users_per_cell));
  return s;
}

/// Bits one punctured (RB, mini-slot) carries at the decode-error target for a given SINR.
inline int minislot_capacity_bits(double sinr, const SimConfig& cfg) {
  const int w = urllc_blocklength(1, cfg);
  const double r = fbl_bits_per_use(sinr, w, cfg.decode_error_target);
  return r > 0.0 ? static_cast<int>(std::floor(w * r)) : 0;
}

/// Nominal URLLC SINR of every user of cell k on every RB ([u][m]).
inline std::vector<double> urllc_cqi(const ChannelRealization& ch, const SimConfig& cfg, int k) {
  std::vector<double> out;
  out.reserve(std::size_t(cfg.urllc_users_per_cell) * cfg.num_rbs);
  for (int u = 0; u < cfg.urllc_users_per_cell; ++u)
    for (int m = 0; m < cfg.num_rbs; ++m) out.push_back(urllc_nominal_sinr(ch, cfg, k, u, m));
  return out;
}

/// Mini-slot cells needed for `packets` URLLC packets given the mean per-cell capacity.
inline int required_punctures(int packets, std::span<const double> cqi, const SimConfig& cfg) {
  const int cap = cfg.cell_minislot_count();
  if (packets <= 0) return 0;
  double mean_bits = 0.0;
  for (double s : cqi) mean_bits += minislot_capacity_bits(s, cfg);
  mean_bits /= static_cast<double>(cqi.size());
  if (mean_bits <= 0.0) return cap;
  const double demand = static_cast<double>(packets) * cfg.urllc_packet_bits;
  return std::min(cap, static_cast<int>(std::ceil(demand / mean_bits)));
}

/// Splits P_max over RBs by softmax of the logits; with a power grid, shares are rounded to
/// whole grid units by largest remainder so the budget is used exactly.
inline std::vector<double> rb_power_split(std::span<const double> logits, const SimConfig& cfg) {
  const int M = static_cast<int>(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> share(M);
  double z = 0.0;
  for (int m = 0; m < M; ++m) z += (share[m] = std::exp(logits[m] - mx));
  for (auto& s : share) s /= z;
  if (cfg.power_levels == 0) {
    for (auto& s : share) s *= cfg.p_max;
    return share;
  }
  const int units = cfg.power_levels - 1;
  std::vector<int> given(M);
  std::vector<double> rem(M);
  int used = 0;
  for (int m = 0; m < M; ++m) {
    const double exact = share[m] * units;
    given[m] = static_cast<int>(std::floor(exact));
    rem[m] = exact - given[m];
    used += given[m];
  }
  std::vector<int> order(M);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
  for (int i = 0; used < units; ++i, ++used) ++given[order[i % M]];
  std::vector<double> p(M);
  for (int m = 0; m < M; ++m) p[m] = cfg.p_max * given[m] / units;
  return p;
}

/// Maps a raw action in [-1,1]^(V*M + M + M*L) onto a feasible allocation:
///  - each RB goes to the eMBB user with the highest score (ties to the lowest index);
///  - RB powers follow a softmax of the power logits, credited to the RB owner;
///  - the N highest-scoring (RB, mini-slot) cells are punctured, N covering the demand at the mean
///    estimated per-cell capacity, and handed to URLLC users round-robin.
inline AllocationDecision decode_action(std::span<const double> raw, int packets, std::span<const double> cqi,
                                        const SimConfig& cfg, int k, long tti) {
  const int V = cfg.embb_users_per_cell, U = cfg.urllc_users_per_cell, M = cfg.num_rbs, L = cfg.minislots_per_tti;
  if (static_cast<int>(raw.size()) != cfg.action_dim()) throw ShapeError("decode_action: raw action length mismatch");
  if (static_cast<int>(cqi.size()) != U * M) throw ShapeError("decode_action: CQI length mismatch");
  auto d = AllocationDecision::empty(cfg, k, tti);

  const auto scores = raw.subspan(0, std::size_t(V) * M);
  std::vector<int> owner(M);
  for (int m = 0; m < M; ++m) {
    int best = 0;
    for (int v = 1; v < V; ++v)
      if (scores[std::size_t(v) * M + m] > scores[std::size_t(best) * M + m]) best = v;
    owner[m] = best;
    d.assignment(best, m) = 1;
  }

  const auto power = rb_power_split(raw.subspan(std::size_t(V) * M, M), cfg);
  for (int m = 0; m < M; ++m) d.power(owner[m], m) = power[m];

  const int needed = required_punctures(packets, cqi, cfg);
  if (needed > 0) {
    const auto punct = raw.subspan(std::size_t(V) * M + M, std::size_t(M) * L);
    std::vector<int> cells(std::size_t(M) * L);
    std::iota(cells.begin(), cells.end(), 0);
    std::stable_sort(cells.begin(), cells.end(), [&](int a, int b) { return punct[a] > punct[b]; });
    for (int i = 0; i < needed; ++i) {
      const int c = cells[i];
      d.puncture(i % U, c / L, c % L) = 1;
    }
  }
  return d;
}

/// Reward in the caller's units. The shortfall variant penalizes only undelivered demand; the
/// literal variant penalizes the signed difference delivered - demand.
inline double reward_value(double embb_sum, double delivered, double demand, double phi, RewardVariant variant) {
  if (variant == RewardVariant::literal) return embb_sum - phi * (delivered - demand);
  return embb_sum - phi * std::max(0.0, demand - delivered);
}

/// Reward with rates in Mbit/s: eMBB sum rate (bit/s) and per-TTI URLLC bits.
inline double compute_reward(double embb_sum_bps, double delivered_bits, double demand_bits, double phi,
                             const SimConfig& cfg) {
  const double to_mbps = 1.0 / (cfg.tti_duration * 1e6);
  return reward_value(embb_sum_bps * 1e-6, delivered_bits * to_mbps, demand_bits * to_mbps, phi, cfg.reward_variant);
}

inline double update_dual_weight(double phi, double outage, double outage_target) {
  return std::max(phi + outage - outage_target, 0.0);
}

}  // namespace orsched
