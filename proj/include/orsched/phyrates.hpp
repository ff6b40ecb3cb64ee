#pragma once

// Closed-form rate mathematics.
//
// The finite-blocklength URLLC rate is evaluated per RB:
//   r = B * (n/L) * [log2(1+sinr) - sqrt(Y/W) * Qinv(x)],  Y = 1 - 1/(1+sinr)^2,
// with W = n * symbols_per_minislot * subcarriers_per_rb channel uses. The published form carries
// an extra sum over RBs inside this per-RB quantity; it is dropped here and callers aggregate
// across RBs explicitly.

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <span>
#include <vector>

#include "orsched/channel.hpp"
#include "orsched/config.hpp"
#include "orsched/decision.hpp"
#include "orsched/errors.hpp"

namespace orsched {

/// Gaussian tail probability Q(z) = P[N(0,1) > z].
inline double q_function(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

inline double q_inverse(double x) {
  if (!(x > 0.0 && x < 1.0)) throw DomainError("q_inverse: argument must lie in (0,1)");
  return std::sqrt(2.0) * boost::math::erfc_inv(2.0 * x);
}

/// Channel dispersion Y = 1 - 1/(1+sinr)^2.
inline double dispersion(double sinr) {
  if (!(sinr >= 0.0)) throw DomainError("dispersion: SINR must be non-negative");
  const double a = 1.0 / (1.0 + sinr);
  return 1.0 - a * a;
}

/// eMBB rate on one RB (bit/s) with `punctured` of the L mini-slots taken by URLLC.
inline double embb_rb_rate(double sinr, int punctured, const SimConfig& cfg) {
  if (punctured < 0 || punctured > cfg.minislots_per_tti) throw DomainError("embb_rb_rate: punctured out of range");
  const double keep = 1.0 - static_cast<double>(punctured) / cfg.minislots_per_tti;
  return cfg.rb_bandwidth * keep * std::log2(1.0 + sinr);
}

inline int urllc_blocklength(int punctured, const SimConfig& cfg) {
  if (punctured < 1) throw DomainError("urllc_blocklength: no punctured mini-slots");
  return punctured * cfg.symbols_per_minislot * cfg.subcarriers_per_rb;
}

/// Finite-blocklength rate before clamping; negative in deep fades with short blocks.
inline double urllc_rb_rate_unclamped(double sinr, int punctured, double x, const SimConfig& cfg) {
  if (!(sinr >= 0.0)) throw DomainError("urllc_rb_rate: SINR must be non-negative");
  if (!(x > 0.0 && x < 1.0)) throw DomainError("urllc_rb_rate: error target must lie in (0,1)");
  const int w = urllc_blocklength(punctured, cfg);
  const double share = static_cast<double>(punctured) / cfg.minislots_per_tti;
  const double penalty = std::sqrt(dispersion(sinr) / w) * q_inverse(x);
  return cfg.rb_bandwidth * share * (std::log2(1.0 + sinr) - penalty);
}

/// URLLC rate on one RB (bit/s), floored at zero.
inline double urllc_rb_rate(double sinr, int punctured, double x, const SimConfig& cfg) {
  return std::max(0.0, urllc_rb_rate_unclamped(sinr, punctured, x, cfg));
}

/// Bits per channel use a block of W channel uses supports at error target x.
inline double fbl_bits_per_use(double sinr, int w, double x) {
  return std::log2(1.0 + sinr) - std::sqrt(dispersion(sinr) / w) * q_inverse(x);
}

/// Decode error probability of a block of W channel uses carrying r_cu bits per use.
/// At zero SINR the block fails whenever it carries data; an empty block is a coin flip.
inline double decode_error_prob(double sinr, int w, double r_cu) {
  const double y = dispersion(sinr);
  if (y <= 0.0) return r_cu > 0.0 ? 1.0 : 0.5;
  return q_function((std::log2(1.0 + sinr) - r_cu) * std::sqrt(static_cast<double>(w) / y));
}

/// SINRs of every user of one cell on every RB.
struct CellSinr {
  int embb_users = 0;
  int urllc_users = 0;
  int rbs = 0;
  std::vector<double> embb;   // [v][m]
  std::vector<double> urllc;  // [v][m]

  double embb_at(int v, int m) const { return embb[std::size_t(v) * rbs + m]; }
  double urllc_at(int v, int m) const { return urllc[std::size_t(v) * rbs + m]; }
};

inline CellSinr compute_cell_sinr(const ChannelRealization& ch, std::span<const AllocationDecision> cells,
                                  const SimConfig& cfg, int k) {
  CellSinr s{cfg.embb_users_per_cell, cfg.urllc_users_per_cell, cfg.num_rbs, {}, {}};
  const double noise = cfg.noise_power_w();
  s.embb.resize(std::size_t(s.embb_users) * s.rbs);
  s.urllc.resize(std::size_t(s.urllc_users) * s.rbs);
  for (int v = 0; v < s.embb_users; ++v)
    for (int m = 0; m < s.rbs; ++m) s.embb[std::size_t(v) * s.rbs + m] = embb_sinr(ch, cells, cfg, k, v, m, noise);
  for (int v = 0; v < s.urllc_users; ++v)
    for (int m = 0; m < s.rbs; ++m)
      s.urllc[std::size_t(v) * s.rbs + m] = urllc_sinr(ch, cells, cfg, k, v, m, noise);
  return s;
}

/// Sum over owned RBs of the punctured per-RB eMBB rate; the punctured count of an RB is
/// taken over all URLLC users.
inline double embb_user_rate(const AllocationDecision& d, const CellSinr& sinr, const SimConfig& cfg, int v) {
  double r = 0.0;
  for (int m = 0; m < cfg.num_rbs; ++m)
    if (d.assignment(v, m)) r += embb_rb_rate(sinr.embb_at(v, m), d.puncture.punctured_on_rb(m), cfg);
  return r;
}

struct RateReport {
  long tti = 0;
  std::vector<double> embb_user;            // [v] bit/s
  std::vector<double> urllc_user_rb;        // [v][m] bit/s
  std::vector<double> punctured_fraction;   // [m]
  int clamped = 0;                          // URLLC rates floored at zero

  double embb_sum() const {
    double s = 0.0;
    for (double r : embb_user) s += r;
    return s;
  }
  double urllc_sum() const {
    double s = 0.0;
    for (double r : urllc_user_rb) s += r;
    return s;
  }
};

inline RateReport compute_rates(const AllocationDecision& d, const CellSinr& sinr, const SimConfig& cfg) {
  RateReport rep;
  rep.tti = d.tti;
  const int M = cfg.num_rbs, L = cfg.minislots_per_tti;
  for (int v = 0; v < cfg.embb_users_per_cell; ++v) rep.embb_user.push_back(embb_user_rate(d, sinr, cfg, v));
  rep.urllc_user_rb.assign(std::size_t(cfg.urllc_users_per_cell) * M, 0.0);
  for (int u = 0; u < cfg.urllc_users_per_cell; ++u)
    for (int m = 0; m < M; ++m) {
      const int n = d.puncture.punctured_by(u, m);
      if (n == 0) continue;
      const double raw = urllc_rb_rate_unclamped(sinr.urllc_at(u, m), n, cfg.decode_error_target, cfg);
      if (raw < 0.0) ++rep.clamped;
      rep.urllc_user_rb[std::size_t(u) * M + m] = std::max(0.0, raw);
    }
  for (int m = 0; m < M; ++m)
    rep.punctured_fraction.push_back(static_cast<double>(d.puncture.punctured_on_rb(m)) / L);
  return rep;
}

}  // namespace orsched
