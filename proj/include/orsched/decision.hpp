#pragma once

// Per-cell, per-TTI decision containers: RB assignment, eMBB power and the URLLC puncturing mask.

#include <cstdint>
#include <string>
#include <vector>

#include "orsched/config.hpp"
#include "orsched/errors.hpp"

namespace orsched {

/// beta[v][m] = 1 when eMBB user v owns RB m.
class RbAssignment {
 public:
  RbAssignment() = default;
  RbAssignment(int users, int rbs) : users_(users), rbs_(rbs), bits_(std::size_t(users) * rbs, 0) {}

  int users() const { return users_; }
  int rbs() const { return rbs_; }
  std::uint8_t operator()(int v, int m) const { return bits_[idx(v, m)]; }
  std::uint8_t& operator()(int v, int m) { return bits_[idx(v, m)]; }

  /// Owner of RB m, or -1 when unassigned.
  int owner(int m) const {
    for (int v = 0; v < users_; ++v)
      if (bits_[idx(v, m)]) return v;
    return -1;
  }

  bool operator==(const RbAssignment&) const = default;

 private:
  std::size_t idx(int v, int m) const { return std::size_t(v) * rbs_ + m; }
  int users_ = 0;
  int rbs_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// p[v][m] in watts.
class PowerAllocation {
 public:
  PowerAllocation() = default;
  PowerAllocation(int users, int rbs) : users_(users), rbs_(rbs), p_(std::size_t(users) * rbs, 0.0) {}

  int users() const { return users_; }
  int rbs() const { return rbs_; }
  double operator()(int v, int m) const { return p_[std::size_t(v) * rbs_ + m]; }
  double& operator()(int v, int m) { return p_[std::size_t(v) * rbs_ + m]; }

  /// Total transmit power on RB m across users.
  double on_rb(int m) const {
    double s = 0.0;
    for (int v = 0; v < users_; ++v) s += (*this)(v, m);
    return s;
  }
  double total() const {
    double s = 0.0;
    for (double x : p_) s += x;
    return s;
  }

  bool operator==(const PowerAllocation&) const = default;

 private:
  int users_ = 0;
  int rbs_ = 0;
  std::vector<double> p_;
};

/// eta[v][m][l] = 1 when URLLC user v punctures mini-slot l of RB m.
class PuncturingMask {
 public:
  PuncturingMask() = default;
  PuncturingMask(int users, int rbs, int minislots)
      : users_(users), rbs_(rbs), minislots_(minislots), bits_(std::size_t(users) * rbs * minislots, 0) {}

  int users() const { return users_; }
  int rbs() const { return rbs_; }
  int minislots() const { return minislots_; }
  std::uint8_t operator()(int v, int m, int l) const { return bits_[idx(v, m, l)]; }
  std::uint8_t& operator()(int v, int m, int l) { return bits_[idx(v, m, l)]; }

  /// URLLC user occupying (m, l), or -1.
  int occupant(int m, int l) const {
    for (int v = 0; v < users_; ++v)
      if (bits_[idx(v, m, l)]) return v;
    return -1;
  }
  /// Punctured mini-slots of RB m, over all users.
  int punctured_on_rb(int m) const {
    int n = 0;
    for (int v = 0; v < users_; ++v)
      for (int l = 0; l < minislots_; ++l) n += bits_[idx(v, m, l)];
    return n;
  }
  int punctured_by(int v, int m) const {
    int n = 0;
    for (int l = 0; l < minislots_; ++l) n += bits_[idx(v, m, l)];
    return n;
  }
  int total() const {
    int n = 0;
    for (auto b : bits_) n += b;
    return n;
  }

  bool operator==(const PuncturingMask&) const = default;

 private:
  std::size_t idx(int v, int m, int l) const { return (std::size_t(v) * rbs_ + m) * minislots_ + l; }
  int users_ = 0;
  int rbs_ = 0;
  int minislots_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct AllocationDecision {
  int cell = 0;
  long tti = 0;
  RbAssignment assignment;
  PowerAllocation power;
  PuncturingMask puncture;

  static AllocationDecision empty(const SimConfig& cfg, int cell, long tti) {
    return {cell, tti, RbAssignment(cfg.embb_users_per_cell, cfg.num_rbs),
            PowerAllocation(cfg.embb_users_per_cell, cfg.num_rbs),
            PuncturingMask(cfg.urllc_users_per_cell, cfg.num_rbs, cfg.minislots_per_tti)};
  }

  bool operator==(const AllocationDecision&) const = default;
};

/// Violations of the per-cell allocation constraints (single RB owner, single URLLC user per
/// mini-slot, puncture count bound, power budget, non-negative power, binary variables, power only
/// on owned RBs, shapes matching the grid).
inline std::vector<std::string> decision_violations(const AllocationDecision& d, const SimConfig& cfg) {
  std::vector<std::string> out;
  const int V = cfg.embb_users_per_cell, U = cfg.urllc_users_per_cell, M = cfg.num_rbs,
            L = cfg.minislots_per_tti;
  if (d.assignment.users() != V || d.assignment.rbs() != M || d.power.users() != V || d.power.rbs() != M ||
      d.puncture.users() != U || d.puncture.rbs() != M || d.puncture.minislots() != L) {
    out.push_back("decision shape does not match the configured grid");
    return out;
  }
  for (int m = 0; m < M; ++m) {
    int owners = 0;
    for (int v = 0; v < V; ++v) {
      const auto b = d.assignment(v, m);
      if (b > 1) out.push_back("beta not binary at v=" + std::to_string(v) + " m=" + std::to_string(m));
      owners += b;
      const double p = d.power(v, m);
      if (!(p >= 0.0)) out.push_back("negative or NaN power at v=" + std::to_string(v) + " m=" + std::to_string(m));
      if (p > 0.0 && b != 1) out.push_back("power on unowned RB at v=" + std::to_string(v) + " m=" + std::to_string(m));
    }
    if (owners > 1) out.push_back("RB " + std::to_string(m) + " assigned to more than one eMBB user");
    for (int l = 0; l < L; ++l) {
      int users = 0;
      for (int u = 0; u < U; ++u) {
        const auto e = d.puncture(u, m, l);
        if (e > 1) out.push_back("eta not binary");
        users += e;
      }
      if (users > 1)
        out.push_back("mini-slot " + std::to_string(l) + " of RB " + std::to_string(m) +
                      " punctured by more than one URLLC user");
    }
    for (int u = 0; u < U; ++u)
      if (d.puncture.punctured_by(u, m) > L) out.push_back("puncture count exceeds L");
  }
  if (d.power.total() > cfg.p_max * (1.0 + 1e-12)) out.push_back("total power exceeds p_max");
  return out;
}

}  // namespace orsched
