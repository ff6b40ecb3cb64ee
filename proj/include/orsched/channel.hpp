#pragma once

// Network geometry, block-fading channel draws and SINR evaluation.

#include <cmath>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "orsched/config.hpp"
#include "orsched/decision.hpp"
#include "orsched/rng.hpp"

namespace orsched {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

enum class UserClass { embb, urllc };

struct UserPlacement {
  double cell_side = 0.0;
  std::vector<Point> base_stations;
  // [cell][user]; users are associated with the cell that indexes them.
  std::vector<std::vector<Point>> embb;
  std::vector<std::vector<Point>> urllc;

  const std::vector<std::vector<Point>>& users(UserClass c) const { return c == UserClass::embb ? embb : urllc; }
};

inline constexpr double kMinUserDistance = 1.0;  // m

/// Base stations sit at the centres of a square grid of coverage squares.
inline Point base_station_position(int k, int num_cells, double side) {
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(num_cells))));
  return {(k % cols + 0.5) * side, (k / cols + 0.5) * side};
}

inline UserPlacement place_users(const SimConfig& cfg, Rng& rng) {
  UserPlacement pl;
  pl.cell_side = cfg.cell_side;
  const double half = cfg.cell_side / 2.0;
  std::uniform_real_distribution<double> off(-half, half);
  auto draw = [&](Point bs) {
    while (true) {
      Point p{bs.x + off(rng), bs.y + off(rng)};
      if (distance(p, bs) > kMinUserDistance) return p;
    }
  };
  for (int k = 0; k < cfg.num_cells; ++k) {
    const Point bs = base_station_position(k, cfg.num_cells, cfg.cell_side);
    pl.base_stations.push_back(bs);
    auto& e = pl.embb.emplace_back();
    for (int v = 0; v < cfg.embb_users_per_cell; ++v) e.push_back(draw(bs));
    auto& u = pl.urllc.emplace_back();
    for (int v = 0; v < cfg.urllc_users_per_cell; ++v) u.push_back(draw(bs));
  }
  return pl;
}

/// Pathloss in dB with the distance in metres converted to kilometres.
inline double pathloss_db(double distance_m) { return 120.8 + 37.5 * std::log10(distance_m / 1000.0); }

inline double pathloss_gain(double distance_m) { return std::pow(10.0, -pathloss_db(distance_m) / 10.0); }

/// Linear power gains g[tx][serving cell][user][rb] for both user classes.
class ChannelRealization {
 public:
  ChannelRealization() = default;
  ChannelRealization(int cells, int embb_users, int urllc_users, int rbs, long tti)
      : cells_(cells), embb_users_(embb_users), urllc_users_(urllc_users), rbs_(rbs), tti_(tti),
        embb_(std::size_t(cells) * cells * embb_users * rbs, 0.0),
        urllc_(std::size_t(cells) * cells * urllc_users * rbs, 0.0) {}

  int cells() const { return cells_; }
  int users(UserClass c) const { return c == UserClass::embb ? embb_users_ : urllc_users_; }
  int rbs() const { return rbs_; }
  long tti() const { return tti_; }

  double& gain(UserClass c, int tx, int serving, int v, int m) {
    return c == UserClass::embb ? embb_[idx(embb_users_, tx, serving, v, m)]
                                : urllc_[idx(urllc_users_, tx, serving, v, m)];
  }
  double gain(UserClass c, int tx, int serving, int v, int m) const {
    return c == UserClass::embb ? embb_[idx(embb_users_, tx, serving, v, m)]
                                : urllc_[idx(urllc_users_, tx, serving, v, m)];
  }
  double embb(int tx, int serving, int v, int m) const { return gain(UserClass::embb, tx, serving, v, m); }
  double urllc(int tx, int serving, int v, int m) const { return gain(UserClass::urllc, tx, serving, v, m); }

  bool operator==(const ChannelRealization&) const = default;

 private:
  std::size_t idx(int users, int tx, int serving, int v, int m) const {
    return ((std::size_t(tx) * cells_ + serving) * users + v) * rbs_ + m;
  }
  int cells_ = 0, embb_users_ = 0, urllc_users_ = 0, rbs_ = 0;
  long tti_ = 0;
  std::vector<double> embb_, urllc_;
};

/// One block-fading draw: pathloss times an exponential(1) power fade per (tx, user, RB).
inline ChannelRealization draw_channel(const UserPlacement& pl, const SimConfig& cfg, Rng& rng, long tti = 0) {
  ChannelRealization ch(cfg.num_cells, cfg.embb_users_per_cell, cfg.urllc_users_per_cell, cfg.num_rbs, tti);
  std::exponential_distribution<double> fade(1.0);
  for (auto cls : {UserClass::embb, UserClass::urllc}) {
    const auto& users = pl.users(cls);
    for (int tx = 0; tx < cfg.num_cells; ++tx)
      for (int k = 0; k < cfg.num_cells; ++k)
        for (int v = 0; v < static_cast<int>(users[k].size()); ++v) {
          const double pl_gain = pathloss_gain(distance(pl.base_stations[tx], users[k][v]));
          for (int m = 0; m < cfg.num_rbs; ++m) {
            double h2 = 1.0;
            if (cfg.fading == Fading::rayleigh) {
              // Guard the measure-zero draw that would make a gain exactly zero.
              do h2 = fade(rng);
              while (h2 <= 0.0);
            }
            ch.gain(cls, tx, k, v, m) = pl_gain * h2;
          }
        }
  }
  return ch;
}

/// Transmit power of cell k on RB m used by its URLLC punctures.
inline double urllc_tx_power(const AllocationDecision& d, const SimConfig& cfg, int m) {
  return cfg.urllc_power_mode == UrllcPowerMode::reuse ? d.power.on_rb(m) : cfg.p_max / cfg.num_rbs;
}

/// Average power radiated by a cell on RB m over the TTI, splitting eMBB and URLLC by the
/// punctured fraction of the RB.
inline double radiated_power(const AllocationDecision& d, const SimConfig& cfg, int m) {
  const double frac = static_cast<double>(d.puncture.punctured_on_rb(m)) / cfg.minislots_per_tti;
  return d.power.on_rb(m) * (1.0 - frac) + urllc_tx_power(d, cfg, m) * frac;
}

/// SINR of eMBB user v of cell k on RB m; interference sums run over the other cells only.
inline double embb_sinr(const ChannelRealization& ch, std::span<const AllocationDecision> cells,
                        const SimConfig& cfg, int k, int v, int m, double noise_w) {
  const double signal = cells[k].power(v, m) * ch.embb(k, k, v, m);
  double interference = 0.0;
  for (int kp = 0; kp < static_cast<int>(cells.size()); ++kp)
    if (kp != k) interference += radiated_power(cells[kp], cfg, m) * ch.embb(kp, k, v, m);
  return signal / (interference + noise_w);
}

inline double embb_sinr(const ChannelRealization& ch, std::span<const AllocationDecision> cells,
                        const SimConfig& cfg, int k, int v, int m) {
  return embb_sinr(ch, cells, cfg, k, v, m, cfg.noise_power_w());
}

/// SINR of URLLC user v of cell k on RB m.
inline double urllc_sinr(const ChannelRealization& ch, std::span<const AllocationDecision> cells,
                         const SimConfig& cfg, int k, int v, int m, double noise_w) {
  const double signal = urllc_tx_power(cells[k], cfg, m) * ch.urllc(k, k, v, m);
  double interference = 0.0;
  for (int kp = 0; kp < static_cast<int>(cells.size()); ++kp)
    if (kp != k) interference += radiated_power(cells[kp], cfg, m) * ch.urllc(kp, k, v, m);
  return signal / (interference + noise_w);
}

inline double urllc_sinr(const ChannelRealization& ch, std::span<const AllocationDecision> cells,
                         const SimConfig& cfg, int k, int v, int m) {
  return urllc_sinr(ch, cells, cfg, k, v, m, cfg.noise_power_w());
}

/// Channel-quality estimate of a URLLC user: SINR under a nominal uniform power split in every cell.
inline double urllc_nominal_sinr(const ChannelRealization& ch, const SimConfig& cfg, int k, int v, int m) {
  const double p = cfg.p_max / cfg.num_rbs;
  double interference = 0.0;
  for (int kp = 0; kp < ch.cells(); ++kp)
    if (kp != k) interference += p * ch.urllc(kp, k, v, m);
  return p * ch.urllc(k, k, v, m) / (interference + cfg.noise_power_w());
}

inline void write_channel_csv(std::ostream& os, const ChannelRealization& ch, bool header = true) {
  if (header) os << "tti,tx_cell,serv_cell,user_class,user,rb,gain\n";
  os.precision(17);
  for (auto cls : {UserClass::embb, UserClass::urllc})
    for (int tx = 0; tx < ch.cells(); ++tx)
      for (int k = 0; k < ch.cells(); ++k)
        for (int v = 0; v < ch.users(cls); ++v)
          for (int m = 0; m < ch.rbs(); ++m)
            os << ch.tti() << ',' << tx << ',' << k << ',' << (cls == UserClass::embb ? "embb" : "urllc") << ','
               << v << ',' << m << ',' << ch.gain(cls, tx, k, v, m) << '\n';
}

}  // namespace orsched
