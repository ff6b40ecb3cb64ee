#pragma once

#include <random>
#include <vector>

#include "orsched/config.hpp"
#include "orsched/rng.hpp"

namespace orsched {

/// URLLC packets arriving in each mini-slot of one TTI.
struct UrllcArrivalRecord {
  std::vector<int> per_minislot;

  int total() const {
    int s = 0;
    for (int n : per_minislot) s += n;
    return s;
  }
  bool operator==(const UrllcArrivalRecord&) const = default;
};

/// Each mini-slot draws Poisson(mean_per_tti / L) independently.
inline UrllcArrivalRecord draw_arrivals(double mean_per_tti, const SimConfig& cfg, Rng& rng) {
  UrllcArrivalRecord rec;
  rec.per_minislot.assign(cfg.minislots_per_tti, 0);
  if (mean_per_tti <= 0.0) return rec;
  std::poisson_distribution<int> dist(mean_per_tti / cfg.minislots_per_tti);
  for (auto& n : rec.per_minislot) n = dist(rng);
  return rec;
}

}  // namespace orsched
