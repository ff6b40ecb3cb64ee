#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "orsched/agent.hpp"
#include "orsched/environment.hpp"
#include "orsched/oracle.hpp"
#include "orsched/selftest.hpp"
#include "reference.hpp"

using namespace orsched;

namespace {

std::vector<RawAction> random_actions(const SimConfig& cfg, Rng& rng) {
  std::vector<RawAction> a;
  for (int k = 0; k < cfg.num_cells; ++k) a.push_back(EnsembleAgent::uniform_action(cfg.action_dim(), rng));
  return a;
}

TEST(Reward, WorkedExamples) {
  SimConfig cfg;  // 1 ms TTI: bits per TTI / 1000 = Mbit/s
  EXPECT_NEAR(compute_reward(5e6, 512, 1024, 2.0, cfg), 5.0 - 2.0 * 0.512, 1e-12);
  EXPECT_NEAR(compute_reward(5e6, 1024, 1024, 2.0, cfg), 5.0, 1e-12);
  EXPECT_NEAR(compute_reward(5e6, 512, 1024, 0.0, cfg), 5.0, 1e-12);
  cfg.reward_variant = RewardVariant::literal;
  EXPECT_NEAR(compute_reward(5e6, 512, 1024, 2.0, cfg), 5.0 + 2.0 * 0.512, 1e-12);
}

TEST(DualWeight, ProjectedSubgradientStep) {
  EXPECT_DOUBLE_EQ(update_dual_weight(0.0, 0.5, 0.01), 0.49);
  EXPECT_DOUBLE_EQ(update_dual_weight(0.005, 0.0, 0.01), 0.0);
  EXPECT_DOUBLE_EQ(update_dual_weight(1.0, 0.01, 0.01), 1.0);
  double phi = 0.0;
  for (int i = 0; i < 10; ++i) phi = update_dual_weight(phi, 0.11, 0.01);
  EXPECT_NEAR(phi, 1.0, 1e-12);
}

TEST(State, LayoutAndLength) {
  const SimConfig cfg;
  Rng rng(4);
  const auto pl = place_users(cfg, rng);
  const auto ch = draw_channel(pl, cfg, rng);
  const auto arr = draw_arrivals(20, cfg, rng);
  const auto s = build_state(ch, arr, cfg, 2);
  ASSERT_EQ(static_cast<int>(s.size()), 99);
  EXPECT_NEAR(s[0], (10 * std::log10(ch.embb(2, 2, 0, 0)) + 38.0) / 8.0, 1e-12);
  EXPECT_NEAR(s[48 + 13], (10 * std::log10(ch.urllc(2, 2, 1, 1)) + 38.0) / 8.0, 1e-12);
  EXPECT_DOUBLE_EQ(s[96], arr.total() / 100.0);
  EXPECT_EQ(s[97], 4.0);
  EXPECT_EQ(s[98], 4.0);
}

TEST(State, IgnoresOtherCellsLinks) {
  const SimConfig cfg;
  Rng rng(6);
  const auto pl = place_users(cfg, rng);
  auto ch = draw_channel(pl, cfg, rng);
  const auto arr = draw_arrivals(20, cfg, rng);
  const auto before = build_state(ch, arr, cfg, 1);
  for (int tx = 0; tx < cfg.num_cells; ++tx)
    for (int k = 0; k < cfg.num_cells; ++k)
      if (tx != 1 || k != 1)
        for (int m = 0; m < cfg.num_rbs; ++m) {
          ch.gain(UserClass::embb, tx, k, 0, m) *= 7.0;
          ch.gain(UserClass::urllc, tx, k, 0, m) *= 0.1;
        }
  EXPECT_EQ(build_state(ch, arr, cfg, 1), before);
}

TEST(PowerSplit, ContinuousUsesWholeBudget) {
  const SimConfig cfg;
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto raw = EnsembleAgent::uniform_action(cfg.num_rbs, rng);
    const auto p = rb_power_split(raw, cfg);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), cfg.p_max, 1e-12);
    for (double v : p) EXPECT_GT(v, 0.0);
  }
}

TEST(PowerSplit, GridSharesAreWholeUnits) {
  SimConfig cfg;
  cfg.power_levels = 5;
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto p = rb_power_split(EnsembleAgent::uniform_action(cfg.num_rbs, rng), cfg);
    double units = 0.0;
    for (double v : p) {
      const double u = v / cfg.p_max * 4;
      EXPECT_NEAR(u, std::round(u), 1e-12);
      units += u;
    }
    EXPECT_NEAR(units, 4.0, 1e-9);
  }
}

TEST(Decoder, FeasibleOnRandomConfigs) {
  Rng rng(77);
  for (int i = 0; i < 3000; ++i) {
    const SimConfig cfg = ref::random_config(rng);
    const auto pl = place_users(cfg, rng);
    const auto ch = draw_channel(pl, cfg, rng);
    const int packets = std::poisson_distribution<int>(30)(rng);
    const int k = std::uniform_int_distribution<int>(0, cfg.num_cells - 1)(rng);
    const auto d = decode_action(EnsembleAgent::uniform_action(cfg.action_dim(), rng), packets, urllc_cqi(ch, cfg, k),
                                 cfg, k, i);
    ASSERT_EQ(ref::violations(d, cfg), 0);
    EXPECT_TRUE(decision_violations(d, cfg).empty());
  }
}

TEST(Decoder, PuncturesCoverDemandAtEstimatedCapacity) {
  const SimConfig cfg;
  Rng rng(3);
  const auto pl = place_users(cfg, rng);
  const auto ch = draw_channel(pl, cfg, rng);
  const auto cqi = urllc_cqi(ch, cfg, 0);
  double mean = 0.0;
  for (double s : cqi) mean += minislot_capacity_bits(s, cfg);
  mean /= cqi.size();
  for (int packets : {0, 1, 5, 20, 80}) {
    const auto d = decode_action(EnsembleAgent::uniform_action(cfg.action_dim(), rng), packets, cqi, cfg, 0, 0);
    const int want = packets == 0 ? 0 : std::min(84, static_cast<int>(std::ceil(packets * 256.0 / mean)));
    EXPECT_EQ(d.puncture.total(), want) << packets;
  }
}

TEST(Decoder, RejectsWrongLengths) {
  const SimConfig cfg;
  const std::vector<double> cqi(48, 1.0);
  EXPECT_THROW(decode_action(std::vector<double>(5, 0.0), 1, cqi, cfg, 0, 0), ShapeError);
  EXPECT_THROW(decode_action(std::vector<double>(cfg.action_dim(), 0.0), 1, std::vector<double>(3), cfg, 0, 0),
               ShapeError);
}

// Independent enumeration of every decision on a 2-RB, 2-mini-slot grid.
TEST(Oracle, AgreesWithDirectEnumeration) {
  SimConfig cfg = tiny_config();
  cfg.num_rbs = 2;
  cfg.minislots_per_tti = 2;
  cfg.symbols_per_tti = 4;
  cfg.minislot_duration = cfg.tti_duration / 2;
  Rng rng(12);
  for (int inst = 0; inst < 5; ++inst) {
    const auto pl = place_users(cfg, rng);
    const auto ch = draw_channel(pl, cfg, rng);
    const int packets = 1 + inst % 2;
    const auto oracle = solve_tiny_oracle(cfg, ch, packets, 3);
    TinyObjective best;
    bool have = false;
    long count = 0;
    for (int own = 0; own < 9; ++own)              // owner of each RB in {-1, 0, 1}
      for (int lv = 0; lv < 9; ++lv)               // level of each RB in {0, 1, 2}
        for (int mask = 0; mask < 16; ++mask) {    // puncture bit per (RB, mini-slot)
          const int o[2] = {own % 3 - 1, own / 3 - 1}, g[2] = {lv % 3, lv / 3};
          if (g[0] + g[1] > 2) continue;
          if ((g[0] && o[0] < 0) || (g[1] && o[1] < 0)) continue;
          auto d = AllocationDecision::empty(cfg, 0, 0);
          for (int m = 0; m < 2; ++m) {
            if (o[m] >= 0) d.assignment(o[m], m) = 1, d.power(o[m], m) = cfg.p_max * g[m] / 2.0;
            for (int l = 0; l < 2; ++l) d.puncture(0, m, l) = (mask >> (2 * m + l)) & 1;
          }
          const auto obj = evaluate_tiny(d, ch, packets, cfg);
          ++count;
          if (!have || tiny_better(obj, best)) best = obj, have = true;
        }
    EXPECT_EQ(oracle.objective.meets_demand(), best.meets_demand());
    EXPECT_NEAR(oracle.objective.embb_bps, best.embb_bps, 1e-6 * std::max(1.0, best.embb_bps));
    EXPECT_NEAR(oracle.objective.delivered_bits, best.delivered_bits, 1e-6 * std::max(1.0, best.delivered_bits));
    EXPECT_EQ(oracle.evaluated, count);
  }
}

TEST(Oracle, RefusesLargeInstances) {
  SimConfig cfg = tiny_config();
  Rng rng(1);
  const auto ch = draw_channel(place_users(cfg, rng), cfg, rng);
  EXPECT_THROW(solve_tiny_oracle(cfg, ch, 1, 5), SizeError);
  cfg.num_rbs = 4;
  EXPECT_THROW(solve_tiny_oracle(cfg, ch, 1, 4), SizeError);
}

TEST(Oracle, NeverBeatenByDecodedActions) {
  const SimConfig cfg = tiny_config();
  Rng rng(5);
  for (int inst = 0; inst < 3; ++inst) {
    const auto ch = draw_channel(place_users(cfg, rng), cfg, rng);
    const int packets = 2;
    const auto best = solve_tiny_oracle(cfg, ch, packets, 4);
    const auto cqi = urllc_cqi(ch, cfg, 0);
    for (int i = 0; i < 2000; ++i) {
      const auto d = decode_action(EnsembleAgent::uniform_action(cfg.action_dim(), rng), packets, cqi, cfg, 0, 0);
      EXPECT_FALSE(tiny_better(evaluate_tiny(d, ch, packets, cfg), best.objective));
    }
  }
}

TEST(Environment, StepBeforeResetAndAfterEndThrow) {
  SimConfig cfg;
  cfg.episode_len_ttis = 3;
  Environment env(cfg, 1);
  Rng rng(1);
  EXPECT_THROW(env.step(random_actions(cfg, rng)), LifecycleError);
  env.reset();
  for (int i = 0; i < 3; ++i) env.step(random_actions(cfg, rng));
  EXPECT_FALSE(env.active());
  EXPECT_THROW(env.step(random_actions(cfg, rng)), LifecycleError);
  env.reset();
  EXPECT_THROW(env.step(std::vector<RawAction>(1, RawAction(cfg.action_dim(), 0.0))), ShapeError);
}

TEST(Environment, EmitsEveryTtiOnceWithTerminalLast) {
  SimConfig cfg;
  cfg.num_cells = 2;
  cfg.episode_len_ttis = 25;
  Environment env(cfg, 3);
  Rng rng(2);
  const auto s0 = env.reset();
  ASSERT_EQ(s0.size(), 2u);
  std::vector<Experience> all;
  std::vector<TtiMetrics> rows;
  bool done = false;
  while (!done) {
    auto r = env.step(random_actions(cfg, rng));
    for (auto& e : r.experiences) all.push_back(std::move(e));
    for (auto& m : r.metrics) rows.push_back(m);
    done = r.done;
  }
  ASSERT_EQ(all.size(), 50u);
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(all[i].tti, static_cast<long>(i / 2));
    EXPECT_EQ(all[i].cell, static_cast<int>(i % 2));
    EXPECT_EQ(all[i].terminal, i >= 48);
    EXPECT_EQ(all[i].state.size(), 99u);
    EXPECT_EQ(all[i].action.size(), static_cast<std::size_t>(cfg.action_dim()));
    if (i >= 2) {
      EXPECT_EQ(all[i].state, all[i - 2].next_state);
    }
  }
  for (const auto& m : rows) {
    EXPECT_NEAR(m.reward, compute_reward(m.embb_sum_rate_bps, m.urllc_delivered_bits, m.urllc_demand_bits, m.phi, cfg),
                1e-12);
    EXPECT_EQ(m.violation, m.urllc_delivered_bits < m.urllc_demand_bits);
  }
}

TEST(Environment, DualWeightFollowsOutage) {
  SimConfig cfg;
  cfg.num_cells = 1;
  cfg.episode_len_ttis = 40;
  cfg.arrival_rate = 200;  // far beyond capacity: every TTI violates
  Environment env(cfg, 9);
  Rng rng(2);
  env.reset();
  double phi = 0.0;
  bool done = false;
  while (!done) {
    auto r = env.step(random_actions(cfg, rng));
    for (const auto& m : r.metrics) {
      EXPECT_NEAR(m.phi, phi, 1e-12);
      phi = update_dual_weight(phi, m.outage, cfg.outage_target);
    }
    done = r.done;
  }
  EXPECT_NEAR(env.dual_weights()[0], phi, 1e-12);
  EXPECT_GT(phi, 1.0);
}

TEST(Environment, SameSeedSameTrajectory) {
  SimConfig cfg;
  cfg.num_cells = 2;
  cfg.episode_len_ttis = 15;
  auto run = [&](std::uint64_t seed) {
    Environment env(cfg, seed);
    Rng rng(4);
    std::vector<double> out;
    for (int ep = 0; ep < 2; ++ep) {
      env.reset();
      bool done = false;
      while (!done) {
        auto r = env.step(random_actions(cfg, rng));
        for (const auto& m : r.metrics) out.insert(out.end(), {m.embb_sum_rate_bps, m.urllc_delivered_bits, m.reward});
        done = r.done;
      }
    }
    return out;
  };
  EXPECT_EQ(run(5), run(5));
  EXPECT_NE(run(5), run(6));
}

TEST(Environment, EffectiveMaskContainsDecidedPunctures) {
  SimConfig cfg;
  cfg.num_cells = 2;
  cfg.arrival_rate = 40;
  Environment env(cfg, 8);
  Rng rng(1);
  env.reset();
  for (int t = 0; t < 20; ++t) {
    env.step(random_actions(cfg, rng));
    for (int k = 0; k < 2; ++k) {
      const auto& d = env.last_decisions()[k].puncture;
      const auto& e = env.last_effective_decisions()[k].puncture;
      for (int m = 0; m < cfg.num_rbs; ++m)
        for (int l = 0; l < cfg.minislots_per_tti; ++l) {
          if (d.occupant(m, l) >= 0) {
            EXPECT_GE(e.occupant(m, l), 0);
          }
          int users = 0;
          for (int u = 0; u < cfg.urllc_users_per_cell; ++u) users += e(u, m, l);
          EXPECT_LE(users, 1);
        }
    }
  }
}

}  // namespace
