#pragma once

// Quick built-in checks behind `orsched selftest`: tiny-instance oracle comparison, gradient
// checks, decoder fuzz and checkpoint corruption handling.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "orsched/agent.hpp"
#include "orsched/checkpoint.hpp"
#include "orsched/channel.hpp"
#include "orsched/mdp.hpp"
#include "orsched/mlp.hpp"
#include "orsched/oracle.hpp"

namespace orsched {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Single-cell toy grid small enough for exhaustive search: 3 RBs, 3 mini-slots of 2 symbols,
/// 2 eMBB users, 1 URLLC user, 4 power levels, and a TTI length chosen so that
/// B * T / L equals the block length of one mini-slot.
inline SimConfig tiny_config() {
  SimConfig c;
  c.num_cells = 1;
  c.cell_side = 1000.0;
  c.embb_users_per_cell = 2;
  c.urllc_users_per_cell = 1;
  c.num_rbs = 3;
  c.minislots_per_tti = 3;
  c.symbols_per_minislot = 2;
  c.symbols_per_tti = 6;
  c.tti_duration = 0.4e-3;
  c.minislot_duration = 0.4e-3 / 3.0;
  c.power_levels = 4;
  c.arrival_rate = 2.0;
  c.hidden_layers = {16, 16};
  c.ensemble_size = 2;
  c.episode_len_ttis = 20;
  c.train_steps = 200;
  c.warmup_steps = 50;
  c.batch_size = 16;
  c.replay_capacity = 1000;
  return c;
}

/// Largest relative error between analytic and central-difference gradients of sum(w .* f(x))
/// for a random weighting w.
inline double max_gradient_error(const Mlp& net, const Eigen::VectorXd& x, Rng& rng, double h = 1e-6) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd up(net.output_size());
  for (auto& v : up) v = n(rng);
  auto f = [&](const Mlp& m) { return up.dot(m.forward(x)); };
  MlpCache cache;
  net.forward(Eigen::MatrixXd(x), cache);
  const MlpGrads g = net.backward(cache, Eigen::MatrixXd(up));
  double worst = 0.0;
  Mlp probe = net;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1e-6, std::max(std::abs(a), std::abs(b))); };
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    auto& w = probe.layers()[l].w;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double keep = w.data()[i];
      w.data()[i] = keep + h;
      const double fp = f(probe);
      w.data()[i] = keep - h;
      const double fm = f(probe);
      w.data()[i] = keep;
      worst = std::max(worst, rel((fp - fm) / (2 * h), g.w[l].data()[i]));
    }
    auto& b = probe.layers()[l].b;
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      const double keep = b(i);
      b(i) = keep + h;
      const double fp = f(probe);
      b(i) = keep - h;
      const double fm = f(probe);
      b(i) = keep;
      worst = std::max(worst, rel((fp - fm) / (2 * h), g.b[l](i)));
    }
  }
  return worst;
}

inline std::vector<CheckResult> run_selftest(std::uint64_t seed = 1) {
  std::vector<CheckResult> out;
  Rng rng = make_stream(seed, "selftest");

  {  // oracle comparison
    const SimConfig cfg = tiny_config();
    bool ok = true;
    double ratio_sum = 0.0;
    const int instances = 5, draws = 2000;
    for (int i = 0; i < instances; ++i) {
      const auto pl = place_users(cfg, rng);
      const auto ch = draw_channel(pl, cfg, rng);
      const int packets = std::poisson_distribution<int>(cfg.arrival_rate)(rng);
      const auto best = solve_tiny_oracle(cfg, ch, packets, cfg.power_levels);
      const auto cqi = urllc_cqi(ch, cfg, 0);
      TinyObjective found;
      bool have = false;
      for (int d = 0; d < draws; ++d) {
        const auto raw = EnsembleAgent::uniform_action(cfg.action_dim(), rng);
        const auto obj = evaluate_tiny(decode_action(raw, packets, cqi, cfg, 0, 0), ch, packets, cfg);
        if (!have || tiny_better(obj, found)) found = obj, have = true;
      }
      if (tiny_better(found, best.objective)) ok = false;
      ratio_sum += best.objective.embb_bps > 0 ? found.embb_bps / best.objective.embb_bps : 1.0;
    }
    out.push_back({"tiny oracle bounds decoder", ok,
                   "mean eMBB ratio " + std::to_string(ratio_sum / instances) + " over " +
                       std::to_string(instances) + " instances"});
  }

  {  // gradient checks
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
      std::uniform_int_distribution<int> w(1, 6);
      const std::vector<int> widths{w(rng), w(rng), w(rng), w(rng)};
      const Mlp net(widths, Activation::tanh, Activation::linear, rng);
      Eigen::VectorXd x(widths[0]);
      for (auto& v : x) v = uniform01(rng) * 2 - 1;
      worst = std::max(worst, max_gradient_error(net, x, rng));
    }
    out.push_back({"MLP gradients vs finite differences", worst <= 1e-4, "max relative error " + std::to_string(worst)});
  }

  {  // decoder fuzz
    SimConfig cfg;
    long bad = 0;
    const auto pl = place_users(cfg, rng);
    for (int i = 0; i < 10000; ++i) {
      const auto ch = draw_channel(pl, cfg, rng);
      const auto raw = EnsembleAgent::uniform_action(cfg.action_dim(), rng);
      const int packets = std::poisson_distribution<int>(60.0)(rng);
      const auto d = decode_action(raw, packets, urllc_cqi(ch, cfg, 0), cfg, 0, i);
      bad += decision_violations(d, cfg).empty() ? 0 : 1;
    }
    out.push_back({"decoder fuzz (10000 actions)", bad == 0, std::to_string(bad) + " infeasible decisions"});
  }

  {  // checkpoint corruption
    const SimConfig cfg = tiny_config();
    Rng init(seed);
    EnsembleAgent agent(cfg, cfg.state_dim(), cfg.action_dim(), init);
    std::string bytes = serialize_checkpoint(agent, cfg);
    bytes[bytes.size() / 2] ^= 0x5A;
    bool caught = false;
    try {
      deserialize_checkpoint(bytes);
    } catch (const ChecksumError&) {
      caught = true;
    }
    out.push_back({"corrupted checkpoint rejected", caught, caught ? "ChecksumError raised" : "corruption not detected"});
  }
  return out;
}

}  // namespace orsched
