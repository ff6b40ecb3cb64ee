#pragma once

// Training and evaluation drivers.
//
// Roles run in one process: per-cell executors act on a published copy of the global agent, every
// experience they produce passes through an ingestion queue into the central replay, and a single
// trainer updates the global agent and republishes it every broadcast_period steps. A step is one
// TTI of the whole K-cell network.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "orsched/agent.hpp"
#include "orsched/checkpoint.hpp"
#include "orsched/config.hpp"
#include "orsched/environment.hpp"
#include "orsched/replay.hpp"
#include "orsched/rng.hpp"

namespace orsched {

/// FNV-1a over every parameter of every network, in checkpoint order.
inline std::uint64_t parameter_hash(const EnsembleAgent& a) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](double v) {
    unsigned char b[8];
    std::memcpy(b, &v, 8);
    for (unsigned char c : b) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  detail::for_each_network(a, [&](const Mlp& net) {
    for (const auto& l : net.layers()) {
      for (Eigen::Index i = 0; i < l.w.size(); ++i) mix(l.w.data()[i]);
      for (Eigen::Index i = 0; i < l.b.size(); ++i) mix(l.b(i));
    }
  });
  return h;
}

inline std::string csv_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_csv_preamble(std::ostream& os, const SimConfig& cfg, const std::string& header) {
  os << "# config_hash=" << hash_hex(config_hash(cfg)) << "\n" << header << "\n";
}

inline constexpr const char* kMetricsHeader =
    "step,episode,sim_time_s,tti,cell,embb_sum_rate_bps,urllc_delivered_bits,urllc_demand_bits,violation_flag,psi,"
    "phi,reward";

inline void write_metrics_row(std::ostream& os, long step, double sim_time, const TtiMetrics& m) {
  os << step << ',' << m.episode << ',' << csv_double(sim_time) << ',' << m.tti << ',' << m.cell << ','
     << csv_double(m.embb_sum_rate_bps) << ',' << csv_double(m.urllc_delivered_bits) << ','
     << csv_double(m.urllc_demand_bits) << ',' << (m.violation ? 1 : 0) << ',' << csv_double(m.outage) << ','
     << csv_double(m.phi) << ',' << csv_double(m.reward) << '\n';
}

struct IngestRecord {
  long episode = 0;
  int cell = 0;
  long tti = 0;
};

struct TrainOptions {
  std::filesystem::path out_dir;       // empty: keep everything in memory
  bool record_ingestion = false;       // keep the (episode, cell, tti) of every ingested experience
  bool record_snapshots = false;       // keep the parameter hash of every published snapshot and
                                       // of the snapshot used at every step
  std::function<void(long step, const TrainStats&)> on_update;  // optional progress hook
};

struct TrainResult {
  long steps = 0;
  long episodes = 0;
  long updates = 0;
  long emitted = 0;   // experiences produced by the environment
  long ingested = 0;  // experiences moved into the replay
  double last_critic_loss = 0.0;
  std::filesystem::path checkpoint_path;
  std::filesystem::path metrics_path;
  std::filesystem::path config_path;
  std::vector<IngestRecord> ingestion_log;
  std::vector<std::uint64_t> published_hashes;
  std::vector<std::uint64_t> executor_hashes;
  std::vector<TtiMetrics> metrics;  // only kept when out_dir is empty
};

/// Linear decay of the exploration noise over the configured training horizon.
inline double noise_sigma(const SimConfig& cfg, long step) {
  if (!cfg.action_noise) return 0.0;
  const double f = cfg.train_steps > 0 ? std::min(1.0, static_cast<double>(step) / cfg.train_steps) : 1.0;
  return cfg.noise_sigma_start + (cfg.noise_sigma_end - cfg.noise_sigma_start) * f;
}

class Trainer {
 public:
  Trainer(const SimConfig& cfg, std::uint64_t seed)
      : cfg_(validate_config(cfg)), seed_(seed), env_(cfg_, seed),
        init_rng_(make_stream(seed, "init")),
        agent_(cfg_, cfg_.state_dim(), cfg_.action_dim(), init_rng_),
        replay_(static_cast<std::size_t>(cfg_.replay_capacity), cfg_.ensemble_size, cfg_.mask_prob),
        snapshot_(agent_), mask_rng_(make_stream(seed, "mask")), batch_rng_(make_stream(seed, "batch")),
        explore_rng_(make_stream(seed, "explore")), episode_rng_(make_stream(seed, "episode")) {}

  const EnsembleAgent& agent() const { return agent_; }
  const EnsembleAgent& snapshot() const { return snapshot_; }
  const ReplayBuffer& replay() const { return replay_; }
  const Environment& environment() const { return env_; }

  TrainResult run(const TrainOptions& opt = {}) {
    TrainResult res;
    std::ofstream metrics;
    if (!opt.out_dir.empty()) {
      std::filesystem::create_directories(opt.out_dir);
      res.config_path = opt.out_dir / "config.resolved.ini";
      std::ofstream(res.config_path) << serialize_config(cfg_);
      res.metrics_path = opt.out_dir / "metrics.csv";
      metrics.open(res.metrics_path, std::ios::trunc);
      write_csv_preamble(metrics, cfg_, kMetricsHeader);
    }
    publish(res, opt);
    const bool ensemble = cfg_.exploration == Exploration::thompson;
    std::vector<int> cell_actor(cfg_.num_cells, 0);
    std::deque<Experience> queue;
    std::vector<CellState> states;

    for (long step = 0; step < cfg_.train_steps; ++step) {
      if (!env_.active()) {
        const double rate = pick_rate();
        states = env_.reset(rate);
        ++res.episodes;
        for (auto& a : cell_actor)
          a = std::uniform_int_distribution<int>(0, cfg_.ensemble_size - 1)(episode_rng_);
      }
      if (opt.record_snapshots) res.executor_hashes.push_back(snapshot_hash_);

      std::vector<RawAction> actions;
      const double sigma = noise_sigma(cfg_, step);
      for (int k = 0; k < cfg_.num_cells; ++k) {
        snapshot_.set_active(cell_actor[k]);
        if (cfg_.exploration == Exploration::thompson) actions.push_back(snapshot_.act(states[k], sigma, explore_rng_));
        else actions.push_back(snapshot_.epsilon_greedy_act(states[k], cfg_.epsilon, explore_rng_));
      }
      StepResult out = env_.step(actions);
      states = std::move(out.states);

      for (auto& e : out.experiences) queue.push_back(std::move(e));
      res.emitted += static_cast<long>(out.experiences.size());
      while (!queue.empty()) {
        Experience e = std::move(queue.front());
        queue.pop_front();
        if (opt.record_ingestion) res.ingestion_log.push_back({env_.episode(), e.cell, e.tti});
        replay_.store(std::move(e), mask_rng_);
        ++res.ingested;
      }

      const double sim_time = static_cast<double>(step + 1) * cfg_.tti_duration;
      for (const auto& m : out.metrics) {
        if (metrics.is_open()) write_metrics_row(metrics, step, sim_time, m);
        else res.metrics.push_back(m);
      }
      if (metrics.is_open() && (step + 1) % 100 == 0) metrics.flush();

      if (step >= cfg_.warmup_steps && step % cfg_.train_every == 0 &&
          replay_.size() >= static_cast<std::size_t>(cfg_.batch_size)) {
        TrainStats st;
        try {
          st = agent_.train_step(replay_, static_cast<std::size_t>(cfg_.batch_size), ensemble, batch_rng_);
        } catch (const NonFiniteLoss& e) {
          dump_diagnostics(opt, step, res, e.what());
          throw;
        }
        if (!agent_.all_finite()) {
          dump_diagnostics(opt, step, res, "non-finite parameters after update");
          throw NonFiniteLoss("non-finite parameters after update at step " + std::to_string(step));
        }
        ++res.updates;
        res.last_critic_loss = st.critic_loss;
        if (opt.on_update) opt.on_update(step, st);
      }
      res.steps = step + 1;
      if (res.steps % cfg_.broadcast_period == 0) publish(res, opt);
      if (!opt.out_dir.empty() && cfg_.checkpoint_every > 0 && res.steps % cfg_.checkpoint_every == 0)
        save_checkpoint(opt.out_dir / ("checkpoint_" + std::to_string(res.steps) + ".bin"), agent_, cfg_);
    }
    if (!opt.out_dir.empty()) {
      metrics.flush();
      res.checkpoint_path = opt.out_dir / "checkpoint.bin";
      save_checkpoint(res.checkpoint_path, agent_, cfg_);
    }
    return res;
  }

 private:
  double pick_rate() {
    if (cfg_.train_arrival_rates.empty()) return cfg_.arrival_rate;
    const auto n = cfg_.train_arrival_rates.size();
    return cfg_.train_arrival_rates[std::uniform_int_distribution<std::size_t>(0, n - 1)(episode_rng_)];
  }

  void publish(TrainResult& res, const TrainOptions& opt) {
    snapshot_ = agent_;
    snapshot_hash_ = opt.record_snapshots ? parameter_hash(snapshot_) : 0;
    if (opt.record_snapshots) res.published_hashes.push_back(snapshot_hash_);
  }

  void dump_diagnostics(const TrainOptions& opt, long step, const TrainResult& res, const std::string& what) const {
    if (opt.out_dir.empty()) return;
    std::ofstream os(opt.out_dir / "nonfinite_dump.txt");
    os << "error: " << what << "\nstep: " << step << "\nepisode: " << env_.episode() << "\nupdates: " << res.updates
       << "\nlast_critic_loss: " << csv_double(res.last_critic_loss) << "\nreplay_size: " << replay_.size()
       << "\nconfig_hash: " << hash_hex(config_hash(cfg_)) << "\n";
  }

  SimConfig cfg_;
  std::uint64_t seed_;
  Environment env_;
  Rng init_rng_;
  EnsembleAgent agent_;
  ReplayBuffer replay_;
  EnsembleAgent snapshot_;
  std::uint64_t snapshot_hash_ = 0;
  Rng mask_rng_, batch_rng_, explore_rng_, episode_rng_;
};

inline TrainResult run_training(const SimConfig& cfg, std::uint64_t seed, const TrainOptions& opt = {}) {
  Trainer t(cfg, seed);
  return t.run(opt);
}

// ---------------------------------------------------------------------------------------------
// Evaluation

enum class EvalKind { greedy, epsilon, random };

struct EvalMethod {
  EvalKind kind = EvalKind::greedy;
  double epsilon = 0.0;
  bool ensemble_mean = true;  // greedy only: average the actors, else use the stored active actor

  std::string label() const {
    switch (kind) {
      case EvalKind::greedy: return "thompson";
      case EvalKind::epsilon: return "eps:" + csv_double(epsilon);
      case EvalKind::random: return "random";
    }
    return "?";
  }
};

/// Parses "thompson", "random" or "eps:<value>".
inline EvalMethod parse_eval_method(const std::string& s) {
  if (s == "thompson") return {EvalKind::greedy, 0.0, true};
  if (s == "random") return {EvalKind::random, 1.0, true};
  if (s.rfind("eps:", 0) == 0) {
    double e = 0.0;
    if (!detail::parse_double(s.substr(4), e) || e < 0.0 || e > 1.0)
      throw ConfigInvalid({"method '" + s + "': epsilon must be a number in [0,1]"});
    return {EvalKind::epsilon, e, true};
  }
  throw ConfigInvalid({"unknown method '" + s + "' (expected thompson, eps:<value> or random)"});
}

struct WindowSample {
  long episode = 0;
  long arrived = 0;
  long lost = 0;
  double error_prob = 0.0;  // lost / arrived packets in the window
  double outage = 0.0;      // fraction of TTIs in the window whose demand was not met
};

struct EvalResult {
  std::string method;
  double phi = 0.0;
  long ttis = 0;
  double mean_embb_bps = 0.0;  // per cell per TTI
  double mean_outage = 0.0;    // fraction of (cell, TTI) pairs with unmet demand
  double mean_reward = 0.0;
  std::vector<WindowSample> windows;  // one per (episode, cell)

  /// Fraction of windows whose outage does not exceed `limit`.
  double fraction_within(double limit) const {
    if (windows.empty()) return 1.0;
    long n = 0;
    for (const auto& w : windows) n += w.outage <= limit;
    return static_cast<double>(n) / static_cast<double>(windows.size());
  }
};

/// Noise-free rollouts of `agent` over fresh episodes at mean load `phi`. The environment streams
/// depend only on `seed`, so methods evaluated with one seed see identical channels and arrivals.
inline EvalResult run_evaluation(const EnsembleAgent& agent, SimConfig cfg, const EvalMethod& method, double phi,
                                 int episodes, std::uint64_t seed) {
  cfg.arrival_rate = phi;
  validate_config(cfg);
  if (agent.state_dim() != cfg.state_dim() || agent.action_dim() != cfg.action_dim())
    throw ShapeError("run_evaluation: agent does not match the configured grid");
  Environment env(cfg, seed);
  Rng act_rng = make_stream(seed, "eval-act");
  EvalResult res;
  res.method = method.label();
  res.phi = phi;
  double embb = 0.0, reward = 0.0;
  long violations = 0, rows = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    auto states = env.reset(phi);
    std::vector<long> cell_violations(cfg.num_cells, 0), cell_ttis(cfg.num_cells, 0);
    std::vector<long> arrived(cfg.num_cells, 0), lost(cfg.num_cells, 0);
    while (env.active()) {
      std::vector<RawAction> actions;
      for (int k = 0; k < cfg.num_cells; ++k) {
        switch (method.kind) {
          case EvalKind::greedy:
            actions.push_back(method.ensemble_mean ? agent.ensemble_mean(states[k])
                                                   : agent.policy(states[k], agent.active()));
            break;
          case EvalKind::epsilon: actions.push_back(agent.epsilon_greedy_act(states[k], method.epsilon, act_rng)); break;
          case EvalKind::random: actions.push_back(EnsembleAgent::uniform_action(cfg.action_dim(), act_rng)); break;
        }
      }
      auto out = env.step(actions);
      states = std::move(out.states);
      for (const auto& m : out.metrics) {
        embb += m.embb_sum_rate_bps;
        reward += m.reward;
        violations += m.violation;
        ++rows;
        ++cell_ttis[m.cell];
        cell_violations[m.cell] += m.violation;
        const long demand = std::lround(m.urllc_demand_bits / cfg.urllc_packet_bits);
        const long got = std::lround(m.urllc_delivered_bits / cfg.urllc_packet_bits);
        arrived[m.cell] += demand;
        lost[m.cell] += demand - got;
      }
    }
    for (int k = 0; k < cfg.num_cells; ++k) {
      WindowSample w;
      w.episode = ep;
      w.arrived = arrived[k];
      w.lost = lost[k];
      w.error_prob = arrived[k] > 0 ? static_cast<double>(lost[k]) / arrived[k] : 0.0;
      w.outage = cell_ttis[k] > 0 ? static_cast<double>(cell_violations[k]) / cell_ttis[k] : 0.0;
      res.windows.push_back(w);
    }
  }
  res.ttis = rows;
  if (rows > 0) {
    res.mean_embb_bps = embb / rows;
    res.mean_reward = reward / rows;
    res.mean_outage = static_cast<double>(violations) / rows;
  }
  return res;
}

struct CdfPoint {
  double value = 0.0;
  double cum_fraction = 0.0;
};

/// Empirical CDF: samples sorted ascending, the i-th (1-based) carrying i/n.
inline std::vector<CdfPoint> empirical_cdf(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  std::vector<CdfPoint> out;
  const double n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out.push_back({samples[i], static_cast<double>(i + 1) / n});
  return out;
}

}  // namespace orsched
