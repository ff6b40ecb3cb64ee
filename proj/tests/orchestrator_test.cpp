#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "orsched/orchestrator.hpp"
#include "orsched/selftest.hpp"

using namespace orsched;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("orsched_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

SimConfig small_run() {
  SimConfig c = tiny_config();
  c.episode_len_ttis = 12;
  c.train_steps = 90;
  c.warmup_steps = 20;
  c.broadcast_period = 7;
  return c;
}

TEST(NoiseSchedule, LinearDecay) {
  SimConfig c;
  c.train_steps = 100;
  EXPECT_DOUBLE_EQ(noise_sigma(c, 0), 0.3);
  EXPECT_NEAR(noise_sigma(c, 50), 0.175, 1e-15);
  EXPECT_DOUBLE_EQ(noise_sigma(c, 100), 0.05);
  EXPECT_DOUBLE_EQ(noise_sigma(c, 1000), 0.05);
  c.action_noise = false;
  EXPECT_EQ(noise_sigma(c, 10), 0.0);
}

TEST(Training, EveryEmittedExperienceIsIngestedOnce) {
  SimConfig cfg = small_run();
  cfg.num_cells = 2;
  cfg.train_steps = 12 * 5;  // five whole episodes
  TrainOptions opt;
  opt.record_ingestion = true;
  Trainer t(cfg, 3);
  const auto res = t.run(opt);
  EXPECT_EQ(res.episodes, 5);
  EXPECT_EQ(res.emitted, res.ingested);
  EXPECT_EQ(res.ingested, 5 * 12 * 2);
  EXPECT_EQ(t.replay().inserted(), res.ingested);
  std::set<std::tuple<long, int, long>> seen;
  for (const auto& r : res.ingestion_log) EXPECT_TRUE(seen.insert({r.episode, r.cell, r.tti}).second);
  for (long ep = 1; ep <= 5; ++ep)
    for (int k = 0; k < 2; ++k)
      for (long t2 = 0; t2 < 12; ++t2) EXPECT_EQ(seen.count({ep, k, t2}), 1u);
}

TEST(Training, ExecutorsActOnLatestBroadcast) {
  const SimConfig cfg = small_run();
  TrainOptions opt;
  opt.record_snapshots = true;
  const auto res = run_training(cfg, 4, opt);
  ASSERT_EQ(res.executor_hashes.size(), static_cast<std::size_t>(cfg.train_steps));
  ASSERT_EQ(res.published_hashes.size(), 1u + cfg.train_steps / cfg.broadcast_period);
  for (long s = 0; s < cfg.train_steps; ++s)
    EXPECT_EQ(res.executor_hashes[s], res.published_hashes[s / cfg.broadcast_period]) << s;
  // Updates start after warm-up, so later broadcasts differ from the initial one.
  EXPECT_NE(res.published_hashes.front(), res.published_hashes.back());
  EXPECT_EQ(res.published_hashes[0], res.published_hashes[1]);
}

TEST(Training, UpdatesBeginAfterWarmup) {
  const SimConfig cfg = small_run();
  long first = -1, count = 0;
  TrainOptions opt;
  opt.on_update = [&](long step, const TrainStats&) {
    if (first < 0) first = step;
    ++count;
  };
  const auto res = run_training(cfg, 4, opt);
  EXPECT_EQ(first, cfg.warmup_steps);
  EXPECT_EQ(count, res.updates);
  EXPECT_EQ(res.updates, cfg.train_steps - cfg.warmup_steps);
}

TEST(Training, SameSeedSameFiles) {
  const SimConfig cfg = small_run();
  const auto a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
  TrainOptions oa, ob, oc;
  oa.out_dir = a;
  ob.out_dir = b;
  oc.out_dir = c;
  run_training(cfg, 8, oa);
  run_training(cfg, 8, ob);
  run_training(cfg, 9, oc);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(a / "checkpoint.bin"), slurp(b / "checkpoint.bin"));
  EXPECT_NE(slurp(a / "metrics.csv"), slurp(c / "metrics.csv"));
  EXPECT_EQ(parse_config(slurp(a / "config.resolved.ini")), cfg);
  const auto cp = load_checkpoint(a / "checkpoint.bin", &cfg);
  EXPECT_EQ(cp.config, cfg);
  for (const auto& p : {a, b, c}) fs::remove_all(p);
}

TEST(Training, MetricsFileLayout) {
  SimConfig cfg = small_run();
  cfg.num_cells = 2;
  const auto dir = scratch("layout");
  TrainOptions opt;
  opt.out_dir = dir;
  run_training(cfg, 1, opt);
  std::ifstream is(dir / "metrics.csv");
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "# config_hash=" + hash_hex(config_hash(cfg)));
  std::getline(is, line);
  EXPECT_EQ(line, kMetricsHeader);
  long rows = 0;
  while (std::getline(is, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 11);
    ++rows;
  }
  // Seven whole episodes plus part of an eighth whose last TTIs are still in flight.
  EXPECT_EQ(rows % 2, 0);
  EXPECT_GE(rows, 7 * 12 * 2);
  EXPECT_LT(rows, (7 * 12 + 6) * 2);
  fs::remove_all(dir);
}

TEST(Training, PeriodicCheckpoints) {
  SimConfig cfg = small_run();
  cfg.checkpoint_every = 30;
  const auto dir = scratch("periodic");
  TrainOptions opt;
  opt.out_dir = dir;
  run_training(cfg, 1, opt);
  for (int s : {30, 60, 90}) EXPECT_TRUE(fs::exists(dir / ("checkpoint_" + std::to_string(s) + ".bin")));
  EXPECT_EQ(slurp(dir / "checkpoint_90.bin"), slurp(dir / "checkpoint.bin"));
  fs::remove_all(dir);
}

TEST(Training, DivergenceIsReportedWithDiagnostics) {
  SimConfig cfg = small_run();
  cfg.optimizer = OptimizerKind::sgd;
  cfg.critic_lr = 1e200;
  const auto dir = scratch("diverge");
  TrainOptions opt;
  opt.out_dir = dir;
  EXPECT_THROW(run_training(cfg, 1, opt), NonFiniteLoss);
  EXPECT_TRUE(fs::exists(dir / "nonfinite_dump.txt"));
  fs::remove_all(dir);
}

TEST(Training, EpsilonGreedyBaselineRuns) {
  SimConfig cfg = small_run();
  cfg.exploration = Exploration::eps_greedy;
  cfg.ensemble_size = 1;
  const auto res = run_training(cfg, 2);
  EXPECT_GT(res.updates, 0);
  EXPECT_TRUE(std::isfinite(res.last_critic_loss));
}

TEST(Evaluation, MethodsShareStreamsAndAreRepeatable) {
  const SimConfig cfg = tiny_config();
  Rng init(1);
  const EnsembleAgent agent(cfg, cfg.state_dim(), cfg.action_dim(), init);
  const auto a = run_evaluation(agent, cfg, parse_eval_method("thompson"), 2.0, 3, 5);
  const auto b = run_evaluation(agent, cfg, parse_eval_method("thompson"), 2.0, 3, 5);
  EXPECT_EQ(a.mean_embb_bps, b.mean_embb_bps);
  EXPECT_EQ(a.mean_outage, b.mean_outage);
  EXPECT_EQ(a.windows.size(), 3u);
  EXPECT_EQ(a.ttis, 3 * cfg.episode_len_ttis);
  const auto e0 = run_evaluation(agent, cfg, parse_eval_method("eps:0"), 2.0, 3, 5);
  EvalMethod single = parse_eval_method("thompson");
  single.ensemble_mean = false;
  const auto s = run_evaluation(agent, cfg, single, 2.0, 3, 5);
  EXPECT_EQ(e0.mean_embb_bps, s.mean_embb_bps);
  for (const auto& w : a.windows) {
    EXPECT_GE(w.error_prob, 0.0);
    EXPECT_LE(w.error_prob, 1.0);
    EXPECT_LE(w.lost, w.arrived);
  }
}

TEST(Evaluation, MethodParsing) {
  EXPECT_EQ(parse_eval_method("eps:0.25").epsilon, 0.25);
  EXPECT_EQ(parse_eval_method("eps:0.25").label(), "eps:0.25");
  EXPECT_EQ(parse_eval_method("random").kind, EvalKind::random);
  EXPECT_THROW(parse_eval_method("eps:1.5"), ConfigInvalid);
  EXPECT_THROW(parse_eval_method("eps:x"), ConfigInvalid);
  EXPECT_THROW(parse_eval_method("greedy"), ConfigInvalid);
}

TEST(Evaluation, FractionWithin) {
  EvalResult r;
  for (double o : {0.0, 0.01, 0.02, 0.5}) r.windows.push_back({0, 10, 0, 0.0, o});
  EXPECT_DOUBLE_EQ(r.fraction_within(0.01), 0.5);
  EXPECT_DOUBLE_EQ(r.fraction_within(1.0), 1.0);
}

TEST(Evaluation, EmpiricalCdf) {
  const auto c = empirical_cdf({0.3, 0.1, 0.2, 0.1});
  ASSERT_EQ(c.size(), 4u);
  EXPECT_EQ(c[0].value, 0.1);
  EXPECT_EQ(c[3].value, 0.3);
  EXPECT_DOUBLE_EQ(c[1].cum_fraction, 0.5);
  EXPECT_DOUBLE_EQ(c[3].cum_fraction, 1.0);
  EXPECT_TRUE(empirical_cdf({}).empty());
}

TEST(Csv, DoublesRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 6.309573444801933, 1e-300, 12345678.9})
    EXPECT_EQ(std::stod(csv_double(v)), v);
}

}  // namespace
