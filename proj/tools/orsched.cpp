// orsched: training, load sweeps, error CDFs and self-checks from the command line.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
// ORSCHED_LOG selects the log level (error, info, debug; default info).

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "orsched/checkpoint.hpp"
#include "orsched/config.hpp"
#include "orsched/orchestrator.hpp"
#include "orsched/selftest.hpp"

namespace fs = std::filesystem;
using namespace orsched;

namespace {

constexpr int kOk = 0, kRuntime = 1, kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void setup_logging() {
  auto log = spdlog::stderr_color_mt("orsched");
  spdlog::set_default_logger(log);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("ORSCHED_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") spdlog::set_level(spdlog::level::err);
  else if (level == "debug") spdlog::set_level(spdlog::level::debug);
  else {
    spdlog::set_level(spdlog::level::info);
    if (level != "info") spdlog::warn("ORSCHED_LOG='{}' not recognized, using info", level);
  }
}

std::vector<double> parse_phis(const std::string& s) {
  std::vector<double> out;
  for (auto tok : detail::split_list(s)) {
    double v = 0.0;
    if (!detail::parse_double(tok, v) || v < 0.0) throw UsageError("--phis: bad value '" + std::string(tok) + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("--phis: empty list");
  return out;
}

LoadedCheckpoint open_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path);
  return load_checkpoint(path);
}

std::ofstream open_out(const std::string& path) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path);
  return os;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed_opt, const std::string& out) {
  if (!fs::exists(config_path)) throw UsageError("config file not found: " + config_path);
  const SimConfig cfg = load_config_file(config_path);
  const std::uint64_t seed = seed_opt.value_or(cfg.rng_seed);
  const auto budget = latency_budget_check(cfg);
  if (!budget.within_budget)
    spdlog::warn("worst-case HARQ latency {} mini-slots ({:.3f} ms) exceeds 1 ms", budget.minislots, budget.seconds * 1e3);
  spdlog::info("training {} steps, config {}, seed {}", cfg.train_steps, hash_hex(config_hash(cfg)), seed);
  TrainOptions opt;
  opt.out_dir = out;
  opt.on_update = [](long step, const TrainStats& st) {
    if (step % 1000 == 0) spdlog::debug("step {} critic_loss {:.6g} actor_obj {:.6g}", step, st.critic_loss, st.actor_objective);
  };
  const auto res = run_training(cfg, seed, opt);
  spdlog::info("done: {} steps, {} episodes, {} updates -> {}", res.steps, res.episodes, res.updates,
               res.checkpoint_path.string());
  return kOk;
}

int cmd_sweep(const std::string& ckpt, const std::string& phis, int episodes, const std::string& out,
              std::vector<std::string> methods, std::uint64_t seed) {
  if (methods.empty()) methods = {"thompson"};
  std::vector<EvalMethod> parsed;
  for (const auto& m : methods) parsed.push_back(parse_eval_method(m));
  const auto loads = parse_phis(phis);
  const auto cp = open_checkpoint(ckpt);
  auto os = open_out(out);
  write_csv_preamble(os, cp.config, "phi,mean_embb_rate_bps,mean_outage,method");
  for (double phi : loads)
    for (const auto& m : parsed) {
      const auto r = run_evaluation(cp.agent, cp.config, m, phi, episodes, seed);
      os << csv_double(phi) << ',' << csv_double(r.mean_embb_bps) << ',' << csv_double(r.mean_outage) << ','
         << r.method << '\n';
      spdlog::info("phi {} {}: eMBB {:.4g} bit/s, outage {:.4f}", phi, r.method, r.mean_embb_bps, r.mean_outage);
    }
  return kOk;
}

int cmd_cdf(const std::string& ckpt, double phi, int episodes, const std::string& out, const std::string& method,
            std::uint64_t seed) {
  const auto m = parse_eval_method(method);
  const auto cp = open_checkpoint(ckpt);
  const auto r = run_evaluation(cp.agent, cp.config, m, phi, episodes, seed);
  std::vector<double> samples;
  for (const auto& w : r.windows) samples.push_back(w.error_prob);
  {
    auto os = open_out(out);
    write_csv_preamble(os, cp.config, "value,cum_fraction");
    for (const auto& p : empirical_cdf(samples)) os << csv_double(p.value) << ',' << csv_double(p.cum_fraction) << '\n';
  }
  {
    auto os = open_out(out + ".windows.csv");
    write_csv_preamble(os, cp.config, "episode,window,arrived,lost,error_prob,outage");
    for (std::size_t i = 0; i < r.windows.size(); ++i) {
      const auto& w = r.windows[i];
      os << w.episode << ',' << i << ',' << w.arrived << ',' << w.lost << ',' << csv_double(w.error_prob) << ','
         << csv_double(w.outage) << '\n';
    }
  }
  std::cout << "windows within outage limit " << cp.config.outage_target << ": "
            << r.fraction_within(cp.config.outage_target) * 100.0 << "% of " << r.windows.size() << "\n";
  return kOk;
}

int cmd_selftest(std::uint64_t seed) {
  const auto results = run_selftest(seed);
  bool all = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "PASS  " : "FAIL  ") << r.name << "  (" << r.detail << ")\n";
    all = all && r.pass;
  }
  return all ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Multi-cell eMBB/URLLC scheduling simulator and learner"};
  app.require_subcommand(1);
  std::uint64_t seed = 1;
  std::string config, out, ckpt, phis = "20,40,80,120", method = "thompson";
  int episodes = 20;
  double phi = 80.0;
  std::vector<std::string> methods;

  auto* train = app.add_subcommand("train", "train a scheduler and write checkpoint, metrics and resolved config");
  train->add_option("config", config, "configuration file (INI)")->required();
  auto* train_seed = train->add_option("--seed", seed, "run seed (default: rng_seed from the config)");
  train->add_option("--out", out, "output directory")->required();

  auto* sweep = app.add_subcommand("sweep-load", "evaluate a checkpoint over URLLC loads");
  sweep->add_option("checkpoint", ckpt, "checkpoint file")->required();
  sweep->add_option("--phis", phis, "comma-separated mean loads (packets/TTI)");
  sweep->add_option("--episodes", episodes, "episodes per load")->check(CLI::PositiveNumber);
  sweep->add_option("--out", out, "output CSV")->required();
  sweep->add_option("--method", methods, "thompson | eps:<value> | random (repeatable)");
  sweep->add_option("--seed", seed, "evaluation seed");

  auto* cdf = app.add_subcommand("cdf-error", "per-window URLLC error probability and its CDF");
  cdf->add_option("checkpoint", ckpt, "checkpoint file")->required();
  cdf->add_option("--phi", phi, "mean load (packets/TTI)")->check(CLI::NonNegativeNumber);
  cdf->add_option("--episodes", episodes, "evaluation episodes")->check(CLI::PositiveNumber);
  cdf->add_option("--out", out, "output CSV")->required();
  cdf->add_option("--method", method, "thompson | eps:<value> | random");
  cdf->add_option("--seed", seed, "evaluation seed");

  auto* self = app.add_subcommand("selftest", "oracle, gradient, decoder and checkpoint checks");
  self->add_option("--seed", seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(config, train_seed->count() ? std::optional(seed) : std::nullopt, out);
    if (*sweep) return cmd_sweep(ckpt, phis, episodes, out, methods, seed);
    if (*cdf) return cmd_cdf(ckpt, phi, episodes, out, method, seed);
    if (*self) return cmd_selftest(seed);
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const ConfigInvalid& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRuntime;
  }
  return kUsage;
}
