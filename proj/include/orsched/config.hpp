#pragma once

// Scenario configuration: radio constants, traffic, learning hyperparameters and seeds.
//
// Units follow the field comments. Pathloss distances are taken in kilometres
// (PL = 120.8 + 37.5 log10(d_km)). The noise power per RB is derived as
// noise_psd + 10 log10(rb_bandwidth) + noise_figure.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "orsched/errors.hpp"
#include "orsched/rng.hpp"

namespace orsched {

enum class Fading { rayleigh, none };
enum class UrllcPowerMode { reuse, fixed_share };
enum class OptimizerKind { adam, sgd };
enum class Exploration { thompson, eps_greedy };
enum class RewardVariant { shortfall, literal };

struct SimConfig {
  // [scenario]
  int num_cells = 4;
  double cell_side = 15.811388300841896;  // m, sqrt(250 m^2)
  int embb_users_per_cell = 4;
  int urllc_users_per_cell = 4;
  std::uint64_t rng_seed = 1;

  // [radio]
  int num_rbs = 12;
  double rb_bandwidth = 180e3;     // Hz
  double total_bandwidth = 20e6;   // Hz
  int minislots_per_tti = 7;
  int symbols_per_minislot = 2;
  int symbols_per_tti = 14;
  int subcarriers_per_rb = 12;
  double tti_duration = 1e-3;          // s
  double minislot_duration = 0.143e-3;  // s
  double p_max = 6.309573444801933;    // W, 38 dBm
  double noise_psd = -174.0;           // dBm/Hz
  double noise_figure = 7.0;           // dB
  Fading fading = Fading::rayleigh;
  UrllcPowerMode urllc_power_mode = UrllcPowerMode::reuse;
  int power_levels = 0;  // 0: continuous power split; n > 1: n-level grid per RB

  // [traffic]
  int urllc_packet_bits = 256;
  double arrival_rate = 20.0;  // packets per TTI (Poisson mean)
  std::vector<double> train_arrival_rates;  // per-episode choices during training; empty = arrival_rate
  double outage_target = 0.01;
  double decode_error_target = 1e-5;
  int harq_rtt = 4;  // mini-slots
  int max_harq_attempts = 2;
  int outage_window = 200;  // TTIs

  // [learning]
  double discount = 0.95;
  double soft_update = 0.005;
  double actor_lr = 1e-5;
  double critic_lr = 1e-3;
  int ensemble_size = 5;
  double mask_prob = 0.5;
  int replay_capacity = 100000;
  int batch_size = 64;
  int episode_len_ttis = 100;
  std::vector<int> hidden_layers{128, 128};
  OptimizerKind optimizer = OptimizerKind::adam;
  Exploration exploration = Exploration::thompson;
  double epsilon = 0.1;
  bool action_noise = true;
  double noise_sigma_start = 0.3;
  double noise_sigma_end = 0.05;
  RewardVariant reward_variant = RewardVariant::shortfall;
  double gain_db_mean = -38.0;
  double gain_db_std = 8.0;
  double phi_norm = 100.0;
  int broadcast_period = 100;
  int warmup_steps = 200;
  int train_every = 1;
  int checkpoint_every = 0;
  int train_steps = 50000;  // TTIs

  // Derived quantities.
  int embb_action_dim() const { return embb_users_per_cell * num_rbs; }
  int action_dim() const { return embb_users_per_cell * num_rbs + num_rbs + num_rbs * minislots_per_tti; }
  int state_dim() const { return embb_users_per_cell * num_rbs + urllc_users_per_cell * num_rbs + 3; }
  double noise_power_w() const {
    const double dbm = noise_psd + 10.0 * std::log10(rb_bandwidth) + noise_figure;
    return std::pow(10.0, (dbm - 30.0) / 10.0);
  }
  int cell_minislot_count() const { return num_rbs * minislots_per_tti; }

  bool operator==(const SimConfig&) const = default;
};

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

namespace detail {

template <class E>
struct EnumNames;
template <>
struct EnumNames<Fading> {
  static constexpr std::pair<Fading, std::string_view> values[] = {{Fading::rayleigh, "rayleigh"},
                                                                   {Fading::none, "none"}};
};
template <>
struct EnumNames<UrllcPowerMode> {
  static constexpr std::pair<UrllcPowerMode, std::string_view> values[] = {
      {UrllcPowerMode::reuse, "reuse"}, {UrllcPowerMode::fixed_share, "fixed_share"}};
};
template <>
struct EnumNames<OptimizerKind> {
  static constexpr std::pair<OptimizerKind, std::string_view> values[] = {{OptimizerKind::adam, "adam"},
                                                                          {OptimizerKind::sgd, "sgd"}};
};
template <>
struct EnumNames<Exploration> {
  static constexpr std::pair<Exploration, std::string_view> values[] = {
      {Exploration::thompson, "thompson"}, {Exploration::eps_greedy, "eps_greedy"}};
};
template <>
struct EnumNames<RewardVariant> {
  static constexpr std::pair<RewardVariant, std::string_view> values[] = {
      {RewardVariant::shortfall, "shortfall"}, {RewardVariant::literal, "literal"}};
};

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view s, double& out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

template <class I>
bool parse_int(std::string_view s, I& out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(',', start);
    auto tok = s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
    out.push_back(tok);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

using FieldRef = std::variant<int SimConfig::*, double SimConfig::*, std::uint64_t SimConfig::*, bool SimConfig::*,
                              std::vector<double> SimConfig::*, std::vector<int> SimConfig::*,
                              Fading SimConfig::*, UrllcPowerMode SimConfig::*, OptimizerKind SimConfig::*,
                              Exploration SimConfig::*, RewardVariant SimConfig::*>;

struct FieldSpec {
  std::string_view section;
  std::string_view name;
  FieldRef ref;
};

// Order here is the serialization order.
inline const std::vector<FieldSpec>& field_table() {
  static const std::vector<FieldSpec> table = {
      {"scenario", "num_cells", &SimConfig::num_cells},
      {"scenario", "cell_side", &SimConfig::cell_side},
      {"scenario", "embb_users_per_cell", &SimConfig::embb_users_per_cell},
      {"scenario", "urllc_users_per_cell", &SimConfig::urllc_users_per_cell},
      {"scenario", "rng_seed", &SimConfig::rng_seed},
      {"radio", "num_rbs", &SimConfig::num_rbs},
      {"radio", "rb_bandwidth", &SimConfig::rb_bandwidth},
      {"radio", "total_bandwidth", &SimConfig::total_bandwidth},
      {"radio", "minislots_per_tti", &SimConfig::minislots_per_tti},
      {"radio", "symbols_per_minislot", &SimConfig::symbols_per_minislot},
      {"radio", "symbols_per_tti", &SimConfig::symbols_per_tti},
      {"radio", "subcarriers_per_rb", &SimConfig::subcarriers_per_rb},
      {"radio", "tti_duration", &SimConfig::tti_duration},
      {"radio", "minislot_duration", &SimConfig::minislot_duration},
      {"radio", "p_max", &SimConfig::p_max},
      {"radio", "noise_psd", &SimConfig::noise_psd},
      {"radio", "noise_figure", &SimConfig::noise_figure},
      {"radio", "fading", &SimConfig::fading},
      {"radio", "urllc_power_mode", &SimConfig::urllc_power_mode},
      {"radio", "power_levels", &SimConfig::power_levels},
      {"traffic", "urllc_packet_bits", &SimConfig::urllc_packet_bits},
      {"traffic", "arrival_rate", &SimConfig::arrival_rate},
      {"traffic", "train_arrival_rates", &SimConfig::train_arrival_rates},
      {"traffic", "outage_target", &SimConfig::outage_target},
      {"traffic", "decode_error_target", &SimConfig::decode_error_target},
      {"traffic", "harq_rtt", &SimConfig::harq_rtt},
      {"traffic", "max_harq_attempts", &SimConfig::max_harq_attempts},
      {"traffic", "outage_window", &SimConfig::outage_window},
      {"learning", "discount", &SimConfig::discount},
      {"learning", "soft_update", &SimConfig::soft_update},
      {"learning", "actor_lr", &SimConfig::actor_lr},
      {"learning", "critic_lr", &SimConfig::critic_lr},
      {"learning", "ensemble_size", &SimConfig::ensemble_size},
      {"learning", "mask_prob", &SimConfig::mask_prob},
      {"learning", "replay_capacity", &SimConfig::replay_capacity},
      {"learning", "batch_size", &SimConfig::batch_size},
      {"learning", "episode_len_ttis", &SimConfig::episode_len_ttis},
      {"learning", "hidden_layers", &SimConfig::hidden_layers},
      {"learning", "optimizer", &SimConfig::optimizer},
      {"learning", "exploration", &SimConfig::exploration},
      {"learning", "epsilon", &SimConfig::epsilon},
      {"learning", "action_noise", &SimConfig::action_noise},
      {"learning", "noise_sigma_start", &SimConfig::noise_sigma_start},
      {"learning", "noise_sigma_end", &SimConfig::noise_sigma_end},
      {"learning", "reward_variant", &SimConfig::reward_variant},
      {"learning", "gain_db_mean", &SimConfig::gain_db_mean},
      {"learning", "gain_db_std", &SimConfig::gain_db_std},
      {"learning", "phi_norm", &SimConfig::phi_norm},
      {"learning", "broadcast_period", &SimConfig::broadcast_period},
      {"learning", "warmup_steps", &SimConfig::warmup_steps},
      {"learning", "train_every", &SimConfig::train_every},
      {"learning", "checkpoint_every", &SimConfig::checkpoint_every},
      {"learning", "train_steps", &SimConfig::train_steps},
  };
  return table;
}

struct ValueWriter {
  const SimConfig& cfg;
  std::string operator()(int SimConfig::*p) const { return std::to_string(cfg.*p); }
  std::string operator()(double SimConfig::*p) const { return format_double(cfg.*p); }
  std::string operator()(std::uint64_t SimConfig::*p) const { return std::to_string(cfg.*p); }
  std::string operator()(bool SimConfig::*p) const { return cfg.*p ? "true" : "false"; }
  std::string operator()(std::vector<double> SimConfig::*p) const {
    std::string s;
    for (std::size_t i = 0; i < (cfg.*p).size(); ++i) s += (i ? "," : "") + format_double((cfg.*p)[i]);
    return s;
  }
  std::string operator()(std::vector<int> SimConfig::*p) const {
    std::string s;
    for (std::size_t i = 0; i < (cfg.*p).size(); ++i) s += (i ? "," : "") + std::to_string((cfg.*p)[i]);
    return s;
  }
  template <class E>
  std::string operator()(E SimConfig::*p) const {
    for (const auto& [v, n] : EnumNames<E>::values)
      if (v == cfg.*p) return std::string(n);
    return "?";
  }
};

struct ValueReader {
  SimConfig& cfg;
  std::string_view text;
  bool operator()(int SimConfig::*p) const { return parse_int(text, cfg.*p); }
  bool operator()(double SimConfig::*p) const { return parse_double(text, cfg.*p); }
  bool operator()(std::uint64_t SimConfig::*p) const { return parse_int(text, cfg.*p); }
  bool operator()(bool SimConfig::*p) const {
    if (text == "true") cfg.*p = true;
    else if (text == "false") cfg.*p = false;
    else return false;
    return true;
  }
  bool operator()(std::vector<double> SimConfig::*p) const {
    std::vector<double> out;
    for (auto tok : split_list(text)) {
      double v;
      if (!parse_double(tok, v)) return false;
      out.push_back(v);
    }
    cfg.*p = std::move(out);
    return true;
  }
  bool operator()(std::vector<int> SimConfig::*p) const {
    std::vector<int> out;
    for (auto tok : split_list(text)) {
      int v;
      if (!parse_int(tok, v)) return false;
      out.push_back(v);
    }
    cfg.*p = std::move(out);
    return true;
  }
  template <class E>
  bool operator()(E SimConfig::*p) const {
    for (const auto& [v, n] : EnumNames<E>::values)
      if (n == text) {
        cfg.*p = v;
        return true;
      }
    return false;
  }
};

}  // namespace detail

/// Every violated invariant, in a stable order. Empty means the config is valid.
inline std::vector<std::string> config_violations(const SimConfig& c) {
  std::vector<std::string> v;
  auto need = [&v](bool ok, std::string msg) {
    if (!ok) v.push_back(std::move(msg));
  };
  need(c.num_cells >= 1, "num_cells must be >= 1");
  need(c.cell_side > 2.0, "cell_side must exceed 2 m");
  need(c.embb_users_per_cell >= 1, "embb_users_per_cell must be >= 1");
  need(c.urllc_users_per_cell >= 1, "urllc_users_per_cell must be >= 1");
  need(c.num_rbs >= 1, "num_rbs must be >= 1");
  need(c.minislots_per_tti >= 1, "minislots_per_tti must be >= 1");
  need(c.symbols_per_minislot >= 1, "symbols_per_minislot must be >= 1");
  need(c.symbols_per_tti >= 1, "symbols_per_tti must be >= 1");
  need(c.subcarriers_per_rb >= 1, "subcarriers_per_rb must be >= 1");
  need(c.minislots_per_tti * c.symbols_per_minislot == c.symbols_per_tti,
       "minislots_per_tti x symbols_per_minislot must equal symbols_per_tti");
  need(c.rb_bandwidth > 0.0, "rb_bandwidth must be positive");
  need(c.num_rbs * c.rb_bandwidth <= c.total_bandwidth, "num_rbs x rb_bandwidth exceeds total_bandwidth");
  need(c.tti_duration > 0.0, "tti_duration must be positive");
  need(c.minislot_duration > 0.0, "minislot_duration must be positive");
  need(c.p_max > 0.0, "p_max must be positive");
  need(std::isfinite(c.noise_psd) && std::isfinite(c.noise_figure), "noise parameters must be finite");
  need(c.power_levels == 0 || c.power_levels >= 2, "power_levels must be 0 (continuous) or >= 2");
  need(c.urllc_packet_bits >= 1, "urllc_packet_bits must be >= 1");
  need(c.arrival_rate >= 0.0, "arrival_rate must be >= 0");
  for (double r : c.train_arrival_rates) need(r >= 0.0, "train_arrival_rates entries must be >= 0");
  need(c.outage_target > 0.0 && c.outage_target < 1.0, "outage_target must lie in (0,1)");
  need(c.decode_error_target > 0.0 && c.decode_error_target < 0.5, "decode_error_target must lie in (0,0.5)");
  need(c.harq_rtt >= 1, "harq_rtt must be >= 1");
  need(c.max_harq_attempts >= 1, "max_harq_attempts must be >= 1");
  need(c.outage_window >= 1, "outage_window must be >= 1");
  need(c.discount > 0.0 && c.discount < 1.0, "discount must lie in (0,1)");
  need(c.soft_update > 0.0 && c.soft_update <= 1.0, "soft_update must lie in (0,1]");
  need(c.actor_lr > 0.0 && c.critic_lr > 0.0, "learning rates must be positive");
  need(c.ensemble_size >= 1, "ensemble_size must be >= 1");
  need(c.mask_prob > 0.0 && c.mask_prob <= 1.0, "mask_prob must lie in (0,1]");
  need(c.replay_capacity >= 1, "replay_capacity must be >= 1");
  need(c.batch_size >= 1, "batch_size must be >= 1");
  need(c.episode_len_ttis >= 1, "episode_len_ttis must be >= 1");
  need(!c.hidden_layers.empty(), "hidden_layers must name at least one layer");
  for (int w : c.hidden_layers) need(w >= 1, "hidden layer widths must be >= 1");
  need(c.epsilon >= 0.0 && c.epsilon <= 1.0, "epsilon must lie in [0,1]");
  need(c.noise_sigma_start >= 0.0 && c.noise_sigma_end >= 0.0, "noise sigmas must be >= 0");
  need(c.gain_db_std > 0.0, "gain_db_std must be positive");
  need(c.phi_norm > 0.0, "phi_norm must be positive");
  need(c.broadcast_period >= 1, "broadcast_period must be >= 1");
  need(c.warmup_steps >= 0, "warmup_steps must be >= 0");
  need(c.train_every >= 1, "train_every must be >= 1");
  need(c.checkpoint_every >= 0, "checkpoint_every must be >= 0");
  need(c.train_steps >= 0, "train_steps must be >= 0");
  return v;
}

/// Returns cfg unchanged when valid; throws ConfigInvalid listing every violation otherwise.
inline const SimConfig& validate_config(const SimConfig& cfg) {
  auto v = config_violations(cfg);
  if (!v.empty()) throw ConfigInvalid(std::move(v));
  return cfg;
}

struct LatencyBudget {
  int minislots = 0;
  double seconds = 0.0;
  bool within_budget = true;  // against the 1 ms URLLC target
};

/// Worst-case HARQ latency excluding queuing: every attempt takes one mini-slot and every
/// non-final attempt waits harq_rtt mini-slots for its feedback.
inline LatencyBudget latency_budget_check(const SimConfig& cfg) {
  LatencyBudget b;
  b.minislots = cfg.max_harq_attempts + (cfg.max_harq_attempts - 1) * cfg.harq_rtt;
  b.seconds = b.minislots * cfg.minislot_duration;
  b.within_budget = b.seconds <= 1e-3 + 1e-12;
  return b;
}

inline std::string serialize_config(const SimConfig& cfg) {
  std::ostringstream os;
  std::string_view section;
  for (const auto& f : detail::field_table()) {
    if (f.section != section) {
      if (!section.empty()) os << '\n';
      section = f.section;
      os << '[' << section << "]\n";
    }
    os << f.name << " = " << std::visit(detail::ValueWriter{cfg}, f.ref) << '\n';
  }
  return os.str();
}

/// Parses the sectioned key/value format written by serialize_config. Keys not present keep
/// their defaults; unknown sections or keys are errors. The result is validated.
inline SimConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigInvalid({std::string("malformed config: ") + e.message() + " (line " +
                         std::to_string(e.line()) + ")"});
  }
  SimConfig cfg;
  std::vector<std::string> errors;
  const auto& table = detail::field_table();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      errors.push_back("key outside any section: " + section);
      continue;
    }
    for (const auto& [key, value] : body) {
      const detail::FieldSpec* spec = nullptr;
      for (const auto& f : table)
        if (f.section == section && f.name == key) spec = &f;
      if (!spec) {
        errors.push_back("unknown key [" + section + "] " + key);
        continue;
      }
      const std::string raw = value.data();
      if (!std::visit(detail::ValueReader{cfg, raw}, spec->ref))
        errors.push_back("bad value for [" + section + "] " + key + ": '" + raw + "'");
    }
  }
  if (!errors.empty()) throw ConfigInvalid(std::move(errors));
  validate_config(cfg);
  return cfg;
}

inline SimConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline std::uint64_t config_hash(const SimConfig& cfg) { return fnv1a64(serialize_config(cfg)); }

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  static constexpr char digits[] = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = digits[h & 0xF];
    h >>= 4;
  }
  buf[16] = '\0';
  return buf;
}

}  // namespace orsched
