#pragma once

// Multi-cell episode environment. One step is one TTI for all K cells.
//
// URLLC outcomes of a TTI mature through HARQ during the following TTI, so the reward, metrics row
// and experience of TTI t are emitted by a later step (one TTI later with the defaults). At the end
// of an episode the HARQ pipeline is drained with no new traffic before the last TTI is closed.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "orsched/channel.hpp"
#include "orsched/config.hpp"
#include "orsched/decision.hpp"
#include "orsched/harq.hpp"
#include "orsched/mdp.hpp"
#include "orsched/phyrates.hpp"
#include "orsched/rng.hpp"
#include "orsched/traffic.hpp"

namespace orsched {

struct TtiMetrics {
  long episode = 0;
  long tti = 0;
  int cell = 0;
  double embb_sum_rate_bps = 0.0;
  double urllc_delivered_bits = 0.0;
  double urllc_demand_bits = 0.0;
  bool violation = false;
  double outage = 0.0;
  double phi = 0.0;
  double reward = 0.0;
};

struct StepResult {
  std::vector<CellState> states;  // observations for the next TTI
  std::vector<Experience> experiences;
  std::vector<TtiMetrics> metrics;
  bool done = false;
};

struct EnvCounters {
  long blocks_closed = 0;
  long clamped_cells = 0;  // punctured cells whose finite-blocklength capacity was zero
  long dropped_packets = 0;
  long refused_retx = 0;
  std::map<long, long> latency_histogram;  // mini-slots -> terminal blocks
};

class Environment {
 public:
  Environment(SimConfig cfg, std::uint64_t seed)
      : cfg_(validate_config(cfg)), seed_(seed), ledger_(cfg_), outage_(cfg_.num_cells, cfg_.outage_window) {}

  const SimConfig& config() const { return cfg_; }

  /// Starts a new episode; `arrival_rate` overrides the configured mean for this episode.
  std::vector<CellState> reset(std::optional<double> arrival_rate = std::nullopt) {
    ++episode_;
    phi_mean_ = arrival_rate.value_or(cfg_.arrival_rate);
    placement_rng_ = make_stream(seed_, "placement", episode_);
    channel_rng_ = make_stream(seed_, "channel", episode_);
    arrival_rng_ = make_stream(seed_, "arrivals", episode_);
    harq_rng_ = make_stream(seed_, "harq", episode_);
    placement_ = place_users(cfg_, placement_rng_);
    ledger_ = HarqLedger(cfg_, event_log_);
    outage_.reset();
    dual_.assign(cfg_.num_cells, 0.0);
    pending_.clear();
    states_.clear();
    tti_ = 0;
    active_ = true;
    begin_tti();
    return states_.at(tti_);
  }

  bool active() const { return active_; }
  long tti() const { return tti_; }
  long episode() const { return episode_; }
  double arrival_mean() const { return phi_mean_; }
  const ChannelRealization& channel() const { return channel_; }
  const UserPlacement& placement() const { return placement_; }
  const std::vector<UrllcArrivalRecord>& arrivals() const { return arrivals_; }
  const std::vector<CellState>& states() const { return states_.at(tti_); }
  const std::vector<double>& cqi(int k) const { return cqi_[k]; }
  const std::vector<AllocationDecision>& last_decisions() const { return decisions_; }
  const std::vector<AllocationDecision>& last_effective_decisions() const { return effective_; }
  const std::vector<double>& dual_weights() const { return dual_; }
  const HarqLedger& ledger() const { return ledger_; }
  const OutageEstimator& outage() const { return outage_; }
  const EnvCounters& counters() const { return counters_; }
  void attach_event_log(EventLog* log) { event_log_ = log; }

  StepResult step(std::span<const RawAction> actions) {
    if (!active_) throw LifecycleError(episode_ == 0 ? "step called before reset" : "step called after episode end");
    if (static_cast<int>(actions.size()) != cfg_.num_cells) throw ShapeError("step: one raw action per cell required");
    const int K = cfg_.num_cells;

    decisions_.clear();
    for (int k = 0; k < K; ++k)
      decisions_.push_back(decode_action(actions[k], arrivals_[k].total(), cqi_[k], cfg_, k, tti_));

    std::vector<CellSinr> sinr;
    for (int k = 0; k < K; ++k) sinr.push_back(compute_cell_sinr(channel_, decisions_, cfg_, k));

    effective_ = decisions_;
    for (int k = 0; k < K; ++k) schedule_new_blocks(k);
    run_tti_slots(sinr);

    auto& pend = pending_[tti_];
    pend.actions.assign(actions.begin(), actions.end());
    pend.embb_bps.assign(K, 0.0);
    for (int k = 0; k < K; ++k) {
      double sum = 0.0;
      for (int v = 0; v < cfg_.embb_users_per_cell; ++v) sum += embb_user_rate(effective_[k], sinr[k], cfg_, v);
      pend.embb_bps[k] = sum;
    }

    StepResult out;
    ++tti_;
    if (tti_ >= cfg_.episode_len_ttis) {
      drain(out);
      active_ = false;
      out.done = true;
      out.states = states_.at(tti_);
    } else {
      begin_tti();
      resolve_ready(out, false);
      out.states = states_.at(tti_);
    }
    return out;
  }

 private:
  struct Pending {
    std::vector<RawAction> actions;
    std::vector<double> embb_bps;
  };

  void begin_tti() {
    channel_ = draw_channel(placement_, cfg_, channel_rng_, tti_);
    arrivals_.clear();
    cqi_.clear();
    std::vector<CellState> st;
    for (int k = 0; k < cfg_.num_cells; ++k) {
      arrivals_.push_back(draw_arrivals(phi_mean_, cfg_, arrival_rng_));
      cqi_.push_back(urllc_cqi(channel_, cfg_, k));
      st.push_back(build_state(channel_, arrivals_[k], cfg_, k));
    }
    states_[tti_] = std::move(st);
    occupied_.clear();
  }

  void schedule_new_blocks(int k) {
    const auto ids = ledger_.admit(k, tti_, arrivals_[k]);
    const auto& eta = decisions_[k].puncture;
    const int L = cfg_.minislots_per_tti;
    std::vector<long> blocks;
    for (int l = 0; l < L; ++l)
      for (int m = 0; m < cfg_.num_rbs; ++m) {
        const int u = eta.occupant(m, l);
        if (u < 0) continue;
        occupied_[{k, l}].insert(m);
        const int bits = minislot_capacity_bits(cqi_[k][std::size_t(u) * cfg_.num_rbs + m], cfg_);
        if (bits == 0) {
          ++counters_.clamped_cells;
          continue;
        }
        blocks.push_back(
            ledger_.open_block(k, u, m, tti_ * L + l, bits, urllc_blocklength(1, cfg_), tti_));
      }
    counters_.dropped_packets += ledger_.pack(ids, blocks);
  }

  void run_tti_slots(const std::vector<CellSinr>& sinr) {
    const int L = cfg_.minislots_per_tti;
    auto sinr_fn = [&](const TransportBlock& b, long) { return sinr[b.cell].urllc_at(b.user, b.rb); };
    auto grant_fn = [&](const TransportBlock& b, long slot) { return grant(b, slot); };
    for (int l = 0; l < L; ++l) account(ledger_.advance(tti_ * L + l, sinr_fn, grant_fn, harq_rng_));
  }

  int grant(const TransportBlock& b, long slot) {
    const int L = cfg_.minislots_per_tti;
    if (slot / L != tti_) return -1;
    const int l = static_cast<int>(slot % L);
    auto& used = occupied_[{b.cell, l}];
    int rb = -1;
    if (!used.count(b.rb)) rb = b.rb;
    else
      for (int m = 0; m < cfg_.num_rbs; ++m)
        if (!used.count(m)) {
          rb = m;
          break;
        }
    if (rb < 0) {
      ++counters_.refused_retx;
      return -1;
    }
    used.insert(rb);
    effective_[b.cell].puncture(b.user, rb, l) = 1;
    return rb;
  }

  void account(const HarqStepEvents& ev) {
    counters_.blocks_closed += static_cast<long>(ev.terminal.size());
    for (long lat : ev.latencies) ++counters_.latency_histogram[lat];
  }

  // Runs the HARQ clock through empty TTIs until every pending TTI is resolved.
  void drain(StepResult& out) {
    const int L = cfg_.minislots_per_tti;
    begin_tti();
    auto idle = decisions_;
    for (auto& d : idle) d.puncture = PuncturingMask(cfg_.urllc_users_per_cell, cfg_.num_rbs, L);
    std::vector<CellSinr> sinr;
    for (int k = 0; k < cfg_.num_cells; ++k) sinr.push_back(compute_cell_sinr(channel_, idle, cfg_, k));
    effective_ = idle;
    long slot = tti_ * L;
    auto sinr_fn = [&](const TransportBlock& b, long) { return sinr[b.cell].urllc_at(b.user, b.rb); };
    auto grant_fn = [&](const TransportBlock& b, long s) {
      // Drained retransmissions land on the same RB; no eMBB traffic remains to collide with.
      (void)s;
      return b.rb;
    };
    while (!ledger_.idle()) account(ledger_.advance(slot++, sinr_fn, grant_fn, harq_rng_));
    resolve_ready(out, true);
  }

  void resolve_ready(StepResult& out, bool final_step) {
    const int K = cfg_.num_cells;
    while (!pending_.empty()) {
      const long t = pending_.begin()->first;
      bool ready = true;
      for (int k = 0; k < K; ++k) ready = ready && ledger_.tally(k, t).resolved();
      if (!ready) break;
      const bool terminal = final_step && pending_.size() == 1;
      auto& pend = pending_.begin()->second;
      for (int k = 0; k < K; ++k) {
        const auto& tally = ledger_.tally(k, t);
        TtiMetrics row;
        row.episode = episode_;
        row.tti = t;
        row.cell = k;
        row.embb_sum_rate_bps = pend.embb_bps[k];
        row.urllc_delivered_bits = static_cast<double>(tally.delivered) * cfg_.urllc_packet_bits;
        row.urllc_demand_bits = static_cast<double>(tally.arrived) * cfg_.urllc_packet_bits;
        row.violation = row.urllc_delivered_bits < row.urllc_demand_bits;
        row.outage = update_outage(outage_, k, row.urllc_delivered_bits, row.urllc_demand_bits);
        row.phi = dual_[k];
        row.reward = compute_reward(row.embb_sum_rate_bps, row.urllc_delivered_bits, row.urllc_demand_bits,
                                    dual_[k], cfg_);
        dual_[k] = update_dual_weight(dual_[k], row.outage, cfg_.outage_target);
        out.metrics.push_back(row);

        Experience e;
        e.cell = k;
        e.tti = t;
        e.state = states_.at(t)[k];
        e.action = pend.actions[k];
        e.reward = row.reward;
        e.next_state = states_.at(t + 1)[k];
        e.terminal = terminal;
        out.experiences.push_back(std::move(e));
        ledger_.forget_tti(k, t);
      }
      states_.erase(t);
      pending_.erase(pending_.begin());
    }
  }

  SimConfig cfg_;
  std::uint64_t seed_;
  long episode_ = 0;
  long tti_ = 0;
  bool active_ = false;
  double phi_mean_ = 0.0;
  Rng placement_rng_, channel_rng_, arrival_rng_, harq_rng_;
  UserPlacement placement_;
  ChannelRealization channel_;
  std::vector<UrllcArrivalRecord> arrivals_;
  std::vector<std::vector<double>> cqi_;
  std::map<long, std::vector<CellState>> states_;
  std::vector<AllocationDecision> decisions_, effective_;
  std::map<std::pair<int, int>, std::set<int>> occupied_;
  std::map<long, Pending> pending_;
  HarqLedger ledger_;
  OutageEstimator outage_;
  std::vector<double> dual_;
  EventLog* event_log_ = nullptr;
  EnvCounters counters_;
};

}  // namespace orsched
