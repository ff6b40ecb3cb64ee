#pragma once

// HARQ pipeline for URLLC transport blocks.
//
// Time runs on an absolute mini-slot clock (slot = tti * L + minislot). Every attempt occupies one
// mini-slot. A non-final attempt learns its outcome harq_rtt mini-slots after it ends: success is
// terminal then, failure triggers a retransmission in that same mini-slot. The final attempt is
// terminal as soon as it ends. With the defaults a block is terminal after 5 (first attempt
// succeeds) or 6 mini-slots.
//
// Packets are packed bit-wise into blocks, so one packet may ride in several blocks. A packet is
// delivered only when every block carrying it is delivered; bits that find no block are dropped.

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <ostream>
#include <string_view>
#include <vector>

#include "orsched/config.hpp"
#include "orsched/phyrates.hpp"
#include "orsched/rng.hpp"
#include "orsched/traffic.hpp"

namespace orsched {

enum class HarqEvent { arrival, tx, feedback, retx, delivered, lost };

inline std::string_view to_string(HarqEvent e) {
  switch (e) {
    case HarqEvent::arrival: return "arrival";
    case HarqEvent::tx: return "tx";
    case HarqEvent::feedback: return "feedback";
    case HarqEvent::retx: return "retx";
    case HarqEvent::delivered: return "delivered";
    case HarqEvent::lost: return "lost";
  }
  return "?";
}

struct EventRecord {
  long tti;
  int minislot;
  HarqEvent event;
  long packet_id;
  int cell;
};

class EventLog {
 public:
  void add(const EventRecord& r) { records_.push_back(r); }
  const std::vector<EventRecord>& records() const { return records_; }
  void clear() { records_.clear(); }

  void write_csv(std::ostream& os, bool header = true) const {
    if (header) os << "tti,minislot,event,packet_id,cell\n";
    for (const auto& r : records_)
      os << r.tti << ',' << r.minislot << ',' << to_string(r.event) << ',' << r.packet_id << ',' << r.cell << '\n';
  }

 private:
  std::vector<EventRecord> records_;
};

struct Segment {
  long packet = 0;
  int bits = 0;
};

enum class BlockStatus { scheduled, awaiting_feedback, awaiting_decode, delivered, lost };

struct TransportBlock {
  long id = 0;
  int cell = 0;
  int user = 0;
  int rb = 0;
  long origin_tti = 0;
  long first_tx_slot = 0;
  long tx_slot = 0;
  long due_slot = 0;
  long terminal_slot = -1;
  int attempt = 0;  // attempts started so far
  int bits = 0;
  int channel_uses = 0;
  BlockStatus status = BlockStatus::scheduled;
  std::vector<Segment> segments;
  std::vector<bool> outcomes;

  double bits_per_use() const { return static_cast<double>(bits) / channel_uses; }
  bool terminal() const { return status == BlockStatus::delivered || status == BlockStatus::lost; }
  long latency() const { return terminal_slot - first_tx_slot; }
};

/// One Bernoulli decode experiment: success with probability 1 - decode_error_prob.
inline bool attempt_decode(const TransportBlock& block, double sinr, Rng& rng) {
  const double eps = decode_error_prob(sinr, block.channel_uses, block.bits_per_use());
  return uniform01(rng) >= eps;
}

struct PacketState {
  long id = 0;
  int cell = 0;
  long tti = 0;
  int minislot = 0;
  int bits = 0;
  int packed_bits = 0;
  int open_blocks = 0;
  bool failed = false;
  bool terminal = false;
  bool delivered = false;
};

struct TtiTally {
  int arrived = 0;
  int delivered = 0;
  int lost = 0;
  bool resolved() const { return delivered + lost == arrived; }
};

struct HarqStepEvents {
  std::vector<long> feedback;                          // blocks whose feedback surfaced
  std::vector<std::pair<long, int>> retransmissions;   // (block, granted rb)
  std::vector<std::pair<long, bool>> terminal;         // (block, delivered)
  std::vector<long> latencies;                         // mini-slots, one per terminal block
  std::vector<long> transmitted;                       // blocks sent in this slot
};

class HarqLedger {
 public:
  // Per-block SINR at the current slot, and the RB granted to a retransmission (-1 to refuse).
  using SinrFn = std::function<double(const TransportBlock&, long slot)>;
  using GrantFn = std::function<int(const TransportBlock&, long slot)>;

  explicit HarqLedger(const SimConfig& cfg, EventLog* log = nullptr)
      : minislots_(cfg.minislots_per_tti), rtt_(cfg.harq_rtt), max_attempts_(cfg.max_harq_attempts),
        packet_bits_(cfg.urllc_packet_bits), log_(log) {}

  int minislots() const { return minislots_; }

  /// Registers the packets of one cell and TTI; returns their ids in arrival order.
  std::vector<long> admit(int cell, long tti, const UrllcArrivalRecord& arrivals) {
    std::vector<long> ids;
    auto& tally = tallies_[{cell, tti}];
    for (int l = 0; l < static_cast<int>(arrivals.per_minislot.size()); ++l)
      for (int n = 0; n < arrivals.per_minislot[l]; ++n) {
        const long id = next_packet_++;
        packets_[id] = PacketState{id, cell, tti, l, packet_bits_, 0, 0, false, false, false};
        ids.push_back(id);
        ++tally.arrived;
        ++total_arrived_;
        emit(tti, l, HarqEvent::arrival, id, cell);
      }
    return ids;
  }

  /// Creates a block that first transmits at `slot`. Returns its id.
  long open_block(int cell, int user, int rb, long slot, int bits, int channel_uses, long origin_tti) {
    const long id = next_block_++;
    TransportBlock b;
    b.id = id;
    b.cell = cell;
    b.user = user;
    b.rb = rb;
    b.origin_tti = origin_tti;
    b.first_tx_slot = slot;
    b.tx_slot = slot;
    b.bits = bits;
    b.channel_uses = channel_uses;
    blocks_.emplace(id, std::move(b));
    return id;
  }

  /// Fills blocks (in the given order) with the packets (in the given order). Packets left
  /// incomplete are dropped. Blocks that end up empty are discarded. Returns the number of
  /// dropped packets.
  int pack(std::span<const long> packet_ids, std::span<const long> block_ids) {
    std::size_t bi = 0;
    int remaining = bi < block_ids.size() ? blocks_.at(block_ids[bi]).bits : 0;
    for (long pid : packet_ids) {
      auto& p = packets_.at(pid);
      while (p.packed_bits < p.bits && bi < block_ids.size()) {
        if (remaining == 0) {
          ++bi;
          if (bi == block_ids.size()) break;
          remaining = blocks_.at(block_ids[bi]).bits;
          continue;
        }
        const int take = std::min(remaining, p.bits - p.packed_bits);
        auto& b = blocks_.at(block_ids[bi]);
        b.segments.push_back({pid, take});
        p.packed_bits += take;
        remaining -= take;
      }
    }
    // Blocks carry only what they were given.
    for (long id : block_ids) {
      auto it = blocks_.find(id);
      int used = 0;
      for (const auto& s : it->second.segments) used += s.bits;
      if (used == 0) {
        blocks_.erase(it);
        continue;
      }
      it->second.bits = used;
      // Sequential filling puts at most one segment of a packet in any block.
      for (const auto& s : it->second.segments) ++packets_.at(s.packet).open_blocks;
    }
    int dropped = 0;
    for (long pid : packet_ids) {
      auto& p = packets_.at(pid);
      if (p.packed_bits < p.bits) {
        p.failed = true;
        ++dropped;
        if (p.open_blocks == 0) finish_packet(p, p.tti * minislots_ + p.minislot);
      }
    }
    return dropped;
  }

  /// Processes one mini-slot: surfaces due feedback, grants retransmissions, runs the decode
  /// experiments of every block transmitting now and closes blocks that became terminal.
  HarqStepEvents advance(long slot, const SinrFn& sinr, const GrantFn& grant, Rng& rng) {
    HarqStepEvents ev;
    std::vector<long> done;
    for (auto& [id, b] : blocks_) {
      if (b.due_slot != slot) continue;
      if (b.status == BlockStatus::awaiting_feedback) {
        ev.feedback.push_back(id);
        log_block(b, slot, HarqEvent::feedback);
        if (b.outcomes.back()) {
          close(b, slot, true, ev);
          done.push_back(id);
        } else {
          const int rb = grant(b, slot);
          if (rb < 0) {
            close(b, slot, false, ev);
            done.push_back(id);
          } else {
            b.rb = rb;
            b.tx_slot = slot;
            b.status = BlockStatus::scheduled;
            ev.retransmissions.emplace_back(id, rb);
            log_block(b, slot, HarqEvent::retx);
          }
        }
      } else if (b.status == BlockStatus::awaiting_decode) {
        close(b, slot, b.outcomes.back(), ev);
        done.push_back(id);
      }
    }
    for (long id : done) blocks_.erase(id);

    for (auto& [id, b] : blocks_) {
      if (b.status != BlockStatus::scheduled || b.tx_slot != slot) continue;
      ++b.attempt;
      ev.transmitted.push_back(id);
      log_block(b, slot, HarqEvent::tx);
      b.outcomes.push_back(attempt_decode(b, sinr(b, slot), rng));
      if (b.attempt >= max_attempts_) {
        b.status = BlockStatus::awaiting_decode;
        b.due_slot = slot + 1;
      } else {
        b.status = BlockStatus::awaiting_feedback;
        b.due_slot = slot + 1 + rtt_;
      }
    }
    return ev;
  }

  const TtiTally& tally(int cell, long tti) const {
    static const TtiTally empty{};
    auto it = tallies_.find({cell, tti});
    return it == tallies_.end() ? empty : it->second;
  }
  void forget_tti(int cell, long tti) {
    tallies_.erase({cell, tti});
    std::erase_if(packets_, [&](const auto& kv) {
      return kv.second.terminal && kv.second.cell == cell && kv.second.tti == tti;
    });
  }

  const std::map<long, TransportBlock>& blocks() const { return blocks_; }
  const TransportBlock* block(long id) const {
    auto it = blocks_.find(id);
    return it == blocks_.end() ? nullptr : &it->second;
  }
  bool idle() const { return blocks_.empty(); }

  long total_arrived() const { return total_arrived_; }
  long total_delivered() const { return total_delivered_; }
  long total_lost() const { return total_lost_; }
  long in_flight() const { return total_arrived_ - total_delivered_ - total_lost_; }
  long max_attempts_seen() const { return max_attempts_seen_; }

 private:
  void emit(long tti, int l, HarqEvent e, long pid, int cell) {
    if (log_) log_->add({tti, l, e, pid, cell});
  }
  void log_block(const TransportBlock& b, long slot, HarqEvent e) {
    if (!log_) return;
    long last = -1;
    for (const auto& s : b.segments) {
      if (s.packet == last) continue;
      last = s.packet;
      emit(slot / minislots_, static_cast<int>(slot % minislots_), e, s.packet, b.cell);
    }
  }

  void close(TransportBlock& b, long slot, bool ok, HarqStepEvents& ev) {
    b.status = ok ? BlockStatus::delivered : BlockStatus::lost;
    b.terminal_slot = slot;
    max_attempts_seen_ = std::max<long>(max_attempts_seen_, b.attempt);
    ev.terminal.emplace_back(b.id, ok);
    ev.latencies.push_back(b.latency());
    long last = -1;
    for (const auto& s : b.segments) {
      if (s.packet == last) continue;
      last = s.packet;
      auto& p = packets_.at(s.packet);
      if (!ok) p.failed = true;
      if (--p.open_blocks == 0) finish_packet(p, slot);
    }
  }

  void finish_packet(PacketState& p, long slot) {
    if (p.terminal) return;
    p.terminal = true;
    p.delivered = !p.failed && p.packed_bits == p.bits;
    auto& t = tallies_[{p.cell, p.tti}];
    if (p.delivered) {
      ++t.delivered;
      ++total_delivered_;
    } else {
      ++t.lost;
      ++total_lost_;
    }
    emit(slot / minislots_, static_cast<int>(slot % minislots_), p.delivered ? HarqEvent::delivered : HarqEvent::lost,
         p.id, p.cell);
  }

  int minislots_;
  int rtt_;
  int max_attempts_;
  int packet_bits_;
  EventLog* log_;
  long next_packet_ = 0;
  long next_block_ = 0;
  long total_arrived_ = 0, total_delivered_ = 0, total_lost_ = 0;
  long max_attempts_seen_ = 0;
  std::map<long, TransportBlock> blocks_;
  std::map<long, PacketState> packets_;
  std::map<std::pair<int, long>, TtiTally> tallies_;
};

/// Windowed outage estimate per cell: the fraction of the last N TTIs whose delivered URLLC bits
/// fell short of the demand.
class OutageEstimator {
 public:
  OutageEstimator(int cells, int window) : window_(window), rings_(cells), violations_(cells, 0) {}

  int window() const { return window_; }

  double update(int cell, bool violation) {
    auto& ring = rings_[cell];
    ring.push_back(violation);
    violations_[cell] += violation;
    if (static_cast<int>(ring.size()) > window_) {
      violations_[cell] -= ring.front();
      ring.pop_front();
    }
    return outage(cell);
  }

  double outage(int cell) const {
    const auto& ring = rings_[cell];
    return ring.empty() ? 0.0 : static_cast<double>(violations_[cell]) / static_cast<double>(ring.size());
  }

  /// Recount from the stored window, independent of the running counter.
  double recount(int cell) const {
    const auto& ring = rings_[cell];
    if (ring.empty()) return 0.0;
    int n = 0;
    for (bool b : ring) n += b;
    return static_cast<double>(n) / static_cast<double>(ring.size());
  }

  void reset() {
    for (auto& r : rings_) r.clear();
    std::fill(violations_.begin(), violations_.end(), 0);
  }

 private:
  int window_;
  std::vector<std::deque<bool>> rings_;
  std::vector<int> violations_;
};

/// Violation indicator of one TTI against its demand, pushed into the estimator.
inline double update_outage(OutageEstimator& est, int cell, double delivered_bits, double demand_bits) {
  return est.update(cell, delivered_bits < demand_bits);
}

}  // namespace orsched
