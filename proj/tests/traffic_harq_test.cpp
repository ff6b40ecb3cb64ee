#include <gtest/gtest.h>

#include <deque>
#include <map>

#include "orsched/agent.hpp"
#include "orsched/environment.hpp"
#include "orsched/harq.hpp"
#include "orsched/traffic.hpp"

using namespace orsched;

namespace {

TEST(Arrivals, PoissonMomentsPerTti) {
  const SimConfig cfg;
  Rng rng(1);
  const int n = 40000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto a = draw_arrivals(20.0, cfg, rng);
    ASSERT_EQ(static_cast<int>(a.per_minislot.size()), cfg.minislots_per_tti);
    sum += a.total();
    sq += double(a.total()) * a.total();
  }
  const double mean = sum / n, var = sq / n - mean * mean;
  EXPECT_NEAR(mean, 20.0, 0.1);
  EXPECT_NEAR(var, 20.0, 0.6);
}

TEST(Arrivals, ZeroRateIsSilent) {
  const SimConfig cfg;
  Rng rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(draw_arrivals(0.0, cfg, rng).total(), 0);
}

struct LedgerRig {
  SimConfig cfg;
  EventLog log;
  HarqLedger ledger{cfg, &log};
  Rng rng{3};
  std::map<long, long> latencies;

  void run(long from, long to, double sinr, bool grant_ok) {
    auto s = [&](const TransportBlock&, long) { return sinr; };
    auto g = [&](const TransportBlock& b, long) { return grant_ok ? b.rb : -1; };
    for (long t = from; t < to; ++t)
      for (long lat : ledger.advance(t, s, g, rng).latencies) ++latencies[lat];
  }
  long one_block(int bits) {
    UrllcArrivalRecord a;
    a.per_minislot.assign(cfg.minislots_per_tti, 0);
    a.per_minislot[0] = 1;
    const auto ids = ledger.admit(0, 0, a);
    const long b = ledger.open_block(0, 0, 0, 0, bits, 24, 0);
    EXPECT_EQ(ledger.pack(ids, std::vector<long>{b}), 0);
    return b;
  }
};

TEST(Harq, CleanFirstAttemptTakesFiveSlots) {
  LedgerRig r;
  r.one_block(256);
  r.run(0, 20, 1e9, true);
  EXPECT_EQ(r.ledger.total_delivered(), 1);
  EXPECT_EQ(r.latencies, (std::map<long, long>{{5, 1}}));
  EXPECT_EQ(r.ledger.max_attempts_seen(), 1);
}

TEST(Harq, FailedBlockRetransmitsOnceThenIsLostAtSix) {
  LedgerRig r;
  r.one_block(256);
  r.run(0, 20, 0.0, true);
  EXPECT_EQ(r.ledger.total_lost(), 1);
  EXPECT_EQ(r.latencies, (std::map<long, long>{{6, 1}}));
  EXPECT_EQ(r.ledger.max_attempts_seen(), 2);
  EXPECT_TRUE(r.ledger.idle());
}

TEST(Harq, RefusedRetransmissionIsLostAtFeedback) {
  LedgerRig r;
  r.one_block(256);
  r.run(0, 20, 0.0, false);
  EXPECT_EQ(r.ledger.total_lost(), 1);
  EXPECT_EQ(r.latencies, (std::map<long, long>{{5, 1}}));
}

TEST(Harq, EventOrderPerPacket) {
  LedgerRig r;
  r.one_block(256);
  r.run(0, 20, 0.0, true);
  std::vector<HarqEvent> seq;
  for (const auto& e : r.log.records()) seq.push_back(e.event);
  const std::vector<HarqEvent> want{HarqEvent::arrival, HarqEvent::tx,  HarqEvent::feedback,
                                    HarqEvent::retx,    HarqEvent::tx,  HarqEvent::lost};
  EXPECT_EQ(seq, want);
}

TEST(Harq, PackingIsFifoAndDropsOverflow) {
  SimConfig cfg;
  HarqLedger led(cfg);
  UrllcArrivalRecord a;
  a.per_minislot.assign(cfg.minislots_per_tti, 0);
  a.per_minislot[0] = 3;
  const auto ids = led.admit(0, 0, a);
  // 256 + 200 bits of room: packet 0 fits, packet 1 spans both blocks and fails, packet 2 gets nothing.
  const long b0 = led.open_block(0, 0, 0, 0, 300, 24, 0);
  const long b1 = led.open_block(0, 0, 1, 0, 156, 24, 0);
  EXPECT_EQ(led.pack(ids, std::vector<long>{b0, b1}), 2);
  ASSERT_NE(led.block(b0), nullptr);
  EXPECT_EQ(led.block(b0)->segments.size(), 2u);
  EXPECT_EQ(led.block(b0)->segments[1].bits, 44);
  EXPECT_EQ(led.block(b1)->bits, 156);
  EXPECT_EQ(led.tally(0, 0).lost, 1);  // packet 2 never packed
  EXPECT_EQ(led.total_lost(), 1);
  Rng rng(1);
  auto s = [](const TransportBlock&, long) { return 1e9; };
  auto g = [](const TransportBlock& b, long) { return b.rb; };
  for (long t = 0; t < 10; ++t) led.advance(t, s, g, rng);
  EXPECT_EQ(led.tally(0, 0).delivered, 1);
  EXPECT_EQ(led.tally(0, 0).lost, 2);
  EXPECT_TRUE(led.tally(0, 0).resolved());
}

TEST(Harq, EmptyBlocksAreDiscarded) {
  SimConfig cfg;
  HarqLedger led(cfg);
  UrllcArrivalRecord a;
  a.per_minislot.assign(cfg.minislots_per_tti, 0);
  a.per_minislot[2] = 1;
  const auto ids = led.admit(0, 0, a);
  const long b0 = led.open_block(0, 0, 0, 0, 400, 24, 0);
  const long b1 = led.open_block(0, 0, 1, 0, 400, 24, 0);
  EXPECT_EQ(led.pack(ids, std::vector<long>{b0, b1}), 0);
  EXPECT_NE(led.block(b0), nullptr);
  EXPECT_EQ(led.block(b1), nullptr);
  EXPECT_EQ(led.block(b0)->bits, 256);
}

TEST(Outage, WindowMatchesBruteForce) {
  OutageEstimator est(2, 7);
  Rng rng(5);
  std::deque<int> hist;
  for (int t = 0; t < 200; ++t) {
    const bool v = uniform01(rng) < 0.3;
    hist.push_back(v);
    if (hist.size() > 7) hist.pop_front();
    const double got = update_outage(est, 1, v ? 0.0 : 256.0, 256.0);
    double want = 0.0;
    for (int h : hist) want += h;
    EXPECT_DOUBLE_EQ(got, want / hist.size());
    EXPECT_DOUBLE_EQ(est.recount(1), got);
  }
  EXPECT_EQ(est.outage(0), 0.0);
}

TEST(HarqInEnvironment, ConservationAndTimingUnderRandomPolicy) {
  SimConfig cfg;
  cfg.num_cells = 2;
  cfg.episode_len_ttis = 30;
  cfg.arrival_rate = 60;
  Environment env(cfg, 17);
  Rng rng(2);
  long arrived_rows = 0, delivered_rows = 0;
  for (int ep = 0; ep < 4; ++ep) {
    env.reset();
    bool done = false;
    while (!done) {
      std::vector<RawAction> acts;
      for (int k = 0; k < cfg.num_cells; ++k) acts.push_back(EnsembleAgent::uniform_action(cfg.action_dim(), rng));
      const auto res = env.step(acts);
      for (const auto& m : res.metrics) {
        arrived_rows += static_cast<long>(m.urllc_demand_bits / cfg.urllc_packet_bits);
        delivered_rows += static_cast<long>(m.urllc_delivered_bits / cfg.urllc_packet_bits);
        EXPECT_LE(m.urllc_delivered_bits, m.urllc_demand_bits);
      }
      const auto& l = env.ledger();
      EXPECT_EQ(l.total_arrived(), l.total_delivered() + l.total_lost() + l.in_flight());
      done = res.done;
    }
    EXPECT_TRUE(env.ledger().idle());
    EXPECT_EQ(env.ledger().in_flight(), 0);
    EXPECT_LE(env.ledger().max_attempts_seen(), cfg.max_harq_attempts);
  }
  for (const auto& [lat, n] : env.counters().latency_histogram) EXPECT_TRUE(lat == 5 || lat == 6) << lat;
  EXPECT_GT(arrived_rows, 0);
  EXPECT_GT(delivered_rows, 0);
}

}  // namespace
