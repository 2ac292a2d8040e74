#include <gtest/gtest.h>

#include <algorithm>

#include "pracsim/oracle.hpp"
#include "pracsim/simulation.hpp"

using namespace pracsim;

namespace {

ControllerConfig make_cfg(Mechanism m, std::uint32_t t = 64, MitigationPolicy p = MitigationPolicy::Opportunistic) {
  ControllerConfig c;
  c.mechanism = m;
  c.timing = m == Mechanism::Baseline ? TimingSet::baseline() : TimingSet::prac();
  c.recovery.mechanism = m == Mechanism::Practical ? Mechanism::Practical : Mechanism::PracAbo;
  c.recovery.threshold = t;
  c.recovery.policy = p;
  return c;
}

std::uint64_t addr(const ControllerConfig& c, std::uint32_t bank, std::uint32_t row, std::uint32_t col = 0) {
  return detail::line_address(c.geometry, c.mapping, bank, row, col);
}

SimResult run_stream(const ControllerConfig& c, RequestStream s, Tick max_cycles = 2'000'000) {
  SimConfig sc;
  sc.controller = c;
  sc.streams.push_back(std::move(s));
  sc.record_events = true;
  sc.max_cycles = max_cycles;
  return simulate(sc);
}

std::vector<Event> of_kind(const std::vector<Event>& ev, EventKind k) {
  std::vector<Event> out;
  std::copy_if(ev.begin(), ev.end(), std::back_inserter(out), [&](const Event& e) { return e.kind == k; });
  return out;
}

// Spaced arrivals keep FR-FCFS from grouping hits to the same row.
RequestStream alternate(const ControllerConfig& c, std::uint32_t bank, std::uint32_t a, std::uint32_t b, int n,
                        Tick spacing = 100) {
  RequestStream s;
  for (int i = 0; i < n; ++i) s.push_back({static_cast<Tick>(i) * spacing, ReqKind::Read, addr(c, bank, i % 2 ? b : a)});
  return s;
}

}  // namespace

TEST(MemCtrl, IdleReadLatency) {
  const auto c = make_cfg(Mechanism::PracAbo);
  const auto r = run_stream(c, {{0, ReqKind::Read, addr(c, 3, 5)}});
  const auto cyc = c.timing.cycles();
  ASSERT_EQ(r.events.size(), 2u);
  EXPECT_EQ(r.events[0].kind, EventKind::Act);
  EXPECT_EQ(r.events[0].time, 0u);
  EXPECT_EQ(r.events[1].kind, EventKind::Rd);
  EXPECT_EQ(r.events[1].time, cyc.RCD);
  EXPECT_EQ(r.stream_completions[0][0], cyc.RCD + cyc.CL + cyc.BL);
}

TEST(MemCtrl, RowHitsShareOneActivation) {
  const auto c = make_cfg(Mechanism::PracAbo);
  RequestStream s;
  for (std::uint32_t col = 0; col < 4; ++col) s.push_back({0, ReqKind::Read, addr(c, 1, 7, col)});
  const auto r = run_stream(c, s);
  EXPECT_EQ(of_kind(r.events, EventKind::Act).size(), 1u);
  const auto rds = of_kind(r.events, EventKind::Rd);
  ASSERT_EQ(rds.size(), 4u);
  for (std::size_t i = 1; i < rds.size(); ++i) EXPECT_EQ(rds[i].time - rds[i - 1].time, c.timing.cycles().BL);
}

TEST(MemCtrl, ConflictRespectsRasRpAndRc) {
  for (auto m : {Mechanism::Baseline, Mechanism::PracAbo}) {
    const auto c = make_cfg(m);
    const auto cyc = c.timing.cycles();
    const auto r = run_stream(c, {{0, ReqKind::Read, addr(c, 2, 5)}, {0, ReqKind::Read, addr(c, 2, 9000)}});
    const auto acts = of_kind(r.events, EventKind::Act);
    const auto pres = of_kind(r.events, EventKind::Pre);
    ASSERT_EQ(acts.size(), 2u);
    ASSERT_EQ(pres.size(), 1u);
    EXPECT_EQ(pres[0].time, cyc.RAS) << to_string(m);
    EXPECT_EQ(pres[0].other_row, 9000);
    EXPECT_EQ(acts[1].time, std::max(pres[0].time + cyc.RP, acts[0].time + cyc.RC)) << to_string(m);
  }
}

TEST(MemCtrl, RowHitCapLimitsConsecutiveHits) {
  auto c = make_cfg(Mechanism::PracAbo);
  c.row_hit_cap = 4;
  RequestStream s{{0, ReqKind::Read, addr(c, 0, 10, 0)}, {0, ReqKind::Read, addr(c, 0, 20, 0)}};
  for (std::uint32_t i = 1; i < 8; ++i) s.push_back({0, ReqKind::Read, addr(c, 0, 10, i % 4)});
  const auto r = run_stream(c, s);
  int hits_before_pre = 0;
  for (const auto& e : r.events) {
    if (e.kind == EventKind::Pre) break;
    hits_before_pre += e.kind == EventKind::Rd;
  }
  EXPECT_EQ(hits_before_pre, 4);
}

TEST(MemCtrl, FullQueueRejectsEnqueue) {
  auto c = make_cfg(Mechanism::Baseline);
  c.read_queue = 2;
  c.drain_high = 2;
  c.drain_low = 1;
  c.write_queue = 2;
  MemoryController mc(c);
  MemRequest q;
  q.address = addr(c, 0, 1);
  EXPECT_TRUE(mc.enqueue(q, 0));
  EXPECT_TRUE(mc.enqueue(q, 0));
  EXPECT_FALSE(mc.enqueue(q, 0));
  q.kind = ReqKind::Write;
  EXPECT_TRUE(mc.enqueue(q, 0));
}

TEST(MemCtrl, RefreshEveryTrefiPerRank) {
  const auto c = make_cfg(Mechanism::PracAbo);
  const auto cyc = c.timing.cycles();
  SimConfig sc;
  sc.controller = c;
  sc.record_events = true;
  sc.run_to_max = true;
  sc.max_cycles = 10 * cyc.REFI + 100;
  const auto r = simulate(sc);
  const auto refs = of_kind(r.events, EventKind::Ref);
  ASSERT_EQ(refs.size(), 20u);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const Tick due = (i / 2 + 1) * cyc.REFI;
    EXPECT_GE(refs[i].time, due);
    EXPECT_LE(refs[i].time, due + 2);
  }
}

TEST(MemCtrl, WritesDrainAndComplete) {
  const auto c = make_cfg(Mechanism::PracAbo);
  RequestStream s;
  for (std::uint32_t i = 0; i < 60; ++i) s.push_back({i, ReqKind::Write, addr(c, i % 8, 100 + i)});
  const auto r = run_stream(c, s);
  EXPECT_EQ(of_kind(r.events, EventKind::Wr).size(), 60u);
  for (Tick t : r.stream_completions[0]) EXPECT_NE(t, kNever);
}

TEST(MemCtrl, BaselineNeverAlerts) {
  const auto c = make_cfg(Mechanism::Baseline);
  const auto r = run_stream(c, alternate(c, 0, 1024, 33792, 3000));
  EXPECT_TRUE(of_kind(r.events, EventKind::Alert).empty());
  EXPECT_TRUE(of_kind(r.events, EventKind::RfmAb).empty());
  EXPECT_TRUE(of_kind(r.events, EventKind::Crossing).empty());
  for (const auto& e : of_kind(r.events, EventKind::Pre)) EXPECT_EQ(e.value, 0u);
  for (Tick t : r.stream_completions[0]) EXPECT_NE(t, kNever);
}

TEST(MemCtrl, PracAboAlertLeadsToAllBankRecovery) {
  const auto c = make_cfg(Mechanism::PracAbo, 16);
  const auto cyc = c.timing.cycles();
  const auto r = run_stream(c, alternate(c, 0, 1024, 33792, 2000));
  const auto alerts = of_kind(r.events, EventKind::Alert);
  const auto rfms = of_kind(r.events, EventKind::RfmAb);
  ASSERT_FALSE(alerts.empty());
  ASSERT_EQ(rfms.size(), alerts.size());
  for (std::size_t i = 0; i < alerts.size(); ++i) EXPECT_GE(rfms[i].time, alerts[i].time + cyc.PreRecovery);
  for (const auto& e : of_kind(r.events, EventKind::Pre)) EXPECT_LE(e.value, 16u + security_margin(Mechanism::PracAbo, c.timing));
  ActivationLog log{r.events, true, r.end};
  EXPECT_TRUE(check_timing(log, c.timing, c.mechanism, c.geometry).empty());
}

TEST(MemCtrl, PracticalBlocksOnlyFlaggedBanks) {
  const auto c = make_cfg(Mechanism::Practical, 16, MitigationPolicy::Prohibitive);
  const auto cyc = c.timing.cycles();
  RequestStream s;
  for (int i = 0; i < 3000; ++i) {
    s.push_back({static_cast<Tick>(i) * 40, ReqKind::Read, addr(c, 0, i % 2 ? 33792 : 1024)});
    s.push_back({static_cast<Tick>(i) * 40, ReqKind::Read, addr(c, 5, static_cast<std::uint32_t>(200 + i * 7))});
  }
  const auto r = run_stream(c, s);
  const auto rfms = of_kind(r.events, EventKind::RfmMask);
  ASSERT_FALSE(rfms.empty());
  for (const auto& e : of_kind(r.events, EventKind::BaSnapshot)) EXPECT_EQ(e.mask, 1u);
  int overlapped = 0;
  for (const auto& f : rfms)
    for (const auto& e : r.events)
      if (e.bank == 5 && (e.kind == EventKind::Act || e.kind == EventKind::Rd) && e.time > f.time + cyc.RegRead &&
          e.time < f.time + cyc.RFM)
        ++overlapped;
  EXPECT_GT(overlapped, 0);
  ActivationLog log{r.events, true, r.end};
  EXPECT_TRUE(check_timing(log, c.timing, c.mechanism, c.geometry).empty());
  EXPECT_TRUE(check_security(log, 16, security_margin(Mechanism::Practical, c.timing)).empty());
}

TEST(MemCtrl, RefResetsRefreshedRowCounters) {
  const auto c = make_cfg(Mechanism::PracAbo, 256);
  SimConfig sc;
  sc.controller = c;
  sc.streams.push_back(alternate(c, 4, 0, 33792, 40));
  sc.run_to_max = true;
  sc.max_cycles = c.timing.cycles().REFI * 2 + 10;
  bool checked = false;
  sc.record_events = false;
  simulate(sc, [&](const Event& e, const MemoryController& mc) {
    if (e.kind != EventKind::Ref || e.rank != 0 || e.row != 0) return;
    EXPECT_EQ(mc.counters()->get(4, 0), 0u);
    EXPECT_EQ(mc.counters()->get(4, 33792), 20u);
    checked = true;
  });
  EXPECT_TRUE(checked);
}

TEST(MemCtrl, InvalidConfigRejected) {
  auto c = make_cfg(Mechanism::PracAbo);
  c.drain_low = c.drain_high;
  EXPECT_THROW(MemoryController{c}, ConfigError);
  c = make_cfg(Mechanism::PracAbo);
  c.geometry.channels = 2;
  EXPECT_THROW(MemoryController{c}, ConfigError);
}

TEST(MemCtrl, PracticalRecoveryKeepsUnflaggedRowsOpen) {
  const auto c = make_cfg(Mechanism::Practical, 16, MitigationPolicy::Prohibitive);
  RequestStream s = alternate(c, 0, 1024, 33792, 40, 60);
  // Bank 6 keeps hitting one row throughout.
  for (int i = 0; i < 400; ++i) s.push_back({static_cast<Tick>(i) * 6, ReqKind::Read, addr(c, 6, 77, i % 8)});
  std::sort(s.begin(), s.end(), [](const StreamRequest& a, const StreamRequest& b) { return a.arrival < b.arrival; });
  const auto r = run_stream(c, s);
  ASSERT_FALSE(of_kind(r.events, EventKind::RfmMask).empty());
  int bank6_acts = 0, bank6_pres = 0;
  for (const auto& e : r.events) {
    if (e.bank != 6) continue;
    bank6_acts += e.kind == EventKind::Act;
    bank6_pres += e.kind == EventKind::Pre;
  }
  EXPECT_EQ(bank6_acts, 1);
  EXPECT_EQ(bank6_pres, 0);
}

TEST(MemCtrl, RefWaitsForRfmMaskWindowInsteadOfStallingRank) {
  const auto c = make_cfg(Mechanism::Practical, 16, MitigationPolicy::Prohibitive);
  const auto cyc = c.timing.cycles();
  RequestStream s = alternate(c, 0, 1024, 33792, 1000, 60);
  for (int i = 0; i < 1500; ++i)
    s.push_back({static_cast<Tick>(i) * 40, ReqKind::Read, addr(c, 5, static_cast<std::uint32_t>(300 + i * 13))});
  std::sort(s.begin(), s.end(), [](const StreamRequest& a, const StreamRequest& b) { return a.arrival < b.arrival; });
  const auto r = run_stream(c, s);
  std::vector<std::pair<Tick, Tick>> windows;  // RFM_MASK windows on bank 0
  for (const auto& e : of_kind(r.events, EventKind::RfmMask))
    if (e.value == 0 && (e.mask & 1u)) windows.push_back({e.time, e.time + c.recovery.n_rfm * cyc.RFM});
  int overlapped = 0;
  for (const auto& ref : of_kind(r.events, EventKind::Ref)) {
    if (ref.rank != 0) continue;
    const Tick due = (ref.time / cyc.REFI) * cyc.REFI;
    for (const auto& [start, end] : windows) {
      if (due < start || due >= end) continue;
      ++overlapped;
      EXPECT_GE(ref.time, end);
      bool served = false;
      for (const auto& e : r.events)
        served |= e.bank == 5 && (e.kind == EventKind::Act || e.kind == EventKind::Rd) && e.time >= due && e.time < end;
      EXPECT_TRUE(served) << "bank 5 idle while REF waited at " << due;
    }
  }
  EXPECT_GT(overlapped, 0);
  ActivationLog log{r.events, true, r.end};
  EXPECT_TRUE(check_timing(log, c.timing, c.mechanism, c.geometry).empty());
}
