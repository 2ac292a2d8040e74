#include <gtest/gtest.h>

#include <random>

#include "pracsim/oracle.hpp"

using namespace pracsim;

namespace {

Event ev(EventKind k, Tick t, std::uint32_t bank = 0, std::uint32_t row = 0) {
  Event e;
  e.kind = k;
  e.time = t;
  e.bank = bank;
  e.row = row;
  return e;
}

ActivationLog acts_only(int n, std::uint32_t row = 9) {
  ActivationLog log;
  log.complete = true;
  for (int i = 0; i < n; ++i) log.events.push_back(ev(EventKind::Act, static_cast<Tick>(i) * 100, 0, row));
  return log;
}

bool has_rule(const std::vector<Violation>& v, const std::string& needle) {
  for (const auto& x : v)
    if (x.rule.find(needle) != std::string::npos) return true;
  return false;
}

TinyConfig tiny(Mechanism m, std::uint32_t t, unsigned n_rfm, MitigationPolicy p) {
  TinyConfig tc;
  auto& c = tc.controller;
  c.mechanism = m;
  c.timing = m == Mechanism::Baseline ? TimingSet::baseline() : TimingSet::prac();
  c.geometry.ranks_per_channel = 1;
  c.geometry.bankgroups_per_rank = 1;
  c.geometry.banks_per_group = 2;
  c.geometry.rows_per_bank = 16;
  c.geometry.subarrays_per_bank = 4;
  c.geometry.columns_per_row = 8;
  c.mapping.mop_width = 2;
  c.recovery.mechanism = m == Mechanism::Baseline ? Mechanism::PracAbo : m;
  c.recovery.threshold = t;
  c.recovery.n_rfm = n_rfm;
  c.recovery.policy = p;
  c.read_queue = 8;
  c.write_queue = 8;
  c.drain_high = 6;
  c.drain_low = 2;
  tc.cycles = 120000;
  return tc;
}

RequestStream random_stream(const TinyConfig& tc, std::uint64_t seed, int n, int max_gap, double write_share) {
  std::mt19937_64 rng(seed);
  const auto lines = tc.controller.geometry.capacity_bytes() / 64;
  RequestStream s;
  Tick t = 0;
  for (int i = 0; i < n; ++i) {
    t += rng() % static_cast<std::uint64_t>(max_gap);
    const bool w = static_cast<double>(rng() % 1000) < write_share * 1000;
    s.push_back({t, w ? ReqKind::Write : ReqKind::Read, (rng() % lines) * 64});
  }
  return s;
}

}  // namespace

TEST(Security, SecurityMargins) {
  EXPECT_EQ(security_margin(Mechanism::Practical, TimingSet::prac()), 6u);
  EXPECT_EQ(security_margin(Mechanism::PracAbo, TimingSet::prac()), 4u);
}

TEST(Security, HundredActivationsAtT64FlagsEvent71) {
  const auto v = check_security(acts_only(100), 64, security_margin(Mechanism::Practical, TimingSet::prac()));
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::SecurityBound);
  EXPECT_EQ(v[0].event, 71u);
  EXPECT_EQ(v[0].row, 9u);
}

TEST(Security, MitigationAndRefResetTheCount) {
  auto log = acts_only(60);
  auto m = ev(EventKind::Mitigation, 6000, 0, 9);
  log.events.push_back(m);
  for (int i = 0; i < 60; ++i) log.events.push_back(ev(EventKind::Act, 7000 + static_cast<Tick>(i) * 100, 0, 9));
  EXPECT_TRUE(check_security(log, 64, 6).empty());
  auto ref = ev(EventKind::Ref, 20000, 0, 8);
  ref.value = 8;  // rows 8..15 of every bank in rank 0
  log.events.push_back(ref);
  for (int i = 0; i < 60; ++i) log.events.push_back(ev(EventKind::Act, 21000 + static_cast<Tick>(i) * 100, 0, 9));
  EXPECT_TRUE(check_security(log, 64, 6).empty());
  for (int i = 0; i < 20; ++i) log.events.push_back(ev(EventKind::Act, 30000 + static_cast<Tick>(i) * 100, 0, 9));
  EXPECT_EQ(check_security(log, 64, 6).size(), 1u);
}

TEST(Security, IncompleteLogIsRefused) {
  auto log = acts_only(3);
  log.complete = false;
  EXPECT_THROW(check_security(log, 64, 6), VerificationError);
}

TEST(Timing, FlagsShortRasAndRc) {
  const DramGeometry g;
  ActivationLog log;
  log.complete = true;
  log.events = {ev(EventKind::Act, 0, 0, 5), ev(EventKind::Pre, 10, 0, 5), ev(EventKind::Act, 60, 0, 6)};
  const auto v = check_timing(log, TimingSet::prac(), Mechanism::PracAbo, g);
  EXPECT_TRUE(has_rule(v, "tRAS"));
  EXPECT_TRUE(has_rule(v, "ACT to ACT >= tRC"));
  EXPECT_TRUE(has_rule(v, "PRE to ACT >= tRP"));
  EXPECT_EQ(v[0].event, 2u);
}

TEST(Timing, LegalSequencePasses) {
  const DramGeometry g;
  ActivationLog log;
  log.complete = true;
  log.events = {ev(EventKind::Act, 0, 0, 5), ev(EventKind::Rd, 18, 0, 5), ev(EventKind::Pre, 26, 0, 5),
                ev(EventKind::Act, 84, 0, 6)};
  EXPECT_TRUE(check_timing(log, TimingSet::prac(), Mechanism::PracAbo, g).empty());
}

TEST(Timing, PracticalRestorePathOnlyForDistantSubarrays) {
  const DramGeometry g;  // 256 rows per subarray
  ActivationLog log;
  log.complete = true;
  log.events = {ev(EventKind::Act, 0, 0, 7 * 256), ev(EventKind::Pre, 1000, 0, 7 * 256),
                ev(EventKind::Act, 1024, 0, 100 * 256)};
  EXPECT_TRUE(check_timing(log, TimingSet::prac(), Mechanism::Practical, g).empty());
  log.events.back().row = 8 * 256;
  EXPECT_TRUE(has_rule(check_timing(log, TimingSet::prac(), Mechanism::Practical, g), "updating subarray"));
  // PRAC+ABO has no restore path.
  log.events.back().row = 100 * 256;
  EXPECT_FALSE(check_timing(log, TimingSet::prac(), Mechanism::PracAbo, g).empty());
}

TEST(Timing, StructuralRules) {
  const DramGeometry g;
  ActivationLog log;
  log.complete = true;
  log.events = {ev(EventKind::Rd, 5, 0, 1)};
  EXPECT_TRUE(has_rule(check_timing(log, TimingSet::prac(), Mechanism::PracAbo, g), "open row"));
  log.events = {ev(EventKind::Act, 5, 0, 1), ev(EventKind::Act, 5, 1, 1)};
  EXPECT_TRUE(has_rule(check_timing(log, TimingSet::prac(), Mechanism::PracAbo, g), "one command per cycle"));
  log.events = {ev(EventKind::RfmAb, 5)};
  EXPECT_TRUE(has_rule(check_timing(log, TimingSet::prac(), Mechanism::PracAbo, g), "pre-recovery"));
  auto ref = ev(EventKind::Ref, 100);
  ref.value = 8;
  log.events = {ref, ev(EventKind::Act, 200, 3, 1)};
  const auto v = check_timing(log, TimingSet::prac(), Mechanism::PracAbo, g);
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v[0].kind, ViolationKind::BlockedBankAccess);
  log.events = {ev(EventKind::Act, 10), ev(EventKind::Act, 5, 1)};
  EXPECT_TRUE(has_rule(check_timing(log, TimingSet::prac(), Mechanism::PracAbo, g), "time-ordered"));
}

struct EqCase {
  Mechanism mech;
  std::uint32_t t;
  unsigned n_rfm;
  MitigationPolicy policy;
  std::uint64_t seed;
  int max_gap;
  double writes;
};

class Equivalence : public ::testing::TestWithParam<EqCase> {};

TEST_P(Equivalence, EngineMatchesReferenceEventForEvent) {
  const auto& p = GetParam();
  const auto tc = tiny(p.mech, p.t, p.n_rfm, p.policy);
  const auto stream = random_stream(tc, p.seed, 2500, p.max_gap, p.writes);
  const auto a = engine_simulate(tc, stream);
  const auto b = reference_simulate(tc, stream);
  std::size_t i = 0;
  while (i < a.size() && i < b.size() && a[i] == b[i]) ++i;
  ASSERT_EQ(i, std::max(a.size(), b.size()))
      << "first divergence at event " << i << ": engine "
      << (i < a.size() ? event_to_json(a[i]).dump() : "<end>") << " reference "
      << (i < b.size() ? event_to_json(b[i]).dump() : "<end>");
  ActivationLog log{a, true, tc.cycles};
  EXPECT_TRUE(check_timing(log, tc.controller.timing, p.mech, tc.controller.geometry).empty());
  if (p.mech != Mechanism::Baseline) {
    EXPECT_TRUE(check_security(log, p.t, security_margin(p.mech, tc.controller.timing),
                               tc.controller.geometry.banks_per_rank())
                    .empty());
    std::size_t alerts = 0;
    for (const auto& e : a) alerts += e.kind == EventKind::Alert;
    EXPECT_GT(alerts, 0u);
  }
}

INSTANTIATE_TEST_SUITE_P(
    Tiny, Equivalence,
    ::testing::Values(EqCase{Mechanism::Baseline, 8, 1, MitigationPolicy::Opportunistic, 5, 40, 0.25},
                      EqCase{Mechanism::Baseline, 8, 1, MitigationPolicy::Opportunistic, 6, 10, 0.5},
                      EqCase{Mechanism::PracAbo, 8, 2, MitigationPolicy::Opportunistic, 5, 40, 0.25},
                      EqCase{Mechanism::PracAbo, 8, 1, MitigationPolicy::Prohibitive, 7, 20, 0.1},
                      EqCase{Mechanism::PracAbo, 16, 4, MitigationPolicy::Opportunistic, 8, 15, 0.3},
                      EqCase{Mechanism::Practical, 8, 2, MitigationPolicy::Prohibitive, 5, 40, 0.25},
                      EqCase{Mechanism::Practical, 8, 1, MitigationPolicy::Opportunistic, 9, 20, 0.0},
                      EqCase{Mechanism::Practical, 16, 4, MitigationPolicy::Prohibitive, 10, 10, 0.4}));

TEST(Reference, RejectsNonTinyConfigs) {
  auto tc = tiny(Mechanism::PracAbo, 8, 1, MitigationPolicy::Opportunistic);
  tc.controller.geometry.rows_per_bank = 32;
  EXPECT_THROW(reference_simulate(tc, {}), ConfigError);
  tc = tiny(Mechanism::PracAbo, 8, 1, MitigationPolicy::Opportunistic);
  EXPECT_THROW(reference_simulate(tc, RequestStream(10001)), ConfigError);
}

TEST(CounterSnapshot, EngineCountersMatchLogReplay) {
  for (auto m : {Mechanism::PracAbo, Mechanism::Practical}) {
    SimConfig sc;
    sc.controller.mechanism = m;
    sc.controller.timing = TimingSet::prac();
    sc.controller.recovery.mechanism = m;
    sc.controller.recovery.threshold = 16;
    sc.controller.recovery.policy = MitigationPolicy::Prohibitive;
    SyntheticSpec s;
    s.count = 3000;
    auto benign = std::make_shared<const Trace>(gen_synthetic(s, sc.controller.geometry, sc.controller.mapping, 2));
    AttackSpec a;
    a.banks = {0, 9};
    a.alerts_per_trefi = 3;
    a.intervals = 16;
    auto attack = std::make_shared<const Trace>(
        gen_alert_flood(a, sc.controller.recovery, sc.controller.timing, sc.controller.geometry, sc.controller.mapping));
    CoreParams ap;
    ap.attacker = true;
    ap.max_outstanding = 2;
    sc.cores = {{"benign", benign, {}}, {"attacker", attack, ap}};
    sc.target_instructions = 120000;
    CounterReplay replay(sc.controller.geometry, true);
    std::size_t snapshots = 0, points = 0;
    std::vector<Event> events;
    const auto geo = sc.controller.geometry;
    const std::uint32_t trigger = trigger_level(sc.controller.recovery, sc.controller.timing);
    auto res = simulate(sc, [&](const Event& e, const MemoryController& mc) {
      events.push_back(e);
      replay.apply(e);
      if (e.kind != EventKind::Crossing && e.kind != EventKind::Ref) return;
      if (++points % 32 != 0) return;
      std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> engine;
      mc.for_each_counter([&](std::uint32_t b, std::uint32_t row, std::uint32_t v) { engine[{b, row}] = v; });
      ASSERT_EQ(engine, replay.all()) << "at " << to_string(e.kind) << " t=" << e.time;
      ++snapshots;
    });
    EXPECT_GT(snapshots, 10u);
    EXPECT_GT(res.stats.recoveries, 0u);
    ActivationLog log{events, true, res.end};
    const auto recount = recount_banks_needing(log, geo, trigger);
    std::vector<std::uint32_t> logged;
    for (const auto& e : events)
      if ((e.kind == EventKind::RfmAb || e.kind == EventKind::RfmMask) && e.value == 0) logged.push_back(e.victims);
    EXPECT_EQ(recount, logged) << to_string(m);
  }
}
