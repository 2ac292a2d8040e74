#include <gtest/gtest.h>

#include "pracsim/recovery.hpp"

using namespace pracsim;

namespace {

DramGeometry small_geo() {
  DramGeometry g;
  g.ranks_per_channel = 1;
  g.bankgroups_per_rank = 1;
  g.banks_per_group = 4;
  g.rows_per_bank = 64;
  g.subarrays_per_bank = 4;
  return g;
}

RecoveryConfig cfg(Mechanism m, MitigationPolicy p, unsigned n_rfm = 1, std::uint32_t t = 64) {
  RecoveryConfig c;
  c.mechanism = m;
  c.policy = p;
  c.n_rfm = n_rfm;
  c.threshold = t;
  return c;
}

}  // namespace

TEST(EffectiveThreshold, LowersByRfmInFlightActivations) {
  const auto t = TimingSet::prac();
  EXPECT_EQ(effective_threshold(64, t.tRFM, t.tRC), 59u);
  EXPECT_EQ(effective_threshold(128, t.tRFM, t.tRC), 123u);
  EXPECT_EQ(effective_threshold(256, t.tRFM, t.tRC), 251u);
  EXPECT_THROW(effective_threshold(6, t.tRFM, t.tRC), ConfigError);
}

TEST(TriggerLevel, OnlyPracticalUsesEffectiveThreshold) {
  const auto t = TimingSet::prac();
  EXPECT_EQ(trigger_level(cfg(Mechanism::PracAbo, MitigationPolicy::Opportunistic), t), 64u);
  EXPECT_EQ(trigger_level(cfg(Mechanism::Practical, MitigationPolicy::Prohibitive), t), 59u);
}

TEST(RecoveryConfig, ValidateRejectsBadValues) {
  const auto t = TimingSet::prac();
  EXPECT_THROW(cfg(Mechanism::PracAbo, MitigationPolicy::Opportunistic, 3).validate(t), ConfigError);
  EXPECT_THROW(cfg(Mechanism::Baseline, MitigationPolicy::Opportunistic).validate(t), ConfigError);
  EXPECT_THROW(cfg(Mechanism::Practical, MitigationPolicy::Prohibitive, 1, 4).validate(t), ConfigError);
  for (unsigned n : {1u, 2u, 4u}) EXPECT_NO_THROW(cfg(Mechanism::PracAbo, MitigationPolicy::Prohibitive, n).validate(t));
}

TEST(SelectVictims, ClampsAtBankEdges) {
  const auto g = small_geo();
  EXPECT_EQ(select_victims(10, 1, g), (std::vector<std::uint32_t>{9, 11}));
  EXPECT_EQ(select_victims(0, 2, g), (std::vector<std::uint32_t>{1, 2}));
  EXPECT_EQ(select_victims(63, 1, g), (std::vector<std::uint32_t>{62}));
  EXPECT_THROW(select_victims(64, 1, g), BoundsError);
}

TEST(BaRegister, SetTestAndReadClear) {
  BaRegister ba(4);
  ba.set(1);
  ba.set(3);
  ba.set(1);
  EXPECT_TRUE(ba.test(1));
  EXPECT_FALSE(ba.test(0));
  EXPECT_EQ(ba.read_and_clear(), 0b1010u);
  EXPECT_FALSE(ba.any());
  EXPECT_EQ(ba.read_and_clear(), 0u);
  EXPECT_THROW(ba.set(4), BoundsError);
  EXPECT_THROW(BaRegister(65), ConfigError);
}

TEST(CounterUpdate, PracticalSetsBaBitEvenWhenAlertBlocked) {
  AlertState a;
  BaRegister ba(4);
  const auto c = cfg(Mechanism::Practical, MitigationPolicy::Prohibitive);
  EXPECT_FALSE(on_counter_update(2, 58, 59, c, a, ba));
  EXPECT_FALSE(ba.any());
  EXPECT_TRUE(on_counter_update(2, 59, 59, c, a, ba));
  EXPECT_TRUE(ba.test(2));
  a.phase = AlertPhase::Recovering;
  EXPECT_FALSE(on_counter_update(3, 60, 59, c, a, ba));
  EXPECT_TRUE(ba.test(3));
  EXPECT_TRUE(a.alert_pending);
}

TEST(CounterUpdate, PracAboNeverTouchesBa) {
  AlertState a;
  BaRegister ba(4);
  EXPECT_TRUE(on_counter_update(0, 64, 64, cfg(Mechanism::PracAbo, MitigationPolicy::Opportunistic), a, ba));
  EXPECT_FALSE(ba.any());
}

TEST(CounterUpdate, ClosedGateDefersAlert) {
  AlertState a;
  a.gate_open = false;
  BaRegister ba(4);
  EXPECT_FALSE(on_counter_update(0, 70, 64, cfg(Mechanism::PracAbo, MitigationPolicy::Opportunistic), a, ba));
  EXPECT_TRUE(a.alert_pending);
}

TEST(MitigateBank, PolicyDecidesBelowTrigger) {
  const auto g = small_geo();
  RowCounterTable t(g);
  for (int i = 0; i < 10; ++i) t.increment(0, 5);
  EXPECT_FALSE(mitigate_bank(t, 0, MitigationPolicy::Prohibitive, 64, 1));
  EXPECT_EQ(t.get(0, 5), 10u);
  auto rec = mitigate_bank(t, 0, MitigationPolicy::Opportunistic, 64, 1);
  ASSERT_TRUE(rec);
  EXPECT_EQ(rec->aggressor, 5u);
  EXPECT_EQ(rec->count, 10u);
  EXPECT_FALSE(rec->needed);
  EXPECT_EQ(rec->victims, (std::vector<std::uint32_t>{4, 6}));
  EXPECT_EQ(t.get(0, 5), 0u);
  EXPECT_FALSE(mitigate_bank(t, 0, MitigationPolicy::Opportunistic, 64, 1));
}

TEST(RecoveryAbo, MitigatesEveryNonzeroBankPerRfm) {
  const auto g = small_geo();
  RowCounterTable t(g);
  const auto c = TimingSet::prac().cycles();
  for (int i = 0; i < 64; ++i) t.increment(0, 10);
  for (int i = 0; i < 3; ++i) t.increment(1, 20);
  for (int i = 0; i < 2; ++i) t.increment(1, 21);
  const auto plan = run_recovery_abo(t, cfg(Mechanism::PracAbo, MitigationPolicy::Opportunistic, 2), 64, 100, c);
  EXPECT_EQ(plan.banks_needing, 1u);
  EXPECT_EQ(plan.mask, 0b1111u);
  EXPECT_EQ(plan.end, 100 + 2 * c.RFM);
  int mitigations = 0, needed = 0;
  for (const auto& e : plan.events) {
    if (e.kind != EventKind::Mitigation) continue;
    ++mitigations;
    needed += e.needed;
  }
  EXPECT_EQ(mitigations, 3);  // bank 0 row 10, bank 1 rows 20 then 21
  EXPECT_EQ(needed, 1);
  EXPECT_EQ(t.bank_max(1).value, 0u);
}

TEST(RecoveryAbo, ProhibitiveSkipsBanksBelowTrigger) {
  RowCounterTable t(small_geo());
  const auto c = TimingSet::prac().cycles();
  for (int i = 0; i < 64; ++i) t.increment(0, 10);
  for (int i = 0; i < 30; ++i) t.increment(1, 20);
  const auto plan = run_recovery_abo(t, cfg(Mechanism::PracAbo, MitigationPolicy::Prohibitive), 64, 0, c);
  int mitigations = 0;
  for (const auto& e : plan.events) mitigations += e.kind == EventKind::Mitigation;
  EXPECT_EQ(mitigations, 1);
  EXPECT_EQ(t.get(1, 20), 30u);
}

TEST(RecoveryMask, OnlyMaskedBanksAreMitigated) {
  RowCounterTable t(small_geo());
  BaRegister ba(4);
  const auto c = TimingSet::prac().cycles();
  for (int i = 0; i < 59; ++i) t.increment(2, 30);
  for (int i = 0; i < 40; ++i) t.increment(3, 31);
  ba.set(2);
  const auto plan =
      run_recovery_mask(t, ba, cfg(Mechanism::Practical, MitigationPolicy::Opportunistic), 59, 500, c);
  EXPECT_EQ(plan.mask, 0b0100u);
  EXPECT_EQ(plan.mask_known, 500 + c.RegRead);
  EXPECT_FALSE(ba.any());
  EXPECT_EQ(t.get(2, 30), 0u);
  EXPECT_EQ(t.get(3, 31), 40u);
  ASSERT_GE(plan.events.size(), 3u);
  EXPECT_EQ(plan.events[0].kind, EventKind::RfmMask);
  bool snap = false;
  for (std::size_t i = 1; i < plan.events.size(); ++i) {
    EXPECT_LE(plan.events[i - 1].time, plan.events[i].time);
    snap |= plan.events[i].kind == EventKind::BaSnapshot;
  }
  EXPECT_TRUE(snap);
}

TEST(RecoveryMask, EmptyRegisterYieldsEmptyMask) {
  RowCounterTable t(small_geo());
  BaRegister ba(4);
  const auto plan = run_recovery_mask(t, ba, cfg(Mechanism::Practical, MitigationPolicy::Prohibitive), 59, 0,
                                      TimingSet::prac().cycles());
  EXPECT_EQ(plan.mask, 0u);
  bool empty = false;
  for (const auto& e : plan.events) empty |= e.kind == EventKind::EmptyMask;
  EXPECT_TRUE(empty);
}
