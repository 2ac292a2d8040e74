#include <gtest/gtest.h>

#include <map>
#include <random>

#include "pracsim/counters.hpp"

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

}  // namespace

TEST(Counters, StartAtZero) {
  RowCounterTable t(small_geo());
  for (std::uint32_t b = 0; b < t.bank_count(); ++b) {
    EXPECT_EQ(t.bank_max(b).value, 0u);
    for (std::uint32_t r = 0; r < 64; ++r) EXPECT_EQ(t.get(b, r), 0u);
  }
}

TEST(Counters, BankMaxMatchesBruteForceUnderRandomOps) {
  const auto geo = small_geo();
  RowCounterTable t(geo);
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> ref;
  std::mt19937_64 rng(11);
  for (int i = 0; i < 50000; ++i) {
    const std::uint32_t b = rng() % t.bank_count();
    const std::uint32_t r = rng() % geo.rows_per_bank;
    if (rng() % 8 == 0) {
      t.reset(b, r);
      ref.erase({b, r});
    } else {
      EXPECT_EQ(t.increment(b, r), ++ref[std::make_pair(b, r)]);
    }
    RowMax want;
    for (std::uint32_t row = 0; row < geo.rows_per_bank; ++row) {
      auto it = ref.find({b, row});
      const std::uint32_t v = it == ref.end() ? 0 : it->second;
      if (v > want.value) want = {row, v};
    }
    ASSERT_EQ(t.bank_max(b), want) << "op " << i;
  }
}

TEST(Counters, TiesBreakToLowestRow) {
  RowCounterTable t(small_geo());
  t.increment(1, 40);
  t.increment(1, 7);
  t.increment(1, 20);
  EXPECT_EQ(t.bank_max(1), (RowMax{7, 1}));
  t.increment(1, 40);
  EXPECT_EQ(t.bank_max(1), (RowMax{40, 2}));
}

TEST(Counters, SaturateAtWidth) {
  RowCounterTable t(small_geo(), 3);
  EXPECT_EQ(t.saturation(), 7u);
  for (int i = 0; i < 20; ++i) t.increment(0, 5);
  EXPECT_EQ(t.get(0, 5), 7u);
  EXPECT_EQ(t.bank_max(0).value, 7u);
}

TEST(Counters, OutOfRangeIsBoundsError) {
  RowCounterTable t(small_geo());
  EXPECT_THROW(t.increment(4, 0), BoundsError);
  EXPECT_THROW(t.get(0, 64), BoundsError);
  EXPECT_THROW(RowCounterTable(small_geo(), 0), ConfigError);
}

TEST(Counters, ResetClearsOnlyThatRow) {
  RowCounterTable t(small_geo());
  t.increment(2, 3);
  t.increment(2, 4);
  t.increment(2, 4);
  t.reset(2, 4);
  EXPECT_EQ(t.get(2, 4), 0u);
  EXPECT_EQ(t.get(2, 3), 1u);
  EXPECT_EQ(t.bank_max(2), (RowMax{3, 1}));
  EXPECT_EQ(t.nonzero_count(2), 1u);
}

TEST(PrechargeUpdate, BankLevelHoldsWholeBankForRp) {
  RowCounterTable t(small_geo());
  const auto c = TimingSet::prac().cycles();
  const auto u = on_precharge_update(t, 0, 17, UpdateEngineMode::BankLevelRMW, c, 1000);
  EXPECT_EQ(u.new_value, 1u);
  EXPECT_EQ(u.bank_free, 1000 + c.RP);
  EXPECT_EQ(u.update_complete, 1000 + c.RP);
  EXPECT_FALSE(u.window);
}

TEST(PrechargeUpdate, CentralizedFreesBankAfterRestorePath) {
  const auto geo = small_geo();  // 16 rows per subarray
  RowCounterTable t(geo);
  const auto c = TimingSet::prac().cycles();
  const auto u = on_precharge_update(t, 0, 2 * 16 + 1, UpdateEngineMode::CentralizedSubarray, c, 1000);
  EXPECT_EQ(u.bank_free, 1000 + c.RPRestore);
  EXPECT_EQ(u.update_complete, 1000 + c.RP);
  ASSERT_TRUE(u.window);
  EXPECT_EQ(u.window->subarray_lo, 1u);
  EXPECT_EQ(u.window->subarray_hi, 3u);
  // Edge subarrays clamp.
  const auto e = on_precharge_update(t, 0, 0, UpdateEngineMode::CentralizedSubarray, c, 0);
  EXPECT_EQ(e.window->subarray_lo, 0u);
  EXPECT_EQ(e.window->subarray_hi, 1u);
}
