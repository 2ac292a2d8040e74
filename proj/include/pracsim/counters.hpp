#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "pracsim/common.hpp"
#include "pracsim/geometry.hpp"
#include "pracsim/timing.hpp"

namespace pracsim {

enum class UpdateEngineMode { BankLevelRMW, CentralizedSubarray };

// Subarrays [subarray_lo, subarray_hi] are busy with a counter write-back
// until busy_until.
struct OccupancyWindow {
  std::uint32_t subarray_lo = 0;
  std::uint32_t subarray_hi = 0;
  Tick busy_until = 0;

  bool covers(std::uint32_t subarray) const { return subarray >= subarray_lo && subarray <= subarray_hi; }
  bool operator==(const OccupancyWindow&) const = default;
};

struct PrechargeUpdate {
  std::uint32_t new_value = 0;
  Tick update_complete = 0;  // counter written back
  Tick bank_free = 0;        // earliest time a non-conflicting ACT may follow
  std::optional<OccupancyWindow> window;
};

struct RowMax {
  std::uint32_t row = 0;
  std::uint32_t value = 0;
  bool operator==(const RowMax&) const = default;
};

// Per-row activation counters for every bank of a channel, with the
// per-bank maximum maintained incrementally.
class RowCounterTable {
 public:
  RowCounterTable(const DramGeometry& geo, unsigned width_bits = 16)
      : geo_(geo), width_(width_bits), banks_(geo.banks_per_channel()) {
    if (width_bits < 1 || width_bits > 31) throw ConfigError("counter_bits must be in [1, 31]");
    for (auto& b : banks_) b.counts.assign(geo.rows_per_bank, 0);
  }

  std::uint32_t saturation() const { return (std::uint32_t{1} << width_) - 1; }
  unsigned width() const { return width_; }
  const DramGeometry& geometry() const { return geo_; }
  std::uint32_t bank_count() const { return static_cast<std::uint32_t>(banks_.size()); }

  std::uint32_t get(std::uint32_t bank, std::uint32_t row) const { return at(bank).counts[check_row(row)]; }

  std::uint32_t increment(std::uint32_t bank, std::uint32_t row) {
    auto& b = at(bank);
    const std::uint32_t old = b.counts[check_row(row)];
    if (old == saturation()) return old;
    set_value(b, row, old + 1);
    return old + 1;
  }

  void reset(std::uint32_t bank, std::uint32_t row) {
    auto& b = at(bank);
    if (b.counts[check_row(row)] != 0) set_value(b, row, 0);
  }

  // Largest counter in the bank, ties broken by lowest row index.
  RowMax bank_max(std::uint32_t bank) const {
    const auto& b = at(bank);
    if (b.order.empty()) return {};
    const auto& [neg, row] = *b.order.begin();
    return {row, static_cast<std::uint32_t>(-neg)};
  }

  template <typename F>
  void for_each_nonzero(std::uint32_t bank, F&& f) const {
    const auto& b = at(bank);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> rows;
    for (const auto& [neg, row] : b.order) rows.emplace_back(row, static_cast<std::uint32_t>(-neg));
    std::sort(rows.begin(), rows.end());
    for (const auto& [row, v] : rows) f(row, v);
  }

  std::size_t nonzero_count(std::uint32_t bank) const { return at(bank).order.size(); }

 private:
  struct Bank {
    std::vector<std::uint32_t> counts;
    // (-value, row) for every nonzero row; begin() is the bank maximum.
    std::set<std::pair<std::int64_t, std::uint32_t>> order;
  };

  Bank& at(std::uint32_t bank) {
    if (bank >= banks_.size()) throw BoundsError("bank " + std::to_string(bank) + " out of range");
    return banks_[bank];
  }
  const Bank& at(std::uint32_t bank) const {
    if (bank >= banks_.size()) throw BoundsError("bank " + std::to_string(bank) + " out of range");
    return banks_[bank];
  }
  std::uint32_t check_row(std::uint32_t row) const {
    if (row >= geo_.rows_per_bank) throw BoundsError("row " + std::to_string(row) + " out of range");
    return row;
  }

  static void set_value(Bank& b, std::uint32_t row, std::uint32_t v) {
    const std::uint32_t old = b.counts[row];
    if (old != 0) b.order.erase({-static_cast<std::int64_t>(old), row});
    b.counts[row] = v;
    if (v != 0) b.order.insert({-static_cast<std::int64_t>(v), row});
  }

  DramGeometry geo_;
  unsigned width_;
  std::vector<Bank> banks_;
};

// Counter increment performed when `row` is precharged at `now`.
inline PrechargeUpdate on_precharge_update(RowCounterTable& table, std::uint32_t bank, std::uint32_t row,
                                           UpdateEngineMode mode, const TimingSet::Cycles& cyc, Tick now) {
  PrechargeUpdate u;
  u.new_value = table.increment(bank, row);
  u.update_complete = now + cyc.RP;
  if (mode == UpdateEngineMode::BankLevelRMW) {
    u.bank_free = u.update_complete;
    return u;
  }
  const auto& geo = table.geometry();
  const std::uint32_t sa = row_to_subarray(row, geo);
  u.bank_free = now + cyc.RPRestore;
  u.window = OccupancyWindow{sa == 0 ? 0 : sa - 1, sa + 1 < geo.subarrays_per_bank ? sa + 1 : sa, u.update_complete};
  return u;
}

inline PrechargeUpdate on_precharge_update(RowCounterTable& table, std::uint32_t bank, std::uint32_t row,
                                           UpdateEngineMode mode, const TimingSet& timing, Tick now) {
  return on_precharge_update(table, bank, row, mode, timing.cycles(), now);
}

}  // namespace pracsim
