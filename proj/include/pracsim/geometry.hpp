#pragma once

#include <cstdint>
#include <string>

#include "pracsim/common.hpp"

namespace pracsim {

struct DramGeometry {
  std::uint32_t channels = 1;
  std::uint32_t ranks_per_channel = 2;
  std::uint32_t bankgroups_per_rank = 8;
  std::uint32_t banks_per_group = 4;
  std::uint32_t rows_per_bank = 65536;
  // In cacheline units; a row holds columns_per_row * cacheline_bytes bytes.
  std::uint32_t columns_per_row = 128;
  std::uint32_t subarrays_per_bank = 256;
  std::uint32_t cacheline_bytes = 64;

  std::uint32_t banks_per_rank() const { return bankgroups_per_rank * banks_per_group; }
  std::uint32_t banks_per_channel() const { return ranks_per_channel * banks_per_rank(); }
  std::uint32_t rows_per_subarray() const { return rows_per_bank / subarrays_per_bank; }

  std::uint64_t capacity_bytes() const {
    return std::uint64_t{channels} * banks_per_channel() * rows_per_bank * columns_per_row * cacheline_bytes;
  }

  void validate() const {
    auto check = [](std::uint64_t v, const char* name) {
      if (!is_pow2(v)) throw ConfigError(std::string("geometry.") + name + " must be a power of two >= 1");
    };
    check(channels, "channels");
    check(ranks_per_channel, "ranks_per_channel");
    check(bankgroups_per_rank, "bankgroups_per_rank");
    check(banks_per_group, "banks_per_group");
    check(rows_per_bank, "rows_per_bank");
    check(columns_per_row, "columns_per_row");
    check(subarrays_per_bank, "subarrays_per_bank");
    check(cacheline_bytes, "cacheline_bytes");
    if (subarrays_per_bank > rows_per_bank || rows_per_bank % subarrays_per_bank != 0)
      throw ConfigError("geometry.rows_per_bank must be a multiple of subarrays_per_bank");
  }

  bool operator==(const DramGeometry&) const = default;
};

struct Location {
  std::uint32_t channel = 0;
  std::uint32_t rank = 0;
  std::uint32_t bankgroup = 0;
  std::uint32_t bank = 0;
  std::uint32_t row = 0;
  std::uint32_t column = 0;
  std::uint32_t subarray = 0;

  bool operator==(const Location&) const = default;
};

inline std::uint32_t row_to_subarray(std::uint32_t row, const DramGeometry& geo) {
  if (row >= geo.rows_per_bank)
    throw BoundsError("row " + std::to_string(row) + " out of range (rows_per_bank=" +
                      std::to_string(geo.rows_per_bank) + ")");
  return row / geo.rows_per_subarray();
}

// Open-bitline layout: a subarray shares sense amplifiers with each neighbor.
constexpr bool subarrays_conflict(std::uint32_t a, std::uint32_t b) noexcept {
  return (a > b ? a - b : b - a) <= 1;
}

// Flat bank index within a channel: rank-major, then bankgroup, then bank.
inline std::uint32_t flat_bank(const Location& loc, const DramGeometry& geo) {
  return (loc.rank * geo.bankgroups_per_rank + loc.bankgroup) * geo.banks_per_group + loc.bank;
}

inline std::uint32_t rank_of_flat_bank(std::uint32_t flat, const DramGeometry& geo) {
  return flat / geo.banks_per_rank();
}

inline Location make_location(const DramGeometry& geo, std::uint32_t flat, std::uint32_t row,
                              std::uint32_t column = 0) {
  Location loc;
  loc.rank = flat / geo.banks_per_rank();
  const std::uint32_t in_rank = flat % geo.banks_per_rank();
  loc.bankgroup = in_rank / geo.banks_per_group;
  loc.bank = in_rank % geo.banks_per_group;
  loc.row = row;
  loc.column = column;
  loc.subarray = row_to_subarray(row, geo);
  return loc;
}

}  // namespace pracsim
