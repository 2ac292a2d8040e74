#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include "pracsim/common.hpp"
#include "pracsim/geometry.hpp"

namespace pracsim {

// MOP ("minimalist open page") mapping. Bit layout, low to high:
//   block offset | mop column bits | bank | bankgroup | rank | channel | column high | row
// so mop_width consecutive cachelines share a row before the bank rotates.
struct AddressMapping {
  std::uint32_t mop_width = 4;

  struct Fields {
    unsigned offset, mop, bank, bankgroup, rank, channel, column_high, row;
  };

  Fields widths(const DramGeometry& geo) const {
    if (!is_pow2(mop_width) || mop_width > geo.columns_per_row)
      throw ConfigError("mapping.mop_width must be a power of two <= columns_per_row");
    const unsigned col = log2_exact(geo.columns_per_row);
    const unsigned mop = log2_exact(mop_width);
    return Fields{log2_exact(geo.cacheline_bytes),      mop,
                  log2_exact(geo.banks_per_group),      log2_exact(geo.bankgroups_per_rank),
                  log2_exact(geo.ranks_per_channel),    log2_exact(geo.channels),
                  col - mop,                            log2_exact(geo.rows_per_bank)};
  }
};

inline Location decode_address(std::uint64_t address, const AddressMapping& mapping, const DramGeometry& geo) {
  if (address >= geo.capacity_bytes())
    throw BoundsError("address 0x" + [&] {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%llx", static_cast<unsigned long long>(address));
      return std::string(buf);
    }() + " beyond capacity");
  const auto w = mapping.widths(geo);
  auto take = [&address](unsigned bits) {
    const auto v = static_cast<std::uint32_t>(address & ((std::uint64_t{1} << bits) - 1));
    address >>= bits;
    return v;
  };
  Location loc;
  take(w.offset);
  const std::uint32_t col_lo = take(w.mop);
  loc.bank = take(w.bank);
  loc.bankgroup = take(w.bankgroup);
  loc.rank = take(w.rank);
  loc.channel = take(w.channel);
  const std::uint32_t col_hi = take(w.column_high);
  loc.row = take(w.row);
  loc.column = (col_hi << w.mop) | col_lo;
  loc.subarray = row_to_subarray(loc.row, geo);
  return loc;
}

inline std::uint64_t encode_address(const Location& loc, const AddressMapping& mapping, const DramGeometry& geo) {
  if (loc.channel >= geo.channels || loc.rank >= geo.ranks_per_channel || loc.bankgroup >= geo.bankgroups_per_rank ||
      loc.bank >= geo.banks_per_group || loc.row >= geo.rows_per_bank || loc.column >= geo.columns_per_row)
    throw BoundsError("location out of range");
  const auto w = mapping.widths(geo);
  std::uint64_t addr = 0;
  unsigned shift = 0;
  auto put = [&](std::uint64_t v, unsigned bits) {
    addr |= v << shift;
    shift += bits;
  };
  put(0, w.offset);
  put(loc.column & (mapping.mop_width - 1), w.mop);
  put(loc.bank, w.bank);
  put(loc.bankgroup, w.bankgroup);
  put(loc.rank, w.rank);
  put(loc.channel, w.channel);
  put(loc.column >> w.mop, w.column_high);
  put(loc.row, w.row);
  return addr;
}

}  // namespace pracsim
