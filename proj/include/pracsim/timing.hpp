#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "pracsim/common.hpp"

namespace pracsim {

enum class TimingPreset { Baseline, Prac };

inline const char* to_string(TimingPreset p) { return p == TimingPreset::Baseline ? "baseline" : "prac"; }

inline TimingPreset timing_preset_from_string(const std::string& s) {
  if (s == "baseline") return TimingPreset::Baseline;
  if (s == "prac") return TimingPreset::Prac;
  throw ConfigError("timing_preset: unknown preset '" + s + "'");
}

// Rounds a nanosecond value up to whole command-clock cycles.
inline Tick ns_to_cycles(double ns, std::uint32_t clock_ps) {
  const auto ps = static_cast<std::uint64_t>(std::llround(ns * 1000.0));
  return ceil_div(ps, clock_ps);
}

// All parameters are specified in nanoseconds; `cycles()` gives the rounded
// values the engine works with.
struct TimingSet {
  std::uint32_t clock_ps = 625;

  double tRAS = 32;
  double tRP = 15;
  double tRC = 47;
  double tRCD = 11;
  double tRTP = 7.5;
  double tWR = 30;
  // Precharge and ACT-to-ACT time when the array restore is not followed by a
  // bank-level counter update (the subarray-level path). Equal to tRP/tRC on
  // devices without per-row counters.
  double tRPRestore = 15;
  double tRCRestore = 47;

  double tCL = 15;
  double tBL = 5;
  double tREFI = 3900;
  double tRFC = 410;
  double tREFW = 32e6;
  double tRFM = 350;
  double tPreRecovery = 180;
  double tRegRead = 10;

  struct Cycles {
    Tick RAS, RP, RC, RCD, RTP, WR, RPRestore, RCRestore, CL, BL, REFI, RFC, REFW, RFM, PreRecovery, RegRead;
  };

  Cycles cycles() const {
    auto c = [this](double ns) { return ns_to_cycles(ns, clock_ps); };
    return Cycles{c(tRAS),  c(tRP),  c(tRC),  c(tRCD),  c(tRTP),  c(tWR),         c(tRPRestore), c(tRCRestore),
                  c(tCL),   c(tBL),  c(tREFI), c(tRFC), c(tREFW), c(tRFM),        c(tPreRecovery), c(tRegRead)};
  }

  double cycles_to_ns(Tick t) const { return static_cast<double>(t) * clock_ps / 1000.0; }

  void validate() const {
    if (clock_ps == 0) throw ConfigError("timing.clock_ps must be > 0");
    const Cycles c = cycles();
    const Tick min_rp = c.RP < c.RPRestore ? c.RP : c.RPRestore;
    if (c.RC < c.RAS + min_rp) throw ConfigError("timing: tRC must be >= tRAS + tRP");
    if (c.RCRestore > c.RC || c.RPRestore > c.RP) throw ConfigError("timing: restore-path values exceed tRC/tRP");
    if (c.RFC >= c.REFI) throw ConfigError("timing: tRFC must be shorter than tREFI");
    if (c.RFM == 0 || c.REFI == 0) throw ConfigError("timing: tRFM and tREFI must be > 0");
  }

  static TimingSet baseline() { return TimingSet{}; }

  static TimingSet prac() {
    TimingSet t;
    t.tRAS = 16;
    t.tRP = 36;
    t.tRC = 52;
    t.tRTP = 5;
    t.tWR = 10;
    t.tRPRestore = 15;
    t.tRCRestore = 47;
    return t;
  }

  static TimingSet preset(TimingPreset p) { return p == TimingPreset::Baseline ? baseline() : prac(); }
};

}  // namespace pracsim
