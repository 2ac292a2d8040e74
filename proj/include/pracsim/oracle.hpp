#pragma once

// Independent checkers over engine event logs, and a deliberately naive
// reference simulator for tiny configurations. Nothing here reuses the
// engine's constraint code: every gap is re-derived from the log.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pracsim/command.hpp"
#include "pracsim/common.hpp"
#include "pracsim/controller.hpp"
#include "pracsim/frontend.hpp"
#include "pracsim/geometry.hpp"
#include "pracsim/mapping.hpp"
#include "pracsim/simulation.hpp"
#include "pracsim/telemetry.hpp"
#include "pracsim/timing.hpp"

namespace pracsim {

using ActivationLog = EventLog;

enum class ViolationKind { SecurityBound, TimingRule, CounterMismatch, BlockedBankAccess };

inline const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::SecurityBound: return "SecurityBound";
    case ViolationKind::TimingRule: return "TimingRule";
    case ViolationKind::CounterMismatch: return "CounterMismatch";
    case ViolationKind::BlockedBankAccess: return "BlockedBankAccess";
  }
  return "?";
}

struct Violation {
  ViolationKind kind = ViolationKind::TimingRule;
  std::size_t event = 0;  // 1-based position in the log
  std::uint32_t bank = 0;
  std::uint32_t row = 0;
  std::string rule;
  std::string detail;
};

inline nlohmann::ordered_json to_json(const Violation& v) {
  return {{"kind", to_string(v.kind)}, {"event", v.event}, {"bank", v.bank},
          {"row", v.row},              {"rule", v.rule},   {"detail", v.detail}};
}

struct VerificationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Activation slack above T that a correct implementation can accumulate:
// PRACtical alerts at T - 5 but lets up to floor(tRFM/tRC) ACTs through,
// PRAC+ABO alerts at T and keeps serving for the pre-recovery window.
inline std::uint32_t security_margin(Mechanism m, const TimingSet& timing) {
  if (m == Mechanism::Practical) return static_cast<std::uint32_t>(std::floor(timing.tRFM / timing.tRC));
  return static_cast<std::uint32_t>(std::ceil(timing.tPreRecovery / timing.tRC));
}

// Flags every row whose ACT count since its last mitigation or REF exceeds
// T + margin. One violation per excursion.
inline std::vector<Violation> check_security(const ActivationLog& log, std::uint32_t threshold,
                                             std::uint32_t margin, std::uint32_t banks_per_rank = 32) {
  if (!log.complete) throw VerificationError("event log is incomplete (no END record); refusing to certify");
  const std::uint64_t bound = std::uint64_t{threshold} + margin;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> count;
  std::map<std::pair<std::uint32_t, std::uint32_t>, bool> flagged;
  std::vector<Violation> out;
  for (std::size_t i = 0; i < log.events.size(); ++i) {
    const Event& e = log.events[i];
    switch (e.kind) {
      case EventKind::Act: {
        const auto key = std::make_pair(e.bank, e.row);
        const std::uint64_t n = ++count[key];
        if (n > bound && !flagged[key]) {
          flagged[key] = true;
          out.push_back({ViolationKind::SecurityBound, i + 1, e.bank, e.row, "activations <= T + margin",
                         "row reached " + std::to_string(n) + " activations (bound " + std::to_string(bound) + ")"});
        }
        break;
      }
      case EventKind::Mitigation:
        count.erase({e.bank, e.row});
        flagged.erase({e.bank, e.row});
        break;
      case EventKind::Ref: {
        const std::uint32_t first = e.rank * banks_per_rank;
        for (std::uint32_t b = first; b < first + banks_per_rank; ++b)
          for (std::uint32_t r = e.row; r < e.row + e.value; ++r) {
            count.erase({b, r});
            flagged.erase({b, r});
          }
        break;
      }
      default:
        break;
    }
  }
  return out;
}

namespace oracle_detail {

inline std::uint64_t cyc(double ns, std::uint32_t clock_ps) {
  const double ps = std::round(ns * 1000.0);
  return static_cast<std::uint64_t>(std::ceil(ps / clock_ps));
}

struct Gaps {
  std::uint64_t ras, rp, rc, rcd, rtp, wr, rp_fast, rc_fast, bl, rfc, rfm, regread, prerecovery;
  explicit Gaps(const TimingSet& t)
      : ras(cyc(t.tRAS, t.clock_ps)),
        rp(cyc(t.tRP, t.clock_ps)),
        rc(cyc(t.tRC, t.clock_ps)),
        rcd(cyc(t.tRCD, t.clock_ps)),
        rtp(cyc(t.tRTP, t.clock_ps)),
        wr(cyc(t.tWR, t.clock_ps)),
        rp_fast(cyc(t.tRPRestore, t.clock_ps)),
        rc_fast(cyc(t.tRCRestore, t.clock_ps)),
        bl(cyc(t.tBL, t.clock_ps)),
        rfc(cyc(t.tRFC, t.clock_ps)),
        rfm(cyc(t.tRFM, t.clock_ps)),
        regread(cyc(t.tRegRead, t.clock_ps)),
        prerecovery(cyc(t.tPreRecovery, t.clock_ps)) {}
};

}  // namespace oracle_detail

// Re-derives every inter-command gap from the log.
inline std::vector<Violation> check_timing(const ActivationLog& log, const TimingSet& timing, Mechanism mech,
                                           const DramGeometry& geo) {
  const oracle_detail::Gaps g(timing);
  const std::uint32_t nb = geo.banks_per_channel();
  const std::uint32_t rows_per_sa = geo.rows_per_bank / geo.subarrays_per_bank;
  struct Pre {
    std::uint64_t t;
    std::uint32_t sa;
  };
  struct B {
    std::optional<std::uint32_t> open;
    std::optional<std::uint64_t> act, pre, rd, wr;
    std::uint64_t blocked = 0;
    std::vector<Pre> pres;  // practical: recent precharges
  };
  std::vector<B> banks(nb);
  std::vector<Violation> out;
  std::optional<std::uint64_t> last_cmd, last_cas, last_alert;
  std::uint64_t last_time = 0;
  auto fail = [&](ViolationKind k, std::size_t i, const Event& e, std::string rule, std::string detail) {
    out.push_back({k, i + 1, e.bank, e.row, std::move(rule), std::move(detail)});
  };
  auto gap = [&](std::size_t i, const Event& e, const std::optional<std::uint64_t>& from, std::uint64_t need,
                 const char* rule) {
    if (from && e.time < *from + need)
      fail(ViolationKind::TimingRule, i, e, rule,
           "gap " + std::to_string(e.time - *from) + " < " + std::to_string(need) + " cycles");
  };
  auto closed_and_settled = [&](std::size_t i, const Event& e, std::uint32_t b, const char* what) {
    B& k = banks[b];
    if (k.open) fail(ViolationKind::TimingRule, i, e, std::string(what) + " needs precharged banks", "bank " + std::to_string(b) + " open");
    gap(i, e, k.pre, g.rp, (std::string(what) + " after PRE >= tRP").c_str());
    gap(i, e, k.act, g.rc, (std::string(what) + " after ACT >= tRC").c_str());
    for (const auto& p : k.pres)
      if (e.time < p.t + g.rp)
        fail(ViolationKind::TimingRule, i, e, std::string(what) + " during counter update", "bank " + std::to_string(b));
    if (e.time < k.blocked)
      fail(ViolationKind::BlockedBankAccess, i, e, std::string(what) + " to a blocked bank", "bank " + std::to_string(b));
  };

  for (std::size_t i = 0; i < log.events.size(); ++i) {
    const Event& e = log.events[i];
    if (e.time < last_time) fail(ViolationKind::TimingRule, i, e, "log is time-ordered", "time went backwards");
    last_time = e.time;
    if (is_command(e.kind)) {
      if (last_cmd && *last_cmd == e.time)
        fail(ViolationKind::TimingRule, i, e, "one command per cycle", "second command at cycle " + std::to_string(e.time));
      last_cmd = e.time;
    }
    if (e.bank >= nb) {
      fail(ViolationKind::TimingRule, i, e, "bank in range", "bank " + std::to_string(e.bank));
      continue;
    }
    B& k = banks[e.bank];
    switch (e.kind) {
      case EventKind::Act: {
        if (k.open) fail(ViolationKind::TimingRule, i, e, "ACT to a precharged bank", "row open");
        if (e.time < k.blocked) fail(ViolationKind::BlockedBankAccess, i, e, "ACT to a blocked bank", "REF/RFM in progress");
        const std::uint32_t sa = e.row / rows_per_sa;
        if (mech == Mechanism::Practical) {
          bool conflict = false;
          for (const auto& p : k.pres) {
            const std::uint32_t d = p.sa > sa ? p.sa - sa : sa - p.sa;
            if (d <= 1 && e.time < p.t + g.rp) conflict = true;
          }
          if (conflict) fail(ViolationKind::TimingRule, i, e, "ACT into an updating subarray", "subarray " + std::to_string(sa));
          gap(i, e, k.act, g.rc_fast, "ACT to ACT >= tRC (restore path)");
          gap(i, e, k.pre, g.rp_fast, "PRE to ACT >= tRP (restore path)");
          // A conflicting neighbor update, even if finished, bounds the full tRC.
          bool neighbor_pre = false;
          if (k.pre && !k.pres.empty()) {
            const auto& p = k.pres.back();
            const std::uint32_t d = p.sa > sa ? p.sa - sa : sa - p.sa;
            neighbor_pre = d <= 1;
          }
          if (neighbor_pre) gap(i, e, k.act, g.rc, "ACT to ACT >= tRC (same or adjacent subarray)");
        } else {
          gap(i, e, k.act, g.rc, "ACT to ACT >= tRC");
          gap(i, e, k.pre, g.rp, "PRE to ACT >= tRP");
        }
        k.open = e.row;
        k.act = e.time;
        break;
      }
      case EventKind::Pre:
        if (!k.open) {
          fail(ViolationKind::TimingRule, i, e, "PRE needs an open row", "bank closed");
        } else if (*k.open != e.row) {
          fail(ViolationKind::TimingRule, i, e, "PRE names the open row", "open row " + std::to_string(*k.open));
        }
        if (e.time < k.blocked) fail(ViolationKind::BlockedBankAccess, i, e, "PRE to a blocked bank", "");
        gap(i, e, k.act, g.ras, "ACT to PRE >= tRAS");
        gap(i, e, k.rd, g.rtp, "RD to PRE >= tRTP");
        gap(i, e, k.wr, g.wr, "WR to PRE >= tWR");
        k.open.reset();
        k.pre = e.time;
        if (mech == Mechanism::Practical) {
          std::erase_if(k.pres, [&](const Pre& p) { return p.t + g.rp <= e.time; });
          k.pres.push_back({e.time, e.row / rows_per_sa});
        }
        break;
      case EventKind::Rd:
      case EventKind::Wr:
        if (!k.open || *k.open != e.row) fail(ViolationKind::TimingRule, i, e, "column access to the open row", "row not open");
        if (e.time < k.blocked) fail(ViolationKind::BlockedBankAccess, i, e, "column access to a blocked bank", "");
        gap(i, e, k.act, g.rcd, "ACT to RD/WR >= tRCD");
        gap(i, e, last_cas, g.bl, "RD/WR to RD/WR >= tCCD");
        last_cas = e.time;
        (e.kind == EventKind::Rd ? k.rd : k.wr) = e.time;
        break;
      case EventKind::Ref: {
        const std::uint32_t first = e.rank * geo.banks_per_rank();
        for (std::uint32_t b = first; b < first + geo.banks_per_rank(); ++b) {
          closed_and_settled(i, e, b, "REF");
          banks[b].blocked = e.time + g.rfc;
        }
        break;
      }
      case EventKind::RfmAb:
      case EventKind::RfmMask: {
        if (e.value == 0 && (!last_alert || e.time < *last_alert + g.prerecovery))
          fail(ViolationKind::TimingRule, i, e, "RFM after ALERT + pre-recovery", "");
        const std::uint64_t mask = e.kind == EventKind::RfmAb ? detail::all_banks(nb) : e.mask;
        for (std::uint32_t b = 0; b < nb; ++b) {
          if ((mask >> b) & 1u) {
            closed_and_settled(i, e, b, "RFM");
            banks[b].blocked = std::max(banks[b].blocked, e.time + g.rfm);
          } else if (e.value == 0) {
            banks[b].blocked = std::max(banks[b].blocked, e.time + g.regread);
          }
        }
        break;
      }
      case EventKind::Alert:
        last_alert = e.time;
        break;
      default:
        break;
    }
  }
  return out;
}

// Counter values rebuilt from the log: PRE count per row since its last
// mitigation or (optionally) REF.
class CounterReplay {
 public:
  CounterReplay(const DramGeometry& geo, bool ref_resets) : geo_(geo), ref_resets_(ref_resets) {}

  void apply(const Event& e) {
    switch (e.kind) {
      case EventKind::Pre: ++counts_[{e.bank, e.row}]; break;
      case EventKind::Mitigation: counts_.erase({e.bank, e.row}); break;
      case EventKind::Ref:
        if (!ref_resets_) break;
        for (std::uint32_t b = e.rank * geo_.banks_per_rank(); b < (e.rank + 1) * geo_.banks_per_rank(); ++b)
          for (std::uint32_t r = e.row; r < e.row + e.value; ++r) counts_.erase({b, r});
        break;
      default:
        break;
    }
  }

  std::uint64_t get(std::uint32_t bank, std::uint32_t row) const {
    auto it = counts_.find({bank, row});
    return it == counts_.end() ? 0 : it->second;
  }

  std::uint64_t bank_max(std::uint32_t bank) const {
    std::uint64_t m = 0;
    for (const auto& [k, v] : counts_)
      if (k.first == bank) m = std::max(m, v);
    return m;
  }

  const std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t>& all() const { return counts_; }

 private:
  DramGeometry geo_;
  bool ref_resets_;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> counts_;
};

// Banks at or above the trigger at the start of each recovery, recounted
// from the log.
inline std::vector<std::uint32_t> recount_banks_needing(const ActivationLog& log, const DramGeometry& geo,
                                                        std::uint32_t trigger, bool ref_resets = true) {
  CounterReplay replay(geo, ref_resets);
  std::vector<std::uint32_t> out;
  for (const auto& e : log.events) {
    if ((e.kind == EventKind::RfmAb || e.kind == EventKind::RfmMask) && e.value == 0) {
      std::uint32_t n = 0;
      for (std::uint32_t b = 0; b < geo.banks_per_channel(); ++b)
        if (replay.bank_max(b) >= trigger) ++n;
      out.push_back(n);
    }
    replay.apply(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Brute-force reference twin. Bank state, counters, hit counts and refresh
// deadlines are recomputed from the full command history at every query.

struct TinyConfig {
  ControllerConfig controller;
  Tick cycles = 20000;
};

inline void check_tiny(const TinyConfig& cfg, std::size_t requests) {
  const auto& g = cfg.controller.geometry;
  if (g.channels != 1 || g.ranks_per_channel != 1 || g.banks_per_channel() > 2 || g.rows_per_bank > 16 ||
      g.subarrays_per_bank > 4)
    throw ConfigError("reference_simulate: geometry exceeds tiny bounds (1 rank, <=2 banks, <=16 rows, <=4 subarrays)");
  if (requests > 10000) throw ConfigError("reference_simulate: more than 10^4 requests");
}

class ReferenceSim {
 public:
  ReferenceSim(const TinyConfig& cfg, const RequestStream& stream) : cfg_(cfg), c_(cfg.controller), stream_(stream) {
    check_tiny(cfg, stream.size());
    c_.validate();
    const auto& t = c_.timing;
    auto cy = [&](double ns) { return oracle_detail::cyc(ns, t.clock_ps); };
    RAS = cy(t.tRAS); RP = cy(t.tRP); RC = cy(t.tRC); RCD = cy(t.tRCD); RTP = cy(t.tRTP); WRt = cy(t.tWR);
    RPf = cy(t.tRPRestore); RCf = cy(t.tRCRestore); CL = cy(t.tCL); BL = cy(t.tBL); REFI = cy(t.tREFI);
    RFC = cy(t.tRFC); RFM = cy(t.tRFM); PREREC = cy(t.tPreRecovery); REGREAD = cy(t.tRegRead);
    nb_ = c_.geometry.banks_per_channel();
    hist_.resize(nb_);
    if (c_.mechanism == Mechanism::Practical) {
      trigger_ = c_.recovery.threshold - (static_cast<std::uint32_t>(std::floor(t.tRFM / t.tRC)) - 1);
    } else if (c_.mechanism == Mechanism::PracAbo) {
      trigger_ = c_.recovery.threshold;
    }
    rows_per_ref_ = std::max<std::uint32_t>(1, c_.geometry.rows_per_bank / c_.refresh_groups);
  }

  std::vector<Event> run() {
    for (Tick now = 0; now < cfg_.cycles; ++now) {
      while (pos_ < stream_.size() && stream_[pos_].arrival <= now) {
        const auto& s = stream_[pos_];
        auto& q = s.kind == ReqKind::Read ? reads_ : writes_;
        if (q.size() >= (s.kind == ReqKind::Read ? c_.read_queue : c_.write_queue)) break;
        Req r;
        r.kind = s.kind;
        const Location loc = decode_address(s.address, c_.mapping, c_.geometry);
        r.bank = (loc.rank * c_.geometry.bankgroups_per_rank + loc.bankgroup) * c_.geometry.banks_per_group + loc.bank;
        r.row = loc.row;
        q.push_back(r);
        ++pos_;
      }
      tick(now);
    }
    return log_;
  }

 private:
  struct Req {
    ReqKind kind;
    std::uint32_t bank;
    std::uint32_t row;
  };
  struct Plan {
    std::uint64_t mask;
    Tick start, mask_known, end;
  };

  bool counters_on() const { return c_.mechanism != Mechanism::Baseline; }
  bool practical() const { return c_.mechanism == Mechanism::Practical; }
  std::uint32_t sa_of(std::uint32_t row) const { return row / (c_.geometry.rows_per_bank / c_.geometry.subarrays_per_bank); }

  void push(const Event& e) {
    log_.push_back(e);
    if (e.kind == EventKind::Ref) {
      for (std::uint32_t b = 0; b < nb_; ++b) hist_[b].push_back(log_.size() - 1);
    } else if (e.kind == EventKind::Act || e.kind == EventKind::Pre || e.kind == EventKind::Rd ||
               e.kind == EventKind::Wr || e.kind == EventKind::Mitigation) {
      hist_[e.bank].push_back(log_.size() - 1);
    }
  }

  // Most recent event of `kind` on bank b, scanning backwards.
  std::optional<Tick> last(std::uint32_t b, EventKind kind) const {
    for (auto it = hist_[b].rbegin(); it != hist_[b].rend(); ++it)
      if (log_[*it].kind == kind) return log_[*it].time;
    return std::nullopt;
  }

  std::optional<std::uint32_t> open_row(std::uint32_t b) const {
    for (auto it = hist_[b].rbegin(); it != hist_[b].rend(); ++it) {
      const Event& e = log_[*it];
      if (e.kind == EventKind::Act) return e.row;
      if (e.kind == EventKind::Pre) return std::nullopt;
    }
    return std::nullopt;
  }

  std::uint64_t ref_count() const {
    std::uint64_t n = 0;
    for (const auto& e : log_)
      if (e.kind == EventKind::Ref) ++n;
    return n;
  }

  Tick next_ref() const { return REFI * (1 + ref_count()); }

  Tick blocked_until(std::uint32_t b) const {
    Tick t = 0;
    for (auto it = hist_[b].rbegin(); it != hist_[b].rend(); ++it)
      if (log_[*it].kind == EventKind::Ref) {
        t = log_[*it].time + RFC;
        break;
      }
    for (const auto& p : plans_) t = std::max(t, ((p.mask >> b) & 1u) ? p.end : p.mask_known);
    return t;
  }

  // Counter of (b,row): PREs since the last reset. A reset still waiting in
  // the current recovery plan already counts.
  std::uint32_t counter(std::uint32_t b, std::uint32_t row) const {
    for (const auto& e : pending_)
      if (e.kind == EventKind::Mitigation && e.bank == b && e.row == row) return 0;
    std::uint32_t n = 0;
    for (auto it = hist_[b].rbegin(); it != hist_[b].rend(); ++it) {
      const Event& e = log_[*it];
      if (e.kind == EventKind::Mitigation && e.row == row && e.bank == b) break;
      if (e.kind == EventKind::Ref && c_.ref_resets_counters && row >= e.row && row < e.row + e.value) break;
      if (e.kind == EventKind::Pre && e.bank == b && e.row == row) ++n;
    }
    const std::uint32_t sat = c_.counter_bits >= 32 ? ~0u : (1u << c_.counter_bits) - 1;
    return std::min(n, sat);
  }

  std::pair<std::uint32_t, std::uint32_t> bank_max(std::uint32_t b,
                                                   const std::map<std::pair<std::uint32_t, std::uint32_t>, bool>& reset) const {
    std::uint32_t best_row = 0, best = 0;
    for (std::uint32_t r = 0; r < c_.geometry.rows_per_bank; ++r) {
      const std::uint32_t v = reset.count({b, r}) ? 0 : counter(b, r);
      if (v > best) {
        best = v;
        best_row = r;
      }
    }
    return {best_row, best};
  }

  bool any_at_trigger() const {
    for (std::uint32_t b = 0; b < nb_; ++b)
      if (bank_max(b, {}).second >= trigger_) return true;
    return false;
  }

  // Hit counter: CAS commands since the last ACT, wrapping at the cap.
  std::uint32_t hits(std::uint32_t b) const {
    std::uint32_t n = 0;
    for (auto it = hist_[b].rbegin(); it != hist_[b].rend(); ++it) {
      const Event& e = log_[*it];
      if (e.kind == EventKind::Act || e.kind == EventKind::Pre) break;
      if (e.kind == EventKind::Rd || e.kind == EventKind::Wr) ++n;
    }
    return n == 0 ? 0 : (n - 1) % c_.row_hit_cap + 1;
  }

  Tick next_cas() const {
    for (auto it = log_.rbegin(); it != log_.rend(); ++it)
      if (it->kind == EventKind::Rd || it->kind == EventKind::Wr) return it->time + BL;
    return 0;
  }

  Tick act_ready(std::uint32_t b, std::uint32_t row, Tick now) const {
    const Tick base = std::max(now, blocked_until(b));
    const auto la = last(b, EventKind::Act);
    const auto lp = last(b, EventKind::Pre);
    auto plus = [](const std::optional<Tick>& t, Tick d) { return t ? *t + d : Tick{0}; };
    if (!practical()) return std::max({base, plus(la, RC), plus(lp, RP)});
    const Tick restore = std::max({base, plus(la, RCf), plus(lp, RPf)});
    Tick ready = restore;
    bool conflict = false;
    const std::uint32_t sa = sa_of(row);
    for (auto it = hist_[b].rbegin(); it != hist_[b].rend(); ++it) {
      const Event& e = log_[*it];
      if (e.kind != EventKind::Pre || e.bank != b) continue;
      if (e.time + RP <= restore) break;
      const std::uint32_t s = sa_of(e.row);
      if ((s > sa ? s - sa : sa - s) <= 1) {
        conflict = true;
        ready = std::max(ready, e.time + RP);
      }
    }
    if (conflict) ready = std::max(ready, plus(la, RC));
    return ready;
  }

  bool pre_legal(std::uint32_t b, Tick now) const {
    auto plus = [](const std::optional<Tick>& t, Tick d) { return t ? *t + d : Tick{0}; };
    const Tick t = std::max({now, blocked_until(b), plus(last(b, EventKind::Act), RAS), plus(last(b, EventKind::Rd), RTP),
                             plus(last(b, EventKind::Wr), WRt)});
    return t <= now;
  }

  bool cas_legal(std::uint32_t b, Tick now) const {
    const auto la = last(b, EventKind::Act);
    return std::max(blocked_until(b), la ? *la + RCD : 0) <= now;
  }

  bool maintenance_legal(std::uint32_t b, Tick now) const {
    if (open_row(b)) return false;
    auto plus = [](const std::optional<Tick>& t, Tick d) { return t ? *t + d : Tick{0}; };
    Tick t = std::max({now, blocked_until(b), plus(last(b, EventKind::Pre), RP), plus(last(b, EventKind::Act), RC)});
    if (practical()) {
      const auto lp = last(b, EventKind::Pre);
      if (lp) t = std::max(t, *lp + RP);
    }
    return t <= now;
  }

  bool recovery_closing(Tick now) const { return phase_ == 1 && now >= until_; }

  bool bank_blocked(std::uint32_t b, Tick now) const {
    return blocked_until(b) > now || (recovery_closing(now) && ((close_mask() >> b) & 1u)) || ref_draining(now);
  }

  bool ref_draining(Tick now) const {
    if (now < next_ref()) return false;
    for (std::uint32_t b = 0; b < nb_; ++b)
      if (blocked_until(b) > now) return false;
    return true;
  }

  Event ev(EventKind k, std::uint32_t b, std::uint32_t row, Tick now) const {
    Event e;
    e.time = now;
    e.kind = k;
    e.bank = b;
    e.rank = 0;
    e.row = row;
    return e;
  }

  void raise(Tick now) {
    phase_ = 1;
    until_ = now + PREREC;
    pending_alert_ = false;
    Event e;
    e.time = now;
    e.kind = EventKind::Alert;
    push(e);
  }

  void do_pre(std::uint32_t b, Tick now, std::int64_t for_row) {
    const std::uint32_t row = *open_row(b);
    Event e = ev(EventKind::Pre, b, row, now);
    e.other_row = for_row;
    push(e);
    if (!counters_on()) return;
    const std::uint32_t v = counter(b, row);
    log_.back().value = v;
    if (v < trigger_) return;
    Event x = ev(EventKind::Crossing, b, row, now);
    x.value = v;
    push(x);
    if (practical()) ba_ |= std::uint64_t{1} << b;
    if (phase_ == 0 && gate_open_) {
      raise(now);
    } else {
      pending_alert_ = true;
    }
  }

  bool close_one(std::uint64_t mask, Tick now, bool& all_closed) {
    all_closed = true;
    for (std::uint32_t b = 0; b < nb_; ++b) {
      if (!((mask >> b) & 1u) || !open_row(b)) continue;
      all_closed = false;
      if (pre_legal(b, now)) {
        do_pre(b, now, -1);
        return true;
      }
    }
    return false;
  }

  void release(Tick now) {
    while (!pending_.empty() && pending_.front().time <= now) {
      const Event e = pending_.front();
      pending_.pop_front();
      if (e.kind == EventKind::RfmAb || e.kind == EventKind::RfmMask) bus_until_ = e.time + 1;
      push(e);
    }
  }

  std::uint64_t close_mask() const { return practical() ? ba_ : (nb_ >= 64 ? ~0ull : (1ull << nb_) - 1); }

  bool try_recovery(Tick now) {
    if (!recovery_closing(now)) return false;
    const std::uint64_t all = nb_ >= 64 ? ~0ull : (1ull << nb_) - 1;
    const std::uint64_t close = close_mask();
    bool all_closed = false;
    if (close_one(close, now, all_closed)) return true;
    if (!all_closed) return false;
    for (std::uint32_t b = 0; b < nb_; ++b)
      if (((close >> b) & 1u) && !maintenance_legal(b, now)) return false;
    std::uint32_t needing = 0;
    for (std::uint32_t b = 0; b < nb_; ++b)
      if (bank_max(b, {}).second >= trigger_) ++needing;
    Plan p;
    p.start = now;
    if (practical()) {
      p.mask = ba_;
      ba_ = 0;
      p.mask_known = now + REGREAD;
    } else {
      p.mask = all;
      p.mask_known = now;
    }
    p.end = now + c_.recovery.n_rfm * RFM;
    std::map<std::pair<std::uint32_t, std::uint32_t>, bool> reset;
    std::vector<Event> evs;
    for (unsigned i = 0; i < c_.recovery.n_rfm; ++i) {
      const Tick t = now + i * RFM;
      Event r;
      r.time = t;
      r.kind = practical() ? EventKind::RfmMask : EventKind::RfmAb;
      r.value = i;
      r.mask = p.mask;
      r.victims = needing;
      evs.push_back(r);
      for (std::uint32_t b = 0; b < nb_; ++b) {
        if (!((p.mask >> b) & 1u)) continue;
        const auto [row, v] = bank_max(b, reset);
        if (v == 0) continue;
        const bool needed = v >= trigger_;
        if (c_.recovery.policy == MitigationPolicy::Prohibitive && !needed) continue;
        reset[{b, row}] = true;
        Event m = ev(EventKind::Mitigation, b, row, t);
        m.value = v;
        const std::uint32_t rad = c_.recovery.blast_radius;
        const std::uint32_t lo = row >= rad ? row - rad : 0;
        const std::uint32_t hi = std::min(row + rad, c_.geometry.rows_per_bank - 1);
        m.victims = hi - lo;
        m.needed = needed;
        evs.push_back(m);
      }
    }
    if (practical()) {
      Event s;
      s.time = p.mask_known;
      s.kind = p.mask ? EventKind::BaSnapshot : EventKind::EmptyMask;
      s.mask = p.mask;
      auto it = evs.begin();
      while (it != evs.end() && it->time <= s.time) ++it;
      evs.insert(it, s);
    }
    plans_.push_back(p);
    for (auto& e : evs) pending_.push_back(e);
    phase_ = 2;
    until_ = p.end;
    release(now);
    return true;
  }

  bool try_refresh(Tick now) {
    if (!ref_draining(now)) return false;
    bool all_closed = false;
    if (close_one(nb_ >= 64 ? ~0ull : (1ull << nb_) - 1, now, all_closed)) return true;
    if (!all_closed) return false;
    for (std::uint32_t b = 0; b < nb_; ++b)
      if (!maintenance_legal(b, now)) return false;
    const std::uint32_t groups = c_.geometry.rows_per_bank / rows_per_ref_;
    const std::uint32_t first_row = static_cast<std::uint32_t>(ref_count() % groups) * rows_per_ref_;
    Event e = ev(EventKind::Ref, 0, first_row, now);
    e.value = rows_per_ref_;
    push(e);
    return true;
  }

  bool has_hit(const std::deque<Req>& q, std::uint32_t b) const {
    const auto open = open_row(b);
    if (!open) return false;
    for (const auto& r : q)
      if (r.bank == b && r.row == *open) return true;
    return false;
  }

  bool has_other(const std::deque<Req>& q, std::uint32_t b) const {
    const auto open = open_row(b);
    for (const auto& r : q)
      if (r.bank == b && (!open || r.row != *open)) return true;
    return false;
  }

  void schedule(Tick now) {
    const bool serve_writes = drain_ || (reads_.empty() && !writes_.empty());
    auto& q = serve_writes ? writes_ : reads_;
    if (q.empty()) return;
    const EventKind cas = serve_writes ? EventKind::Wr : EventKind::Rd;
    const bool cas_ok = now >= next_cas();
    std::optional<std::size_t> idx;
    EventKind kind = EventKind::Act;
    if (cas_ok) {
      for (std::size_t i = 0; i < q.size() && !idx; ++i) {
        const auto open = open_row(q[i].bank);
        if (!open || *open != q[i].row || hits(q[i].bank) >= c_.row_hit_cap) continue;
        if (bank_blocked(q[i].bank, now)) continue;
        if (cas_legal(q[i].bank, now)) {
          idx = i;
          kind = cas;
        }
      }
    }
    for (std::size_t i = 0; i < q.size() && !idx; ++i) {
      const Req& r = q[i];
      if (bank_blocked(r.bank, now)) continue;
      const auto open = open_row(r.bank);
      if (!open) {
        if (act_ready(r.bank, r.row, now) <= now) {
          idx = i;
          kind = EventKind::Act;
        }
      } else if (*open == r.row) {
        if (!cas_ok || has_other(q, r.bank)) continue;
        if (cas_legal(r.bank, now)) {
          idx = i;
          kind = cas;
        }
      } else {
        if (hits(r.bank) < c_.row_hit_cap && has_hit(q, r.bank)) continue;
        if (pre_legal(r.bank, now)) {
          idx = i;
          kind = EventKind::Pre;
        }
      }
    }
    if (!idx) return;
    const Req r = q[*idx];
    if (kind == EventKind::Act) {
      push(ev(EventKind::Act, r.bank, r.row, now));
      if (counters_on()) on_act(now);
    } else if (kind == EventKind::Pre) {
      do_pre(r.bank, now, r.row);
    } else {
      push(ev(kind, r.bank, r.row, now));
      q.erase(q.begin() + static_cast<std::ptrdiff_t>(*idx));
    }
  }

  void on_act(Tick now) {
    if (gate_open_ || phase_ != 0) return;
    gate_open_ = true;
    if (!pending_alert_) return;
    pending_alert_ = false;
    const bool flagged = practical() ? (ba_ != 0 || any_at_trigger()) : any_at_trigger();
    if (flagged) raise(now);
  }

  void tick(Tick now) {
    release(now);
    if (phase_ == 2 && now >= until_) {
      phase_ = 0;
      gate_open_ = false;
      for (std::uint32_t b = 0; b < nb_; ++b) {
        if (bank_max(b, {}).second < trigger_) continue;
        if (practical()) ba_ |= std::uint64_t{1} << b;
        pending_alert_ = true;
      }
    }
    if (drain_ && writes_.size() <= c_.drain_low) drain_ = false;
    if (!drain_ && writes_.size() >= c_.drain_high) drain_ = true;
    if (bus_until_ > now) return;
    if (try_recovery(now)) return;
    if (try_refresh(now)) return;
    schedule(now);
  }

  TinyConfig cfg_;
  ControllerConfig c_;
  RequestStream stream_;
  std::size_t pos_ = 0;
  Tick RAS, RP, RC, RCD, RTP, WRt, RPf, RCf, CL, BL, REFI, RFC, RFM, PREREC, REGREAD;
  std::uint32_t nb_ = 0;
  std::uint32_t trigger_ = ~0u;
  std::uint32_t rows_per_ref_ = 1;
  std::vector<Event> log_;
  std::vector<std::vector<std::size_t>> hist_;
  std::deque<Req> reads_, writes_;
  std::vector<Plan> plans_;
  std::deque<Event> pending_;
  std::uint64_t ba_ = 0;
  int phase_ = 0;  // 0 idle, 1 pre-recovery, 2 recovering
  Tick until_ = 0;
  bool gate_open_ = true;
  bool pending_alert_ = false;
  bool drain_ = false;
  Tick bus_until_ = 0;
};

inline std::vector<Event> reference_simulate(const TinyConfig& cfg, const RequestStream& stream) {
  return ReferenceSim(cfg, stream).run();
}

// The main engine driven by the same request stream for the same number of
// cycles, for direct comparison with reference_simulate.
inline std::vector<Event> engine_simulate(const TinyConfig& cfg, const RequestStream& stream) {
  check_tiny(cfg, stream.size());
  SimConfig sc;
  sc.controller = cfg.controller;
  sc.streams = {stream};
  sc.max_cycles = cfg.cycles;
  sc.run_to_max = true;
  sc.record_events = true;
  return simulate(std::move(sc)).events;
}

}  // namespace pracsim
