#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pracsim/command.hpp"
#include "pracsim/common.hpp"
#include "pracsim/counters.hpp"
#include "pracsim/geometry.hpp"
#include "pracsim/timing.hpp"

namespace pracsim {

struct RecoveryConfig {
  unsigned n_rfm = 1;
  std::uint32_t threshold = 64;
  MitigationPolicy policy = MitigationPolicy::Opportunistic;
  std::uint32_t blast_radius = 1;
  Mechanism mechanism = Mechanism::PracAbo;

  void validate(const TimingSet& timing) const;
};

// Alert threshold lowered by the worst-case number of activations another
// bank can receive while one RFM is in progress.
inline std::uint32_t effective_threshold(std::uint32_t threshold, double tRFM_ns, double tRC_ns) {
  const auto in_flight = static_cast<std::uint32_t>(std::floor(tRFM_ns / tRC_ns));
  if (threshold <= in_flight)
    throw ConfigError("threshold " + std::to_string(threshold) + " must exceed floor(tRFM/tRC) = " +
                      std::to_string(in_flight));
  return threshold - (in_flight - 1);
}

// Counter value at which a bank raises ABO (and, under PRACtical, sets its
// BA bit).
inline std::uint32_t trigger_level(const RecoveryConfig& cfg, const TimingSet& timing) {
  if (cfg.mechanism == Mechanism::Practical) return effective_threshold(cfg.threshold, timing.tRFM, timing.tRC);
  return cfg.threshold;
}

inline void RecoveryConfig::validate(const TimingSet& timing) const {
  if (n_rfm != 1 && n_rfm != 2 && n_rfm != 4) throw ConfigError("n_rfm must be 1, 2 or 4");
  if (blast_radius < 1) throw ConfigError("blast_radius must be >= 1");
  if (threshold < 1) throw ConfigError("threshold must be >= 1");
  if (mechanism == Mechanism::Baseline) throw ConfigError("baseline mechanism has no recovery configuration");
  (void)trigger_level(*this, timing);
}

inline std::vector<std::uint32_t> select_victims(std::uint32_t aggressor, std::uint32_t blast_radius,
                                                 const DramGeometry& geo) {
  if (aggressor >= geo.rows_per_bank) throw BoundsError("aggressor row out of range");
  std::vector<std::uint32_t> out;
  const std::uint32_t lo = aggressor >= blast_radius ? aggressor - blast_radius : 0;
  const std::uint64_t hi = std::min<std::uint64_t>(std::uint64_t{aggressor} + blast_radius, geo.rows_per_bank - 1);
  for (std::uint64_t r = lo; r <= hi; ++r)
    if (r != aggressor) out.push_back(static_cast<std::uint32_t>(r));
  return out;
}

// One bit per bank. Bits are set by their own bank and cleared together when
// the register is read.
class BaRegister {
 public:
  explicit BaRegister(std::uint32_t banks = 64) : banks_(banks) {
    if (banks > 64) throw ConfigError("BA register supports at most 64 banks per channel");
  }

  void set(std::uint32_t bank) {
    if (bank >= banks_) throw BoundsError("BA register bank out of range");
    bits_ |= std::uint64_t{1} << bank;
  }
  bool test(std::uint32_t bank) const { return (bits_ >> bank) & 1u; }
  std::uint64_t peek() const { return bits_; }
  bool any() const { return bits_ != 0; }

  std::uint64_t read_and_clear() {
    const std::uint64_t v = bits_;
    bits_ = 0;
    return v;
  }

 private:
  std::uint32_t banks_;
  std::uint64_t bits_ = 0;
};

enum class AlertPhase { Idle, PreRecovery, Recovering };

struct AlertState {
  AlertPhase phase = AlertPhase::Idle;
  Tick until = 0;  // end of pre-recovery, or end of the last RFM
  unsigned rfms_remaining = 0;
  // After a recovery, one ACT must be issued before the next alert can fire.
  bool gate_open = true;
  bool alert_pending = false;
  std::uint64_t acts_since_recovery = 0;

  bool can_raise() const { return phase == AlertPhase::Idle && gate_open; }
};

// Handles a counter update. Returns true when ABO is raised now; otherwise
// the alert is left pending if the gate is closed.
inline bool on_counter_update(std::uint32_t bank, std::uint32_t new_value, std::uint32_t trigger,
                              const RecoveryConfig& cfg, AlertState& alert, BaRegister& ba) {
  if (new_value < trigger) return false;
  if (cfg.mechanism == Mechanism::Practical) ba.set(bank);
  if (alert.can_raise()) return true;
  alert.alert_pending = true;
  return false;
}

struct MitigationRecord {
  std::uint32_t bank = 0;
  std::uint32_t aggressor = 0;
  std::uint32_t count = 0;
  std::vector<std::uint32_t> victims;
  bool needed = false;
};

// Refreshes the victims of the bank's maximum row and resets its counter.
// Prohibitive policy acts only when that maximum reached the trigger level.
// A bank whose counters are all zero has no aggressor and stays idle.
inline std::optional<MitigationRecord> mitigate_bank(RowCounterTable& table, std::uint32_t bank,
                                                     MitigationPolicy policy, std::uint32_t trigger,
                                                     std::uint32_t blast_radius) {
  const RowMax m = table.bank_max(bank);
  if (m.value == 0) return std::nullopt;
  const bool needed = m.value >= trigger;
  if (policy == MitigationPolicy::Prohibitive && !needed) return std::nullopt;
  MitigationRecord rec{bank, m.row, m.value, select_victims(m.row, blast_radius, table.geometry()), needed};
  table.reset(bank, m.row);
  return rec;
}

struct RecoveryPlan {
  std::vector<Event> events;  // RFM commands, BA snapshot and mitigations, time-ordered
  std::uint64_t mask = 0;     // banks blocked for the whole recovery
  Tick mask_known = 0;        // all banks are stalled until this time
  Tick end = 0;               // end of the last RFM
  std::uint32_t banks_needing = 0;
};

namespace detail {

inline std::uint32_t count_banks_needing(const RowCounterTable& table, std::uint32_t trigger) {
  std::uint32_t n = 0;
  for (std::uint32_t b = 0; b < table.bank_count(); ++b)
    if (table.bank_max(b).value >= trigger) ++n;
  return n;
}

inline void run_rfms(RecoveryPlan& plan, RowCounterTable& table, const RecoveryConfig& cfg, std::uint32_t trigger,
                     EventKind kind, std::uint64_t mask, Tick now, Tick tRFM) {
  for (unsigned i = 0; i < cfg.n_rfm; ++i) {
    const Tick t = now + i * tRFM;
    Event cmd;
    cmd.time = t;
    cmd.kind = kind;
    cmd.value = i;
    cmd.mask = mask;
    plan.events.push_back(cmd);
    for (std::uint32_t b = 0; b < table.bank_count(); ++b) {
      if (!((mask >> b) & 1u)) continue;
      auto rec = mitigate_bank(table, b, cfg.policy, trigger, cfg.blast_radius);
      if (!rec) continue;
      Event e;
      e.time = t;
      e.kind = EventKind::Mitigation;
      e.rank = rank_of_flat_bank(b, table.geometry());
      e.bank = b;
      e.row = rec->aggressor;
      e.value = rec->count;
      e.victims = static_cast<std::uint32_t>(rec->victims.size());
      e.needed = rec->needed;
      plan.events.push_back(e);
    }
  }
  plan.end = now + cfg.n_rfm * tRFM;
}

inline std::uint64_t all_banks(std::uint32_t n) { return n >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << n) - 1; }

}  // namespace detail

// RFM_ab recovery: n back-to-back RFMs, every bank blocked and mitigated.
// Banks are frozen for the whole recovery, so the full plan is computed at
// its start.
inline RecoveryPlan run_recovery_abo(RowCounterTable& table, const RecoveryConfig& cfg, std::uint32_t trigger,
                                     Tick now, const TimingSet::Cycles& c) {
  RecoveryPlan plan;
  plan.mask = detail::all_banks(table.bank_count());
  plan.mask_known = now;
  plan.banks_needing = detail::count_banks_needing(table, trigger);
  detail::run_rfms(plan, table, cfg, trigger, EventKind::RfmAb, plan.mask, now, c.RFM);
  return plan;
}

// RFM_MASK recovery: the first command reads and clears the BA register;
// only the banks in that snapshot are blocked and mitigated.
inline RecoveryPlan run_recovery_mask(RowCounterTable& table, BaRegister& ba, const RecoveryConfig& cfg,
                                      std::uint32_t trigger, Tick now, const TimingSet::Cycles& c) {
  RecoveryPlan plan;
  plan.banks_needing = detail::count_banks_needing(table, trigger);
  plan.mask = ba.read_and_clear();
  plan.mask_known = now + c.RegRead;
  detail::run_rfms(plan, table, cfg, trigger, EventKind::RfmMask, plan.mask, now, c.RFM);
  Event snap;
  snap.time = plan.mask_known;
  snap.kind = plan.mask ? EventKind::BaSnapshot : EventKind::EmptyMask;
  snap.mask = plan.mask;
  // Keep the plan time-ordered: the snapshot lands after the first command.
  auto pos = plan.events.begin();
  while (pos != plan.events.end() && pos->time <= snap.time) ++pos;
  plan.events.insert(pos, snap);
  return plan;
}

}  // namespace pracsim
