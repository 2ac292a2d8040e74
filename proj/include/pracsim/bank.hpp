#pragma once

#include <algorithm>
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

inline UpdateEngineMode update_mode(Mechanism m) {
  return m == Mechanism::Practical ? UpdateEngineMode::CentralizedSubarray : UpdateEngineMode::BankLevelRMW;
}

struct BankState {
  std::optional<std::uint32_t> open_row;
  std::optional<Tick> last_act;
  std::optional<Tick> last_pre;
  std::optional<Tick> last_rd;
  std::optional<Tick> last_wr;
  // REF or RFM in progress until this time.
  Tick blocked_until = 0;
  std::vector<OccupancyWindow> occupancy;
};

namespace detail {

inline Tick after(const std::optional<Tick>& t, Tick gap) { return t ? *t + gap : 0; }

inline std::string rule(const char* cmd, const char* what) { return std::string(cmd) + ": " + what; }

}  // namespace detail

// First cycle >= now at which `cmd` satisfies every per-bank constraint.
// Only the target row/subarray of `cmd` is consulted; channel-level
// constraints (command bus, data bus) are the controller's business.
inline Tick earliest_issue(const BankState& bank, const Command& cmd, const TimingSet::Cycles& c,
                           Mechanism mechanism, Tick now = 0) {
  using detail::after;
  Tick t = std::max(now, bank.blocked_until);
  switch (cmd.kind) {
    case CommandKind::ACT: {
      if (bank.open_row) throw ProtocolError(detail::rule("ACT", "bank already has an open row (tRAS/PRE required)"));
      if (mechanism != Mechanism::Practical) {
        return std::max({t, after(bank.last_act, c.RC), after(bank.last_pre, c.RP)});
      }
      // Subarray-level counter update: the array restore frees the bank
      // early, unless the target subarray is still being written back.
      const Tick restore = std::max({t, after(bank.last_act, c.RCRestore), after(bank.last_pre, c.RPRestore)});
      Tick ready = restore;
      bool conflict = false;
      for (const auto& w : bank.occupancy) {
        if (w.covers(cmd.target.subarray) && w.busy_until > restore) {
          conflict = true;
          ready = std::max(ready, w.busy_until);
        }
      }
      if (conflict) ready = std::max(ready, after(bank.last_act, c.RC));
      return ready;
    }
    case CommandKind::PRE:
      if (!bank.open_row) throw ProtocolError(detail::rule("PRE", "no open row to precharge"));
      return std::max({t, after(bank.last_act, c.RAS), after(bank.last_rd, c.RTP), after(bank.last_wr, c.WR)});
    case CommandKind::RD:
    case CommandKind::WR: {
      const char* name = cmd.kind == CommandKind::RD ? "RD" : "WR";
      if (!bank.open_row) throw ProtocolError(detail::rule(name, "no open row (ACT required)"));
      if (*bank.open_row != cmd.target.row) throw ProtocolError(detail::rule(name, "target row is not the open row"));
      return std::max(t, after(bank.last_act, c.RCD));
    }
    case CommandKind::REF:
    case CommandKind::RFM_AB:
    case CommandKind::RFM_MASK: {
      if (bank.open_row) throw ProtocolError(detail::rule(to_string(cmd.kind), "bank must be precharged"));
      Tick ready = std::max({t, after(bank.last_pre, c.RP), after(bank.last_act, c.RC)});
      for (const auto& w : bank.occupancy) ready = std::max(ready, w.busy_until);
      return ready;
    }
  }
  return t;
}

inline Tick earliest_issue(const BankState& bank, const Command& cmd, const TimingSet& timing, Mechanism mechanism,
                           Tick now = 0) {
  return earliest_issue(bank, cmd, timing.cycles(), mechanism, now);
}

struct ApplyResult {
  std::optional<PrechargeUpdate> counter_update;
};

// Applies `cmd` to the bank. Counters, when given, are updated on PRE. A
// command issued before its earliest legal time is an engine bug.
inline ApplyResult apply_command(BankState& bank, const Command& cmd, const TimingSet::Cycles& c,
                                 Mechanism mechanism, RowCounterTable* counters = nullptr,
                                 std::uint32_t bank_index = 0) {
  const Tick t = cmd.issue_time;
  const Tick ready = earliest_issue(bank, cmd, c, mechanism, t);
  if (ready > t)
    throw ProtocolError(std::string("simulation invariant: ") + to_string(cmd.kind) + " issued at " +
                        std::to_string(t) + " before earliest legal cycle " + std::to_string(ready));
  ApplyResult res;
  std::erase_if(bank.occupancy, [t](const OccupancyWindow& w) { return w.busy_until <= t; });
  switch (cmd.kind) {
    case CommandKind::ACT:
      bank.open_row = cmd.target.row;
      bank.last_act = t;
      break;
    case CommandKind::PRE: {
      const std::uint32_t row = *bank.open_row;
      bank.open_row.reset();
      bank.last_pre = t;
      if (counters) {
        res.counter_update = on_precharge_update(*counters, bank_index, row, update_mode(mechanism), c, t);
        if (res.counter_update->window) bank.occupancy.push_back(*res.counter_update->window);
      }
      break;
    }
    case CommandKind::RD:
      bank.last_rd = t;
      break;
    case CommandKind::WR:
      bank.last_wr = t;
      break;
    case CommandKind::REF:
      bank.blocked_until = t + c.RFC;
      break;
    case CommandKind::RFM_AB:
    case CommandKind::RFM_MASK:
      bank.blocked_until = t + c.RFM;
      break;
  }
  return res;
}

inline ApplyResult apply_command(BankState& bank, const Command& cmd, const TimingSet& timing, Mechanism mechanism,
                                 RowCounterTable* counters = nullptr, std::uint32_t bank_index = 0) {
  return apply_command(bank, cmd, timing.cycles(), mechanism, counters, bank_index);
}

}  // namespace pracsim
