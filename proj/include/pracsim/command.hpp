#pragma once

#include <cstdint>
#include <string>

#include "pracsim/common.hpp"
#include "pracsim/geometry.hpp"

namespace pracsim {

enum class Mechanism { Baseline, PracAbo, Practical };

enum class MitigationPolicy { Opportunistic, Prohibitive };

inline const char* to_string(Mechanism m) {
  switch (m) {
    case Mechanism::Baseline: return "baseline";
    case Mechanism::PracAbo: return "prac_abo";
    case Mechanism::Practical: return "practical";
  }
  return "?";
}

inline const char* to_string(MitigationPolicy p) {
  return p == MitigationPolicy::Opportunistic ? "opportunistic" : "prohibitive";
}

enum class CommandKind : std::uint8_t { ACT, PRE, RD, WR, REF, RFM_AB, RFM_MASK };

inline const char* to_string(CommandKind k) {
  switch (k) {
    case CommandKind::ACT: return "ACT";
    case CommandKind::PRE: return "PRE";
    case CommandKind::RD: return "RD";
    case CommandKind::WR: return "WR";
    case CommandKind::REF: return "REF";
    case CommandKind::RFM_AB: return "RFM_AB";
    case CommandKind::RFM_MASK: return "RFM_MASK";
  }
  return "?";
}

struct Command {
  CommandKind kind = CommandKind::ACT;
  Location target;  // bank-granular for PRE/RFM, rank-granular for REF
  Tick issue_time = 0;
};

// Everything the engine reports: issued commands plus protocol events.
enum class EventKind : std::uint8_t {
  Act,
  Pre,
  Rd,
  Wr,
  Ref,
  RfmAb,
  RfmMask,
  Alert,       // ABO raised to the controller
  Crossing,    // a counter reached the trigger level
  BaSnapshot,  // BA register contents returned by RFM_MASK
  Mitigation,  // victim refresh of one aggressor in one bank
  EmptyMask,   // RFM_MASK returned an empty register
};

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::Act: return "ACT";
    case EventKind::Pre: return "PRE";
    case EventKind::Rd: return "RD";
    case EventKind::Wr: return "WR";
    case EventKind::Ref: return "REF";
    case EventKind::RfmAb: return "RFM_AB";
    case EventKind::RfmMask: return "RFM_MASK";
    case EventKind::Alert: return "ALERT";
    case EventKind::Crossing: return "CROSSING";
    case EventKind::BaSnapshot: return "BA_SNAPSHOT";
    case EventKind::Mitigation: return "MITIGATION";
    case EventKind::EmptyMask: return "EMPTY_MASK";
  }
  return "?";
}

inline EventKind event_kind_from_string(const std::string& s) {
  for (int i = 0; i <= static_cast<int>(EventKind::EmptyMask); ++i) {
    auto k = static_cast<EventKind>(i);
    if (s == to_string(k)) return k;
  }
  throw ParseError(0, "unknown event kind '" + s + "'");
}

constexpr bool is_command(EventKind k) { return k <= EventKind::RfmMask; }

struct Event {
  Tick time = 0;
  EventKind kind = EventKind::Act;
  std::uint32_t rank = 0;
  std::uint32_t bank = 0;  // flat bank index within the channel
  std::uint32_t row = 0;   // ACT/PRE/RD/WR row; REF first refreshed row; MITIGATION aggressor
  // PRE: counter value after the update. CROSSING: counter value.
  // MITIGATION: aggressor count before reset. REF: rows refreshed per bank.
  // RFM_*: index within the recovery.
  std::uint32_t value = 0;
  // PRE issued to serve a request to another row: that row; otherwise -1.
  std::int64_t other_row = -1;
  // BA_SNAPSHOT / RFM_MASK: bank mask.
  std::uint64_t mask = 0;
  // MITIGATION: victim rows refreshed and whether the aggressor was at or
  // above the trigger level.
  std::uint32_t victims = 0;
  bool needed = false;

  bool operator==(const Event&) const = default;
};

}  // namespace pracsim
