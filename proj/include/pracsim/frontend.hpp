#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "pracsim/common.hpp"
#include "pracsim/controller.hpp"
#include "pracsim/geometry.hpp"
#include "pracsim/mapping.hpp"
#include "pracsim/recovery.hpp"
#include "pracsim/timing.hpp"

namespace pracsim {

struct TraceEntry {
  std::uint32_t bubble = 0;  // non-memory instructions before the access
  ReqKind kind = ReqKind::Read;
  std::uint64_t address = 0;

  bool operator==(const TraceEntry&) const = default;
};

using Trace = std::vector<TraceEntry>;

// Parses `<bubble> <R|W> <hex address>`. Blank lines and `#` comments yield
// nullopt.
inline std::optional<TraceEntry> parse_trace(const std::string& line, std::size_t line_no = 1) {
  std::string text = line.substr(0, line.find('#'));
  std::istringstream in(text);
  std::string bubble, kind, addr, extra;
  if (!(in >> bubble)) return std::nullopt;
  if (!(in >> kind >> addr) || (in >> extra)) throw ParseError(line_no, "expected '<bubble> <R|W> <hex address>'");
  TraceEntry e;
  try {
    std::size_t pos = 0;
    if (bubble.empty() || bubble[0] == '-') throw std::invalid_argument("negative");
    const unsigned long long b = std::stoull(bubble, &pos, 10);
    if (pos != bubble.size() || b > 0xffffffffull) throw std::invalid_argument("bubble");
    e.bubble = static_cast<std::uint32_t>(b);
  } catch (const std::exception&) {
    throw ParseError(line_no, "invalid bubble count '" + bubble + "'");
  }
  if (kind == "R" || kind == "r") {
    e.kind = ReqKind::Read;
  } else if (kind == "W" || kind == "w") {
    e.kind = ReqKind::Write;
  } else {
    throw ParseError(line_no, "invalid access kind '" + kind + "'");
  }
  try {
    std::string digits = addr;
    if (digits.size() > 2 && digits[0] == '0' && (digits[1] == 'x' || digits[1] == 'X')) digits = digits.substr(2);
    std::size_t pos = 0;
    if (digits.empty() || digits[0] == '-' || digits[0] == '+') throw std::invalid_argument("sign");
    e.address = std::stoull(digits, &pos, 16);
    if (pos != digits.size()) throw std::invalid_argument("address");
  } catch (const std::exception&) {
    throw ParseError(line_no, "invalid hex address '" + addr + "'");
  }
  return e;
}

inline Trace read_trace(std::istream& in) {
  Trace out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto e = parse_trace(line, n)) out.push_back(*e);
  }
  return out;
}

inline void write_trace(std::ostream& out, const Trace& trace, const std::vector<std::string>& header = {}) {
  for (const auto& h : header) out << "# " << h << '\n';
  char buf[64];
  for (const auto& e : trace) {
    std::snprintf(buf, sizeof buf, "%u %c 0x%llx\n", e.bubble, e.kind == ReqKind::Read ? 'R' : 'W',
                  static_cast<unsigned long long>(e.address));
    out << buf;
  }
}

struct CoreParams {
  std::uint32_t window = 128;
  std::uint32_t width = 4;
  std::uint32_t max_outstanding = 16;
  bool attacker = false;
};

struct CoreTickResult {
  std::uint32_t retired = 0;
  std::optional<MemRequest> request;
};

// In-order trace-driven core with an instruction window. Bubbles retire as
// soon as they reach the head; reads hold their slot until data returns,
// writes are posted.
class Core {
 public:
  Core(std::uint32_t id, std::shared_ptr<const Trace> trace, CoreParams params = {})
      : id_(id), trace_(std::move(trace)), params_(params) {
    if (!trace_ || trace_->empty()) throw ConfigError("core " + std::to_string(id) + ": empty trace");
    if (params_.window == 0 || params_.width == 0 || params_.max_outstanding == 0)
      throw ConfigError("core parameters must be > 0");
    remaining_bubbles_ = (*trace_)[0].bubble;
  }

  std::uint32_t id() const { return id_; }
  const CoreParams& params() const { return params_; }
  std::uint64_t retired() const { return retired_; }
  std::uint64_t cycles() const { return cycles_; }
  std::uint32_t occupancy() const { return occupancy_; }
  std::uint32_t outstanding() const { return outstanding_; }
  double ipc() const { return cycles_ ? static_cast<double>(retired_) / static_cast<double>(cycles_) : 0.0; }

  // `send(MemRequest&) -> bool` tries to hand a request to the memory system.
  template <typename Send>
  CoreTickResult tick(Send&& send, std::uint64_t& next_id) {
    CoreTickResult res;
    std::uint32_t budget = params_.width;
    while (budget > 0 && occupancy_ < params_.window) {
      if (remaining_bubbles_ > 0) {
        const std::uint32_t k = std::min({budget, remaining_bubbles_, params_.window - occupancy_});
        if (!window_.empty() && !window_.back().mem) {
          window_.back().count += k;
        } else {
          window_.push_back(Slot{k, false, false, 0});
        }
        occupancy_ += k;
        budget -= k;
        remaining_bubbles_ -= k;
        continue;
      }
      if (res.request) break;
      const TraceEntry& e = (*trace_)[cursor_];
      if (e.kind == ReqKind::Read && outstanding_ >= params_.max_outstanding) break;
      MemRequest req;
      req.id = next_id;
      req.source = id_;
      req.kind = e.kind;
      req.address = e.address;
      if (!send(req)) break;
      ++next_id;
      const bool waits = e.kind == ReqKind::Read;
      window_.push_back(Slot{1, true, waits, req.id});
      if (waits) {
        waiting_[req.id] = &window_.back();
        ++outstanding_;
      }
      ++occupancy_;
      --budget;
      res.request = req;
      cursor_ = (cursor_ + 1) % trace_->size();
      remaining_bubbles_ = (*trace_)[cursor_].bubble;
    }
    budget = params_.width;
    while (budget > 0 && !window_.empty()) {
      Slot& head = window_.front();
      if (head.waiting) break;
      const std::uint32_t k = std::min(budget, head.count);
      head.count -= k;
      budget -= k;
      occupancy_ -= k;
      res.retired += k;
      if (head.count == 0) window_.pop_front();
    }
    retired_ += res.retired;
    ++cycles_;
    return res;
  }

  void complete(std::uint64_t request_id) {
    auto it = waiting_.find(request_id);
    if (it == waiting_.end()) return;
    it->second->waiting = false;
    waiting_.erase(it);
    --outstanding_;
  }

 private:
  struct Slot {
    std::uint32_t count;
    bool mem;
    bool waiting;
    std::uint64_t id;
  };

  std::uint32_t id_;
  std::shared_ptr<const Trace> trace_;
  CoreParams params_;
  std::deque<Slot> window_;
  std::unordered_map<std::uint64_t, Slot*> waiting_;
  std::size_t cursor_ = 0;
  std::uint32_t remaining_bubbles_ = 0;
  std::uint32_t occupancy_ = 0;
  std::uint32_t outstanding_ = 0;
  std::uint64_t retired_ = 0;
  std::uint64_t cycles_ = 0;
};

// Timed request injection: request i enters the controller at the first
// cycle >= its arrival time at which the queue has room, in order.
struct StreamRequest {
  Tick arrival = 0;
  ReqKind kind = ReqKind::Read;
  std::uint64_t address = 0;
  bool operator==(const StreamRequest&) const = default;
};

using RequestStream = std::vector<StreamRequest>;

inline RequestStream to_stream(const Trace& trace, Tick spacing = 0) {
  RequestStream out;
  Tick t = 0;
  for (const auto& e : trace) {
    t += static_cast<Tick>(e.bubble) * spacing;
    out.push_back({t, e.kind, e.address});
  }
  return out;
}

// ----------------------------------------------------------------------------
// Workload and attack generators. All are pure functions of their spec.

enum class AttackKind { AlertFlood, TSA, TwoRowAlternation };

struct AttackSpec {
  AttackKind kind = AttackKind::AlertFlood;
  std::vector<std::uint32_t> banks{0};  // flat bank indices
  std::uint32_t alerts_per_trefi = 1;
  std::uint32_t stagger = 2;            // TSA: banks taking turns
  std::uint32_t intervals = 64;         // tREFI periods covered by the trace
  std::uint32_t base_row = 1024;
  bool paced = true;                    // spread each interval's accesses over tREFI
};

enum class SyntheticKind { Stream, Random, SubarrayDisjoint, SubarrayConflicting };

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::Random;
  std::uint64_t count = 4096;
  std::uint32_t bubble = 0;
  double write_ratio = 0.0;
  std::uint32_t bank = 0;                  // subarray_* kinds
  std::uint32_t start_row = 0;
  std::vector<std::uint32_t> exclude_banks;  // random: banks never touched
  std::uint64_t base_address = 0;          // stream
};

namespace detail {

inline std::uint64_t line_address(const DramGeometry& geo, const AddressMapping& map, std::uint32_t bank,
                                  std::uint32_t row, std::uint32_t column = 0) {
  return encode_address(make_location(geo, bank, row, column), map, geo);
}

}  // namespace detail

inline Trace gen_synthetic(const SyntheticSpec& spec, const DramGeometry& geo, const AddressMapping& map,
                           std::uint64_t seed) {
  Trace out;
  out.reserve(spec.count);
  std::mt19937_64 rng(seed);
  auto kind_for = [&]() {
    if (spec.write_ratio <= 0.0) return ReqKind::Read;
    const double u = static_cast<double>(rng() >> 11) / static_cast<double>(1ull << 53);
    return u < spec.write_ratio ? ReqKind::Write : ReqKind::Read;
  };
  const std::uint32_t rows = geo.rows_per_bank;
  switch (spec.kind) {
    case SyntheticKind::Stream: {
      const std::uint64_t lines = geo.capacity_bytes() / geo.cacheline_bytes;
      for (std::uint64_t i = 0; i < spec.count; ++i) {
        const std::uint64_t line = (spec.base_address / geo.cacheline_bytes + i) % lines;
        out.push_back({spec.bubble, kind_for(), line * geo.cacheline_bytes});
      }
      break;
    }
    case SyntheticKind::Random: {
      std::vector<std::uint32_t> banks;
      for (std::uint32_t b = 0; b < geo.banks_per_channel(); ++b)
        if (std::find(spec.exclude_banks.begin(), spec.exclude_banks.end(), b) == spec.exclude_banks.end())
          banks.push_back(b);
      if (banks.empty()) throw ConfigError("random workload: every bank excluded");
      for (std::uint64_t i = 0; i < spec.count; ++i) {
        const std::uint32_t b = banks[rng() % banks.size()];
        const auto row = static_cast<std::uint32_t>(rng() % rows);
        const auto col = static_cast<std::uint32_t>(rng() % geo.columns_per_row);
        out.push_back({spec.bubble, kind_for(), detail::line_address(geo, map, b, row, col)});
      }
      break;
    }
    case SyntheticKind::SubarrayDisjoint: {
      if (geo.subarrays_per_bank < 4) throw ConfigError("subarray_disjoint needs at least 4 subarrays per bank");
      // Two lanes half a bank apart, each walking forward one row per visit.
      const std::uint32_t half = rows / 2;
      for (std::uint64_t i = 0; i < spec.count; ++i) {
        const auto step = static_cast<std::uint32_t>((spec.start_row + i / 2) % half);
        const std::uint32_t row = (i % 2 == 0) ? step : step + half;
        out.push_back({spec.bubble, kind_for(), detail::line_address(geo, map, spec.bank, row)});
      }
      break;
    }
    case SyntheticKind::SubarrayConflicting: {
      // Back-and-forth walk over neighboring rows: consecutive accesses are
      // always in the same or an adjacent subarray.
      const std::uint64_t period = 2ull * (rows - 1);
      for (std::uint64_t i = 0; i < spec.count; ++i) {
        const std::uint64_t p = (spec.start_row + i) % period;
        const auto row = static_cast<std::uint32_t>(p < rows ? p : period - p);
        out.push_back({spec.bubble, kind_for(), detail::line_address(geo, map, spec.bank, row)});
      }
      break;
    }
  }
  return out;
}

// ACTs one bank can receive in a tREFI window at one ACT per tRC.
inline std::uint32_t activation_budget(const TimingSet& timing) {
  return static_cast<std::uint32_t>(std::floor((timing.tREFI - timing.tRFC) / timing.tRC));
}

inline Trace gen_two_row_alternation(std::uint32_t bank, std::uint32_t row_a, std::uint32_t row_b,
                                     std::uint64_t count, const DramGeometry& geo, const AddressMapping& map,
                                     std::uint32_t bubble = 0) {
  if (row_a == row_b) throw ConfigError("two_row_alternation needs two distinct rows");
  const std::uint64_t a = detail::line_address(geo, map, bank, row_a);
  const std::uint64_t b = detail::line_address(geo, map, bank, row_b);
  Trace out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) out.push_back({bubble, ReqKind::Read, i % 2 == 0 ? a : b});
  return out;
}

namespace detail {

// Instructions a 4.2GHz, 4-wide core retires per nanosecond.
inline constexpr double kInstrPerNs = 4.2 * 4;

inline void append_paced(Trace& out, const std::vector<std::uint64_t>& addrs, double span_ns, bool paced) {
  const std::uint32_t bubble =
      paced && !addrs.empty() ? static_cast<std::uint32_t>(span_ns * kInstrPerNs / static_cast<double>(addrs.size()))
                              : 0;
  for (auto a : addrs) out.push_back({bubble, ReqKind::Read, a});
}

// Rows for attack pair `i`: far enough apart that victim sets never overlap.
inline std::pair<std::uint32_t, std::uint32_t> attack_pair(std::uint32_t base, std::uint32_t i,
                                                           const DramGeometry& geo) {
  const std::uint32_t a = (base + 16 * i) % geo.rows_per_bank;
  const std::uint32_t b = (a + geo.rows_per_bank / 2) % geo.rows_per_bank;
  return {a, b};
}

}  // namespace detail

// Each tREFI, `alerts_per_trefi` x T activations spread evenly over the
// target banks. A bank cycles through enough row pairs that its per-interval
// share never repeats a pair twice in one interval; counters accumulate across
// intervals, so a T above the per-bank budget still alerts at the requested
// steady-state rate once enough banks share the load.
inline Trace gen_alert_flood(const AttackSpec& spec, const RecoveryConfig& rc, const TimingSet& timing,
                             const DramGeometry& geo, const AddressMapping& map) {
  if (spec.banks.empty()) throw ConfigError("alert_flood: no target banks");
  if (spec.alerts_per_trefi < 1) throw ConfigError("alert_flood: alerts_per_trefi must be >= 1");
  const std::uint32_t T = trigger_level(rc, timing);
  const auto nb = static_cast<std::uint32_t>(spec.banks.size());
  const std::uint64_t total = std::uint64_t{spec.alerts_per_trefi} * T;
  const auto per_bank = static_cast<std::uint32_t>((total + nb - 1) / nb);
  const std::uint32_t budget = activation_budget(timing);
  if (per_bank > budget)
    throw ConfigError("alert_flood infeasible: " + std::to_string(spec.alerts_per_trefi) + " alerts x T=" +
                      std::to_string(T) + " over " + std::to_string(nb) + " bank(s) needs " +
                      std::to_string(per_bank) + " ACTs per bank, above the per-bank budget of " +
                      std::to_string(budget) + " per tREFI; spread the attack over more banks");
  const std::uint32_t pairs = std::max<std::uint32_t>(1, (per_bank + T - 1) / T);
  // Pace over the part of tREFI left after the refresh and the recoveries the
  // flood itself causes, so stalls do not push the attacker behind schedule.
  const double span_ns = std::max(0.0, timing.tREFI - timing.tRFC -
                                           spec.alerts_per_trefi * static_cast<double>(rc.n_rfm) * timing.tRFM);
  Trace out;
  std::vector<std::uint64_t> cursor(nb, 0);
  for (std::uint32_t interval = 0; interval < spec.intervals; ++interval) {
    // Banks hammer in parallel: their accesses are interleaved.
    std::vector<std::uint64_t> merged;
    for (std::uint32_t k = 0; k < per_bank; ++k)
      for (std::uint32_t bi = 0; bi < nb; ++bi) {
        const std::uint64_t c = cursor[bi]++;
        const auto [ra, rb] = detail::attack_pair(spec.base_row, static_cast<std::uint32_t>((c / T) % pairs), geo);
        merged.push_back(detail::line_address(geo, map, spec.banks[bi], c % 2 == 0 ? ra : rb));
      }
    detail::append_paced(out, merged, span_ns, spec.paced);
  }
  return out;
}

// Torrent of staggered alerts: banks take turns driving a row pair past the
// trigger, one bank at a time.
inline Trace gen_tsa(const AttackSpec& spec, const RecoveryConfig& rc, const TimingSet& timing,
                     const DramGeometry& geo, const AddressMapping& map) {
  if (spec.banks.empty()) throw ConfigError("tsa: no target banks");
  if (spec.banks.size() == 1) {
    AttackSpec flood = spec;
    flood.kind = AttackKind::AlertFlood;
    flood.alerts_per_trefi = 1;
    return gen_alert_flood(flood, rc, timing, geo, map);
  }
  const std::uint32_t T = trigger_level(rc, timing);
  Trace out;
  const auto [ra, rb] = detail::attack_pair(spec.base_row, 0, geo);
  for (std::uint32_t round = 0; round < spec.intervals; ++round) {
    for (auto bank : spec.banks) {
      std::vector<std::uint64_t> burst;
      for (std::uint32_t k = 0; k < 2 * T + 2; ++k)
        burst.push_back(detail::line_address(geo, map, bank, k % 2 == 0 ? ra : rb));
      detail::append_paced(out, burst, 0, false);
    }
  }
  return out;
}

inline Trace gen_attack(const AttackSpec& spec, const RecoveryConfig& rc, const TimingSet& timing,
                        const DramGeometry& geo, const AddressMapping& map) {
  switch (spec.kind) {
    case AttackKind::AlertFlood: return gen_alert_flood(spec, rc, timing, geo, map);
    case AttackKind::TSA: return gen_tsa(spec, rc, timing, geo, map);
    case AttackKind::TwoRowAlternation: {
      const auto [ra, rb] = detail::attack_pair(spec.base_row, 0, geo);
      return gen_two_row_alternation(spec.banks.at(0), ra, rb,
                                     std::uint64_t{spec.intervals} * activation_budget(timing), geo, map);
    }
  }
  return {};
}

}  // namespace pracsim
