#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pracsim/command.hpp"
#include "pracsim/common.hpp"
#include "pracsim/geometry.hpp"
#include "pracsim/timing.hpp"

namespace pracsim {

// Per-command energy in arbitrary units. Only ratios are meaningful.
struct EnergyModel {
  double act_pre = 2.0;         // one ACT+PRE pair
  double rd = 1.0;
  double wr = 1.0;
  double ref = 64.0;            // one REF, per rank
  double victim_refresh = 2.0;  // one mitigation (victim rows of one aggressor)

  void validate() const {
    if (!(act_pre > 0 && rd > 0 && wr > 0 && ref > 0 && victim_refresh > 0))
      throw ConfigError("energy constants must be > 0");
  }

  EnergyModel scaled(double k) const { return {act_pre * k, rd * k, wr * k, ref * k, victim_refresh * k}; }
};

struct CoreStats {
  std::string name;
  bool attacker = false;
  std::uint64_t retired = 0;
  std::uint64_t cycles = 0;  // core clock cycles
  double ipc = 0.0;
};

struct RunStats {
  std::vector<CoreStats> cores;
  std::uint64_t dram_cycles = 0;
  std::uint64_t requests_completed = 0;

  std::uint64_t act = 0, pre = 0, rd = 0, wr = 0, ref = 0;
  std::uint64_t alerts = 0;
  std::uint64_t rfm = 0;
  std::uint64_t recoveries = 0;
  std::uint64_t refreshes_performed = 0;
  std::uint64_t refreshes_needed = 0;
  std::uint64_t ba_snapshots = 0;
  std::uint64_t empty_masks = 0;
  std::uint64_t crossings = 0;
  std::vector<std::uint64_t> act_per_bank;
  std::vector<std::uint64_t> stall_cycles;  // per bank, REF and RFM blocking
  std::uint64_t row_conflicts = 0;
  std::uint64_t subarray_conflicts = 0;
  std::uint64_t banks_needing_sum = 0;
  std::uint32_t banks_needing_max = 0;
  std::uint32_t max_counter = 0;
};

// Folds the engine's event stream into RunStats.
class StatsCollector {
 public:
  StatsCollector(const DramGeometry& geo, const TimingSet::Cycles& cyc) : geo_(geo), cyc_(cyc) {
    stats_.act_per_bank.assign(geo.banks_per_channel(), 0);
    stats_.stall_cycles.assign(geo.banks_per_channel(), 0);
  }

  void record(const Event& e) {
    switch (e.kind) {
      case EventKind::Act:
        ++stats_.act;
        ++stats_.act_per_bank.at(e.bank);
        break;
      case EventKind::Pre:
        ++stats_.pre;
        stats_.max_counter = std::max(stats_.max_counter, e.value);
        if (e.other_row >= 0 && static_cast<std::uint32_t>(e.other_row) != e.row) {
          ++stats_.row_conflicts;
          if (subarrays_conflict(row_to_subarray(e.row, geo_),
                                 row_to_subarray(static_cast<std::uint32_t>(e.other_row), geo_)))
            ++stats_.subarray_conflicts;
        }
        break;
      case EventKind::Rd: ++stats_.rd; break;
      case EventKind::Wr: ++stats_.wr; break;
      case EventKind::Ref: {
        ++stats_.ref;
        const std::uint32_t first = e.rank * geo_.banks_per_rank();
        for (std::uint32_t i = 0; i < geo_.banks_per_rank(); ++i) stats_.stall_cycles.at(first + i) += cyc_.RFC;
        break;
      }
      case EventKind::RfmAb:
      case EventKind::RfmMask:
        ++stats_.rfm;
        if (e.value == 0) {
          ++stats_.recoveries;
          stats_.banks_needing_sum += e.victims;
          stats_.banks_needing_max = std::max(stats_.banks_needing_max, e.victims);
        }
        for (std::uint32_t b = 0; b < stats_.stall_cycles.size(); ++b) {
          if ((e.mask >> b) & 1u) {
            stats_.stall_cycles[b] += cyc_.RFM;
          } else if (e.value == 0 && e.kind == EventKind::RfmMask) {
            stats_.stall_cycles[b] += cyc_.RegRead;
          }
        }
        break;
      case EventKind::Alert: ++stats_.alerts; break;
      case EventKind::Crossing:
        ++stats_.crossings;
        stats_.max_counter = std::max(stats_.max_counter, e.value);
        break;
      case EventKind::BaSnapshot: ++stats_.ba_snapshots; break;
      case EventKind::EmptyMask: ++stats_.empty_masks; break;
      case EventKind::Mitigation:
        ++stats_.refreshes_performed;
        if (e.needed) ++stats_.refreshes_needed;
        break;
      default:
        throw std::logic_error("internal error: unknown event kind " + std::to_string(static_cast<int>(e.kind)));
    }
  }

  RunStats& stats() { return stats_; }
  const RunStats& stats() const { return stats_; }

 private:
  DramGeometry geo_;
  TimingSet::Cycles cyc_;
  RunStats stats_;
};

struct EnergyBreakdown {
  double act_pre = 0, rd = 0, wr = 0, ref = 0, victim_refresh = 0;
  double total() const { return act_pre + rd + wr + ref + victim_refresh; }
};

inline EnergyBreakdown compute_energy(const RunStats& s, const EnergyModel& m) {
  return {static_cast<double>(s.act) * m.act_pre, static_cast<double>(s.rd) * m.rd,
          static_cast<double>(s.wr) * m.wr, static_cast<double>(s.ref) * m.ref,
          static_cast<double>(s.refreshes_performed) * m.victim_refresh};
}

inline double geomean(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("geomean of empty set");
  double acc = 0;
  for (double x : xs) {
    if (!(x > 0)) throw std::invalid_argument("geomean needs positive values");
    acc += std::log(x);
  }
  return std::exp(acc / static_cast<double>(xs.size()));
}

struct Report {
  std::string mechanism;  // baseline, prac_abo_opportunistic, prac_abo_prohibitive, practical
  unsigned n_rfm = 0;
  std::uint32_t threshold = 0;
  std::string workload;
  RunStats stats;
  EnergyBreakdown energy;
  double ipc = 0.0;         // summed IPC of non-attacker cores
  double throughput = 0.0;  // completed requests per DRAM cycle
  double speedup = 0.0;     // set by sweep normalization; 0 means not normalized
  double subarray_conflict_ratio = 0.0;
  bool no_conflicts = false;
  double banks_per_alert = 0.0;
};

inline Report finalize(const RunStats& stats, const EnergyModel& model) {
  model.validate();
  Report r;
  r.stats = stats;
  for (auto& c : r.stats.cores) {
    c.ipc = c.cycles ? static_cast<double>(c.retired) / static_cast<double>(c.cycles) : 0.0;
    if (!c.attacker) r.ipc += c.ipc;
  }
  for (auto& s : r.stats.stall_cycles) s = std::min<std::uint64_t>(s, stats.dram_cycles);
  r.energy = compute_energy(stats, model);
  r.throughput = stats.dram_cycles
                     ? static_cast<double>(stats.requests_completed) / static_cast<double>(stats.dram_cycles)
                     : 0.0;
  if (stats.row_conflicts == 0) {
    r.no_conflicts = true;
  } else {
    r.subarray_conflict_ratio =
        static_cast<double>(stats.subarray_conflicts) / static_cast<double>(stats.row_conflicts);
  }
  if (stats.recoveries)
    r.banks_per_alert = static_cast<double>(stats.banks_needing_sum) / static_cast<double>(stats.recoveries);
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

inline std::string format_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline const char* csv_header() {
  return "mechanism,n_rfm,T,workload,ipc,speedup,alerts,refreshes_performed,refreshes_needed,energy,max_counter";
}

inline std::string csv_row(const Report& r) {
  std::string s = r.mechanism + ',' + std::to_string(r.n_rfm) + ',' + std::to_string(r.threshold) + ',' +
                  r.workload + ',' + format_double(r.ipc) + ',' + (r.speedup > 0 ? format_double(r.speedup) : "") +
                  ',' + std::to_string(r.stats.alerts) + ',' + std::to_string(r.stats.refreshes_performed) + ',' +
                  std::to_string(r.stats.refreshes_needed) + ',' + format_double(r.energy.total()) + ',' +
                  std::to_string(r.stats.max_counter);
  return s;
}

inline void write_csv(std::ostream& out, const std::vector<Report>& rows) {
  out << csv_header() << '\n';
  for (const auto& r : rows) out << csv_row(r) << '\n';
}

inline nlohmann::ordered_json to_json(const Report& r) {
  using nlohmann::ordered_json;
  const auto& s = r.stats;
  ordered_json cores = ordered_json::array();
  for (const auto& c : s.cores)
    cores.push_back({{"name", c.name}, {"attacker", c.attacker}, {"retired", c.retired}, {"cycles", c.cycles},
                     {"ipc", c.ipc}});
  ordered_json j;
  j["mechanism"] = r.mechanism;
  j["n_rfm"] = r.n_rfm;
  j["T"] = r.threshold;
  j["workload"] = r.workload;
  j["ipc"] = r.ipc;
  j["throughput"] = r.throughput;
  if (r.speedup > 0) j["speedup"] = r.speedup;
  j["cores"] = cores;
  j["dram_cycles"] = s.dram_cycles;
  j["requests_completed"] = s.requests_completed;
  j["commands"] = {{"ACT", s.act}, {"PRE", s.pre}, {"RD", s.rd}, {"WR", s.wr}, {"REF", s.ref}, {"RFM", s.rfm}};
  j["alerts"] = s.alerts;
  j["recoveries"] = s.recoveries;
  j["refreshes_performed"] = s.refreshes_performed;
  j["refreshes_needed"] = s.refreshes_needed;
  j["ba_snapshots"] = s.ba_snapshots;
  j["empty_masks"] = s.empty_masks;
  j["banks_per_alert"] = {{"mean", r.banks_per_alert}, {"max", s.banks_needing_max}};
  j["row_conflicts"] = s.row_conflicts;
  j["subarray_conflicts"] = s.subarray_conflicts;
  j["subarray_conflict_ratio"] = r.subarray_conflict_ratio;
  j["no_conflicts"] = r.no_conflicts;
  j["max_counter"] = s.max_counter;
  j["act_per_bank"] = s.act_per_bank;
  j["stall_cycles_per_bank"] = s.stall_cycles;
  // Command-event energy only; background power is not modeled.
  j["energy"] = {{"act_pre", r.energy.act_pre},
                 {"rd", r.energy.rd},
                 {"wr", r.energy.wr},
                 {"ref", r.energy.ref},
                 {"victim_refresh", r.energy.victim_refresh},
                 {"total", r.energy.total()}};
  return j;
}

// ---------------------------------------------------------------------------
// Event log: one JSON object per line, closed by an END record carrying the
// event count. A log without a matching END record is incomplete.

inline nlohmann::ordered_json event_to_json(const Event& e) {
  nlohmann::ordered_json j;
  j["t"] = e.time;
  j["kind"] = to_string(e.kind);
  j["rank"] = e.rank;
  j["bank"] = e.bank;
  j["row"] = e.row;
  if (e.value) j["value"] = e.value;
  if (e.other_row >= 0) j["other_row"] = e.other_row;
  if (e.mask) j["mask"] = e.mask;
  if (e.victims) j["victims"] = e.victims;
  if (e.needed) j["needed"] = true;
  return j;
}

inline Event event_from_json(const nlohmann::json& j) {
  Event e;
  e.time = j.at("t").get<Tick>();
  e.kind = event_kind_from_string(j.at("kind").get<std::string>());
  e.rank = j.value("rank", 0u);
  e.bank = j.value("bank", 0u);
  e.row = j.value("row", 0u);
  e.value = j.value("value", 0u);
  e.other_row = j.value("other_row", std::int64_t{-1});
  e.mask = j.value("mask", std::uint64_t{0});
  e.victims = j.value("victims", 0u);
  e.needed = j.value("needed", false);
  return e;
}

struct EventLog {
  std::vector<Event> events;
  bool complete = false;
  Tick end_time = 0;
};

inline void write_event_log(std::ostream& out, const std::vector<Event>& events, Tick end_time) {
  for (const auto& e : events) out << event_to_json(e).dump() << '\n';
  nlohmann::ordered_json end;
  end["t"] = end_time;
  end["kind"] = "END";
  end["events"] = events.size();
  out << end.dump() << '\n';
}

inline EventLog read_event_log(std::istream& in) {
  EventLog log;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    if (log.complete) throw ParseError(n, "event after END record");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      if (j.at("kind").get<std::string>() == "END") {
        if (j.at("events").get<std::size_t>() != log.events.size())
          throw ParseError(n, "END record count does not match the number of events");
        log.complete = true;
        log.end_time = j.at("t").get<Tick>();
        continue;
      }
      log.events.push_back(event_from_json(j));
    } catch (const ParseError& e) {
      if (e.line() != 0) throw;
      throw ParseError(n, std::string(e.what()).substr(std::string("line 0: ").size()));
    } catch (const std::exception& e) {
      throw ParseError(n, e.what());
    }
  }
  return log;
}

}  // namespace pracsim
