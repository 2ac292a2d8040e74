#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pracsim/oracle.hpp"
#include "pracsim/simulation.hpp"
#include "pracsim/telemetry.hpp"

namespace pracsim {

using nlohmann::json;

// Experiment-level mechanism: the controller mechanism plus, for PRAC+ABO,
// the mitigation policy.
enum class ExperimentMechanism { Baseline, PracAboOpportunistic, PracAboProhibitive, Practical };

inline const char* to_string(ExperimentMechanism m) {
  switch (m) {
    case ExperimentMechanism::Baseline: return "baseline";
    case ExperimentMechanism::PracAboOpportunistic: return "prac_abo_opportunistic";
    case ExperimentMechanism::PracAboProhibitive: return "prac_abo_prohibitive";
    case ExperimentMechanism::Practical: return "practical";
  }
  return "?";
}

inline ExperimentMechanism experiment_mechanism_from_string(const std::string& s) {
  for (auto m : {ExperimentMechanism::Baseline, ExperimentMechanism::PracAboOpportunistic,
                 ExperimentMechanism::PracAboProhibitive, ExperimentMechanism::Practical})
    if (s == to_string(m)) return m;
  throw ConfigError("mechanism: unknown value '" + s +
                    "' (expected baseline, prac_abo_opportunistic, prac_abo_prohibitive or practical)");
}

inline Mechanism controller_mechanism(ExperimentMechanism m) {
  switch (m) {
    case ExperimentMechanism::Baseline: return Mechanism::Baseline;
    case ExperimentMechanism::Practical: return Mechanism::Practical;
    default: return Mechanism::PracAbo;
  }
}

struct GeneratorSpec {
  std::string kind = "random";
  SyntheticSpec synthetic;
  AttackSpec attack;
  std::uint32_t row_a = 1024;
  std::uint32_t row_b = 33792;
  std::optional<std::uint32_t> threshold;  // attack generators: overrides the experiment T
};

struct CoreConfig {
  std::string name;
  std::optional<std::string> trace_file;
  std::optional<GeneratorSpec> generator;
  CoreParams params;
};

struct ExperimentConfig {
  ExperimentMechanism mechanism = ExperimentMechanism::Practical;
  TimingPreset timing_preset = TimingPreset::Prac;
  TimingSet timing = TimingSet::prac();
  unsigned n_rfm = 1;
  std::uint32_t threshold = 64;
  std::uint32_t blast_radius = 1;
  MitigationPolicy practical_policy = MitigationPolicy::Prohibitive;
  DramGeometry geometry;
  AddressMapping mapping;
  ControllerConfig controller;  // queue/scheduler knobs; mechanism fields are filled in
  EnergyModel energy;
  double llc_latency_ns = 20.0;
  double llc_miss_ratio = 1.0;
  std::string workload_name;
  std::vector<CoreConfig> cores;
  std::uint64_t seed = 1;
  std::uint64_t instructions = 10'000'000;
  Tick max_cycles = 2'000'000'000;
  std::string out_json, out_csv, out_events;
  std::filesystem::path base_dir;  // relative trace paths resolve against this

  RecoveryConfig recovery() const {
    RecoveryConfig rc;
    rc.n_rfm = n_rfm;
    rc.threshold = threshold;
    rc.blast_radius = blast_radius;
    rc.mechanism = mechanism == ExperimentMechanism::Practical ? Mechanism::Practical : Mechanism::PracAbo;
    rc.policy = mechanism == ExperimentMechanism::PracAboOpportunistic ? MitigationPolicy::Opportunistic
                : mechanism == ExperimentMechanism::PracAboProhibitive ? MitigationPolicy::Prohibitive
                                                                       : practical_policy;
    return rc;
  }

  ControllerConfig controller_config() const {
    ControllerConfig c = controller;
    c.mechanism = controller_mechanism(mechanism);
    c.timing = timing;
    c.geometry = geometry;
    c.mapping = mapping;
    c.recovery = recovery();
    return c;
  }
};

namespace cfg_detail {

template <typename T>
T get(const json& j, const std::string& key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path + key + ": " + e.what());
  }
}

template <typename T>
void opt(const json& j, const std::string& key, T& out, const std::string& path) {
  if (j.contains(key)) out = get<T>(j, key, path);
}

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& path) {
  if (!j.is_object()) throw ConfigError((path.empty() ? std::string("config") : path.substr(0, path.size() - 1)) + ": expected an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError(path + k + ": unknown field");
}

inline GeneratorSpec parse_generator(const json& j, const std::string& path) {
  check_keys(j, {"kind", "count", "bubble", "write_ratio", "bank", "start_row", "exclude_banks", "base_address",
                 "row_a", "row_b", "banks", "alerts_per_trefi", "stagger", "intervals", "base_row", "paced", "T"},
             path);
  GeneratorSpec g;
  g.kind = get<std::string>(j, "kind", path);
  static const std::set<std::string> kinds{"two_row_alternation", "alert_flood", "tsa", "stream",
                                           "random", "subarray_disjoint", "subarray_conflicting"};
  if (!kinds.count(g.kind)) throw ConfigError(path + "kind: unknown generator '" + g.kind + "'");
  auto& s = g.synthetic;
  opt(j, "count", s.count, path);
  opt(j, "bubble", s.bubble, path);
  opt(j, "write_ratio", s.write_ratio, path);
  opt(j, "bank", s.bank, path);
  opt(j, "start_row", s.start_row, path);
  opt(j, "exclude_banks", s.exclude_banks, path);
  opt(j, "base_address", s.base_address, path);
  if (s.write_ratio < 0 || s.write_ratio > 1) throw ConfigError(path + "write_ratio: must be within [0, 1]");
  opt(j, "row_a", g.row_a, path);
  opt(j, "row_b", g.row_b, path);
  auto& a = g.attack;
  opt(j, "banks", a.banks, path);
  opt(j, "alerts_per_trefi", a.alerts_per_trefi, path);
  opt(j, "stagger", a.stagger, path);
  opt(j, "intervals", a.intervals, path);
  opt(j, "base_row", a.base_row, path);
  opt(j, "paced", a.paced, path);
  if (j.contains("T")) g.threshold = get<std::uint32_t>(j, "T", path);
  if (g.kind == "stream") s.kind = SyntheticKind::Stream;
  if (g.kind == "random") s.kind = SyntheticKind::Random;
  if (g.kind == "subarray_disjoint") s.kind = SyntheticKind::SubarrayDisjoint;
  if (g.kind == "subarray_conflicting") s.kind = SyntheticKind::SubarrayConflicting;
  if (g.kind == "alert_flood") a.kind = AttackKind::AlertFlood;
  if (g.kind == "tsa") a.kind = AttackKind::TSA;
  return g;
}

inline void parse_timing_overrides(const json& j, TimingSet& t, const std::string& path) {
  check_keys(j, {"clock_ps", "tRAS", "tRP", "tRC", "tRCD", "tRTP", "tWR", "tRPRestore", "tRCRestore", "tCL", "tBL",
                 "tREFI", "tRFC", "tREFW", "tRFM", "tPreRecovery", "tRegRead"},
             path);
  opt(j, "clock_ps", t.clock_ps, path);
  opt(j, "tRAS", t.tRAS, path);
  opt(j, "tRP", t.tRP, path);
  opt(j, "tRC", t.tRC, path);
  opt(j, "tRCD", t.tRCD, path);
  opt(j, "tRTP", t.tRTP, path);
  opt(j, "tWR", t.tWR, path);
  opt(j, "tRPRestore", t.tRPRestore, path);
  opt(j, "tRCRestore", t.tRCRestore, path);
  opt(j, "tCL", t.tCL, path);
  opt(j, "tBL", t.tBL, path);
  opt(j, "tREFI", t.tREFI, path);
  opt(j, "tRFC", t.tRFC, path);
  opt(j, "tREFW", t.tREFW, path);
  opt(j, "tRFM", t.tRFM, path);
  opt(j, "tPreRecovery", t.tPreRecovery, path);
  opt(j, "tRegRead", t.tRegRead, path);
}

inline void parse_geometry(const json& j, DramGeometry& g, const std::string& path) {
  check_keys(j, {"channels", "ranks_per_channel", "bankgroups_per_rank", "banks_per_group", "rows_per_bank",
                 "columns_per_row", "subarrays_per_bank", "cacheline_bytes"},
             path);
  opt(j, "channels", g.channels, path);
  opt(j, "ranks_per_channel", g.ranks_per_channel, path);
  opt(j, "bankgroups_per_rank", g.bankgroups_per_rank, path);
  opt(j, "banks_per_group", g.banks_per_group, path);
  opt(j, "rows_per_bank", g.rows_per_bank, path);
  opt(j, "columns_per_row", g.columns_per_row, path);
  opt(j, "subarrays_per_bank", g.subarrays_per_bank, path);
  opt(j, "cacheline_bytes", g.cacheline_bytes, path);
}

inline void parse_controller(const json& j, ControllerConfig& c, const std::string& path) {
  check_keys(j, {"counter_bits", "ref_resets_counters", "read_queue", "write_queue", "row_hit_cap", "drain_high",
                 "drain_low", "refresh_groups"},
             path);
  opt(j, "counter_bits", c.counter_bits, path);
  opt(j, "ref_resets_counters", c.ref_resets_counters, path);
  opt(j, "read_queue", c.read_queue, path);
  opt(j, "write_queue", c.write_queue, path);
  opt(j, "row_hit_cap", c.row_hit_cap, path);
  opt(j, "drain_high", c.drain_high, path);
  opt(j, "drain_low", c.drain_low, path);
  opt(j, "refresh_groups", c.refresh_groups, path);
}

inline void parse_energy(const json& j, EnergyModel& e, const std::string& path) {
  check_keys(j, {"act_pre", "rd", "wr", "ref", "victim_refresh"}, path);
  opt(j, "act_pre", e.act_pre, path);
  opt(j, "rd", e.rd, path);
  opt(j, "wr", e.wr, path);
  opt(j, "ref", e.ref, path);
  opt(j, "victim_refresh", e.victim_refresh, path);
}

inline std::vector<CoreConfig> parse_workload(const json& j, std::string& name, const std::string& path) {
  check_keys(j, {"name", "cores"}, path);
  opt(j, "name", name, path);
  if (!j.contains("cores") || !j.at("cores").is_array() || j.at("cores").empty())
    throw ConfigError(path + "cores: expected a non-empty array");
  std::vector<CoreConfig> out;
  std::size_t i = 0;
  for (const auto& c : j.at("cores")) {
    const std::string p = path + "cores[" + std::to_string(i) + "].";
    check_keys(c, {"name", "trace", "generator", "attacker", "max_outstanding", "window", "width"}, p);
    CoreConfig cc;
    cc.name = "core" + std::to_string(i);
    opt(c, "name", cc.name, p);
    if (c.contains("trace")) cc.trace_file = get<std::string>(c, "trace", p);
    if (c.contains("generator")) cc.generator = parse_generator(c.at("generator"), p + "generator.");
    if (cc.trace_file.has_value() == cc.generator.has_value())
      throw ConfigError(p + "trace: exactly one of 'trace' or 'generator' is required");
    opt(c, "attacker", cc.params.attacker, p);
    opt(c, "max_outstanding", cc.params.max_outstanding, p);
    opt(c, "window", cc.params.window, p);
    opt(c, "width", cc.params.width, p);
    out.push_back(std::move(cc));
    ++i;
  }
  return out;
}

}  // namespace cfg_detail

// Parses and validates an experiment configuration.
inline ExperimentConfig parse_experiment(const json& j, const std::filesystem::path& base_dir = {}) {
  using namespace cfg_detail;
  check_keys(j, {"mechanism", "timing_preset", "timing", "n_rfm", "T", "blast_radius", "practical_policy", "geometry",
                 "mapping", "controller", "energy", "llc", "workload", "seed", "run", "output"},
             "");
  ExperimentConfig c;
  c.base_dir = base_dir;
  c.mechanism = experiment_mechanism_from_string(get<std::string>(j, "mechanism", ""));
  const bool baseline = c.mechanism == ExperimentMechanism::Baseline;
  if (baseline && (j.contains("n_rfm") || j.contains("T")))
    throw ConfigError(std::string(j.contains("n_rfm") ? "n_rfm" : "T") + ": not allowed for the baseline mechanism");
  c.timing_preset = baseline ? TimingPreset::Baseline : TimingPreset::Prac;
  if (j.contains("timing_preset")) c.timing_preset = timing_preset_from_string(get<std::string>(j, "timing_preset", ""));
  c.timing = TimingSet::preset(c.timing_preset);
  if (j.contains("timing")) parse_timing_overrides(j.at("timing"), c.timing, "timing.");
  opt(j, "n_rfm", c.n_rfm, "");
  opt(j, "T", c.threshold, "");
  opt(j, "blast_radius", c.blast_radius, "");
  if (j.contains("practical_policy")) {
    const auto p = get<std::string>(j, "practical_policy", "");
    if (p == "opportunistic") {
      c.practical_policy = MitigationPolicy::Opportunistic;
    } else if (p == "prohibitive") {
      c.practical_policy = MitigationPolicy::Prohibitive;
    } else {
      throw ConfigError("practical_policy: expected opportunistic or prohibitive");
    }
  }
  if (!baseline) {
    static const std::set<std::uint32_t> thresholds{16, 32, 64, 128, 256};
    if (!thresholds.count(c.threshold)) throw ConfigError("T: must be one of 16, 32, 64, 128, 256");
  }
  if (j.contains("geometry")) parse_geometry(j.at("geometry"), c.geometry, "geometry.");
  if (j.contains("mapping")) {
    check_keys(j.at("mapping"), {"mop_width"}, "mapping.");
    opt(j.at("mapping"), "mop_width", c.mapping.mop_width, "mapping.");
  }
  if (j.contains("controller")) parse_controller(j.at("controller"), c.controller, "controller.");
  if (j.contains("energy")) parse_energy(j.at("energy"), c.energy, "energy.");
  if (j.contains("llc")) {
    check_keys(j.at("llc"), {"latency_ns", "miss_ratio"}, "llc.");
    opt(j.at("llc"), "latency_ns", c.llc_latency_ns, "llc.");
    opt(j.at("llc"), "miss_ratio", c.llc_miss_ratio, "llc.");
  }
  if (!j.contains("workload")) throw ConfigError("workload: missing");
  c.cores = parse_workload(j.at("workload"), c.workload_name, "workload.");
  opt(j, "seed", c.seed, "");
  if (j.contains("run")) {
    check_keys(j.at("run"), {"instructions", "max_cycles"}, "run.");
    opt(j.at("run"), "instructions", c.instructions, "run.");
    opt(j.at("run"), "max_cycles", c.max_cycles, "run.");
  }
  if (j.contains("output")) {
    check_keys(j.at("output"), {"json", "csv", "events"}, "output.");
    opt(j.at("output"), "json", c.out_json, "output.");
    opt(j.at("output"), "csv", c.out_csv, "output.");
    opt(j.at("output"), "events", c.out_events, "output.");
  }
  if (c.workload_name.empty()) {
    for (const auto& core : c.cores) {
      if (!c.workload_name.empty()) c.workload_name += '+';
      c.workload_name += core.generator ? core.generator->kind : std::filesystem::path(*core.trace_file).stem().string();
    }
  }
  c.controller_config().validate();
  c.energy.validate();
  if (c.instructions == 0) throw ConfigError("run.instructions: must be > 0");
  return c;
}

inline json read_json_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::ios_base::failure("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

inline ExperimentConfig load_experiment(const std::filesystem::path& p) {
  return parse_experiment(read_json_file(p), p.parent_path());
}

// Applies `key=value` overrides to top-level scalar fields. The value is
// parsed as JSON when possible, otherwise taken as a string.
inline void apply_overrides(json& j, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + s + "': expected key=value");
    const std::string key = s.substr(0, eq);
    const std::string val = s.substr(eq + 1);
    if (j.contains(key) && j.at(key).is_structured()) throw ConfigError(key + ": only top-level scalar fields can be overridden");
    try {
      j[key] = json::parse(val);
    } catch (const json::parse_error&) {
      j[key] = val;
    }
  }
}

// Trace for one generator under an experiment's DRAM and recovery settings.
inline Trace generate(const GeneratorSpec& g, const ExperimentConfig& c, std::uint64_t seed) {
  RecoveryConfig rc = c.recovery();
  if (g.threshold) rc.threshold = *g.threshold;
  if (g.kind == "two_row_alternation")
    return gen_two_row_alternation(g.synthetic.bank, g.row_a, g.row_b, g.synthetic.count, c.geometry, c.mapping,
                                   g.synthetic.bubble);
  if (g.kind == "alert_flood" || g.kind == "tsa") return gen_attack(g.attack, rc, c.timing, c.geometry, c.mapping);
  return gen_synthetic(g.synthetic, c.geometry, c.mapping, seed);
}

inline Trace load_trace_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::ios_base::failure("cannot open trace file " + p.string());
  return read_trace(in);
}

inline SimConfig build_sim(const ExperimentConfig& c, bool record_events) {
  SimConfig s;
  s.controller = c.controller_config();
  s.target_instructions = c.instructions;
  s.max_cycles = c.max_cycles;
  s.record_events = record_events;
  s.llc_latency_ns = c.llc_latency_ns;
  s.llc_miss_ratio = c.llc_miss_ratio;
  s.llc_seed = c.seed;
  for (std::size_t i = 0; i < c.cores.size(); ++i) {
    const auto& cc = c.cores[i];
    Trace t;
    if (cc.generator) {
      t = generate(*cc.generator, c, c.seed + i);
    } else {
      std::filesystem::path p = *cc.trace_file;
      if (p.is_relative() && !c.base_dir.empty()) p = c.base_dir / p;
      t = load_trace_file(p);
    }
    s.cores.push_back({cc.name, std::make_shared<const Trace>(std::move(t)), cc.params});
  }
  return s;
}

struct RunOutput {
  Report report;
  std::vector<Event> events;
  Tick end = 0;
};

inline RunOutput run_experiment(const ExperimentConfig& c, bool record_events = false) {
  SimResult r = simulate(build_sim(c, record_events));
  RunOutput out;
  out.report = finalize(r.stats, c.energy);
  out.report.mechanism = to_string(c.mechanism);
  if (c.mechanism != ExperimentMechanism::Baseline) {
    out.report.n_rfm = c.n_rfm;
    out.report.threshold = c.threshold;
  }
  out.report.workload = c.workload_name;
  out.events = std::move(r.events);
  out.end = r.end;
  return out;
}

inline std::string report_csv(const std::vector<Report>& rows) {
  std::ostringstream s;
  write_csv(s, rows);
  return s.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot write " + p.string());
  out << text;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepCell {
  ExperimentConfig config;
};

struct SweepResult {
  std::vector<Report> reports;  // in matrix order
  std::map<std::string, double> geomean_speedup;  // "mechanism/n_rfm/T"
  std::map<std::string, double> geomean_energy_ratio;
};

inline std::vector<ExperimentConfig> expand_matrix(const json& m, const std::filesystem::path& base_dir) {
  using namespace cfg_detail;
  check_keys(m, {"base", "mechanisms", "n_rfm", "T", "workloads", "threads", "reference"}, "");
  json base = m.contains("base") ? m.at("base") : json::object();
  if (!m.contains("mechanisms") || !m.at("mechanisms").is_array() || m.at("mechanisms").empty())
    throw ConfigError("mechanisms: expected a non-empty array");
  if (!m.contains("workloads") || !m.at("workloads").is_array() || m.at("workloads").empty())
    throw ConfigError("workloads: expected a non-empty array");
  const auto mechs = get<std::vector<std::string>>(m, "mechanisms", "");
  const auto nrfms = m.contains("n_rfm") ? get<std::vector<unsigned>>(m, "n_rfm", "") : std::vector<unsigned>{1};
  const auto ts = m.contains("T") ? get<std::vector<std::uint32_t>>(m, "T", "") : std::vector<std::uint32_t>{64};
  std::vector<ExperimentConfig> cells;
  for (const auto& mech : mechs) {
    const bool baseline = experiment_mechanism_from_string(mech) == ExperimentMechanism::Baseline;
    for (std::size_t ni = 0; ni < (baseline ? 1 : nrfms.size()); ++ni) {
      for (std::size_t ti = 0; ti < (baseline ? 1 : ts.size()); ++ti) {
        for (const auto& w : m.at("workloads")) {
          json j = base;
          j["mechanism"] = mech;
          if (baseline) {
            j.erase("n_rfm");
            j.erase("T");
            j.erase("practical_policy");
          } else {
            j["n_rfm"] = nrfms[ni];
            j["T"] = ts[ti];
          }
          j["workload"] = w;
          j.erase("output");
          cells.push_back(parse_experiment(j, base_dir));
        }
      }
    }
  }
  return cells;
}

inline double perf_metric(const Report& r) { return r.stats.cores.empty() ? r.throughput : r.ipc; }

inline SweepResult run_sweep(const json& matrix, const std::filesystem::path& base_dir, unsigned threads = 0) {
  const auto cells = expand_matrix(matrix, base_dir);
  const std::string reference =
      matrix.contains("reference") ? matrix.at("reference").get<std::string>() : "prac_abo_opportunistic";
  (void)experiment_mechanism_from_string(reference);
  const auto mechs = matrix.at("mechanisms").get<std::vector<std::string>>();
  const bool need_reference = std::any_of(mechs.begin(), mechs.end(), [](const std::string& m) { return m != "baseline"; });
  if (need_reference && std::find(mechs.begin(), mechs.end(), reference) == mechs.end())
    throw ConfigError("mechanisms: the normalization reference '" + reference + "' is missing from the matrix");
  if (threads == 0 && matrix.contains("threads")) threads = matrix.at("threads").get<unsigned>();
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());

  std::vector<Report> reports(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        reports[i] = run_experiment(cells[i]).report;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < std::min<std::size_t>(threads, cells.size()); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  // Normalize against the reference mechanism with the same n_rfm, T and
  // workload. Baseline cells have no n_rfm/T and are left unnormalized.
  SweepResult res;
  std::map<std::string, std::vector<double>> speed, energy;
  for (auto& r : reports) {
    if (r.mechanism == "baseline") continue;
    const Report* ref = nullptr;
    for (const auto& o : reports)
      if (o.mechanism == reference && o.n_rfm == r.n_rfm && o.threshold == r.threshold && o.workload == r.workload)
        ref = &o;
    if (!ref) throw ConfigError("missing " + reference + " cell for normalization of " + r.workload);
    const double base_perf = perf_metric(*ref);
    r.speedup = base_perf > 0 ? perf_metric(r) / base_perf : 0.0;
    const std::string key = r.mechanism + "/" + std::to_string(r.n_rfm) + "/" + std::to_string(r.threshold);
    if (r.speedup > 0) speed[key].push_back(r.speedup);
    if (ref->energy.total() > 0 && r.energy.total() > 0) energy[key].push_back(r.energy.total() / ref->energy.total());
  }
  for (const auto& [k, v] : speed) res.geomean_speedup[k] = geomean(v);
  for (const auto& [k, v] : energy) res.geomean_energy_ratio[k] = geomean(v);
  res.reports = std::move(reports);
  return res;
}

inline void write_sweep(const SweepResult& res, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "results.csv", report_csv(res.reports));
  auto key_of = [](const Report& r) {
    return r.mechanism + "/" + std::to_string(r.n_rfm) + "/" + std::to_string(r.threshold);
  };
  auto head = [](const Report& r) {
    return r.mechanism + ',' + std::to_string(r.n_rfm) + ',' + std::to_string(r.threshold) + ',' + r.workload;
  };
  std::string speed = "mechanism,n_rfm,T,workload,speedup,geomean_speedup\n";
  std::string energy = "mechanism,n_rfm,T,workload,energy,victim_refresh_energy,energy_ratio\n";
  std::string refreshes = "mechanism,n_rfm,T,workload,refreshes_performed,refreshes_needed,inflation\n";
  std::string banks = "mechanism,n_rfm,T,workload,alerts,recoveries,banks_per_alert_mean,banks_per_alert_max\n";
  std::string conflicts = "mechanism,n_rfm,T,workload,row_conflicts,subarray_conflicts,ratio,no_conflicts\n";
  for (const auto& r : res.reports) {
    const auto k = key_of(r);
    auto gs = res.geomean_speedup.find(k);
    auto ge = res.geomean_energy_ratio.find(k);
    speed += head(r) + ',' + (r.speedup > 0 ? format_double(r.speedup) : "") + ',' +
             (gs != res.geomean_speedup.end() ? format_double(gs->second) : "") + '\n';
    energy += head(r) + ',' + format_double(r.energy.total()) + ',' + format_double(r.energy.victim_refresh) + ',' +
              (ge != res.geomean_energy_ratio.end() ? format_double(ge->second) : "") + '\n';
    refreshes += head(r) + ',' + std::to_string(r.stats.refreshes_performed) + ',' +
                 std::to_string(r.stats.refreshes_needed) + ',' +
                 (r.stats.refreshes_needed ? format_double(static_cast<double>(r.stats.refreshes_performed) /
                                                           static_cast<double>(r.stats.refreshes_needed))
                                           : "") +
                 '\n';
    banks += head(r) + ',' + std::to_string(r.stats.alerts) + ',' + std::to_string(r.stats.recoveries) + ',' +
             format_double(r.banks_per_alert) + ',' + std::to_string(r.stats.banks_needing_max) + '\n';
    conflicts += head(r) + ',' + std::to_string(r.stats.row_conflicts) + ',' +
                 std::to_string(r.stats.subarray_conflicts) + ',' + format_double(r.subarray_conflict_ratio) + ',' +
                 (r.no_conflicts ? "1" : "0") + '\n';
  }
  write_text(dir / "speedup.csv", speed);
  write_text(dir / "energy.csv", energy);
  write_text(dir / "refreshes.csv", refreshes);
  write_text(dir / "banks_per_alert.csv", banks);
  write_text(dir / "subarray_conflicts.csv", conflicts);
  nlohmann::ordered_json j;
  j["cells"] = nlohmann::ordered_json::array();
  for (const auto& r : res.reports) j["cells"].push_back(to_json(r));
  j["geomean_speedup"] = res.geomean_speedup;
  j["geomean_energy_ratio"] = res.geomean_energy_ratio;
  write_text(dir / "summary.json", j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Verification of an event log against its experiment configuration.

struct VerifyResult {
  std::vector<Violation> violations;
  std::uint32_t security_bound = 0;
};

inline VerifyResult verify_log(const ActivationLog& log, const ExperimentConfig& c) {
  VerifyResult r;
  const Mechanism m = controller_mechanism(c.mechanism);
  r.violations = check_timing(log, c.timing, m, c.geometry);
  if (!log.complete) throw VerificationError("event log is incomplete (no END record); refusing to certify");
  if (m != Mechanism::Baseline) {
    const std::uint32_t margin = security_margin(m, c.timing);
    r.security_bound = c.threshold + margin;
    auto sec = check_security(log, c.threshold, margin, c.geometry.banks_per_rank());
    r.violations.insert(r.violations.end(), sec.begin(), sec.end());
    // Counter conservation: every CROSSING and PRE value matches a replay.
    CounterReplay replay(c.geometry, c.controller.ref_resets_counters);
    for (std::size_t i = 0; i < log.events.size(); ++i) {
      const Event& e = log.events[i];
      replay.apply(e);
      if (e.kind == EventKind::Pre && replay.get(e.bank, e.row) != e.value &&
          replay.get(e.bank, e.row) < ((1ull << c.controller.counter_bits) - 1))
        r.violations.push_back({ViolationKind::CounterMismatch, i + 1, e.bank, e.row, "counter equals PREs since reset",
                                "log " + std::to_string(e.value) + ", replay " +
                                    std::to_string(replay.get(e.bank, e.row))});
    }
  }
  return r;
}

}  // namespace pracsim
