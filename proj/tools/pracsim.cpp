#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pracsim/config.hpp"

using namespace pracsim;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kViolations = 2;

json load_with_overrides(const std::string& path, const std::vector<std::string>& sets) {
  json j = read_json_file(path);
  apply_overrides(j, sets);
  return j;
}

int cmd_run(const std::string& cfg_path, const std::vector<std::string>& sets, std::string json_out,
            std::string csv_out, std::string events_out) {
  const ExperimentConfig c = parse_experiment(load_with_overrides(cfg_path, sets), fs::path(cfg_path).parent_path());
  if (json_out.empty()) json_out = c.out_json;
  if (csv_out.empty()) csv_out = c.out_csv;
  if (events_out.empty()) events_out = c.out_events;
  const RunOutput out = run_experiment(c, !events_out.empty());
  const std::string report = to_json(out.report).dump(2) + "\n";
  if (json_out.empty()) {
    std::cout << report;
  } else {
    write_text(json_out, report);
  }
  if (!csv_out.empty()) write_text(csv_out, report_csv({out.report}));
  if (!events_out.empty()) {
    std::ostringstream s;
    write_event_log(s, out.events, out.end);
    write_text(events_out, s.str());
  }
  return kOk;
}

int cmd_sweep(const std::string& matrix_path, const std::string& out_dir, unsigned threads) {
  const SweepResult res = run_sweep(read_json_file(matrix_path), fs::path(matrix_path).parent_path(), threads);
  write_sweep(res, out_dir);
  std::cerr << "sweep: " << res.reports.size() << " cells written to " << out_dir << "\n";
  return kOk;
}

// gen.json holds a "generator" object plus optional DRAM settings
// (mechanism, T, n_rfm, timing_preset, timing, geometry, mapping, seed).
int cmd_gen(const std::string& cfg_path, const std::vector<std::string>& sets, const std::string& out_path) {
  json j = load_with_overrides(cfg_path, sets);
  if (!j.is_object() || !j.contains("generator")) throw ConfigError("generator: missing");
  json gen = j.at("generator");
  j.erase("generator");
  if (!j.contains("mechanism")) j["mechanism"] = "practical";
  j["workload"] = {{"name", "gen"}, {"cores", json::array({{{"generator", gen}}})}};
  const ExperimentConfig c = parse_experiment(j, fs::path(cfg_path).parent_path());
  const Trace t = generate(*c.cores[0].generator, c, c.seed);
  std::string header = "pracsim gen seed=" + std::to_string(c.seed) + " mechanism=" + to_string(c.mechanism);
  if (c.mechanism != ExperimentMechanism::Baseline) header += " T=" + std::to_string(c.threshold);
  header += " generator=" + gen.dump();
  std::ostringstream s;
  write_trace(s, t, {header});
  write_text(out_path, s.str());
  std::cerr << "gen: " << t.size() << " entries written to " << out_path << "\n";
  return kOk;
}

int cmd_verify(const std::string& log_path, const std::string& cfg_path, const std::string& out_path) {
  const ExperimentConfig c = load_experiment(cfg_path);
  std::ifstream in(log_path);
  if (!in) throw std::ios_base::failure("cannot open " + log_path);
  const ActivationLog log = read_event_log(in);
  nlohmann::ordered_json j;
  j["log"] = log_path;
  j["events"] = log.events.size();
  j["complete"] = log.complete;
  int rc = kOk;
  try {
    const VerifyResult r = verify_log(log, c);
    j["security_bound"] = r.security_bound;
    j["violations"] = nlohmann::ordered_json::array();
    for (const auto& v : r.violations) j["violations"].push_back(to_json(v));
    if (!r.violations.empty()) rc = kViolations;
  } catch (const VerificationError& e) {
    j["error"] = e.what();
    rc = kViolations;
  }
  const std::string text = j.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_text(out_path, text);
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pracsim: DDR5 PRAC/ABO channel simulator"};
  app.require_subcommand(1);

  std::string cfg, out, csv, events, log;
  std::vector<std::string> sets;
  unsigned threads = 0;

  auto* run = app.add_subcommand("run", "simulate one experiment");
  run->add_option("-c,--config", cfg, "experiment config (JSON)")->required();
  run->add_option("-s,--set", sets, "override a top-level scalar field, key=value");
  run->add_option("-o,--output", out, "JSON report path (default: stdout)");
  run->add_option("--csv", csv, "CSV report path");
  run->add_option("--events", events, "NDJSON event log path");

  auto* sweep = app.add_subcommand("sweep", "run a parameter matrix");
  sweep->add_option("-c,--config", cfg, "matrix config (JSON)")->required();
  sweep->add_option("-o,--output", out, "output directory")->required();
  sweep->add_option("-j,--threads", threads, "worker threads (default: matrix 'threads' or all cores)");

  auto* gen = app.add_subcommand("gen", "write a synthetic or attack trace");
  gen->add_option("-c,--config", cfg, "generator config (JSON)")->required();
  gen->add_option("-s,--set", sets, "override a top-level scalar field, key=value");
  gen->add_option("-o,--output", out, "trace path")->required();

  auto* verify = app.add_subcommand("verify", "check an event log for timing and security violations");
  verify->add_option("--log", log, "NDJSON event log")->required();
  verify->add_option("--config", cfg, "experiment config the log was produced with")->required();
  verify->add_option("-o,--output", out, "violation report path (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(cfg, sets, out, csv, events);
    if (*sweep) return cmd_sweep(cfg, out, threads);
    if (*gen) return cmd_gen(cfg, sets, out);
    if (*verify) return cmd_verify(log, cfg, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return kConfigError;
}
