#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pracsim/controller.hpp"
#include "pracsim/frontend.hpp"
#include "pracsim/telemetry.hpp"

namespace pracsim {

struct CoreSpec {
  std::string name;
  std::shared_ptr<const Trace> trace;
  CoreParams params;
};

struct SimConfig {
  ControllerConfig controller;
  std::vector<CoreSpec> cores;
  std::vector<RequestStream> streams;
  // Stop once every non-attacker core retired this many instructions.
  std::uint64_t target_instructions = 10'000'000;
  // Hard stop in DRAM cycles.
  Tick max_cycles = 2'000'000'000;
  bool record_events = false;
  // Ignore the stop conditions above and run exactly max_cycles.
  bool run_to_max = false;
  // Core requests reach the controller through a fixed-latency LLC. Traces
  // are miss streams by default; a ratio below 1 turns the remainder into
  // LLC hits that complete after the same latency.
  double llc_latency_ns = 20.0;
  double llc_miss_ratio = 1.0;
  std::uint64_t llc_seed = 1;
  // Requests in flight between the cores and the controller.
  std::uint32_t llc_miss_queue = 64;
};

struct SimResult {
  RunStats stats;
  std::vector<Event> events;
  Tick end = 0;
  // Per stream: completion cycle of each request, in stream order.
  std::vector<std::vector<Tick>> stream_completions;
};

// Core clock over DRAM command clock: 4.2 GHz / 1.6 GHz.
inline constexpr std::uint64_t kCoreTicksNum = 21;
inline constexpr std::uint64_t kCoreTicksDen = 8;

// Drives cores and request streams against one controller, one DRAM cycle
// at a time. `observer` sees every event together with the controller state
// right after it was emitted.
class Simulation {
 public:
  using Observer = std::function<void(const Event&, const MemoryController&)>;

  explicit Simulation(SimConfig cfg, Observer observer = {})
      : cfg_(std::move(cfg)),
        observer_(std::move(observer)),
        collector_(cfg_.controller.geometry, cfg_.controller.timing.cycles()),
        mc_(cfg_.controller, [this](const Event& e) { on_event(e); }) {
    for (std::uint32_t i = 0; i < cfg_.cores.size(); ++i) {
      const auto& cs = cfg_.cores[i];
      cores_.emplace_back(i, cs.trace, cs.params);
    }
    stream_pos_.assign(cfg_.streams.size(), 0);
    result_.stream_completions.resize(cfg_.streams.size());
    for (std::size_t s = 0; s < cfg_.streams.size(); ++s)
      result_.stream_completions[s].assign(cfg_.streams[s].size(), kNever);
    at_target_.assign(cores_.size(), {0, 0});
    if (!(cfg_.llc_miss_ratio >= 0.0 && cfg_.llc_miss_ratio <= 1.0))
      throw ConfigError("llc_miss_ratio must be within [0, 1]");
    if (cfg_.llc_latency_ns < 0) throw ConfigError("llc_latency_ns must be >= 0");
    llc_cycles_ = ns_to_cycles(cfg_.llc_latency_ns, cfg_.controller.timing.clock_ps);
    llc_rng_.seed(cfg_.llc_seed);
  }

  const MemoryController& controller() const { return mc_; }

  SimResult run() {
    Tick now = 0;
    for (; now < cfg_.max_cycles; ++now) {
      step(now);
      if (done()) {
        ++now;
        break;
      }
    }
    result_.end = now;
    RunStats& s = collector_.stats();
    s.dram_cycles = now;
    s.requests_completed = completed_;
    for (std::size_t i = 0; i < cores_.size(); ++i) {
      CoreStats cs;
      cs.name = cfg_.cores[i].name;
      cs.attacker = cfg_.cores[i].params.attacker;
      if (!cs.attacker && at_target_[i].second) {
        cs.retired = at_target_[i].first;
        cs.cycles = at_target_[i].second;
      } else {
        cs.retired = cores_[i].retired();
        cs.cycles = cores_[i].cycles();
      }
      s.cores.push_back(cs);
    }
    result_.stats = s;
    return std::move(result_);
  }

 private:
  static constexpr std::uint32_t kStreamSourceBase = 1u << 30;

  void on_event(const Event& e) {
    collector_.record(e);
    if (cfg_.record_events) result_.events.push_back(e);
    if (observer_) observer_(e, mc_);
  }

  bool send_from_core(const MemRequest& req, Tick now) {
    if (cfg_.llc_miss_ratio < 1.0) {
      const double u = static_cast<double>(llc_rng_() >> 11) / static_cast<double>(1ull << 53);
      if (u >= cfg_.llc_miss_ratio) {
        if (req.kind == ReqKind::Read) llc_hits_.push_back({now + llc_cycles_, req});
        return true;
      }
    }
    if (miss_path_.size() >= cfg_.llc_miss_queue) return false;
    miss_path_.push_back({now + llc_cycles_, req});
    return true;
  }

  void step(Tick now) {
    while (!llc_hits_.empty() && llc_hits_.front().first <= now) {
      cores_[llc_hits_.front().second.source].complete(llc_hits_.front().second.id);
      llc_hits_.pop_front();
    }
    for (const auto& r : mc_.pop_completed(now)) {
      ++completed_;
      if (r.source >= kStreamSourceBase) {
        result_.stream_completions[r.source - kStreamSourceBase][stream_ids_.at(r.id)] = *r.completion;
      } else {
        cores_[r.source].complete(r.id);
      }
    }
    const std::uint64_t ticks = (now + 1) * kCoreTicksNum / kCoreTicksDen - now * kCoreTicksNum / kCoreTicksDen;
    for (std::size_t i = 0; i < cores_.size(); ++i) {
      auto& core = cores_[i];
      for (std::uint64_t k = 0; k < ticks; ++k) {
        core.tick([&](MemRequest& req) { return send_from_core(req, now); }, next_id_);
        if (at_target_[i].second == 0 && core.retired() >= cfg_.target_instructions)
          at_target_[i] = {core.retired(), core.cycles()};
      }
    }
    while (!miss_path_.empty() && miss_path_.front().first <= now && mc_.enqueue(miss_path_.front().second, now))
      miss_path_.pop_front();
    for (std::size_t s = 0; s < cfg_.streams.size(); ++s) {
      const auto& stream = cfg_.streams[s];
      auto& pos = stream_pos_[s];
      while (pos < stream.size() && stream[pos].arrival <= now) {
        MemRequest req;
        req.id = next_id_;
        req.source = kStreamSourceBase + static_cast<std::uint32_t>(s);
        req.kind = stream[pos].kind;
        req.address = stream[pos].address;
        if (!mc_.enqueue(req, now)) break;
        stream_ids_[next_id_++] = pos++;
      }
    }
    mc_.tick(now);
  }

  bool done() const {
    if (cfg_.run_to_max) return false;
    bool any_core = false;
    for (std::size_t i = 0; i < cores_.size(); ++i) {
      if (cfg_.cores[i].params.attacker) continue;
      any_core = true;
      if (at_target_[i].second == 0) return false;
    }
    if (any_core) return true;
    if (cfg_.streams.empty()) return false;  // attackers only: run to max_cycles
    for (std::size_t s = 0; s < cfg_.streams.size(); ++s)
      if (stream_pos_[s] < cfg_.streams[s].size()) return false;
    return mc_.idle();
  }

  SimConfig cfg_;
  Observer observer_;
  StatsCollector collector_;
  MemoryController mc_;
  std::vector<Core> cores_;
  std::vector<std::size_t> stream_pos_;
  std::unordered_map<std::uint64_t, std::size_t> stream_ids_;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> at_target_;
  std::deque<std::pair<Tick, MemRequest>> miss_path_;
  std::deque<std::pair<Tick, MemRequest>> llc_hits_;
  Tick llc_cycles_ = 0;
  std::mt19937_64 llc_rng_;
  std::uint64_t next_id_ = 0;
  std::uint64_t completed_ = 0;
  SimResult result_;
};

inline SimResult simulate(SimConfig cfg, Simulation::Observer observer = {}) {
  Simulation sim(std::move(cfg), std::move(observer));
  return sim.run();
}

}  // namespace pracsim
