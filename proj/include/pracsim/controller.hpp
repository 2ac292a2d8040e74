#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pracsim/bank.hpp"
#include "pracsim/command.hpp"
#include "pracsim/common.hpp"
#include "pracsim/counters.hpp"
#include "pracsim/geometry.hpp"
#include "pracsim/mapping.hpp"
#include "pracsim/recovery.hpp"
#include "pracsim/timing.hpp"

namespace pracsim {

enum class ReqKind : std::uint8_t { Read, Write };

struct MemRequest {
  std::uint64_t id = 0;
  std::uint32_t source = 0;  // issuing core or stream
  ReqKind kind = ReqKind::Read;
  std::uint64_t address = 0;
  Tick arrival = 0;
  std::optional<Tick> completion;
  Location loc;
  std::uint32_t bank = 0;  // flat bank index
};

struct ControllerConfig {
  Mechanism mechanism = Mechanism::Baseline;
  TimingSet timing = TimingSet::baseline();
  DramGeometry geometry;
  AddressMapping mapping;
  RecoveryConfig recovery;
  unsigned counter_bits = 16;
  bool ref_resets_counters = true;
  std::uint32_t read_queue = 32;
  std::uint32_t write_queue = 32;
  std::uint32_t row_hit_cap = 4;
  std::uint32_t drain_high = 28;
  std::uint32_t drain_low = 16;
  // DDR5 splits tREFW into this many REF commands.
  std::uint32_t refresh_groups = 8192;

  void validate() const {
    geometry.validate();
    timing.validate();
    if (geometry.channels != 1) throw ConfigError("geometry.channels: only single-channel simulation is supported");
    if (geometry.banks_per_channel() > 64) throw ConfigError("geometry: at most 64 banks per channel");
    if (mechanism != Mechanism::Baseline) recovery.validate(timing);
    if (read_queue == 0 || write_queue == 0) throw ConfigError("queue sizes must be > 0");
    if (drain_low >= drain_high || drain_high > write_queue) throw ConfigError("write-drain watermarks invalid");
    if (row_hit_cap == 0) throw ConfigError("row_hit_cap must be > 0");
  }
};

using EventSinkFn = std::function<void(const Event&)>;

// One DDR5 channel: per-bank timing state, activation counters, ABO/RFM
// protocol, refresh, and the FR-FCFS+Cap request scheduler. Advanced one
// command-clock cycle at a time; at most one command issues per cycle.
class MemoryController {
 public:
  explicit MemoryController(ControllerConfig cfg, EventSinkFn sink = {})
      : cfg_(std::move(cfg)), cyc_(cfg_.timing.cycles()), sink_(std::move(sink)), ba_(64) {
    cfg_.validate();
    const auto& geo = cfg_.geometry;
    banks_.resize(geo.banks_per_channel());
    hit_count_.assign(banks_.size(), 0);
    next_ref_.assign(geo.ranks_per_channel, cyc_.REFI);
    ref_group_.assign(geo.ranks_per_channel, 0);
    if (cfg_.mechanism != Mechanism::Baseline) {
      counters_ = std::make_unique<RowCounterTable>(geo, cfg_.counter_bits);
      trigger_ = trigger_level(cfg_.recovery, cfg_.timing);
    }
    ba_ = BaRegister(geo.banks_per_channel());
    rows_per_ref_ = std::max<std::uint32_t>(1, geo.rows_per_bank / cfg_.refresh_groups);
  }

  const ControllerConfig& config() const { return cfg_; }
  const TimingSet::Cycles& cycles() const { return cyc_; }
  const BankState& bank(std::uint32_t b) const { return banks_.at(b); }
  const RowCounterTable* counters() const { return counters_.get(); }
  RowCounterTable* counters() { return counters_.get(); }
  const AlertState& alert_state() const { return alert_; }
  const BaRegister& ba_register() const { return ba_; }
  std::uint32_t trigger() const { return trigger_; }
  std::uint32_t hit_count(std::uint32_t b) const { return hit_count_.at(b); }
  bool write_drain() const { return write_drain_; }
  std::size_t read_queue_size() const { return reads_.size(); }
  std::size_t write_queue_size() const { return writes_.size(); }
  bool idle() const { return reads_.empty() && writes_.empty() && inflight_.empty(); }

  bool can_accept(ReqKind kind) const {
    return kind == ReqKind::Read ? reads_.size() < cfg_.read_queue : writes_.size() < cfg_.write_queue;
  }

  // Queues a request; returns false when the matching queue is full.
  bool enqueue(MemRequest req, Tick now) {
    if (!can_accept(req.kind)) return false;
    req.loc = decode_address(req.address, cfg_.mapping, cfg_.geometry);
    req.bank = flat_bank(req.loc, cfg_.geometry);
    req.arrival = now;
    (req.kind == ReqKind::Read ? reads_ : writes_).push_back(req);
    return true;
  }

  // Requests whose data transfer finished at or before `now`.
  std::vector<MemRequest> pop_completed(Tick now) {
    std::vector<MemRequest> out;
    for (auto it = inflight_.begin(); it != inflight_.end();) {
      if (*it->completion <= now) {
        out.push_back(*it);
        it = inflight_.erase(it);
      } else {
        ++it;
      }
    }
    return out;
  }

  // True when requests may not be scheduled to bank `b` at `now`: a REF or
  // RFM is in progress on it, its rank is draining for a REF, or a recovery
  // is about to start.
  bool bank_blocked(std::uint32_t b, Tick now) const {
    if (banks_[b].blocked_until > now) return true;
    if (recovery_closing(now) && ((recovery_close_mask() >> b) & 1u)) return true;
    return ref_draining(rank_of_flat_bank(b, cfg_.geometry), now);
  }

  // A due REF is postponed while any bank of the rank is still busy with an
  // RFM, so the other banks keep serving requests meanwhile.
  bool ref_draining(std::uint32_t rank, Tick now) const {
    if (now < next_ref_[rank]) return false;
    const std::uint32_t first = rank * cfg_.geometry.banks_per_rank();
    for (std::uint32_t i = 0; i < cfg_.geometry.banks_per_rank(); ++i)
      if (banks_[first + i].blocked_until > now) return false;
    return true;
  }

  bool refresh_due(std::uint32_t rank, Tick now) const { return now >= next_ref_.at(rank); }

  void tick(Tick now) {
    now_ = now;
    release_plan_events(now);
    finish_recovery(now);
    update_drain_mode();
    if (bus_busy_until_ > now) return;
    if (try_recovery(now)) return;
    if (try_refresh(now)) return;
    try_schedule(now);
  }

  // Writes counter state for banks with nonzero counters.
  template <typename F>
  void for_each_counter(F&& f) const {
    if (!counters_) return;
    for (std::uint32_t b = 0; b < counters_->bank_count(); ++b)
      counters_->for_each_nonzero(b, [&](std::uint32_t row, std::uint32_t v) { f(b, row, v); });
  }

 private:
  bool recovery_closing(Tick now) const { return alert_.phase == AlertPhase::PreRecovery && now >= alert_.until; }

  void emit(const Event& e) {
    if (sink_) sink_(e);
  }

  Command make_cmd(CommandKind kind, std::uint32_t b, std::uint32_t row, Tick now) const {
    Command c;
    c.kind = kind;
    c.target = make_location(cfg_.geometry, b, row);
    c.issue_time = now;
    return c;
  }

  Event make_event(EventKind kind, std::uint32_t b, std::uint32_t row, Tick now) const {
    Event e;
    e.time = now;
    e.kind = kind;
    e.bank = b;
    e.rank = rank_of_flat_bank(b, cfg_.geometry);
    e.row = row;
    return e;
  }

  bool any_bank_at_trigger() const {
    for (std::uint32_t b = 0; b < counters_->bank_count(); ++b)
      if (counters_->bank_max(b).value >= trigger_) return true;
    return false;
  }

  void raise_alert(Tick now) {
    alert_.phase = AlertPhase::PreRecovery;
    alert_.until = now + cyc_.PreRecovery;
    alert_.alert_pending = false;
    Event e;
    e.time = now;
    e.kind = EventKind::Alert;
    emit(e);
  }

  void release_plan_events(Tick now) {
    while (!plan_events_.empty() && plan_events_.front().time <= now) {
      const Event e = plan_events_.front();
      plan_events_.pop_front();
      if (e.kind == EventKind::RfmAb || e.kind == EventKind::RfmMask) bus_busy_until_ = e.time + 1;
      emit(e);
    }
  }

  void finish_recovery(Tick now) {
    if (alert_.phase != AlertPhase::Recovering || now < alert_.until) return;
    alert_.phase = AlertPhase::Idle;
    alert_.gate_open = false;
    alert_.acts_since_recovery = 0;
    // Banks still holding a row at the trigger level re-flag themselves.
    for (std::uint32_t b = 0; b < counters_->bank_count(); ++b) {
      if (counters_->bank_max(b).value < trigger_) continue;
      if (cfg_.mechanism == Mechanism::Practical) ba_.set(b);
      alert_.alert_pending = true;
    }
  }

  void on_act_issued(Tick now) {
    if (!counters_) return;
    ++alert_.acts_since_recovery;
    if (alert_.gate_open || alert_.phase != AlertPhase::Idle) return;
    alert_.gate_open = true;
    if (!alert_.alert_pending) return;
    alert_.alert_pending = false;
    const bool flagged = cfg_.mechanism == Mechanism::Practical ? ba_.any() || any_bank_at_trigger()
                                                                 : any_bank_at_trigger();
    if (flagged) raise_alert(now);
  }

  void update_drain_mode() {
    if (write_drain_ && writes_.size() <= cfg_.drain_low) write_drain_ = false;
    if (!write_drain_ && writes_.size() >= cfg_.drain_high) write_drain_ = true;
  }

  // Precharges the lowest-index open bank among `mask` whose PRE is legal.
  // Returns true if a command was issued.
  bool close_one(std::uint64_t mask, Tick now, bool& all_closed) {
    all_closed = true;
    for (std::uint32_t b = 0; b < banks_.size(); ++b) {
      if (!((mask >> b) & 1u) || !banks_[b].open_row) continue;
      all_closed = false;
      const Command pre = make_cmd(CommandKind::PRE, b, *banks_[b].open_row, now);
      if (earliest_issue(banks_[b], pre, cyc_, cfg_.mechanism, now) <= now) {
        issue_pre(b, now, -1);
        return true;
      }
    }
    return false;
  }

  // Banks that must be closed before the recovery command: every bank for
  // RFM_AB, only the flagged ones for RFM_MASK (the device closes its flagged
  // banks; the rest keep their open rows and keep serving).
  std::uint64_t recovery_close_mask() const {
    if (cfg_.mechanism == Mechanism::Practical) return ba_.peek();
    return detail::all_banks(static_cast<std::uint32_t>(banks_.size()));
  }

  bool try_recovery(Tick now) {
    if (!recovery_closing(now)) return false;
    const std::uint64_t close = recovery_close_mask();
    bool all_closed = false;
    if (close_one(close, now, all_closed)) return true;
    if (!all_closed) return false;
    for (std::uint32_t b = 0; b < banks_.size(); ++b) {
      if (!((close >> b) & 1u)) continue;
      const Command rfm = make_cmd(CommandKind::RFM_AB, b, 0, now);
      if (earliest_issue(banks_[b], rfm, cyc_, cfg_.mechanism, now) > now) return false;
    }
    RecoveryPlan plan = cfg_.mechanism == Mechanism::Practical
                            ? run_recovery_mask(*counters_, ba_, cfg_.recovery, trigger_, now, cyc_)
                            : run_recovery_abo(*counters_, cfg_.recovery, trigger_, now, cyc_);
    for (std::uint32_t b = 0; b < banks_.size(); ++b) {
      const Tick until = ((plan.mask >> b) & 1u) ? plan.end : plan.mask_known;
      if (until > now) banks_[b].blocked_until = std::max(banks_[b].blocked_until, until);
    }
    for (auto& e : plan.events) {
      if (e.kind == EventKind::RfmAb || e.kind == EventKind::RfmMask) e.victims = plan.banks_needing;
      plan_events_.push_back(e);
    }
    alert_.phase = AlertPhase::Recovering;
    alert_.until = plan.end;
    alert_.rfms_remaining = cfg_.recovery.n_rfm;
    release_plan_events(now);
    return true;
  }

  bool try_refresh(Tick now) {
    const auto& geo = cfg_.geometry;
    for (std::uint32_t r = 0; r < geo.ranks_per_channel; ++r) {
      if (!ref_draining(r, now)) continue;
      const std::uint32_t first = r * geo.banks_per_rank();
      std::uint64_t mask = 0;
      for (std::uint32_t i = 0; i < geo.banks_per_rank(); ++i) mask |= std::uint64_t{1} << (first + i);
      bool all_closed = false;
      if (close_one(mask, now, all_closed)) return true;
      if (!all_closed) continue;
      bool ready = true;
      for (std::uint32_t i = 0; i < geo.banks_per_rank() && ready; ++i) {
        const Command ref = make_cmd(CommandKind::REF, first + i, 0, now);
        ready = earliest_issue(banks_[first + i], ref, cyc_, cfg_.mechanism, now) <= now;
      }
      if (!ready) continue;
      issue_ref(r, now);
      return true;
    }
    return false;
  }

  void issue_ref(std::uint32_t r, Tick now) {
    const auto& geo = cfg_.geometry;
    const std::uint32_t groups = geo.rows_per_bank / rows_per_ref_;
    const std::uint32_t first_row = (ref_group_[r] % groups) * rows_per_ref_;
    ++ref_group_[r];
    next_ref_[r] += cyc_.REFI;
    const std::uint32_t first = r * geo.banks_per_rank();
    for (std::uint32_t i = 0; i < geo.banks_per_rank(); ++i) {
      const std::uint32_t b = first + i;
      apply_command(banks_[b], make_cmd(CommandKind::REF, b, 0, now), cyc_, cfg_.mechanism);
      if (counters_ && cfg_.ref_resets_counters)
        for (std::uint32_t k = 0; k < rows_per_ref_; ++k) counters_->reset(b, first_row + k);
    }
    Event e = make_event(EventKind::Ref, first, first_row, now);
    e.value = rows_per_ref_;
    emit(e);
  }

  void issue_pre(std::uint32_t b, Tick now, std::int64_t for_row) {
    const std::uint32_t row = *banks_[b].open_row;
    auto res = apply_command(banks_[b], make_cmd(CommandKind::PRE, b, row, now), cyc_, cfg_.mechanism,
                             counters_.get(), b);
    hit_count_[b] = 0;
    Event e = make_event(EventKind::Pre, b, row, now);
    e.other_row = for_row;
    if (res.counter_update) e.value = res.counter_update->new_value;
    emit(e);
    if (!res.counter_update) return;
    const std::uint32_t v = res.counter_update->new_value;
    if (v < trigger_) return;
    Event cross = make_event(EventKind::Crossing, b, row, now);
    cross.value = v;
    emit(cross);
    if (on_counter_update(b, v, trigger_, cfg_.recovery, alert_, ba_)) raise_alert(now);
  }

  struct Candidate {
    std::deque<MemRequest>* queue;
    std::size_t index;
    CommandKind kind;
  };

  bool cas_ready(Tick now) const { return now >= next_cas_; }

  bool has_pending_hit(const std::deque<MemRequest>& q, std::uint32_t b) const {
    const auto& open = banks_[b].open_row;
    if (!open) return false;
    for (const auto& r : q)
      if (r.bank == b && r.loc.row == *open) return true;
    return false;
  }

  bool has_other_request(const std::deque<MemRequest>& q, std::uint32_t b) const {
    const auto& open = banks_[b].open_row;
    for (const auto& r : q)
      if (r.bank == b && (!open || r.loc.row != *open)) return true;
    return false;
  }

  std::optional<Candidate> pick(std::deque<MemRequest>& q, Tick now) {
    const CommandKind cas_kind = &q == &reads_ ? CommandKind::RD : CommandKind::WR;
    // First ready: oldest row hit to a bank still under its hit cap.
    if (cas_ready(now)) {
      for (std::size_t i = 0; i < q.size(); ++i) {
        const auto& r = q[i];
        const auto& bs = banks_[r.bank];
        if (!bs.open_row || *bs.open_row != r.loc.row || hit_count_[r.bank] >= cfg_.row_hit_cap) continue;
        if (bank_blocked(r.bank, now)) continue;
        if (earliest_issue(bs, make_cmd(cas_kind, r.bank, r.loc.row, now), cyc_, cfg_.mechanism, now) <= now)
          return Candidate{&q, i, cas_kind};
      }
    }
    // Then first come: oldest request whose next command is issuable.
    for (std::size_t i = 0; i < q.size(); ++i) {
      const auto& r = q[i];
      const auto& bs = banks_[r.bank];
      if (bank_blocked(r.bank, now)) continue;
      CommandKind kind;
      if (!bs.open_row) {
        kind = CommandKind::ACT;
      } else if (*bs.open_row == r.loc.row) {
        // Capped hit: only when nothing else wants this bank.
        if (!cas_ready(now) || has_other_request(q, r.bank)) continue;
        kind = cas_kind;
      } else {
        if (hit_count_[r.bank] < cfg_.row_hit_cap && has_pending_hit(q, r.bank)) continue;
        kind = CommandKind::PRE;
      }
      const std::uint32_t row = kind == CommandKind::PRE ? *bs.open_row : r.loc.row;
      const Command c = make_cmd(kind, r.bank, row, now);
      if (earliest_issue(bs, c, cyc_, cfg_.mechanism, now) <= now) return Candidate{&q, i, kind};
    }
    return std::nullopt;
  }

  void try_schedule(Tick now) {
    const bool serve_writes = write_drain_ || (reads_.empty() && !writes_.empty());
    auto& q = serve_writes ? writes_ : reads_;
    if (q.empty()) return;
    auto cand = pick(q, now);
    if (!cand) return;
    MemRequest& r = (*cand->queue)[cand->index];
    const std::uint32_t b = r.bank;
    switch (cand->kind) {
      case CommandKind::ACT: {
        apply_command(banks_[b], make_cmd(CommandKind::ACT, b, r.loc.row, now), cyc_, cfg_.mechanism);
        hit_count_[b] = 0;
        emit(make_event(EventKind::Act, b, r.loc.row, now));
        on_act_issued(now);
        break;
      }
      case CommandKind::PRE:
        issue_pre(b, now, r.loc.row);
        break;
      case CommandKind::RD:
      case CommandKind::WR: {
        if (hit_count_[b] >= cfg_.row_hit_cap) hit_count_[b] = 0;
        apply_command(banks_[b], make_cmd(cand->kind, b, r.loc.row, now), cyc_, cfg_.mechanism);
        ++hit_count_[b];
        next_cas_ = now + cyc_.BL;
        emit(make_event(cand->kind == CommandKind::RD ? EventKind::Rd : EventKind::Wr, b, r.loc.row, now));
        MemRequest done = r;
        cand->queue->erase(cand->queue->begin() + static_cast<std::ptrdiff_t>(cand->index));
        done.completion = cand->kind == CommandKind::RD ? now + cyc_.CL + cyc_.BL : now;
        inflight_.push_back(done);
        break;
      }
      default:
        break;
    }
  }

  ControllerConfig cfg_;
  TimingSet::Cycles cyc_;
  EventSinkFn sink_;
  std::vector<BankState> banks_;
  std::unique_ptr<RowCounterTable> counters_;
  std::uint32_t trigger_ = ~std::uint32_t{0};
  AlertState alert_;
  BaRegister ba_;
  std::deque<Event> plan_events_;
  std::deque<MemRequest> reads_, writes_;
  std::deque<MemRequest> inflight_;
  std::vector<std::uint32_t> hit_count_;
  std::vector<Tick> next_ref_;
  std::vector<std::uint32_t> ref_group_;
  std::uint32_t rows_per_ref_ = 1;
  Tick next_cas_ = 0;
  Tick bus_busy_until_ = 0;
  Tick now_ = 0;
  bool write_drain_ = false;
};

}  // namespace pracsim
