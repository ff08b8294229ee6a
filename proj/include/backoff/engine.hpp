#pragma once

// Slotted channel for a single batch of n stations that all start at
// slot 0. Each slot the engine steps the stations that asked to be woken,
// classifies the transmitter set (nobody / one / several), and hands every
// stepped station its own outcome plus the busy/clear state of the channel
// before the next slot begins.
//
// Stations only wake when they might transmit (or, for Best-of-k estimation,
// every slot), so runs of slots where every active station listens are
// emitted as a single empty run. A trial costs O(slots + transmissions)
// rather than O(slots * n).

#include <algorithm>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "backoff/domain.hpp"
#include "backoff/policies.hpp"
#include "backoff/rng.hpp"

namespace backoff {

struct TrialConfig {
  std::uint32_t n = 1;
  PolicySpec policy = PolicySpec::beb();
  std::uint64_t seed = 0;
  // Defaults to 10^4 * n.
  std::optional<std::uint64_t> max_slots;

  std::uint64_t slot_limit() const noexcept {
    return max_slots.value_or(std::uint64_t{10000} * std::max<std::uint32_t>(n, 1));
  }
};

inline constexpr std::uint32_t kMaxStations = (1u << 24) - 1;

inline void check(const TrialConfig& config) {
  if (config.n < 1) throw std::invalid_argument("trial needs n >= 1");
  if (config.n > kMaxStations) throw std::invalid_argument("trial n exceeds engine limit");
  if (config.slot_limit() < config.n) throw std::invalid_argument("max_slots must be >= n");
  check(config.policy);
}

class RunawayTrial : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// What a sink sees for one non-skipped slot.
struct SlotView {
  SlotIndex slot = 0;
  PhaseTag phase = PhaseTag::ContentionWindow;
  std::span<const StationId> transmitters;
  std::span<const StationId> probes;
  SlotOutcome outcome;
};

// A sink receives every slot in order. Returning false stops the trial.
// on_empty_run covers `count` consecutive Empty ContentionWindow slots.
template <typename S>
concept SlotSink = requires(S& s, const SlotView& v, SlotIndex first, std::uint64_t count) {
  { s.on_slot(v) } -> std::convertible_to<bool>;
  { s.on_empty_run(first, count) } -> std::convertible_to<bool>;
};

struct NullSink {
  bool on_slot(const SlotView&) noexcept { return true; }
  bool on_empty_run(SlotIndex, std::uint64_t) noexcept { return true; }
};

namespace detail {

// Calendar queue of pending wake-ups. Every active station has exactly one
// pending wake slot, so buckets are intrusive singly linked lists threaded
// through a per-station `next` array. The ring grows (power of two) when a
// wake lands beyond its horizon.
class WakeQueue {
 public:
  static constexpr StationId kNil = ~StationId{0};

  explicit WakeQueue(std::uint32_t stations)
      : next_(stations, kNil), wake_(stations, 0), head_(1024, kNil) {}

  bool empty() const noexcept { return size_ == 0; }

  void push(SlotIndex slot, StationId id) {
    if (slot - base_ >= head_.size()) grow(slot - base_ + 1);
    const std::size_t b = slot & (head_.size() - 1);
    wake_[id] = slot;
    next_[id] = head_[b];
    head_[b] = id;
    ++size_;
  }

  // Earliest pending slot. Requires !empty().
  SlotIndex front() noexcept {
    while (head_[base_ & (head_.size() - 1)] == kNil) ++base_;
    return base_;
  }

  // Removes every station waking at front(), appending them in id order.
  void pop_front(std::vector<StationId>& out) {
    const SlotIndex slot = front();
    StationId& head = head_[slot & (head_.size() - 1)];
    const std::size_t first = out.size();
    for (StationId id = head; id != kNil; id = next_[id]) out.push_back(id);
    head = kNil;
    size_ -= out.size() - first;
    std::sort(out.begin() + static_cast<std::ptrdiff_t>(first), out.end());
    base_ = slot + 1;
  }

 private:
  void grow(SlotIndex span) {
    std::size_t size = head_.size();
    while (size < 2 * span) size *= 2;
    std::vector<StationId> old(size, kNil);
    old.swap(head_);
    for (StationId bucket : old) {
      for (StationId id = bucket; id != kNil;) {
        const StationId following = next_[id];
        const std::size_t b = wake_[id] & (head_.size() - 1);
        next_[id] = head_[b];
        head_[b] = id;
        id = following;
      }
    }
  }

  std::vector<StationId> next_;
  std::vector<SlotIndex> wake_;
  std::vector<StationId> head_;
  SlotIndex base_ = 0;
  std::size_t size_ = 0;
};

}  // namespace detail

/// Runs one trial, streaming every slot into `sink`. Returns the trial's
/// RunStats, or nullopt if the sink stopped it early.
template <SlotSink Sink>
std::optional<RunStats> simulate(const TrialConfig& config, Sink& sink) {
  check(config);
  const std::uint32_t n = config.n;
  const std::uint64_t limit = config.slot_limit();

  std::vector<StationPolicy> stations;
  stations.reserve(n);
  for (StationId id = 0; id < n; ++id) {
    stations.push_back(make_policy(config.policy, Rng(derive_seed(config.seed, id))));
  }

  RunStats stats;
  stats.n = n;
  stats.per_station_ack_timeouts.assign(n, 0);
  stats.completion_slots.reserve(n);

  auto runaway = [&] {
    return RunawayTrial("runaway trial: " + to_string(config.policy) + " with n=" +
                        std::to_string(n) + " exceeded " + std::to_string(limit) + " slots");
  };

  // A station that cannot act before the limit cannot finish before it.
  detail::WakeQueue queue(n);
  for (StationId id = 0; id < n; ++id) {
    const SlotIndex wake = stations[id].next_wake();
    if (wake >= limit) throw runaway();
    queue.push(wake, id);
  }

  std::vector<StationId> woken;
  std::vector<std::uint8_t> woken_sent;
  std::vector<StationId> transmitters;
  std::vector<StationId> probes;
  SlotIndex next_slot = 0;
  std::uint32_t remaining = n;

  while (remaining > 0) {
    const SlotIndex slot = queue.front();
    if (slot > next_slot) {
      stats.cw_slots += slot - next_slot;
      if (!sink.on_empty_run(next_slot, slot - next_slot)) return std::nullopt;
    }

    woken.clear();
    woken_sent.clear();
    transmitters.clear();
    probes.clear();
    queue.pop_front(woken);

    bool any_estimating = false;
    for (StationId id : woken) {
      StationPolicy& station = stations[id];
      const bool estimating = station.estimating();
      any_estimating |= estimating;
      const bool sends = station.step(slot) == StationAction::Transmit;
      woken_sent.push_back(sends);
      if (sends) {
        transmitters.push_back(id);
        if (estimating) probes.push_back(id);
      }
    }

    const SlotOutcome outcome = classify(transmitters);
    const bool data_sent = transmitters.size() > probes.size();
    const PhaseTag phase =
        any_estimating && !data_sent ? PhaseTag::Estimation : PhaseTag::ContentionWindow;

    if (phase == PhaseTag::Estimation) {
      ++stats.estimation_slots;
    } else {
      ++stats.cw_slots;
      if (outcome.is_success()) {
        stats.completion_slots.push_back(slot);
        --remaining;
      } else if (outcome.is_collision()) {
        ++stats.disjoint_collisions;
        for (std::size_t i = 0; i < transmitters.size(); ++i) {
          const StationId id = transmitters[i];
          if (!std::binary_search(probes.begin(), probes.end(), id)) {
            ++stats.per_station_ack_timeouts[id];
          }
        }
      }
    }

    const ChannelState channel = transmitters.empty() ? ChannelState::Clear : ChannelState::Busy;
    for (std::size_t i = 0; i < woken.size(); ++i) {
      const StationId id = woken[i];
      SlotFeedback fb{OwnOutcome::NotSent, channel};
      if (woken_sent[i]) fb.own_outcome = outcome.is_success() ? OwnOutcome::Success : OwnOutcome::Collision;
      StationPolicy& station = stations[id];
      station.feedback(slot, fb);
      if (station.done()) continue;
      const SlotIndex wake = station.next_wake();
      if (wake <= slot) throw PolicyContractError("station asked to wake in the past");
      if (wake >= limit) throw runaway();
      queue.push(wake, id);
    }

    next_slot = slot + 1;
    const SlotView view{slot, phase, transmitters, probes, outcome};
    if (!sink.on_slot(view)) return std::nullopt;
  }

  stats.half_done_slot = stats.completion_slots[(n + 1) / 2 - 1];
  if (config.policy.algorithm == Algorithm::BestOfK) {
    std::vector<std::uint64_t> estimates;
    estimates.reserve(n);
    for (const auto& s : stations) estimates.push_back(s.estimate().value_or(0));
    stats.estimates = std::move(estimates);
  }
  return stats;
}

inline RunStats simulate(const TrialConfig& config) {
  NullSink sink;
  return *simulate(config, sink);
}

// -------------------------------------------------------------------------
// Full traces.
// -------------------------------------------------------------------------
struct Trace {
  std::vector<SlotRecord> records;
  RunStats stats;

  friend bool operator==(const Trace&, const Trace&) = default;
};

class TraceRecorder {
 public:
  explicit TraceRecorder(std::vector<SlotRecord>& out) : out_(out) {}

  bool on_slot(const SlotView& v) {
    SlotRecord r;
    r.slot_index = v.slot;
    r.transmitters.assign(v.transmitters.begin(), v.transmitters.end());
    r.probes.assign(v.probes.begin(), v.probes.end());
    r.outcome = v.outcome;
    r.phase_tag = v.phase;
    out_.push_back(std::move(r));
    return true;
  }

  bool on_empty_run(SlotIndex first, std::uint64_t count) {
    for (std::uint64_t i = 0; i < count; ++i) {
      SlotRecord r;
      r.slot_index = first + i;
      out_.push_back(std::move(r));
    }
    return true;
  }

 private:
  std::vector<SlotRecord>& out_;
};

inline Trace run_trial(const TrialConfig& config) {
  Trace trace;
  TraceRecorder recorder(trace.records);
  trace.stats = *simulate(config, recorder);
  return trace;
}

/// Recomputes RunStats from the slot records alone. `n` and any Best-of-k
/// estimates are taken from trace.stats since records cannot carry them.
inline RunStats count_metrics(const Trace& trace) {
  RunStats s;
  s.n = trace.stats.n;
  s.per_station_ack_timeouts.assign(s.n, 0);
  for (const SlotRecord& r : trace.records) {
    if (r.phase_tag == PhaseTag::Estimation) {
      ++s.estimation_slots;
      continue;
    }
    ++s.cw_slots;
    if (r.outcome.is_success()) {
      s.completion_slots.push_back(r.slot_index);
    } else if (r.outcome.is_collision()) {
      ++s.disjoint_collisions;
      for (StationId id : r.transmitters) {
        if (std::find(r.probes.begin(), r.probes.end(), id) == r.probes.end()) {
          ++s.per_station_ack_timeouts.at(id);
        }
      }
    }
  }
  if (!s.completion_slots.empty() && s.n > 0) {
    s.half_done_slot = s.completion_slots.at((s.n + 1) / 2 - 1);
  }
  s.estimates = trace.stats.estimates;
  return s;
}

/// Slot at which the ceil(n/2)-th packet succeeded.
inline SlotIndex run_half(const TrialConfig& config) { return simulate(config).half_done_slot; }

// -------------------------------------------------------------------------
// Trace file: one JSON SlotRecord per line in slot order, then a final
// line {"run_stats": {...}}.
// -------------------------------------------------------------------------
inline void write_trace(std::ostream& os, const Trace& trace) {
  for (const SlotRecord& r : trace.records) os << json(r).dump() << '\n';
  os << json{{"run_stats", trace.stats}}.dump() << '\n';
}

inline Trace read_trace(std::istream& is) {
  Trace trace;
  bool have_stats = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (have_stats) throw std::invalid_argument("trace: records after run_stats line");
    const json j = json::parse(line);
    if (j.contains("run_stats")) {
      trace.stats = j.at("run_stats").get<RunStats>();
      have_stats = true;
      continue;
    }
    auto r = j.get<SlotRecord>();
    if (r.slot_index != trace.records.size()) {
      throw std::invalid_argument("trace: non-contiguous slot index at line " + std::to_string(line_no));
    }
    trace.records.push_back(std::move(r));
  }
  if (!have_stats) throw std::invalid_argument("trace: missing run_stats line");
  return trace;
}

}  // namespace backoff
