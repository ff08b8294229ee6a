#pragma once

// Per-station backoff automata. Every policy answers two questions for the
// engine: what do I do in slot t (step), and what did I learn (feedback).
// A policy also reports the next slot at which it needs to be stepped, so
// the engine can skip runs of slots in which the station only listens.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "backoff/domain.hpp"
#include "backoff/rng.hpp"

namespace backoff {

// Window growth W <- (1 + r) W with r = 1, 1/lg W or 1/lg lg W.
enum class GrowthRule : std::uint8_t { Double, InverseLog, InverseLogLog };

/// Size of the window that follows a failed window of size `window`.
///
/// Non-integral products round up, which keeps growth strict for W >= 2.
/// Where the rule's denominator is undefined or nonpositive (lg 1 = 0 for
/// LB, lg lg W <= 0 for W <= 2 under LLB) the window doubles instead.
inline std::uint64_t next_window(GrowthRule rule, std::uint64_t window,
                                 std::optional<std::uint64_t> cap = std::nullopt) {
  if (window < 1) throw std::invalid_argument("next_window: window must be >= 1");
  std::uint64_t next = 2 * window;
  const auto w = static_cast<double>(window);
  switch (rule) {
    case GrowthRule::Double: break;
    case GrowthRule::InverseLog: {
      const double lg = std::log2(w);
      if (lg > 0.0) next = window + static_cast<std::uint64_t>(std::ceil(w / lg));
      break;
    }
    case GrowthRule::InverseLogLog: {
      const double lglg = window > 2 ? std::log2(std::log2(w)) : 0.0;
      if (lglg > 0.0) next = window + static_cast<std::uint64_t>(std::ceil(w / lglg));
      break;
    }
  }
  if (cap && next > *cap) next = std::max<std::uint64_t>(*cap, 1);
  return next;
}

namespace detail {

inline bool is_power_of_two(std::uint64_t x) noexcept { return std::has_single_bit(x); }

// floor(lg lg w) for w a power of two >= 4, in exact integer arithmetic.
inline std::uint64_t floor_lglg(std::uint64_t w) noexcept {
  const auto lg = static_cast<std::uint64_t>(std::bit_width(w) - 1);
  return static_cast<std::uint64_t>(std::bit_width(lg) - 1);
}

inline std::uint64_t llb_copies(std::uint64_t w) noexcept {
  return w < 4 ? 1 : std::max<std::uint64_t>(1, floor_lglg(w));
}

}  // namespace detail

/// Sawtooth window sizes: for outer W = 2, 4, ..., up_to_outer the inner
/// "backon" run W, W/2, ..., 2.
inline std::vector<std::uint64_t> stb_schedule(std::uint64_t up_to_outer) {
  if (up_to_outer < 2 || !detail::is_power_of_two(up_to_outer)) {
    throw std::invalid_argument("stb_schedule: outer bound must be a power of two >= 2");
  }
  std::vector<std::uint64_t> out;
  for (std::uint64_t outer = 2; outer <= up_to_outer; outer *= 2) {
    for (std::uint64_t w = outer; w >= 2; w /= 2) out.push_back(w);
  }
  return out;
}

/// Doubling windows 4, 8, ..., up_to where window w is repeated
/// max(1, floor(lg lg w)) times.
inline std::vector<std::uint64_t> llb_repeated_schedule(std::uint64_t up_to) {
  if (up_to < 4 || !detail::is_power_of_two(up_to)) {
    throw std::invalid_argument("llb_repeated_schedule: bound must be a power of two >= 4");
  }
  std::vector<std::uint64_t> out;
  for (std::uint64_t w = 4; w <= up_to; w *= 2) {
    for (std::uint64_t c = 0; c < detail::llb_copies(w); ++c) out.push_back(w);
  }
  return out;
}

// -------------------------------------------------------------------------
// Lazily generated, unbounded window-size sequences.
// -------------------------------------------------------------------------

class GrowthSchedule {
 public:
  explicit GrowthSchedule(GrowthRule rule, std::optional<std::uint64_t> cap = std::nullopt)
      : rule_(rule), cap_(cap) {}
  std::uint64_t current() const noexcept { return window_; }
  void advance() { window_ = next_window(rule_, window_, cap_); }

 private:
  GrowthRule rule_;
  std::optional<std::uint64_t> cap_;
  std::uint64_t window_ = 1;
};

class SawtoothSchedule {
 public:
  explicit SawtoothSchedule(std::optional<std::uint64_t> cap = std::nullopt) : cap_(cap) {}
  std::uint64_t current() const noexcept { return cap_ ? std::min(inner_, *cap_) : inner_; }
  void advance() noexcept {
    inner_ /= 2;
    if (inner_ < 2) {
      outer_ *= 2;
      inner_ = outer_;
    }
  }
  std::uint64_t outer() const noexcept { return outer_; }

 private:
  std::optional<std::uint64_t> cap_;
  std::uint64_t outer_ = 2;
  std::uint64_t inner_ = 2;
};

// 1, 2, then llb_repeated_schedule's doubling-with-repeats from 4 upward.
class RepeatedLogLogSchedule {
 public:
  explicit RepeatedLogLogSchedule(std::optional<std::uint64_t> cap = std::nullopt) : cap_(cap) {}
  std::uint64_t current() const noexcept { return cap_ ? std::min(window_, *cap_) : window_; }
  void advance() noexcept {
    if (--remaining_ == 0) {
      window_ *= 2;
      remaining_ = detail::llb_copies(window_);
    }
  }

 private:
  std::optional<std::uint64_t> cap_;
  std::uint64_t window_ = 1;
  std::uint64_t remaining_ = 1;
};

class FixedSchedule {
 public:
  explicit FixedSchedule(std::uint64_t window) : window_(window) {
    if (window < 1) throw std::invalid_argument("fixed backoff requires W >= 1");
  }
  std::uint64_t current() const noexcept { return window_; }
  void advance() noexcept {}

 private:
  std::uint64_t window_;
};

using WindowSchedule =
    std::variant<GrowthSchedule, SawtoothSchedule, RepeatedLogLogSchedule, FixedSchedule>;

inline WindowSchedule make_schedule(const PolicySpec& spec) {
  switch (spec.algorithm) {
    case Algorithm::BEB: return GrowthSchedule(GrowthRule::Double, spec.window_cap);
    case Algorithm::LB: return GrowthSchedule(GrowthRule::InverseLog, spec.window_cap);
    case Algorithm::LLBMonotone: return GrowthSchedule(GrowthRule::InverseLogLog, spec.window_cap);
    case Algorithm::LLBRepeated: return RepeatedLogLogSchedule(spec.window_cap);
    case Algorithm::STB: return SawtoothSchedule(spec.window_cap);
    case Algorithm::Fixed: return FixedSchedule(spec.parameter);
    case Algorithm::BestOfK: break;
  }
  throw std::invalid_argument("make_schedule: Best-of-k has no static window schedule");
}

class PolicyContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// -------------------------------------------------------------------------
// Windowed backoff: pick one uniform slot per window; on a collision wait
// for the window to end and move to the schedule's next window.
// -------------------------------------------------------------------------
class WindowedBackoff {
 public:
  WindowedBackoff(WindowSchedule schedule, Rng rng, SlotIndex start_slot = 0)
      : schedule_(std::move(schedule)), rng_(rng), window_start_(start_slot) {
    open_window();
  }

  std::uint64_t current_window() const noexcept { return window_; }
  std::uint64_t chosen_slot() const noexcept { return chosen_; }
  SlotIndex window_start() const noexcept { return window_start_; }
  std::uint64_t position_in_window(SlotIndex slot) const noexcept { return slot - window_start_; }
  bool done() const noexcept { return done_; }
  bool estimating() const noexcept { return false; }
  SlotIndex next_wake() const noexcept { return window_start_ + chosen_; }
  const WindowSchedule& schedule() const noexcept { return schedule_; }

  StationAction step(SlotIndex slot) {
    if (done_) throw PolicyContractError("stepped a station that already succeeded");
    if (slot < window_start_ || slot >= window_start_ + window_) {
      throw PolicyContractError("stepped a windowed station outside its current window");
    }
    return position_in_window(slot) == chosen_ ? StationAction::Transmit : StationAction::Listen;
  }

  void feedback(SlotIndex /*slot*/, SlotFeedback fb) {
    switch (fb.own_outcome) {
      case OwnOutcome::Success: done_ = true; break;
      case OwnOutcome::Collision:
        window_start_ += window_;
        std::visit([](auto& s) { s.advance(); }, schedule_);
        open_window();
        break;
      case OwnOutcome::NotSent: break;
    }
  }

 private:
  void open_window() {
    window_ = std::visit([](const auto& s) { return s.current(); }, schedule_);
    chosen_ = rng_.below(window_);
  }

  WindowSchedule schedule_;
  Rng rng_;
  SlotIndex window_start_ = 0;
  std::uint64_t window_ = 1;
  std::uint64_t chosen_ = 0;
  bool done_ = false;
};

// -------------------------------------------------------------------------
// Best-of-k: rounds i = 0..10 of k slots each. In every slot the station
// sends a dummy with probability 2^-i and otherwise senses the channel. If
// more than k/2 of a round's slots sensed clear, the station adopts
// W = 2^i and switches to fixed backoff starting at the next slot.
// -------------------------------------------------------------------------
class BestOfK {
 public:
  static constexpr unsigned kLastRound = 10;

  enum class Phase : std::uint8_t { Estimating, FixedBackoff };

  BestOfK(std::uint64_t k, Rng rng) : k_(k), rng_(rng) {
    if (k < 1) throw std::invalid_argument("best-of-k requires k >= 1");
  }

  Phase phase() const noexcept { return fixed_ ? Phase::FixedBackoff : Phase::Estimating; }
  bool estimating() const noexcept { return !fixed_.has_value(); }
  unsigned round() const noexcept { return round_; }
  std::uint64_t slot_in_round() const noexcept { return slot_in_round_; }
  std::uint64_t clear_count() const noexcept { return clear_count_; }
  std::optional<std::uint64_t> estimate() const noexcept { return estimate_; }
  const std::optional<WindowedBackoff>& fixed_backoff() const noexcept { return fixed_; }

  bool done() const noexcept { return fixed_ && fixed_->done(); }

  SlotIndex next_wake() const noexcept { return fixed_ ? fixed_->next_wake() : next_slot_; }

  StationAction step(SlotIndex slot) {
    if (fixed_) return fixed_->step(slot);
    if (slot != next_slot_) throw PolicyContractError("best-of-k estimation must be stepped every slot");
    sent_dummy_ = rng_.one_in_pow2(round_);
    return sent_dummy_ ? StationAction::Transmit : StationAction::Listen;
  }

  void feedback(SlotIndex slot, SlotFeedback fb) {
    if (fixed_) {
      fixed_->feedback(slot, fb);
      return;
    }
    // A slot in which the station itself sent is busy from its own view.
    if (!sent_dummy_ && fb.channel_state == ChannelState::Clear) ++clear_count_;
    sent_dummy_ = false;
    ++next_slot_;
    if (++slot_in_round_ < k_) return;

    if (2 * clear_count_ > k_) {
      adopt(round_);
    } else if (round_ == kLastRound) {
      adopt(kLastRound);
    } else {
      ++round_;
      slot_in_round_ = 0;
      clear_count_ = 0;
    }
  }

 private:
  void adopt(unsigned exponent) {
    estimate_ = std::uint64_t{1} << exponent;
    fixed_.emplace(FixedSchedule(*estimate_), rng_, next_slot_);
  }

  std::uint64_t k_;
  Rng rng_;
  unsigned round_ = 0;
  std::uint64_t slot_in_round_ = 0;
  std::uint64_t clear_count_ = 0;
  SlotIndex next_slot_ = 0;
  bool sent_dummy_ = false;
  std::optional<std::uint64_t> estimate_;
  std::optional<WindowedBackoff> fixed_;
};

// Type-erased station policy with value semantics.
class StationPolicy {
 public:
  StationPolicy(WindowedBackoff p) : impl_(std::move(p)) {}
  StationPolicy(BestOfK p) : impl_(std::move(p)) {}

  StationAction step(SlotIndex slot) {
    return std::visit([slot](auto& p) { return p.step(slot); }, impl_);
  }
  void feedback(SlotIndex slot, SlotFeedback fb) {
    std::visit([&](auto& p) { p.feedback(slot, fb); }, impl_);
  }
  SlotIndex next_wake() const {
    return std::visit([](const auto& p) { return p.next_wake(); }, impl_);
  }
  bool done() const {
    return std::visit([](const auto& p) { return p.done(); }, impl_);
  }
  // True while a transmission from this station would be a dummy probe.
  bool estimating() const {
    return std::visit([](const auto& p) { return p.estimating(); }, impl_);
  }
  std::optional<std::uint64_t> estimate() const {
    if (const auto* b = std::get_if<BestOfK>(&impl_)) return b->estimate();
    return std::nullopt;
  }

  const std::variant<WindowedBackoff, BestOfK>& get() const noexcept { return impl_; }

 private:
  std::variant<WindowedBackoff, BestOfK> impl_;
};

inline StationPolicy make_policy(const PolicySpec& spec, Rng rng) {
  check(spec);
  if (spec.algorithm == Algorithm::BestOfK) return BestOfK(spec.parameter, rng);
  return WindowedBackoff(make_schedule(spec), rng);
}

}  // namespace backoff
