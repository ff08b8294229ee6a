#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "backoff/policies.hpp"

using namespace backoff;

namespace {

// Window sizes a schedule yields over `count` collisions.
template <typename Schedule>
std::vector<std::uint64_t> take(Schedule s, std::size_t count) {
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(s.current());
    s.advance();
  }
  return out;
}

const SlotFeedback kCollided{OwnOutcome::Collision, ChannelState::Busy};
const SlotFeedback kSucceeded{OwnOutcome::Success, ChannelState::Busy};

}  // namespace

TEST_CASE("next_window examples", "[policies]") {
  CHECK(next_window(GrowthRule::Double, 16) == 32);
  CHECK(next_window(GrowthRule::InverseLog, 16) == 20);
  CHECK(next_window(GrowthRule::InverseLogLog, 16) == 24);
  CHECK(next_window(GrowthRule::InverseLog, 1) == 2);
  CHECK(next_window(GrowthRule::InverseLogLog, 1) == 2);
  CHECK(next_window(GrowthRule::InverseLogLog, 2) == 4);
  CHECK(next_window(GrowthRule::Double, 700, 1024) == 1024);
  CHECK_THROWS_AS(next_window(GrowthRule::Double, 0), std::invalid_argument);
}

TEST_CASE("growth rates are ordered BEB >= LLB >= LB for W >= 4", "[policies][property]") {
  for (std::uint64_t w = 4; w <= 200000; w += (w < 4096 ? 1 : 97)) {
    const auto beb = next_window(GrowthRule::Double, w);
    const auto llb = next_window(GrowthRule::InverseLogLog, w);
    const auto lb = next_window(GrowthRule::InverseLog, w);
    INFO("W = " << w);
    REQUIRE(beb >= llb);
    REQUIRE(llb >= lb);
  }
}

TEST_CASE("monotone schedules grow strictly until the cap", "[policies][property]") {
  for (GrowthRule rule : {GrowthRule::Double, GrowthRule::InverseLog, GrowthRule::InverseLogLog}) {
    const auto seq = take(GrowthSchedule(rule, 1024), 200);
    CHECK(seq.front() == 1);
    std::size_t i = 1;
    for (; i < seq.size() && seq[i - 1] < 1024; ++i) REQUIRE(seq[i] > seq[i - 1]);
    for (; i < seq.size(); ++i) REQUIRE(seq[i] == 1024);
  }
  const auto beb = take(GrowthSchedule(GrowthRule::Double), 20);
  for (std::size_t i = 0; i < beb.size(); ++i) CHECK(beb[i] == (std::uint64_t{1} << i));
}

TEST_CASE("stb_schedule examples", "[policies]") {
  CHECK(stb_schedule(8) == std::vector<std::uint64_t>{2, 4, 2, 8, 4, 2});
  CHECK(stb_schedule(2) == std::vector<std::uint64_t>{2});
  CHECK_THROWS_AS(stb_schedule(6), std::invalid_argument);
  CHECK_THROWS_AS(stb_schedule(1), std::invalid_argument);
}

TEST_CASE("stb total slots closed form matches enumeration", "[policies]") {
  for (int m = 1; m <= 24; ++m) {
    std::uint64_t sum = 0;
    for (auto w : stb_schedule(std::uint64_t{1} << m)) sum += w;
    const std::int64_t closed = (std::int64_t{1} << (m + 2)) - 2 * m - 4;
    CHECK(static_cast<std::int64_t>(sum) == closed);
  }
}

TEST_CASE("sawtooth policy follows stb_schedule and is not monotone", "[policies]") {
  const auto expected = stb_schedule(std::uint64_t{1} << 12);
  CHECK(take(SawtoothSchedule(), expected.size()) == expected);
  const auto seq = take(SawtoothSchedule(), 10);
  CHECK_FALSE(std::is_sorted(seq.begin(), seq.end()));
}

TEST_CASE("llb_repeated_schedule examples", "[policies]") {
  CHECK(llb_repeated_schedule(16) == std::vector<std::uint64_t>{4, 8, 16, 16});
  CHECK(llb_repeated_schedule(4) == std::vector<std::uint64_t>{4});
  const auto big = llb_repeated_schedule(65536);
  REQUIRE(big.size() >= 4);
  CHECK(std::count(big.begin(), big.end(), 65536u) == 4);
  CHECK(big.back() == 65536);
  CHECK(big[big.size() - 5] == 32768);
}

TEST_CASE("repeated-window LLB policy prepends windows 1 and 2", "[policies]") {
  const auto tail = llb_repeated_schedule(1024);
  auto seq = take(RepeatedLogLogSchedule(), tail.size() + 2);
  CHECK(seq[0] == 1);
  CHECK(seq[1] == 2);
  CHECK(std::vector<std::uint64_t>(seq.begin() + 2, seq.end()) == tail);
}

TEST_CASE("windowed step transmits exactly at the chosen slot", "[policies]") {
  // Find a generator whose first draw in a window of 8 is slot 3.
  std::uint64_t seed = 0;
  while (WindowedBackoff(FixedSchedule(8), Rng(seed)).chosen_slot() != 3) ++seed;
  WindowedBackoff p(FixedSchedule(8), Rng(seed));
  CHECK(p.step(3) == StationAction::Transmit);
  CHECK(p.step(1) == StationAction::Listen);
  CHECK(p.next_wake() == 3);
  p.feedback(3, kSucceeded);
  CHECK(p.done());
  CHECK_THROWS_AS(p.step(4), PolicyContractError);
}

TEST_CASE("windowed step outside the window is a contract error", "[policies]") {
  WindowedBackoff p(FixedSchedule(4), Rng(1));
  CHECK_THROWS_AS(p.step(4), PolicyContractError);
}

TEST_CASE("BEB windows start at 2^j - 1", "[policies]") {
  WindowedBackoff p(GrowthSchedule(GrowthRule::Double), Rng(5));
  for (int j = 0; j < 20; ++j) {
    CHECK(p.window_start() == (std::uint64_t{1} << j) - 1);
    CHECK(p.current_window() == std::uint64_t{1} << j);
    CHECK(p.chosen_slot() < p.current_window());
    p.feedback(p.next_wake(), kCollided);
  }
}

TEST_CASE("chosen slots are uniform within a window", "[policies][property]") {
  const int draws = 40000;
  std::vector<double> counts(8, 0.0);
  for (int i = 0; i < draws; ++i) {
    WindowedBackoff p(FixedSchedule(8), Rng(derive_seed(99, static_cast<std::uint64_t>(i))));
    counts[p.chosen_slot()] += 1;
  }
  double chi2 = 0;
  const double expected = draws / 8.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  const double critical = boost::math::quantile(boost::math::chi_squared(7), 0.99);
  CHECK(chi2 < critical);
}

namespace {

// Feeds one estimation round of k slots. `clear_budget` of the slots in
// which the station listened are reported Clear, the rest Busy.
void feed_round(BestOfK& b, std::uint64_t k, SlotIndex& slot, int clear_budget) {
  for (std::uint64_t i = 0; i < k; ++i, ++slot) {
    const bool sent = b.step(slot) == StationAction::Transmit;
    const bool clear = !sent && clear_budget > 0;
    if (clear) --clear_budget;
    b.feedback(slot, {OwnOutcome::NotSent, clear ? ChannelState::Clear : ChannelState::Busy});
  }
}

// A k = 5 station past round 0 whose round-1 draws leave at least three
// listening slots.
BestOfK station_in_round_one(SlotIndex& slot) {
  for (std::uint64_t seed = 0;; ++seed) {
    BestOfK b(5, Rng(seed));
    slot = 0;
    feed_round(b, 5, slot, 5);
    BestOfK dry_run = b;  // same generator state, so the same draws
    int listens = 0;
    for (SlotIndex s = slot; s < slot + 5; ++s) {
      listens += dry_run.step(s) == StationAction::Listen;
      dry_run.feedback(s, {OwnOutcome::NotSent, ChannelState::Busy});
    }
    if (listens >= 3) return b;
  }
}

}  // namespace

TEST_CASE("best-of-k round 0 always transmits", "[policies]") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    BestOfK b(5, Rng(seed));
    SlotIndex slot = 0;
    for (int i = 0; i < 5; ++i, ++slot) {
      REQUIRE(b.step(slot) == StationAction::Transmit);
      b.feedback(slot, {OwnOutcome::NotSent, ChannelState::Clear});
    }
    // Its own dummies made every round-0 slot busy.
    CHECK(b.round() == 1);
    CHECK(b.estimating());
  }
}

TEST_CASE("best-of-k with k = 5: three clear slots set the estimate", "[policies]") {
  SlotIndex slot = 0;
  BestOfK b = station_in_round_one(slot);
  REQUIRE(b.round() == 1);
  feed_round(b, 5, slot, 3);
  REQUIRE(b.estimate());
  CHECK(*b.estimate() == 2);
  CHECK(b.phase() == BestOfK::Phase::FixedBackoff);
  CHECK(b.next_wake() >= slot);
  CHECK(b.next_wake() < slot + 2);
}

TEST_CASE("best-of-k with k = 5: two clear slots advance the round", "[policies]") {
  SlotIndex slot = 0;
  BestOfK b = station_in_round_one(slot);
  feed_round(b, 5, slot, 2);
  CHECK_FALSE(b.estimate());
  CHECK(b.round() == 2);
  CHECK(b.slot_in_round() == 0);
}

TEST_CASE("best-of-k falls back to 2^10 when the channel never clears", "[policies]") {
  BestOfK b(3, Rng(4));
  SlotIndex slot = 0;
  for (unsigned r = 0; r <= BestOfK::kLastRound; ++r) feed_round(b, 3, slot, 0);
  REQUIRE(b.estimate());
  CHECK(*b.estimate() == 1024);
  CHECK(slot == 33);
}

TEST_CASE("best-of-k estimates are powers of two in [1, 1024]", "[policies][property]") {
  Rng env(3);
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const std::uint64_t k = 1 + env.below(7);
    BestOfK b(k, Rng(seed));
    SlotIndex slot = 0;
    int phase_changes = 0;
    bool was_estimating = true;
    while (b.estimating()) {
      const bool sent = b.step(slot) == StationAction::Transmit;
      const ChannelState state = !sent && env.below(3) == 0 ? ChannelState::Clear : ChannelState::Busy;
      b.feedback(slot++, {OwnOutcome::NotSent, state});
      phase_changes += was_estimating != b.estimating();
      was_estimating = b.estimating();
    }
    CHECK(phase_changes == 1);
    REQUIRE(b.estimate());
    CHECK(std::has_single_bit(*b.estimate()));
    CHECK(*b.estimate() >= 1);
    CHECK(*b.estimate() <= 1024);
  }
}
