#include <catch2/catch_amalgamated.hpp>

#include <cstdint>

#include "backoff/costmodel.hpp"
#include "backoff/engine.hpp"

using namespace backoff;
using Catch::Matchers::WithinAbs;

namespace {

Trace trace_of(std::vector<SlotRecord> records, std::uint32_t n) {
  Trace t;
  t.records = std::move(records);
  t.stats.n = n;
  t.stats = count_metrics(t);
  return t;
}

const PacketShape k64{64, 64};

}  // namespace

TEST_CASE("frame air time", "[costmodel]") {
  const TimingParams p;
  CHECK_THAT(transmission_time(PacketShape{64, 64}, p), WithinAbs(18.96, 0.005));
  CHECK_THAT(transmission_time(PacketShape{1024, 64}, p), WithinAbs(161.2, 0.05));
  CHECK_THROWS_AS(transmission_time(PacketShape{11, 64}, p), std::invalid_argument);
  CHECK_NOTHROW(packet_with_payload(12, p));
}

TEST_CASE("simple total time examples", "[costmodel]") {
  const TimingParams p;
  CHECK_THAT(simple_total_time(337.5, 0, 19.0, p), WithinAbs(13162.5, 1e-9));
  CHECK(simple_total_time(0, 886, 19.0, p) == 7974.0);
  CHECK(simple_total_time(0, 0, 19.0, p) == 0.0);
}

TEST_CASE("a lone success costs one full exchange", "[costmodel]") {
  const TimingParams p;
  const Trace t = trace_of({make_record(0, {0})}, 1);
  const CostBreakdown c = detailed_total_time(t, k64, p);
  // preamble + frame + SIFS + ACK + DIFS
  const double hand = 20.0 + 128 * 8 / 54.0 + 16.0 + 24.0 + 34.0;
  CHECK_THAT(c.total_us, WithinAbs(hand, 1e-9));
  CHECK_THAT(c.total_us, WithinAbs(112.96, 0.005));
  CHECK(c.transmission_time_us == 0);
  CHECK(c.ack_timeout_time_us == 0);
}

TEST_CASE("two collisions then a success", "[costmodel]") {
  const TimingParams p;
  const Trace t = trace_of({make_record(0, {0, 1}), make_record(1, {0, 1}), make_record(2, {0})}, 2);
  const CostBreakdown c = detailed_total_time(t, k64, p);
  const double frame = 20.0 + 128 * 8 / 54.0;
  CHECK_THAT(c.transmission_time_us, WithinAbs(2 * frame, 1e-9));
  CHECK_THAT(c.success_overhead_us, WithinAbs(frame + 16.0 + 24.0, 1e-9));
  CHECK_THAT(c.ack_timeout_time_us, WithinAbs(150.0, 1e-9));
}

TEST_CASE("decompose charges a collision once", "[costmodel]") {
  const TimingParams p;
  const CostBreakdown c = decompose(trace_of({make_record(0, {0, 1}), make_record(1, {1}), make_record(2, {0})}, 2),
                                    k64, p);
  CHECK_THAT(c.transmission_time_us, WithinAbs(38.96, 0.005));
  CHECK(c.ack_timeout_time_us == 75.0);
  CHECK_THAT(c.total_us, WithinAbs(c.component_sum(), 1e-9));

  const CostBreakdown clean = decompose(trace_of({make_record(0, {}), make_record(1, {0})}, 1), k64, p);
  CHECK(clean.transmission_time_us == 0);
  CHECK(clean.ack_timeout_time_us == 0);
  CHECK(clean.cw_slot_time_us == 9.0);
}

TEST_CASE("estimation slots are charged separately", "[costmodel]") {
  const TimingParams p;
  const Trace t = trace_of({make_record(0, {0, 1}, PhaseTag::Estimation, {0, 1}),
                            make_record(1, {}, PhaseTag::Estimation), make_record(2, {1}), make_record(3, {0})},
                           2);
  const CostBreakdown c = decompose(t, k64, p);
  CHECK(c.estimation_time_us == 2 * kEstimationSlotUs);
  CHECK(c.transmission_time_us == 0);
  CHECK(c.ack_timeout_time_us == 0);
}

TEST_CASE("detailed total time never undercuts the simple bound", "[costmodel][property]") {
  Rng env(21);
  const PolicySpec policies[] = {PolicySpec::beb(), PolicySpec::lb(), PolicySpec::llb(), PolicySpec::stb()};
  for (int iter = 0; iter < 60; ++iter) {
    TimingParams p;
    p.slot_us = 1 + env.below(20);
    p.difs_us = p.slot_us + env.below(40);
    p.sifs_us = p.difs_us * (0.1 + 0.8 * env.uniform01());
    p.ack_timeout_us = 1 + env.below(100);
    p.ack_duration_us = 1 + env.below(40);
    p.preamble_us = 1 + env.below(30);
    REQUIRE_FALSE(validate(p));
    const PacketShape shape{static_cast<std::uint32_t>(12 + env.below(1500)), 64};
    const auto n = static_cast<std::uint32_t>(1 + env.below(120));
    const Trace t = run_trial(TrialConfig{n, policies[iter % 4], env(), std::nullopt});
    const double detailed = detailed_total_time(t, shape, p).total_us;
    const double simple = simple_total_time(static_cast<double>(t.stats.disjoint_collisions),
                                            static_cast<double>(t.stats.cw_slots),
                                            transmission_time(shape, p), p);
    CHECK(detailed >= simple);
  }
}

TEST_CASE("one more collision adds exactly preamble, frame, ACK timeout and DIFS", "[costmodel][property]") {
  const TimingParams p;
  Trace t = run_trial(TrialConfig{50, PolicySpec::beb(), 6, std::nullopt});
  const double before = decompose(t, k64, p).total_us;
  t.records.push_back(make_record(t.records.size(), {3, 4}));
  const double after = decompose(t, k64, p).total_us;
  CHECK_THAT(after - before, WithinAbs(20.0 + transmission_time(k64, p) + 75.0 + 34.0, 1e-6));
}

TEST_CASE("payload size only moves transmission-dependent components", "[costmodel][property]") {
  const TimingParams p;
  const Trace t = run_trial(TrialConfig{100, PolicySpec::stb(), 12, std::nullopt});
  for (std::uint32_t payload : {12u, 64u, 500u}) {
    const CostBreakdown a = decompose(t, PacketShape{payload, 64}, p);
    const CostBreakdown b = decompose(t, PacketShape{2 * payload, 64}, p);
    CHECK(a.cw_slot_time_us == b.cw_slot_time_us);
    CHECK(a.ack_timeout_time_us == b.ack_timeout_time_us);
    CHECK(a.interframe_time_us == b.interframe_time_us);
    CHECK(b.transmission_time_us > a.transmission_time_us);
    CHECK(b.success_overhead_us > a.success_overhead_us);
  }
}

TEST_CASE("simple model slope in payload bytes is 8 / rate per collision", "[costmodel]") {
  const TimingParams p;
  for (std::uint32_t payload : {12u, 64u, 1024u}) {
    const double t0 = simple_total_time(1, 0, transmission_time(PacketShape{payload, 64}, p), p);
    const double t1 = simple_total_time(1, 0, transmission_time(PacketShape{payload + 1, 64}, p), p);
    CHECK_THAT(t1 - t0, WithinAbs(8.0 / 54.0, 1e-9));
  }
}

TEST_CASE("streaming accumulator equals decompose on the full trace", "[costmodel]") {
  const TimingParams p;
  for (const auto& policy : {PolicySpec::beb(), PolicySpec::stb(), PolicySpec::best_of(5)}) {
    const TrialConfig c{150, policy, 31, std::nullopt};
    CostAccumulator acc(k64, p);
    simulate(c, acc);
    const CostBreakdown streamed = acc.result();
    const CostBreakdown full = decompose(run_trial(c), k64, p);
    CHECK_THAT(streamed.total_us, WithinAbs(full.total_us, 1e-6));
    CHECK_THAT(streamed.cw_slot_time_us, WithinAbs(full.cw_slot_time_us, 1e-6));
    CHECK(streamed.estimation_time_us == full.estimation_time_us);
  }
}

TEST_CASE("cost breakdown JSON round-trip at centi-microsecond resolution", "[costmodel]") {
  const CostBreakdown c = decompose(run_trial(TrialConfig{20, PolicySpec::lb(), 2, std::nullopt}), k64, TimingParams{});
  const CostBreakdown back = json::parse(json(c).dump()).get<CostBreakdown>();
  CHECK_THAT(back.total_us, WithinAbs(c.total_us, 0.005));
  CHECK(json(back) == json(c));
}
