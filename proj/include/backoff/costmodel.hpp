#pragma once

// Wall-clock cost of a trial. Two views:
//
//  * simple_total_time: C * (P + preamble) + W * slot, where C counts
//    disjoint collisions and W counts contention-window slots. Successful
//    transmissions and inter-frame spaces are left out, so this is a lower
//    bound.
//  * decompose / detailed_total_time: charges every slot record with the
//    DCF events it implies and reports the components separately.
//
// A collision is charged once per slot, however many stations were in it.

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "backoff/domain.hpp"
#include "backoff/engine.hpp"

namespace backoff {

// Duration of one size-estimation round slot (dummy frame plus sensing).
inline constexpr double kEstimationSlotUs = 35.0;
inline constexpr std::uint32_t kMinPayloadBytes = 12;

struct PacketShape {
  std::uint32_t payload_bytes = 64;
  std::uint32_t overhead_bytes = 64;

  std::uint32_t total_bytes() const noexcept { return payload_bytes + overhead_bytes; }

  friend bool operator==(const PacketShape&, const PacketShape&) = default;
};

inline void check(const PacketShape& shape) {
  if (shape.payload_bytes < kMinPayloadBytes) {
    throw std::invalid_argument("payload below the 12-byte minimum");
  }
}

inline PacketShape packet_with_payload(std::uint32_t payload, const TimingParams& params) {
  PacketShape s{payload, params.packet_overhead_bytes};
  check(s);
  return s;
}

/// Air time of the frame body in microseconds, excluding the preamble.
inline double transmission_time(const PacketShape& shape, const TimingParams& params) {
  check(shape);
  if (!(params.data_rate_mbps > 0.0)) throw std::invalid_argument("nonpositive data rate");
  return static_cast<double>(shape.total_bytes()) * 8.0 / params.data_rate_mbps;
}

/// C * (P + preamble) + W * slot. C may be fractional (e.g. an average).
inline double simple_total_time(double collisions, double cw_slots, double packet_us,
                                const TimingParams& params) {
  if (collisions < 0 || cw_slots < 0) throw std::invalid_argument("negative collision or slot count");
  return collisions * (packet_us + params.preamble_us) + cw_slots * params.slot_us;
}

struct CostBreakdown {
  double transmission_time_us = 0;  // (I) failed transmissions
  double ack_timeout_time_us = 0;   // (II)
  double cw_slot_time_us = 0;       // (III) idle contention-window slots
  double success_overhead_us = 0;   // successful frame + SIFS + ACK
  double interframe_time_us = 0;    // DIFS after every transmission event
  double estimation_time_us = 0;
  double total_us = 0;

  double component_sum() const noexcept {
    return transmission_time_us + ack_timeout_time_us + cw_slot_time_us + success_overhead_us +
           interframe_time_us + estimation_time_us;
  }

  friend bool operator==(const CostBreakdown&, const CostBreakdown&) = default;
};

// Per-event charges for one configuration, computed once.
class SlotCharger {
 public:
  SlotCharger(const PacketShape& shape, const TimingParams& params)
      : params_(params), frame_us_(params.preamble_us + transmission_time(shape, params)) {}

  void charge(CostBreakdown& c, PhaseTag phase, const SlotOutcome& outcome) const noexcept {
    if (phase == PhaseTag::Estimation) {
      c.estimation_time_us += kEstimationSlotUs;
      return;
    }
    switch (outcome.kind) {
      case SlotOutcome::Kind::Empty: c.cw_slot_time_us += params_.slot_us; break;
      case SlotOutcome::Kind::Success:
        c.success_overhead_us += frame_us_ + params_.sifs_us + params_.ack_duration_us;
        c.interframe_time_us += params_.difs_us;
        break;
      case SlotOutcome::Kind::Collision:
        c.transmission_time_us += frame_us_;
        c.ack_timeout_time_us += params_.ack_timeout_us;
        c.interframe_time_us += params_.difs_us;
        break;
    }
  }

  void charge_empty(CostBreakdown& c, std::uint64_t count) const noexcept {
    c.cw_slot_time_us += static_cast<double>(count) * params_.slot_us;
  }

 private:
  TimingParams params_;
  double frame_us_;
};

/// Per-component cost of a complete trace.
inline CostBreakdown decompose(const Trace& trace, const PacketShape& shape,
                               const TimingParams& params) {
  const SlotCharger charger(shape, params);
  CostBreakdown c;
  for (const SlotRecord& r : trace.records) charger.charge(c, r.phase_tag, r.outcome);
  c.total_us = c.component_sum();
  return c;
}

/// Event-charged total time; the same charging as decompose().
inline CostBreakdown detailed_total_time(const Trace& trace, const PacketShape& shape,
                                         const TimingParams& params) {
  return decompose(trace, shape, params);
}

// Streaming version for sweeps where keeping the trace is too expensive.
class CostAccumulator {
 public:
  CostAccumulator(const PacketShape& shape, const TimingParams& params) : charger_(shape, params) {}

  bool on_slot(const SlotView& v) {
    charger_.charge(cost_, v.phase, v.outcome);
    return true;
  }
  bool on_empty_run(SlotIndex, std::uint64_t count) {
    charger_.charge_empty(cost_, count);
    return true;
  }

  CostBreakdown result() const {
    CostBreakdown c = cost_;
    c.total_us = c.component_sum();
    return c;
  }

 private:
  SlotCharger charger_;
  CostBreakdown cost_;
};

inline double round_centi(double us) { return std::round(us * 100.0) / 100.0; }

inline void to_json(json& j, const CostBreakdown& c) {
  j = json{{"transmission_time_us", round_centi(c.transmission_time_us)},
           {"ack_timeout_time_us", round_centi(c.ack_timeout_time_us)},
           {"cw_slot_time_us", round_centi(c.cw_slot_time_us)},
           {"success_overhead_us", round_centi(c.success_overhead_us)},
           {"interframe_time_us", round_centi(c.interframe_time_us)},
           {"estimation_time_us", round_centi(c.estimation_time_us)},
           {"total_us", round_centi(c.total_us)}};
}

inline void from_json(const json& j, CostBreakdown& c) {
  j.at("transmission_time_us").get_to(c.transmission_time_us);
  j.at("ack_timeout_time_us").get_to(c.ack_timeout_time_us);
  j.at("cw_slot_time_us").get_to(c.cw_slot_time_us);
  j.at("success_overhead_us").get_to(c.success_overhead_us);
  j.at("interframe_time_us").get_to(c.interframe_time_us);
  j.at("estimation_time_us").get_to(c.estimation_time_us);
  j.at("total_us").get_to(c.total_us);
}

inline void to_json(json& j, const PacketShape& s) {
  j = json{{"payload_bytes", s.payload_bytes}, {"overhead_bytes", s.overhead_bytes}};
}

inline void from_json(const json& j, PacketShape& s) {
  j.at("payload_bytes").get_to(s.payload_bytes);
  j.at("overhead_bytes").get_to(s.overhead_bytes);
  check(s);
}

}  // namespace backoff
