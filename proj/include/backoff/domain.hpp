#pragma once

// Core vocabulary shared by the policies, the slot engine, the cost model
// and the experiment harness. Everything here is a plain value type.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace backoff {

using StationId = std::uint32_t;
using SlotIndex = std::uint64_t;

// -------------------------------------------------------------------------
// Timing constants of the 802.11g-style channel. Defaults are the values
// the experiments were run with (slot 9 us, SIFS 16, DIFS 34, ACK timeout
// 75, preamble 20, 54 Mbit/s, 64 bytes of per-packet overhead, CW max 1024).
// -------------------------------------------------------------------------
struct TimingParams {
  double slot_us = 9.0;
  double sifs_us = 16.0;
  double difs_us = 34.0;
  double ack_timeout_us = 75.0;
  double preamble_us = 20.0;
  double data_rate_mbps = 54.0;
  std::uint32_t packet_overhead_bytes = 64;
  // Not a measured constant: a 14-byte control frame at 54 Mbit/s, rounded
  // up. Only the detailed cost model's success events use it.
  double ack_duration_us = 24.0;
  // nullopt means unbounded.
  std::optional<std::uint64_t> max_window = 1024;

  /// DCF-mode defaults (window capped at 1024).
  static TimingParams dcf() { return TimingParams{}; }

  /// Abstract-model defaults: same timings, no window cap.
  static TimingParams abstract() {
    TimingParams p;
    p.max_window = std::nullopt;
    return p;
  }

  friend bool operator==(const TimingParams&, const TimingParams&) = default;
};

/// Returns the first violated invariant, or nullopt when `params` is valid.
inline std::optional<std::string> validate(const TimingParams& params) {
  const std::pair<const char*, double> durations[] = {
      {"slot_us", params.slot_us},
      {"sifs_us", params.sifs_us},
      {"difs_us", params.difs_us},
      {"ack_timeout_us", params.ack_timeout_us},
      {"preamble_us", params.preamble_us},
      {"ack_duration_us", params.ack_duration_us},
  };
  for (const auto& [name, value] : durations) {
    if (!(value > 0.0)) return std::string("nonpositive duration: ") + name;
  }
  if (!(params.data_rate_mbps > 0.0)) return std::string("nonpositive data rate: data_rate_mbps");
  if (params.max_window && *params.max_window == 0) {
    return std::string("nonpositive window cap: max_window");
  }
  if (params.sifs_us >= params.difs_us) return std::string("SIFS exceeds DIFS");
  return std::nullopt;
}

// -------------------------------------------------------------------------
// Per-slot station interaction with the channel.
// -------------------------------------------------------------------------
enum class StationAction : std::uint8_t { Listen, Transmit };

enum class OwnOutcome : std::uint8_t { NotSent, Success, Collision };
enum class ChannelState : std::uint8_t { Clear, Busy };

struct SlotFeedback {
  OwnOutcome own_outcome = OwnOutcome::NotSent;
  ChannelState channel_state = ChannelState::Clear;

  friend bool operator==(const SlotFeedback&, const SlotFeedback&) = default;
};

enum class PhaseTag : std::uint8_t { ContentionWindow, Estimation };

struct SlotOutcome {
  enum class Kind : std::uint8_t { Empty, Success, Collision };

  Kind kind = Kind::Empty;
  StationId station = 0;    // meaningful for Success only
  std::uint32_t count = 0;  // number of senders; >= 2 for Collision

  static constexpr SlotOutcome empty() noexcept { return {}; }
  static constexpr SlotOutcome success(StationId id) noexcept { return {Kind::Success, id, 1}; }
  static constexpr SlotOutcome collision(std::uint32_t senders) noexcept {
    return {Kind::Collision, 0, senders};
  }

  bool is_empty() const noexcept { return kind == Kind::Empty; }
  bool is_success() const noexcept { return kind == Kind::Success; }
  bool is_collision() const noexcept { return kind == Kind::Collision; }

  friend bool operator==(const SlotOutcome&, const SlotOutcome&) = default;
};

/// Outcome of a slot as a function of who transmitted in it: nobody is
/// Empty, exactly one sender succeeds, two or more collide.
inline SlotOutcome classify(std::span<const StationId> transmitters) noexcept {
  switch (transmitters.size()) {
    case 0: return SlotOutcome::empty();
    case 1: return SlotOutcome::success(transmitters.front());
    default: return SlotOutcome::collision(static_cast<std::uint32_t>(transmitters.size()));
  }
}

// One channel slot. `transmitters` holds every station whose radio was on
// during the slot, sorted by id. `probes` is the subset that sent a
// size-estimation dummy rather than its data packet; it is empty for every
// policy except Best-of-k.
struct SlotRecord {
  SlotIndex slot_index = 0;
  std::vector<StationId> transmitters;
  std::vector<StationId> probes;
  SlotOutcome outcome;
  PhaseTag phase_tag = PhaseTag::ContentionWindow;

  bool carries_data() const noexcept { return transmitters.size() > probes.size(); }

  friend bool operator==(const SlotRecord&, const SlotRecord&) = default;
};

inline SlotRecord make_record(SlotIndex slot, std::vector<StationId> transmitters,
                              PhaseTag phase = PhaseTag::ContentionWindow,
                              std::vector<StationId> probes = {}) {
  std::sort(transmitters.begin(), transmitters.end());
  std::sort(probes.begin(), probes.end());
  SlotRecord r;
  r.slot_index = slot;
  r.outcome = classify(transmitters);
  r.transmitters = std::move(transmitters);
  r.probes = std::move(probes);
  r.phase_tag = phase;
  return r;
}

// Per-trial aggregate.
struct RunStats {
  std::uint32_t n = 0;
  std::uint64_t cw_slots = 0;             // W_A
  std::uint64_t disjoint_collisions = 0;  // C_A
  std::vector<std::uint32_t> per_station_ack_timeouts;
  std::vector<SlotIndex> completion_slots;  // k-th entry: slot of the k-th success
  SlotIndex half_done_slot = 0;
  std::uint64_t estimation_slots = 0;
  std::optional<std::vector<std::uint64_t>> estimates;

  std::uint32_t max_ack_timeouts() const noexcept {
    return per_station_ack_timeouts.empty()
               ? 0
               : *std::max_element(per_station_ack_timeouts.begin(),
                                   per_station_ack_timeouts.end());
  }

  friend bool operator==(const RunStats&, const RunStats&) = default;
};

// -------------------------------------------------------------------------
// Which backoff algorithm a station runs.
// -------------------------------------------------------------------------
enum class Algorithm : std::uint8_t { BEB, LB, LLBMonotone, LLBRepeated, STB, Fixed, BestOfK };

struct PolicySpec {
  Algorithm algorithm = Algorithm::BEB;
  // Window size for Fixed, k for BestOfK; unused otherwise.
  std::uint64_t parameter = 0;
  std::optional<std::uint64_t> window_cap;

  static PolicySpec beb() { return {Algorithm::BEB, 0, std::nullopt}; }
  static PolicySpec lb() { return {Algorithm::LB, 0, std::nullopt}; }
  static PolicySpec llb() { return {Algorithm::LLBMonotone, 0, std::nullopt}; }
  static PolicySpec llb_repeated() { return {Algorithm::LLBRepeated, 0, std::nullopt}; }
  static PolicySpec stb() { return {Algorithm::STB, 0, std::nullopt}; }
  static PolicySpec fixed(std::uint64_t window) { return {Algorithm::Fixed, window, std::nullopt}; }
  static PolicySpec best_of(std::uint64_t k) { return {Algorithm::BestOfK, k, std::nullopt}; }

  PolicySpec with_cap(std::optional<std::uint64_t> cap) const {
    PolicySpec copy = *this;
    copy.window_cap = cap;
    return copy;
  }

  friend bool operator==(const PolicySpec&, const PolicySpec&) = default;
};

class PolicyParseError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void check(const PolicySpec& spec) {
  if (spec.algorithm == Algorithm::Fixed && spec.parameter < 1) {
    throw PolicyParseError("fixed backoff requires W >= 1");
  }
  if (spec.algorithm == Algorithm::BestOfK && spec.parameter < 1) {
    throw PolicyParseError("best-of-k requires k >= 1");
  }
  if (spec.window_cap && *spec.window_cap == 0) {
    throw PolicyParseError("window cap must be positive");
  }
}

/// CLI form: "beb", "lb", "llb", "llb-rep", "stb", "fixed:W", "bestof:k".
inline std::string to_string(const PolicySpec& spec) {
  switch (spec.algorithm) {
    case Algorithm::BEB: return "beb";
    case Algorithm::LB: return "lb";
    case Algorithm::LLBMonotone: return "llb";
    case Algorithm::LLBRepeated: return "llb-rep";
    case Algorithm::STB: return "stb";
    case Algorithm::Fixed: return "fixed:" + std::to_string(spec.parameter);
    case Algorithm::BestOfK: return "bestof:" + std::to_string(spec.parameter);
  }
  return "?";
}

inline PolicySpec parse_policy(std::string_view text) {
  auto parameter_of = [&](std::string_view prefix) -> std::uint64_t {
    const std::string_view digits = text.substr(prefix.size());
    if (digits.empty() || digits.size() > 18 ||
        !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      throw PolicyParseError("bad numeric parameter in policy '" + std::string(text) + "'");
    }
    return std::stoull(std::string(digits));
  };

  PolicySpec spec;
  if (text == "beb") spec = PolicySpec::beb();
  else if (text == "lb") spec = PolicySpec::lb();
  else if (text == "llb") spec = PolicySpec::llb();
  else if (text == "llb-rep") spec = PolicySpec::llb_repeated();
  else if (text == "stb") spec = PolicySpec::stb();
  else if (text.starts_with("fixed:")) spec = PolicySpec::fixed(parameter_of("fixed:"));
  else if (text.starts_with("bestof:")) spec = PolicySpec::best_of(parameter_of("bestof:"));
  else throw PolicyParseError("unknown policy '" + std::string(text) + "'");
  check(spec);
  return spec;
}

// -------------------------------------------------------------------------
// Canonical JSON. Field names follow the struct members one to one.
// -------------------------------------------------------------------------
using nlohmann::json;

inline const char* to_string(PhaseTag tag) {
  return tag == PhaseTag::Estimation ? "Estimation" : "ContentionWindow";
}

inline PhaseTag parse_phase(std::string_view text) {
  if (text == "ContentionWindow") return PhaseTag::ContentionWindow;
  if (text == "Estimation") return PhaseTag::Estimation;
  throw std::invalid_argument("unknown phase tag '" + std::string(text) + "'");
}

inline const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::BEB: return "BEB";
    case Algorithm::LB: return "LB";
    case Algorithm::LLBMonotone: return "LLB_monotone";
    case Algorithm::LLBRepeated: return "LLB_repeated";
    case Algorithm::STB: return "STB";
    case Algorithm::Fixed: return "Fixed";
    case Algorithm::BestOfK: return "BestOfK";
  }
  return "?";
}

inline Algorithm parse_algorithm_name(std::string_view text) {
  for (auto a : {Algorithm::BEB, Algorithm::LB, Algorithm::LLBMonotone, Algorithm::LLBRepeated,
                 Algorithm::STB, Algorithm::Fixed, Algorithm::BestOfK}) {
    if (text == algorithm_name(a)) return a;
  }
  throw PolicyParseError("unknown algorithm '" + std::string(text) + "'");
}

template <typename T>
json optional_to_json(const std::optional<T>& value) {
  return value ? json(*value) : json(nullptr);
}

template <typename T>
std::optional<T> optional_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<T>();
}

inline void to_json(json& j, const TimingParams& p) {
  j = json{{"slot_us", p.slot_us},
           {"sifs_us", p.sifs_us},
           {"difs_us", p.difs_us},
           {"ack_timeout_us", p.ack_timeout_us},
           {"preamble_us", p.preamble_us},
           {"data_rate_mbps", p.data_rate_mbps},
           {"packet_overhead_bytes", p.packet_overhead_bytes},
           {"ack_duration_us", p.ack_duration_us},
           {"max_window", optional_to_json(p.max_window)}};
}

inline void from_json(const json& j, TimingParams& p) {
  j.at("slot_us").get_to(p.slot_us);
  j.at("sifs_us").get_to(p.sifs_us);
  j.at("difs_us").get_to(p.difs_us);
  j.at("ack_timeout_us").get_to(p.ack_timeout_us);
  j.at("preamble_us").get_to(p.preamble_us);
  j.at("data_rate_mbps").get_to(p.data_rate_mbps);
  j.at("packet_overhead_bytes").get_to(p.packet_overhead_bytes);
  j.at("ack_duration_us").get_to(p.ack_duration_us);
  p.max_window = optional_from_json<std::uint64_t>(j.at("max_window"));
}

inline void to_json(json& j, const SlotFeedback& f) {
  static constexpr const char* outcomes[] = {"NotSent", "Success", "Collision"};
  j = json{{"own_outcome", outcomes[static_cast<int>(f.own_outcome)]},
           {"channel_state", f.channel_state == ChannelState::Busy ? "Busy" : "Clear"}};
}

inline void from_json(const json& j, SlotFeedback& f) {
  const auto own = j.at("own_outcome").get<std::string>();
  if (own == "NotSent") f.own_outcome = OwnOutcome::NotSent;
  else if (own == "Success") f.own_outcome = OwnOutcome::Success;
  else if (own == "Collision") f.own_outcome = OwnOutcome::Collision;
  else throw std::invalid_argument("unknown own_outcome '" + own + "'");
  const auto state = j.at("channel_state").get<std::string>();
  if (state != "Clear" && state != "Busy") {
    throw std::invalid_argument("unknown channel_state '" + state + "'");
  }
  f.channel_state = state == "Busy" ? ChannelState::Busy : ChannelState::Clear;
}

inline void to_json(json& j, const SlotOutcome& o) {
  switch (o.kind) {
    case SlotOutcome::Kind::Empty: j = json{{"kind", "Empty"}}; break;
    case SlotOutcome::Kind::Success: j = json{{"kind", "Success"}, {"station", o.station}}; break;
    case SlotOutcome::Kind::Collision: j = json{{"kind", "Collision"}, {"count", o.count}}; break;
  }
}

inline void from_json(const json& j, SlotOutcome& o) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "Empty") o = SlotOutcome::empty();
  else if (kind == "Success") o = SlotOutcome::success(j.at("station").get<StationId>());
  else if (kind == "Collision") o = SlotOutcome::collision(j.at("count").get<std::uint32_t>());
  else throw std::invalid_argument("unknown outcome kind '" + kind + "'");
}

inline void to_json(json& j, const SlotRecord& r) {
  j = json{{"slot_index", r.slot_index},
           {"transmitters", r.transmitters},
           {"outcome", r.outcome},
           {"phase_tag", to_string(r.phase_tag)}};
  if (!r.probes.empty()) j["probes"] = r.probes;
}

inline void from_json(const json& j, SlotRecord& r) {
  j.at("slot_index").get_to(r.slot_index);
  j.at("transmitters").get_to(r.transmitters);
  j.at("outcome").get_to(r.outcome);
  r.phase_tag = parse_phase(j.at("phase_tag").get<std::string>());
  r.probes = j.contains("probes") ? j.at("probes").get<std::vector<StationId>>()
                                  : std::vector<StationId>{};
  if (!(classify(r.transmitters) == r.outcome)) {
    throw std::invalid_argument("slot record outcome disagrees with its transmitter set");
  }
}

inline void to_json(json& j, const RunStats& s) {
  j = json{{"n", s.n},
           {"cw_slots", s.cw_slots},
           {"disjoint_collisions", s.disjoint_collisions},
           {"per_station_ack_timeouts", s.per_station_ack_timeouts},
           {"completion_slots", s.completion_slots},
           {"half_done_slot", s.half_done_slot},
           {"estimation_slots", s.estimation_slots},
           {"estimates", optional_to_json(s.estimates)}};
}

inline void from_json(const json& j, RunStats& s) {
  j.at("n").get_to(s.n);
  j.at("cw_slots").get_to(s.cw_slots);
  j.at("disjoint_collisions").get_to(s.disjoint_collisions);
  j.at("per_station_ack_timeouts").get_to(s.per_station_ack_timeouts);
  j.at("completion_slots").get_to(s.completion_slots);
  j.at("half_done_slot").get_to(s.half_done_slot);
  j.at("estimation_slots").get_to(s.estimation_slots);
  s.estimates = optional_from_json<std::vector<std::uint64_t>>(j.at("estimates"));
}

inline void to_json(json& j, const PolicySpec& p) {
  j = json{{"algorithm", algorithm_name(p.algorithm)}, {"window_cap", optional_to_json(p.window_cap)}};
  if (p.algorithm == Algorithm::Fixed) j["W"] = p.parameter;
  if (p.algorithm == Algorithm::BestOfK) j["k"] = p.parameter;
}

inline void from_json(const json& j, PolicySpec& p) {
  p.algorithm = parse_algorithm_name(j.at("algorithm").get<std::string>());
  p.parameter = 0;
  if (p.algorithm == Algorithm::Fixed) p.parameter = j.at("W").get<std::uint64_t>();
  if (p.algorithm == Algorithm::BestOfK) p.parameter = j.at("k").get<std::uint64_t>();
  p.window_cap = optional_from_json<std::uint64_t>(j.at("window_cap"));
  check(p);
}

}  // namespace backoff
