#pragma once

// Seeded trial batteries over (n, policy) grids.
//
// Trials fan out to a worker pool but every result lands in a slot fixed
// by (n, policy, trial), and all reductions walk that order, so the output
// does not depend on the number of workers.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "backoff/costmodel.hpp"
#include "backoff/domain.hpp"
#include "backoff/engine.hpp"
#include "backoff/rng.hpp"
#include "backoff/stats.hpp"

namespace backoff {

inline constexpr const char* kCodeVersion = "backoff-sim 1.0.0";

enum class Metric : std::uint8_t {
  CwSlots,
  Collisions,
  HalfDoneSlot,
  MaxAckTimeouts,
  EstimationSlots,
  TotalTime,          // detailed cost model
  SimpleTime,         // C * (P + preamble) + W * slot
  TransmissionTime,   // component (I)
  AckTimeoutTime,     // component (II)
  CwSlotTime,         // component (III)
  EstimationTime,
  MedianEstimate,     // per trial, median of the per-station estimates
};

inline constexpr Metric kAllMetrics[] = {
    Metric::CwSlots,        Metric::Collisions,       Metric::HalfDoneSlot,
    Metric::MaxAckTimeouts, Metric::EstimationSlots,  Metric::TotalTime,
    Metric::SimpleTime,     Metric::TransmissionTime, Metric::AckTimeoutTime,
    Metric::CwSlotTime,     Metric::EstimationTime,   Metric::MedianEstimate,
};

inline const char* metric_name(Metric m) {
  switch (m) {
    case Metric::CwSlots: return "cw_slots";
    case Metric::Collisions: return "disjoint_collisions";
    case Metric::HalfDoneSlot: return "half_done_slot";
    case Metric::MaxAckTimeouts: return "max_ack_timeouts";
    case Metric::EstimationSlots: return "estimation_slots";
    case Metric::TotalTime: return "total_time_us";
    case Metric::SimpleTime: return "simple_time_us";
    case Metric::TransmissionTime: return "transmission_time_us";
    case Metric::AckTimeoutTime: return "ack_timeout_time_us";
    case Metric::CwSlotTime: return "cw_slot_time_us";
    case Metric::EstimationTime: return "estimation_time_us";
    case Metric::MedianEstimate: return "median_estimate";
  }
  return "?";
}

inline Metric parse_metric(std::string_view text) {
  for (Metric m : kAllMetrics) {
    if (text == metric_name(m)) return m;
  }
  throw std::invalid_argument("unknown metric '" + std::string(text) + "'");
}

inline bool needs_cost_model(Metric m) {
  switch (m) {
    case Metric::TotalTime:
    case Metric::TransmissionTime:
    case Metric::AckTimeoutTime:
    case Metric::CwSlotTime:
    case Metric::EstimationTime: return true;
    default: return false;
  }
}

struct SweepSpec {
  std::vector<std::uint32_t> n_values;
  std::vector<PolicySpec> policies;
  std::uint32_t trials = 30;
  PacketShape shape;
  TimingParams params{.max_window = std::nullopt};
  std::uint64_t seed = 1;
  std::vector<Metric> metrics = {Metric::CwSlots, Metric::Collisions};
  // 0 means std::thread::hardware_concurrency().
  unsigned workers = 0;
  // Keep per-station Best-of-k estimates in the raw results.
  bool keep_estimates = false;
};

inline void check(const SweepSpec& spec) {
  if (spec.trials < 1) throw std::invalid_argument("sweep needs trials >= 1");
  if (spec.n_values.empty()) throw std::invalid_argument("sweep needs at least one n");
  if (spec.policies.empty()) throw std::invalid_argument("sweep needs at least one policy");
  if (spec.metrics.empty()) throw std::invalid_argument("sweep needs at least one metric");
  for (std::size_t i = 0; i < spec.n_values.size(); ++i) {
    if (spec.n_values[i] < 1) throw std::invalid_argument("sweep n values must be >= 1");
    if (i > 0 && spec.n_values[i] <= spec.n_values[i - 1]) {
      throw std::invalid_argument("sweep n values must be strictly increasing");
    }
  }
  for (const auto& p : spec.policies) check(p);
  check(spec.shape);
  if (auto err = validate(spec.params)) throw std::invalid_argument(*err);
}

// Stable 64-bit tag of a policy's CLI form (FNV-1a).
inline std::uint64_t policy_tag(const PolicySpec& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : to_string(p)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t trial_seed(std::uint64_t root, std::uint32_t n, const PolicySpec& p,
                                std::uint32_t trial) {
  return derive_seed(derive_seed(derive_seed(root, n), policy_tag(p)), trial);
}

// The policy actually simulated: the spec's policy with the timing
// parameters' window cap unless the policy carries its own.
inline PolicySpec effective_policy(const PolicySpec& p, const TimingParams& params) {
  return p.window_cap ? p : p.with_cap(params.max_window);
}

struct TrialResult {
  RunStats stats;  // per-station vectors are dropped for large n
  std::optional<CostBreakdown> cost;
  double simple_time_us = 0;
};

inline double median_of(const std::vector<std::uint64_t>& v) {
  std::vector<double> d(v.begin(), v.end());
  return d.empty() ? 0.0 : median(std::move(d));
}

inline double metric_value(const TrialResult& r, Metric m) {
  const RunStats& s = r.stats;
  auto cost = [&]() -> const CostBreakdown& {
    if (!r.cost) throw std::logic_error("cost metric requested without cost model");
    return *r.cost;
  };
  switch (m) {
    case Metric::CwSlots: return static_cast<double>(s.cw_slots);
    case Metric::Collisions: return static_cast<double>(s.disjoint_collisions);
    case Metric::HalfDoneSlot: return static_cast<double>(s.half_done_slot);
    case Metric::MaxAckTimeouts: return static_cast<double>(s.max_ack_timeouts());
    case Metric::EstimationSlots: return static_cast<double>(s.estimation_slots);
    case Metric::TotalTime: return cost().total_us;
    case Metric::SimpleTime: return r.simple_time_us;
    case Metric::TransmissionTime: return cost().transmission_time_us;
    case Metric::AckTimeoutTime: return cost().ack_timeout_time_us;
    case Metric::CwSlotTime: return cost().cw_slot_time_us;
    case Metric::EstimationTime: return cost().estimation_time_us;
    case Metric::MedianEstimate: return s.estimates ? median_of(*s.estimates) : 0.0;
  }
  return 0.0;
}

struct SweepRow {
  std::uint32_t n = 0;
  std::string policy;
  Metric metric = Metric::CwSlots;
  Summary summary;
};

struct SweepResult {
  SweepSpec spec;
  std::vector<SweepRow> rows;  // (n, policy, metric) order of the spec
  // raw[(n index * policies + policy index) * trials + trial]
  std::vector<TrialResult> raw;

  const SweepRow& row(std::uint32_t n, const PolicySpec& policy, Metric metric) const {
    const std::string name = to_string(policy);
    for (const auto& r : rows) {
      if (r.n == n && r.policy == name && r.metric == metric) return r;
    }
    throw std::out_of_range("no sweep row for n=" + std::to_string(n) + " " + name + " " +
                            metric_name(metric));
  }
  const Summary& summary(std::uint32_t n, const PolicySpec& p, Metric m) const {
    return row(n, p, m).summary;
  }
  double median(std::uint32_t n, const PolicySpec& p, Metric m) const {
    return summary(n, p, m).median;
  }

  std::vector<const TrialResult*> trials(std::uint32_t n, const PolicySpec& policy) const {
    const auto ni = static_cast<std::size_t>(
        std::find(spec.n_values.begin(), spec.n_values.end(), n) - spec.n_values.begin());
    const auto pi = static_cast<std::size_t>(
        std::find(spec.policies.begin(), spec.policies.end(), policy) - spec.policies.begin());
    if (ni == spec.n_values.size() || pi == spec.policies.size()) {
      throw std::out_of_range("no trials for n=" + std::to_string(n) + " " + to_string(policy));
    }
    std::vector<const TrialResult*> out;
    const std::size_t base = (ni * spec.policies.size() + pi) * spec.trials;
    for (std::size_t t = 0; t < spec.trials; ++t) out.push_back(&raw[base + t]);
    return out;
  }
};

class TrialError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline TrialResult run_one(const SweepSpec& spec, std::uint32_t n, const PolicySpec& policy,
                           std::uint32_t trial, bool with_cost) {
  TrialConfig config{n, effective_policy(policy, spec.params), trial_seed(spec.seed, n, policy, trial),
                     std::nullopt};
  TrialResult r;
  if (with_cost) {
    CostAccumulator acc(spec.shape, spec.params);
    r.stats = *simulate(config, acc);
    r.cost = acc.result();
  } else {
    r.stats = simulate(config);
  }
  r.simple_time_us =
      simple_total_time(static_cast<double>(r.stats.disjoint_collisions),
                        static_cast<double>(r.stats.cw_slots),
                        transmission_time(spec.shape, spec.params), spec.params);
  r.stats.per_station_ack_timeouts = {r.stats.max_ack_timeouts()};
  r.stats.completion_slots.clear();
  r.stats.completion_slots.shrink_to_fit();
  if (!spec.keep_estimates && r.stats.estimates) {
    r.stats.estimates = std::vector<std::uint64_t>{static_cast<std::uint64_t>(median_of(*r.stats.estimates))};
  }
  return r;
}

// Runs fn(i) for i in [0, count) on up to `workers` threads. The first
// exception thrown by any task is rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(count, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
  };
  if (workers <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

inline SweepResult run_sweep(const SweepSpec& spec) {
  check(spec);
  const bool with_cost = std::any_of(spec.metrics.begin(), spec.metrics.end(), needs_cost_model);
  const std::size_t per_cell = spec.trials;
  const std::size_t cells = spec.n_values.size() * spec.policies.size();

  SweepResult result;
  result.spec = spec;
  result.raw.resize(cells * per_cell);

  parallel_for(result.raw.size(), spec.workers, [&](std::size_t i) {
    const std::size_t cell = i / per_cell;
    const auto trial = static_cast<std::uint32_t>(i % per_cell);
    const std::uint32_t n = spec.n_values[cell / spec.policies.size()];
    const PolicySpec& policy = spec.policies[cell % spec.policies.size()];
    try {
      result.raw[i] = run_one(spec, n, policy, trial, with_cost);
    } catch (const std::exception& e) {
      throw TrialError("trial " + std::to_string(trial) + " (n=" + std::to_string(n) + ", " +
                       to_string(policy) + "): " + e.what());
    }
  });

  for (std::uint32_t n : spec.n_values) {
    for (const PolicySpec& policy : spec.policies) {
      const auto trials = result.trials(n, policy);
      for (Metric m : spec.metrics) {
        std::vector<double> samples;
        samples.reserve(trials.size());
        for (const TrialResult* t : trials) samples.push_back(metric_value(*t, m));
        const std::uint64_t ci_seed =
            derive_seed(derive_seed(derive_seed(spec.seed ^ 0xC1C1C1C1ULL, n), policy_tag(policy)),
                        static_cast<std::uint64_t>(m));
        result.rows.push_back({n, to_string(policy), m, summarize(samples, ci_seed)});
      }
    }
  }
  return result;
}

// -------------------------------------------------------------------------
// Output files.
// -------------------------------------------------------------------------
inline std::string format_number(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

/// n,policy,metric,median,lo,hi,trials,outliers
inline void write_summary_csv(std::ostream& os, const SweepResult& result) {
  os << "n,policy,metric,median,lo,hi,trials,outliers\n";
  for (const auto& r : result.rows) {
    os << r.n << ',' << r.policy << ',' << metric_name(r.metric) << ','
       << format_number(r.summary.median) << ',' << format_number(r.summary.lo) << ','
       << format_number(r.summary.hi) << ',' << r.summary.trials << ',' << r.summary.outliers
       << '\n';
  }
}

/// Long format, one row per trial and metric: n,policy,trial,metric,value
inline void write_trials_csv(std::ostream& os, const SweepResult& result) {
  os << "n,policy,trial,metric,value\n";
  const auto& spec = result.spec;
  for (std::uint32_t n : spec.n_values) {
    for (const auto& policy : spec.policies) {
      const auto trials = result.trials(n, policy);
      for (std::size_t t = 0; t < trials.size(); ++t) {
        for (Metric m : spec.metrics) {
          os << n << ',' << to_string(policy) << ',' << t << ',' << metric_name(m) << ','
             << format_number(metric_value(*trials[t], m)) << '\n';
        }
      }
    }
  }
}

inline void to_json(json& j, const SweepSpec& s) {
  std::vector<std::string> policies, metrics;
  for (const auto& p : s.policies) policies.push_back(to_string(p));
  for (Metric m : s.metrics) metrics.push_back(metric_name(m));
  j = json{{"n_values", s.n_values}, {"policies", policies}, {"trials", s.trials},
           {"shape", s.shape},       {"params", s.params},     {"seed", s.seed},
           {"metrics", metrics}};
}

inline void from_json(const json& j, SweepSpec& s) {
  j.at("n_values").get_to(s.n_values);
  s.policies.clear();
  for (const auto& p : j.at("policies")) s.policies.push_back(parse_policy(p.get<std::string>()));
  j.at("trials").get_to(s.trials);
  j.at("shape").get_to(s.shape);
  j.at("params").get_to(s.params);
  j.at("seed").get_to(s.seed);
  s.metrics.clear();
  for (const auto& m : j.at("metrics")) s.metrics.push_back(parse_metric(m.get<std::string>()));
}

/// Full spec, code version and root seed. Worker count is deliberately
/// absent: it does not affect results.
inline json sweep_manifest(const SweepSpec& spec) {
  return json{{"code_version", kCodeVersion}, {"root_seed", spec.seed}, {"sweep", spec}};
}

}  // namespace backoff
