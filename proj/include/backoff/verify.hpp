#pragma once

// Named verification suites. Each check reproduces one experimental claim
// with pinned trial counts and tolerances and reports pass/fail with the
// numbers it saw.
//
//   figures-small  n = 150 magnitudes, orderings, cost arithmetic, oracle
//   claims         collision-growth trends over n = 10^3 .. 10^5
//   figures-large  CW-slot ordering and collision ratios at large n
//   bestofk        size estimation followed by fixed backoff
//   determinism    re-runs suites and sweeps and compares output bytes

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "backoff/costmodel.hpp"
#include "backoff/harness.hpp"
#include "backoff/stats.hpp"

namespace backoff {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  unsigned workers = 0;
  // When set, suites write their sweep CSVs and a checks.csv here.
  std::optional<std::filesystem::path> out_dir;
};

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"figures-small", "claims", "figures-large",
                                                 "bestofk", "determinism", "all"};
  return names;
}

namespace detail {

inline std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace detail

/// Exact distribution of (successes, collisions) in one window of W slots
/// when n stations each pick a slot uniformly: enumerate all W^n choices.
inline std::map<std::pair<int, int>, double> enumerate_first_window(int n, int window) {
  std::map<std::pair<int, int>, double> dist;
  std::vector<int> choice(static_cast<std::size_t>(n), 0);
  const double total = std::pow(static_cast<double>(window), n);
  while (true) {
    std::vector<int> occupancy(static_cast<std::size_t>(window), 0);
    for (int c : choice) ++occupancy[static_cast<std::size_t>(c)];
    int succ = 0, coll = 0;
    for (int o : occupancy) {
      succ += o == 1;
      coll += o >= 2;
    }
    dist[{succ, coll}] += 1.0 / total;
    int i = 0;
    while (i < n && ++choice[static_cast<std::size_t>(i)] == window) choice[static_cast<std::size_t>(i++)] = 0;
    if (i == n) break;
  }
  return dist;
}

// Stops a trial after the first `window` slots and tallies their outcomes.
class FirstWindowTally {
 public:
  explicit FirstWindowTally(std::uint64_t window) : window_(window) {}

  bool on_slot(const SlotView& v) {
    if (v.slot >= window_) return false;
    successes_ += v.outcome.is_success();
    collisions_ += v.outcome.is_collision();
    return v.slot + 1 < window_;
  }
  bool on_empty_run(SlotIndex first, std::uint64_t count) { return first + count < window_; }

  std::pair<int, int> result() const { return {successes_, collisions_}; }

 private:
  std::uint64_t window_;
  int successes_ = 0;
  int collisions_ = 0;
};

inline std::map<std::pair<int, int>, double> sample_first_window(std::uint32_t n, std::uint64_t window,
                                                                 std::uint32_t trials,
                                                                 std::uint64_t seed) {
  std::map<std::pair<int, int>, double> dist;
  for (std::uint32_t t = 0; t < trials; ++t) {
    FirstWindowTally tally(window);
    TrialConfig config{n, PolicySpec::fixed(window), derive_seed(seed, t), std::nullopt};
    simulate(config, tally);
    dist[tally.result()] += 1.0 / trials;
  }
  return dist;
}

inline double total_variation(const std::map<std::pair<int, int>, double>& p,
                              const std::map<std::pair<int, int>, double>& q) {
  double sum = 0;
  for (const auto& [k, v] : p) sum += std::abs(v - (q.contains(k) ? q.at(k) : 0.0));
  for (const auto& [k, v] : q) {
    if (!p.contains(k)) sum += v;
  }
  return sum / 2;
}

// -------------------------------------------------------------------------
// Pinned experiment definitions.
// -------------------------------------------------------------------------
inline constexpr std::uint32_t kSmallN = 150;
inline constexpr std::uint32_t kSmallTrials = 50;
inline constexpr std::uint32_t kTimeTrials = 30;
inline constexpr std::uint32_t kLargeTrials = 50;
inline constexpr std::uint32_t kBestOfTrials = 20;
inline constexpr std::uint32_t kOracleTrials = 100000;

inline const std::vector<std::uint32_t>& large_n_values() {
  static const std::vector<std::uint32_t> v = {1000, 3000, 10000, 30000, 100000};
  return v;
}

inline SweepSpec small_cw_sweep(const VerifyOptions& o) {
  SweepSpec s;
  s.n_values = {kSmallN};
  s.policies = {PolicySpec::beb(), PolicySpec::lb(), PolicySpec::llb(), PolicySpec::stb()};
  s.trials = kSmallTrials;
  s.params = TimingParams::abstract();
  s.seed = o.seed;
  s.metrics = {Metric::CwSlots, Metric::Collisions, Metric::HalfDoneSlot, Metric::MaxAckTimeouts};
  s.workers = o.workers;
  return s;
}

inline SweepSpec total_time_sweep(const VerifyOptions& o, std::uint32_t payload) {
  SweepSpec s;
  s.n_values = {kSmallN};
  s.policies = {PolicySpec::beb(), PolicySpec::llb(), PolicySpec::lb(), PolicySpec::stb()};
  s.trials = kTimeTrials;
  s.params = TimingParams::dcf();
  s.shape = PacketShape{payload, s.params.packet_overhead_bytes};
  s.seed = o.seed;
  s.metrics = {Metric::TotalTime, Metric::TransmissionTime, Metric::AckTimeoutTime,
               Metric::CwSlotTime, Metric::Collisions, Metric::CwSlots};
  s.workers = o.workers;
  return s;
}

inline SweepSpec large_sweep(const VerifyOptions& o) {
  SweepSpec s;
  s.n_values = large_n_values();
  s.policies = {PolicySpec::beb(), PolicySpec::lb(), PolicySpec::llb(), PolicySpec::stb()};
  s.trials = kLargeTrials;
  s.params = TimingParams::abstract();
  s.seed = o.seed;
  s.metrics = {Metric::CwSlots, Metric::Collisions};
  s.workers = o.workers;
  return s;
}

inline SweepSpec bestofk_sweep(const VerifyOptions& o) {
  SweepSpec s;
  s.n_values = {50, 100, 150, 200};
  s.policies = {PolicySpec::beb(), PolicySpec::best_of(3), PolicySpec::best_of(5)};
  s.trials = kBestOfTrials;
  s.params = TimingParams::dcf();
  s.shape = PacketShape{64, s.params.packet_overhead_bytes};
  s.seed = o.seed;
  s.metrics = {Metric::TotalTime, Metric::EstimationTime, Metric::MedianEstimate,
               Metric::Collisions, Metric::CwSlots};
  s.workers = o.workers;
  s.keep_estimates = true;
  return s;
}

// Runs suites and caches the sweeps they share.
class Verifier {
 public:
  explicit Verifier(VerifyOptions options) : opt_(std::move(options)) {}

  std::vector<CheckResult> run(std::string_view suite) {
    std::vector<CheckResult> out;
    auto add = [&](std::vector<CheckResult> more) {
      for (auto& c : more) out.push_back(std::move(c));
    };
    if (suite == "figures-small") {
      add(figures_small());
    } else if (suite == "claims") {
      add({claim_beb_linear(), claim_stb_factor(), claim_crossovers()});
    } else if (suite == "figures-large") {
      add({large_cw_ordering(), claim_crossovers()});
    } else if (suite == "bestofk") {
      add({best_of_k()});
    } else if (suite == "determinism") {
      add({determinism()});
    } else if (suite == "all") {
      add(figures_small());
      add({large_cw_ordering(), claim_beb_linear(), claim_stb_factor(), claim_crossovers(),
           best_of_k(), determinism()});
      std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    } else {
      throw std::invalid_argument("unknown suite '" + std::string(suite) + "'");
    }
    if (opt_.out_dir) {
      std::ostringstream os;
      os << "criterion,name,passed,detail\n";
      for (const auto& c : out) {
        os << c.id << ',' << c.name << ',' << (c.passed ? "pass" : "FAIL") << ",\"" << c.detail
           << "\"\n";
      }
      detail::write_file(*opt_.out_dir / ("checks-" + std::string(suite) + ".csv"), os.str());
    }
    return out;
  }

  std::vector<CheckResult> figures_small() {
    return {cw_magnitude(), small_cw_ordering(), total_time_reversal(), back_of_envelope(),
            transmission_times(), oracle_equivalence()};
  }

  // 1. BEB at n = 150 incurs about 886 CW slots.
  CheckResult cw_magnitude() {
    const auto& r = small();
    const double med = r.median(kSmallN, PolicySpec::beb(), Metric::CwSlots);
    const double rel = std::abs(med - 886.0) / 886.0;
    return {1, "cw-slot-magnitude", rel <= 0.30,
            detail::fmt("BEB n=150 median cw_slots %.1f vs 886 (rel. error %.1f%%, limit 30%%)", med,
                        100 * rel)};
  }

  // 2. At n = 150: STB < LB < LLB < BEB in CW slots, CIs disjoint.
  CheckResult small_cw_ordering() {
    const auto& r = small();
    const PolicySpec order[] = {PolicySpec::stb(), PolicySpec::lb(), PolicySpec::llb(), PolicySpec::beb()};
    bool ok = true;
    std::string text;
    for (std::size_t i = 0; i < 4; ++i) {
      const auto& s = r.summary(kSmallN, order[i], Metric::CwSlots);
      text += detail::fmt("%s %.1f [%.1f, %.1f]; ", to_string(order[i]).c_str(), s.median, s.lo, s.hi);
      if (i > 0) {
        const auto& prev = r.summary(kSmallN, order[i - 1], Metric::CwSlots);
        ok &= prev.hi < s.lo;
      }
    }
    return {2, "small-n-cw-ordering", ok, text + "required STB < LB < LLB < BEB with disjoint CIs"};
  }

  // 3. At n = 10^5: STB < LLB < LB < BEB in median CW slots.
  CheckResult large_cw_ordering() {
    const auto& r = large();
    const std::uint32_t n = large_n_values().back();
    const PolicySpec order[] = {PolicySpec::stb(), PolicySpec::llb(), PolicySpec::lb(), PolicySpec::beb()};
    bool ok = true;
    std::string text;
    for (std::size_t i = 0; i < 4; ++i) {
      const double m = r.median(n, order[i], Metric::CwSlots);
      text += detail::fmt("%s %.0f; ", to_string(order[i]).c_str(), m);
      if (i > 0) ok &= r.median(n, order[i - 1], Metric::CwSlots) < m;
    }
    return {3, "large-n-cw-ordering", ok,
            text + detail::fmt("n=%u, %u trials, required STB < LLB < LB < BEB", n, kLargeTrials)};
  }

  // Ratio series a/b (or a/n when b is null) over the large-n grid.
  std::vector<double> ratio_series(const PolicySpec& a, const std::optional<PolicySpec>& b) {
    const auto& r = large();
    std::vector<double> out;
    for (std::uint32_t n : large_n_values()) {
      const double num = r.median(n, a, Metric::Collisions);
      out.push_back(b ? num / r.median(n, *b, Metric::Collisions) : num / n);
    }
    return out;
  }

  static std::vector<double> n_axis() {
    return {large_n_values().begin(), large_n_values().end()};
  }

  static std::string series_text(const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += detail::fmt(i ? ", %.3f" : "%.3f", v[i]);
    return s + "]";
  }

  // Bounded-ratio test used for C/n: flat fitted slope and max/min <= 1.5.
  static bool bounded_ratio(const std::vector<double>& series, const TrendFit& fit) {
    const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
    return fit.slope_indistinguishable_from_zero() && *hi / *lo <= 1.5;
  }

  // 4. BEB has O(n) collisions.
  CheckResult claim_beb_linear() {
    const auto series = ratio_series(PolicySpec::beb(), std::nullopt);
    const auto fit = fit_trend(n_axis(), series, Axis::Log10, "C_BEB/n");
    return {4, "claim1-beb-collisions-linear", bounded_ratio(series, fit),
            detail::fmt("C_BEB/n %s; slope %.4f per decade, 95%% CI [%.4f, %.4f]", series_text(series).c_str(),
                        fit.slope, fit.slope_ci_lo, fit.slope_ci_hi)};
  }

  // 5. STB has about twice BEB's collisions, and Theta(n) of them.
  CheckResult claim_stb_factor() {
    const auto factor = ratio_series(PolicySpec::stb(), PolicySpec::beb());
    const auto per_n = ratio_series(PolicySpec::stb(), std::nullopt);
    const auto fit = fit_trend(n_axis(), per_n, Axis::Log10, "C_STB/n");
    const bool in_band = std::all_of(factor.begin(), factor.end(), [](double x) { return x >= 1.4 && x <= 2.8; });
    return {5, "claim4-stb-factor", in_band && bounded_ratio(per_n, fit),
            detail::fmt("C_STB/C_BEB %s (band [1.4, 2.8]); C_STB/n %s, slope %.4f CI [%.4f, %.4f]",
                        series_text(factor).c_str(), series_text(per_n).c_str(), fit.slope,
                        fit.slope_ci_lo, fit.slope_ci_hi)};
  }

  // 6. LB exceeds STB everywhere and increasingly; LLB crosses STB in [1e4, 1e5].
  CheckResult claim_crossovers() {
    const auto lb = ratio_series(PolicySpec::lb(), PolicySpec::stb());
    const auto llb = ratio_series(PolicySpec::llb(), PolicySpec::stb());
    bool lb_ok = true;
    for (std::size_t i = 0; i < lb.size(); ++i) {
      lb_ok &= lb[i] > 1.0;
      if (i > 0) lb_ok &= lb[i] > lb[i - 1];
    }
    const auto fit = fit_trend(n_axis(), llb, Axis::Log10, "C_LLB/C_STB");
    const bool cross_ok = fit.crossing && *fit.crossing >= 1e4 && *fit.crossing <= 1e5;
    return {6, "claims2-3-crossovers", lb_ok && cross_ok,
            detail::fmt("C_LB/C_STB %s (must exceed 1 and increase); C_LLB/C_STB %s crosses 1 at n=%s",
                        series_text(lb).c_str(), series_text(llb).c_str(),
                        fit.crossing ? detail::fmt("%.0f", *fit.crossing).c_str() : "none")};
  }

  // 7. Total time ordering reverses: BEB < LLB < LB < STB, more so for big packets.
  CheckResult total_time_reversal() {
    const auto& small_pkt = time64();
    const auto& big_pkt = time1024();
    const PolicySpec order[] = {PolicySpec::beb(), PolicySpec::llb(), PolicySpec::lb(), PolicySpec::stb()};
    auto ordered = [&](const SweepResult& r) {
      for (std::size_t i = 1; i < 4; ++i) {
        if (!(r.median(kSmallN, order[i - 1], Metric::TotalTime) <
              r.median(kSmallN, order[i], Metric::TotalTime))) {
          return false;
        }
      }
      return true;
    };
    auto delta = [&](const SweepResult& r, const PolicySpec& p) {
      return percent_delta(r.median(kSmallN, p, Metric::TotalTime),
                           r.median(kSmallN, PolicySpec::beb(), Metric::TotalTime));
    };
    const double llb64 = delta(small_pkt, PolicySpec::llb());
    const double lb64 = delta(small_pkt, PolicySpec::lb()), lb1k = delta(big_pkt, PolicySpec::lb());
    const double stb64 = delta(small_pkt, PolicySpec::stb()), stb1k = delta(big_pkt, PolicySpec::stb());
    const bool ok = ordered(small_pkt) && ordered(big_pkt) && llb64 > 0 && llb64 < 30 &&
                    lb1k > lb64 && stb1k > stb64;
    std::string text;
    for (const auto* r : {&small_pkt, &big_pkt}) {
      text += detail::fmt("%uB:", r->spec.shape.payload_bytes);
      for (const auto& p : order) {
        text += detail::fmt(" %s %.0f", to_string(p).c_str(), r->median(kSmallN, p, Metric::TotalTime));
      }
      text += "; ";
    }
    text += detail::fmt("deltas vs BEB 64B: LLB %+.1f%% LB %+.1f%% STB %+.1f%%; 1024B: LLB %+.1f%% LB %+.1f%% STB %+.1f%%",
                        llb64, lb64, stb64, delta(big_pkt, PolicySpec::llb()), lb1k, stb1k);
    return {7, "total-time-reversal", ok, text};
  }

  // 8. The back-of-envelope assembly for BEB at n = 150.
  CheckResult back_of_envelope() {
    const TimingParams p = TimingParams::dcf();
    const double transmission = simple_total_time(75.0 * 9.0 / 2.0, 0, 19.0, p);
    const double slots = simple_total_time(0, 886, 19.0, p);
    const double ack = 1100.0;
    const double sum = std::round(transmission) + slots + ack;
    const bool ok = std::abs(transmission - 13163.0) <= 1.0 && slots == 7974.0 && sum == 22237.0;
    return {8, "back-of-envelope", ok,
            detail::fmt("(I) %.1f us (expect 13163 +-1), (III) %.1f us (expect 7974), (I)+(II)+(III) %.0f us (expect 22237)",
                        transmission, slots, sum)};
  }

  // 9. Frame air time.
  CheckResult transmission_times() {
    const TimingParams p = TimingParams::dcf();
    const double small_frame = transmission_time(PacketShape{64, 64}, p);
    const double big_frame = transmission_time(PacketShape{1024, 64}, p);
    const bool ok = std::abs(small_frame - 18.96) < 0.005 && std::abs(big_frame - 161.2) < 0.05;
    return {9, "transmission-time", ok,
            detail::fmt("128B frame %.4f us (expect 18.96), 1088B frame %.4f us (expect 161.2)", small_frame,
                        big_frame)};
  }

  // 10. Best-of-k estimates overshoot, are cheap, and beat BEB.
  CheckResult best_of_k() {
    const auto& r = bestofk();
    const PolicySpec k5 = PolicySpec::best_of(5);
    bool all_above_floor = true;
    std::size_t total = 0, at_least_n = 0;
    double worst_share = 0;
    std::string shares;
    for (std::uint32_t n : r.spec.n_values) {
      const double floor_estimate = n / std::log2(static_cast<double>(n));
      std::vector<double> share;
      for (const TrialResult* t : r.trials(n, k5)) {
        for (std::uint64_t e : *t->stats.estimates) {
          all_above_floor &= static_cast<double>(e) >= floor_estimate;
          at_least_n += e >= n;
          ++total;
        }
        share.push_back(t->cost->estimation_time_us / t->cost->total_us);
      }
      const double med_share = median(share);
      worst_share = std::max(worst_share, med_share);
      shares += detail::fmt(" n=%u %.2f%%", n, 100 * med_share);
    }
    const double frac = static_cast<double>(at_least_n) / static_cast<double>(total);
    const double beb = r.median(kSmallN, PolicySpec::beb(), Metric::TotalTime);
    const double best = r.median(kSmallN, k5, Metric::TotalTime);
    const double gain = percent_delta(best, beb);
    const bool ok = all_above_floor && frac >= 0.9 && worst_share <= 0.05 && gain <= -10.0;
    return {10, "best-of-k", ok,
            detail::fmt("all estimates >= n/lg n: %s; estimates >= n: %.1f%% (need 90%%); "
                        "median estimation share:%s (limit 5%%); n=150 total %.0f vs BEB %.0f (%+.1f%%, need <= -10%%)",
                        all_above_floor ? "yes" : "no", 100 * frac, shares.c_str(), best, beb, gain)};
  }

  // 11. Engine first-window outcomes match exact enumeration.
  CheckResult oracle_equivalence() {
    double worst = 0;
    std::string text;
    for (int n = 1; n <= 3; ++n) {
      for (int w = 1; w <= 4; ++w) {
        const auto exact = enumerate_first_window(n, w);
        const auto seen = sample_first_window(static_cast<std::uint32_t>(n), static_cast<std::uint64_t>(w),
                                              kOracleTrials, derive_seed(opt_.seed, static_cast<std::uint64_t>(n * 16 + w)));
        worst = std::max(worst, total_variation(exact, seen));
      }
    }
    return {11, "oracle-equivalence", worst <= 0.01,
            detail::fmt("max total-variation distance %.5f over n<=3, W<=4, %u trials each (limit 0.01)", worst,
                        kOracleTrials)};
  }

  // 12. Same seed, same bytes.
  CheckResult determinism() {
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() /
                          ("backoff-determinism-" + std::to_string(opt_.seed) + "-" +
                           std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::vector<std::string> runs[2];
    for (int pass = 0; pass < 2; ++pass) {
      const fs::path dir = base / std::to_string(pass);
      fs::remove_all(dir);
      VerifyOptions o = opt_;
      o.out_dir = dir;
      Verifier fresh(o);
      fresh.run("figures-small");
      fresh.run("bestofk");
      SweepSpec s = large_sweep(o);
      s.n_values = {1000, 3000};
      s.trials = 10;
      write_sweep_files(run_sweep(s), dir, "sweep");
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) runs[pass].push_back(f.filename().string() + "\n" + detail::read_file(f));
    }
    fs::remove_all(base);
    const bool ok = !runs[0].empty() && runs[0] == runs[1];
    return {12, "determinism", ok,
            detail::fmt("%zu output files compared across two runs with seed %llu: %s", runs[0].size(),
                        static_cast<unsigned long long>(opt_.seed), ok ? "byte-identical" : "DIFFER")};
  }

  static void write_sweep_files(const SweepResult& r, const std::filesystem::path& dir, const std::string& stem) {
    std::ostringstream summary, trials;
    write_summary_csv(summary, r);
    write_trials_csv(trials, r);
    detail::write_file(dir / (stem + ".csv"), summary.str());
    detail::write_file(dir / (stem + "-trials.csv"), trials.str());
    detail::write_file(dir / (stem + "-manifest.json"), sweep_manifest(r.spec).dump(2) + "\n");
  }

 private:
  const SweepResult& cached(std::optional<SweepResult>& slot, SweepSpec spec, const char* stem) {
    if (!slot) {
      slot = run_sweep(spec);
      if (opt_.out_dir) write_sweep_files(*slot, *opt_.out_dir, stem);
    }
    return *slot;
  }

  const SweepResult& small() { return cached(small_, small_cw_sweep(opt_), "small-cw"); }
  const SweepResult& time64() { return cached(time64_, total_time_sweep(opt_, 64), "total-time-64B"); }
  const SweepResult& time1024() { return cached(time1024_, total_time_sweep(opt_, 1024), "total-time-1024B"); }
  const SweepResult& large() { return cached(large_, large_sweep(opt_), "large-n"); }
  const SweepResult& bestofk() { return cached(bestofk_, bestofk_sweep(opt_), "bestofk"); }

  VerifyOptions opt_;
  std::optional<SweepResult> small_, time64_, time1024_, large_, bestofk_;
};

inline void print_checks(std::ostream& os, const std::vector<CheckResult>& checks) {
  for (const auto& c : checks) {
    os << (c.passed ? "[PASS] " : "[FAIL] ") << "C" << c.id << ' ' << c.name << ": " << c.detail << '\n';
  }
}

}  // namespace backoff
