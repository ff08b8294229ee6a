#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <sstream>
#include <vector>

#include "backoff/harness.hpp"
#include "backoff/stats.hpp"

using namespace backoff;
using Catch::Matchers::WithinAbs;

TEST_CASE("quantiles and outliers", "[stats]") {
  const std::vector<double> v = {1, 2, 3, 4};
  CHECK(quantile_sorted(v, 0.5) == 2.5);
  CHECK(quantile_sorted(v, 0.25) == 1.75);
  CHECK(median({5, 1, 3}) == 3);
  const std::vector<double> with_outlier = {10, 11, 12, 13, 14, 100};
  const auto split = drop_outliers(with_outlier);
  CHECK(split.outliers == 1);
  CHECK(split.kept == std::vector<double>{10, 11, 12, 13, 14});
}

TEST_CASE("ci_95 of a constant sample has zero width", "[stats]") {
  const std::vector<double> v(25, 7.0);
  const auto [lo, hi] = ci_95(v, 1);
  CHECK(lo == 7.0);
  CHECK(hi == 7.0);
}

TEST_CASE("ci_95 of 1..100 contains 50.5", "[stats]") {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto [lo, hi] = ci_95(v, seed);
    CHECK(lo <= 50.5);
    CHECK(hi >= 50.5);
    CHECK(hi - lo < 25);
  }
  CHECK_THROWS_AS(ci_95(std::vector<double>{1.0}, 1), StatsError);
}

TEST_CASE("ci_95 tails match the exhaustive bootstrap distribution", "[stats]") {
  // Every one of the 6^6 equally likely resamples of a six-point sample.
  const std::vector<double> sample = {1, 2, 4, 8, 16, 32};
  std::map<double, double> dist;
  const int size = 6;
  int total = 1;
  for (int i = 0; i < size; ++i) total *= size;
  std::vector<double> draw(size);
  for (int code = 0; code < total; ++code) {
    for (int i = 0, c = code; i < size; ++i, c /= size) draw[static_cast<std::size_t>(i)] = sample[static_cast<std::size_t>(c % size)];
    std::sort(draw.begin(), draw.end());
    dist[(draw[2] + draw[3]) / 2] += 1.0 / total;
  }
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto [lo, hi] = ci_95(sample, seed);
    double below = 0, above = 0;
    for (const auto& [m, p] : dist) {
      if (m < lo) below += p;
      if (m > hi) above += p;
    }
    CHECK(below <= 0.025 + 0.02);
    CHECK(above <= 0.025 + 0.02);
    // Not wider than needed either: one step inward would leave too much out.
    double below_next = 0;
    for (const auto& [m, p] : dist) {
      if (m <= lo) below_next += p;
    }
    CHECK(below_next >= 0.025 - 0.02);
  }
}

TEST_CASE("lo <= median <= hi on skewed samples", "[stats][property]") {
  Rng rng(8);
  for (int iter = 0; iter < 200; ++iter) {
    std::vector<double> v(2 + rng.below(40));
    for (double& x : v) x = std::exp(4 * rng.uniform01()) + (rng.below(10) == 0 ? 1000 : 0);
    const auto [lo, hi] = ci_95(v, rng());
    const double med = median(v);
    REQUIRE(lo <= med);
    REQUIRE(med <= hi);
  }
}

TEST_CASE("percent_delta", "[stats]") {
  CHECK(percent_delta(3.0, 3.0) == 0.0);
  CHECK(percent_delta(150.0, 100.0) == 50.0);
  CHECK(percent_delta(50.0, 100.0) == -50.0);
  CHECK_THROWS_AS(percent_delta(1.0, 0.0), StatsError);
}

TEST_CASE("fit_trend", "[stats]") {
  const std::vector<double> xs = {1, 2, 3, 4};
  const auto flat = fit_trend(xs, std::vector<double>{2, 2, 2, 2});
  CHECK(flat.slope == 0.0);
  CHECK_FALSE(flat.crossing);
  CHECK(flat.slope_indistinguishable_from_zero());

  const auto line = fit_trend(xs, std::vector<double>{0.4, 0.8, 1.2, 1.6});
  CHECK_THAT(line.slope, WithinAbs(0.4, 1e-12));
  REQUIRE(line.crossing);
  CHECK_THAT(*line.crossing, WithinAbs(2.5, 1e-12));
  CHECK_FALSE(line.slope_indistinguishable_from_zero());

  const std::vector<double> ns = {1e3, 1e4, 1e5, 1e6};
  const auto logfit = fit_trend(ns, std::vector<double>{1.2, 1.1, 0.9, 0.8}, Axis::Log10);
  REQUIRE(logfit.crossing);
  CHECK_THAT(*logfit.crossing, WithinAbs(std::pow(10.0, 4.5), 1e-6));

  CHECK_THROWS_AS(fit_trend(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}), StatsError);
}

namespace {

SweepSpec small_spec() {
  SweepSpec s;
  s.n_values = {10, 50, 150};
  s.policies = {PolicySpec::beb(), PolicySpec::stb(), PolicySpec::llb_repeated()};
  s.trials = 12;
  s.seed = 5;
  s.metrics = {Metric::CwSlots, Metric::Collisions, Metric::TotalTime, Metric::SimpleTime};
  return s;
}

std::string csv(const SweepResult& r) {
  std::ostringstream os;
  write_summary_csv(os, r);
  write_trials_csv(os, r);
  os << sweep_manifest(r.spec).dump();
  return os.str();
}

}  // namespace

TEST_CASE("sweeps reproduce byte for byte, whatever the worker count", "[harness]") {
  SweepSpec a = small_spec();
  a.workers = 1;
  SweepSpec b = small_spec();
  b.workers = 3;
  const std::string first = csv(run_sweep(a));
  CHECK(first == csv(run_sweep(a)));
  CHECK(first == csv(run_sweep(b)));
  SweepSpec c = small_spec();
  c.seed = 6;
  CHECK(first != csv(run_sweep(c)));
}

TEST_CASE("summary CSV layout", "[harness]") {
  SweepSpec s = small_spec();
  s.n_values = {20};
  s.policies = {PolicySpec::beb()};
  s.metrics = {Metric::CwSlots};
  std::ostringstream os;
  write_summary_csv(os, run_sweep(s));
  std::istringstream is(os.str());
  std::string header, row, extra;
  std::getline(is, header);
  std::getline(is, row);
  CHECK(header == "n,policy,metric,median,lo,hi,trials,outliers");
  CHECK(row.starts_with("20,beb,cw_slots,"));
  CHECK(std::count(row.begin(), row.end(), ',') == 7);
  CHECK(row.substr(0, row.rfind(',')).ends_with(",12"));
  CHECK_FALSE(std::getline(is, extra));
}

TEST_CASE("a lone station sweep has no collisions and a degenerate interval", "[harness]") {
  SweepSpec s = small_spec();
  s.n_values = {1};
  const SweepResult r = run_sweep(s);
  for (const auto& p : s.policies) {
    const Summary& c = r.summary(1, p, Metric::Collisions);
    CHECK(c.median == 0);
    CHECK(c.lo == 0);
    CHECK(c.hi == 0);
  }
}

TEST_CASE("median CW slots never drop as n grows", "[harness][property]") {
  SweepSpec s;
  s.n_values = {10, 40, 150, 400};
  s.policies = {PolicySpec::beb(), PolicySpec::lb(), PolicySpec::llb(), PolicySpec::stb(),
                PolicySpec::llb_repeated()};
  s.trials = 15;
  s.seed = 9;
  s.metrics = {Metric::CwSlots};
  const SweepResult r = run_sweep(s);
  for (const auto& p : s.policies) {
    for (std::size_t i = 1; i < s.n_values.size(); ++i) {
      INFO(to_string(p) << " n = " << s.n_values[i]);
      CHECK(r.median(s.n_values[i - 1], p, Metric::CwSlots) <= r.median(s.n_values[i], p, Metric::CwSlots));
    }
  }
}

TEST_CASE("sawtooth beats BEB on CW slots at small n", "[harness]") {
  SweepSpec s;
  s.n_values = {50, 100, 150};
  s.policies = {PolicySpec::beb(), PolicySpec::stb()};
  s.trials = 30;
  s.seed = 1;
  s.metrics = {Metric::CwSlots};
  const SweepResult r = run_sweep(s);
  for (std::uint32_t n : s.n_values) {
    CHECK(r.median(n, PolicySpec::stb(), Metric::CwSlots) < r.median(n, PolicySpec::beb(), Metric::CwSlots));
  }
  CHECK(percent_delta(r.median(150, PolicySpec::stb(), Metric::CwSlots),
                      r.median(150, PolicySpec::beb(), Metric::CwSlots)) < 0);
}

TEST_CASE("BEB at n = 150 has few outliers", "[harness]") {
  SweepSpec s;
  s.n_values = {150};
  s.policies = {PolicySpec::beb()};
  s.trials = 30;
  s.seed = 1;
  s.metrics = {Metric::CwSlots};
  CHECK(run_sweep(s).summary(150, PolicySpec::beb(), Metric::CwSlots).outliers <= 5);
}

TEST_CASE("total time at n = 150: BEB is cheapest and LLB sits just above it", "[harness]") {
  SweepSpec s;
  s.n_values = {150};
  s.policies = {PolicySpec::beb(), PolicySpec::llb(), PolicySpec::lb(), PolicySpec::stb()};
  s.trials = 30;
  s.params = TimingParams::dcf();
  s.seed = 1;
  s.metrics = {Metric::TotalTime};
  const SweepResult r = run_sweep(s);
  const double beb = r.median(150, PolicySpec::beb(), Metric::TotalTime);
  const double llb = r.median(150, PolicySpec::llb(), Metric::TotalTime);
  CHECK(beb < llb);
  CHECK(llb < r.median(150, PolicySpec::lb(), Metric::TotalTime));
  CHECK(llb < r.median(150, PolicySpec::stb(), Metric::TotalTime));
  CHECK(percent_delta(llb, beb) > 0);
}

TEST_CASE("sweep spec validation", "[harness]") {
  SweepSpec s = small_spec();
  s.n_values = {50, 10};
  CHECK_THROWS_AS(run_sweep(s), std::invalid_argument);
  s = small_spec();
  s.trials = 0;
  CHECK_THROWS_AS(run_sweep(s), std::invalid_argument);
  s = small_spec();
  s.shape.payload_bytes = 4;
  CHECK_THROWS_AS(run_sweep(s), std::invalid_argument);
  CHECK_THROWS_AS(parse_metric("latency"), std::invalid_argument);
}

TEST_CASE("sweep spec JSON round-trip", "[harness]") {
  const SweepSpec s = small_spec();
  const SweepSpec back = json(s).get<SweepSpec>();
  CHECK(json(back) == json(s));
  const json manifest = sweep_manifest(s);
  CHECK(manifest.at("root_seed") == 5);
  CHECK(manifest.at("code_version") == kCodeVersion);
}

TEST_CASE("parallel_for rethrows the first failure", "[harness]") {
  std::vector<int> hit(100, 0);
  CHECK_THROWS_AS(parallel_for(100, 4,
                               [&](std::size_t i) {
                                 if (i == 37) throw std::runtime_error("boom");
                                 hit[i] = 1;
                               }),
                  std::runtime_error);
  parallel_for(100, 4, [&](std::size_t i) { hit[i] = 2; });
  CHECK(std::all_of(hit.begin(), hit.end(), [](int h) { return h == 2; }));
}
