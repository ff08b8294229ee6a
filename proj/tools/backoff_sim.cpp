// backoff-sim: single trials, sweeps, verification suites and trace export.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "backoff/costmodel.hpp"
#include "backoff/engine.hpp"
#include "backoff/harness.hpp"
#include "backoff/verify.hpp"

namespace fs = std::filesystem;
using namespace backoff;

namespace {

// Argument or config problems; main turns these into exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed) {
  if (seed) return *seed;
  std::random_device rd;
  const std::uint64_t s = (std::uint64_t{rd()} << 32) ^ rd();
  std::cerr << "seed: " << s << '\n';
  return s;
}

TimingParams model_params(const std::string& model) {
  if (model == "dcf") return TimingParams::dcf();
  if (model == "abstract") return TimingParams::abstract();
  throw UsageError("unknown model '" + model + "' (expected dcf or abstract)");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(value, &used);
    if (used != value.size() || value.starts_with('-')) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' expects an unsigned integer, got '" + value + "'");
  }
}

// key = value lines; '#' starts a comment.
std::map<std::string, std::string> read_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot read config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  for (int line_no = 1; std::getline(is, line); ++line_no) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

void apply_setting(SweepSpec& spec, const std::string& key, const std::string& value) {
  if (key == "n_values") {
    spec.n_values.clear();
    for (const auto& v : split_list(value)) {
      const auto n = to_u64(key, v);
      if (n > kMaxStations) throw UsageError("n value " + v + " exceeds the engine limit");
      spec.n_values.push_back(static_cast<std::uint32_t>(n));
    }
  } else if (key == "policies") {
    spec.policies.clear();
    for (const auto& v : split_list(value)) spec.policies.push_back(parse_policy(v));
  } else if (key == "metrics") {
    spec.metrics.clear();
    for (const auto& v : split_list(value)) spec.metrics.push_back(parse_metric(v));
  } else if (key == "trials") {
    spec.trials = static_cast<std::uint32_t>(to_u64(key, value));
  } else if (key == "seed") {
    spec.seed = to_u64(key, value);
  } else if (key == "workers") {
    spec.workers = static_cast<unsigned>(to_u64(key, value));
  } else if (key == "payload_bytes") {
    spec.shape.payload_bytes = static_cast<std::uint32_t>(to_u64(key, value));
  } else if (key == "overhead_bytes") {
    spec.shape.overhead_bytes = static_cast<std::uint32_t>(to_u64(key, value));
  } else if (key == "model") {
    spec.params = model_params(value);
  } else if (key == "max_window") {
    spec.params.max_window =
        value == "none" ? std::nullopt : std::optional<std::uint64_t>(to_u64(key, value));
  } else if (key == "keep_estimates") {
    if (value != "true" && value != "false") throw UsageError("keep_estimates expects true or false");
    spec.keep_estimates = value == "true";
  } else {
    throw UsageError("unknown config key '" + key + "'");
  }
}

struct RunArgs {
  std::string policy = "beb";
  std::uint32_t n = 150;
  std::optional<std::uint64_t> seed;
  std::uint32_t payload = 64;
  std::string model = "dcf";
  std::optional<std::uint64_t> max_slots;
};

TrialConfig trial_config(const RunArgs& a, const TimingParams& params) {
  TrialConfig c;
  c.n = a.n;
  c.policy = effective_policy(parse_policy(a.policy), params);
  c.seed = resolve_seed(a.seed);
  c.max_slots = a.max_slots;
  return c;
}

int cmd_run(const RunArgs& a) {
  const TimingParams params = model_params(a.model);
  const TrialConfig config = trial_config(a, params);
  const PacketShape shape = packet_with_payload(a.payload, params);
  CostAccumulator cost(shape, params);
  const RunStats stats = *simulate(config, cost);
  const double simple = simple_total_time(static_cast<double>(stats.disjoint_collisions),
                                          static_cast<double>(stats.cw_slots),
                                          transmission_time(shape, params), params);
  json out{{"policy", to_string(config.policy)},
           {"n", config.n},
           {"seed", config.seed},
           {"run_stats", stats},
           {"cost", cost.result()},
           {"simple_time_us", round_centi(simple)}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_export_trace(const RunArgs& a, const std::string& out_path) {
  const TimingParams params = model_params(a.model);
  const Trace trace = run_trial(trial_config(a, params));
  if (out_path.empty() || out_path == "-") {
    write_trace(std::cout, trace);
  } else {
    std::ofstream os(out_path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + out_path);
    write_trace(os, trace);
  }
  return 0;
}

struct SweepArgs {
  std::string config;
  std::map<std::string, std::string> overrides;
  std::string out = "sweep-out";
  std::optional<std::uint64_t> seed;
};

int cmd_sweep(const SweepArgs& a) {
  SweepSpec spec;
  spec.n_values = {150};
  spec.policies = {PolicySpec::beb(), PolicySpec::lb(), PolicySpec::llb(), PolicySpec::stb()};
  std::map<std::string, std::string> settings;
  if (!a.config.empty()) settings = read_config(a.config);
  for (const auto& [k, v] : a.overrides) settings[k] = v;
  // The model resets params, so it has to go before max_window.
  if (auto it = settings.find("model"); it != settings.end()) apply_setting(spec, it->first, it->second);
  for (const auto& [k, v] : settings) {
    if (k != "model") apply_setting(spec, k, v);
  }
  if (!settings.contains("seed")) spec.seed = resolve_seed(a.seed);
  try {
    check(spec);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const SweepResult result = run_sweep(spec);
  Verifier::write_sweep_files(result, a.out, "sweep");
  write_summary_csv(std::cout, result);
  std::cerr << "wrote " << (fs::path(a.out) / "sweep.csv").string() << ", sweep-trials.csv, sweep-manifest.json\n";
  return 0;
}

int cmd_verify(const std::string& suite, const std::optional<std::uint64_t>& seed, unsigned workers,
               const std::string& out) {
  VerifyOptions o;
  o.seed = resolve_seed(seed);
  o.workers = workers;
  if (!out.empty()) o.out_dir = fs::path(out);
  Verifier v(o);
  const auto checks = v.run(suite);
  print_checks(std::cout, checks);
  std::size_t failed = 0;
  for (const auto& c : checks) failed += !c.passed;
  std::cout << (checks.size() - failed) << "/" << checks.size() << " checks passed\n";
  return failed == 0 ? 0 : 1;
}

void add_trial_options(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("--policy", a.policy, "beb, lb, llb, llb-rep, stb, fixed:W or bestof:k")->capture_default_str();
  cmd->add_option("--n", a.n, "Number of stations")->capture_default_str()->check(CLI::Range(1u, kMaxStations));
  cmd->add_option("--seed", a.seed, "Root seed (drawn from entropy if omitted)");
  cmd->add_option("--model", a.model, "dcf (window cap 1024) or abstract (no cap)")
      ->capture_default_str()
      ->check(CLI::IsMember({"dcf", "abstract"}));
  cmd->add_option("--max-slots", a.max_slots, "Abort the trial after this many slots (default 10^4 n)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Slotted-channel simulator for single-batch contention resolution"};
  app.set_version_flag("--version", kCodeVersion);
  app.require_subcommand(1, 1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run one trial and print RunStats and the cost breakdown as JSON");
  add_trial_options(run, run_args);
  run->add_option("--payload", run_args.payload, "Payload bytes (>= 12)")->capture_default_str();

  RunArgs trace_args;
  std::string trace_out;
  auto* trace = app.add_subcommand("export-trace", "Run one trial and write its slot trace (NDJSON)");
  add_trial_options(trace, trace_args);
  trace->add_option("--out", trace_out, "Trace file path ('-' for stdout)");

  SweepArgs sweep_args;
  std::vector<std::string> sets;
  auto* sweep = app.add_subcommand("sweep", "Run a seeded (n, policy) sweep and write CSV plus a manifest");
  sweep->add_option("--config", sweep_args.config, "key = value file mirroring the sweep fields")
      ->check(CLI::ExistingFile);
  sweep->add_option("--set", sets, "Override a config key, e.g. --set trials=50 (repeatable)");
  sweep->add_option("--out", sweep_args.out, "Output directory")->capture_default_str();
  sweep->add_option("--seed", sweep_args.seed, "Root seed (drawn from entropy if omitted)");
  std::string s_n, s_policies, s_metrics, s_model;
  std::optional<std::uint32_t> s_trials, s_payload;
  std::optional<unsigned> s_workers;
  sweep->add_option("--n", s_n, "Comma-separated n values");
  sweep->add_option("--policies", s_policies, "Comma-separated policies");
  sweep->add_option("--metrics", s_metrics, "Comma-separated metrics");
  sweep->add_option("--trials", s_trials, "Trials per (n, policy)");
  sweep->add_option("--payload", s_payload, "Payload bytes");
  sweep->add_option("--model", s_model, "dcf or abstract");
  sweep->add_option("--workers", s_workers, "Parallel trials (default: available CPUs)");

  std::string suite;
  std::optional<std::uint64_t> verify_seed;
  unsigned verify_workers = 0;
  std::string verify_out;
  auto* verify = app.add_subcommand("verify", "Run a named acceptance suite and print pass/fail per check");
  verify->add_option("suite", suite, "figures-small, claims, figures-large, bestofk, determinism or all")
      ->required()
      ->check(CLI::IsMember(suite_names()));
  verify->add_option("--seed", verify_seed, "Root seed (drawn from entropy if omitted)");
  verify->add_option("--workers", verify_workers, "Parallel trials (default: available CPUs)");
  verify->add_option("--out", verify_out, "Directory for sweep CSVs and the checks table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*run) return cmd_run(run_args);
    if (*trace) return cmd_export_trace(trace_args, trace_out);
    if (*sweep) {
      auto& o = sweep_args.overrides;
      for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
        o[s.substr(0, eq)] = s.substr(eq + 1);
      }
      if (!s_n.empty()) o["n_values"] = s_n;
      if (!s_policies.empty()) o["policies"] = s_policies;
      if (!s_metrics.empty()) o["metrics"] = s_metrics;
      if (!s_model.empty()) o["model"] = s_model;
      if (s_trials) o["trials"] = std::to_string(*s_trials);
      if (s_payload) o["payload_bytes"] = std::to_string(*s_payload);
      if (s_workers) o["workers"] = std::to_string(*s_workers);
      if (sweep_args.seed) o["seed"] = std::to_string(*sweep_args.seed);
      return cmd_sweep(sweep_args);
    }
    if (*verify) return cmd_verify(suite, verify_seed, verify_workers, verify_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const PolicyParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
