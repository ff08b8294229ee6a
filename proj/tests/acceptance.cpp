// Acceptance suite: one line per criterion, nonzero exit if any fails.
//
//   acceptance [--seed S] [--workers N] [--out DIR]

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "backoff/verify.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria C1-C12"};
  backoff::VerifyOptions opt;
  std::string out;
  app.add_option("--seed", opt.seed, "Root seed")->capture_default_str();
  app.add_option("--workers", opt.workers, "Parallel trials (default: available CPUs)");
  app.add_option("--out", out, "Write sweep CSVs and the checks table here");
  CLI11_PARSE(app, argc, argv);
  if (!out.empty()) opt.out_dir = out;

  backoff::Verifier verifier(opt);
  const auto checks = verifier.run("all");
  backoff::print_checks(std::cout, checks);
  int failed = 0;
  for (const auto& c : checks) failed += !c.passed;
  std::cout << (static_cast<int>(checks.size()) - failed) << "/" << checks.size() << " criteria passed\n";
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
