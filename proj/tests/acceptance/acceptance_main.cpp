// Acceptance gate: one pass/fail line per criterion.
//
//   acceptance --criterion N      run one criterion
//   acceptance --all [--fast]     run everything (or only the fast set)
//   acceptance --list             list criteria
//   acceptance --run NAME        execute one named training run into the
//                                 cache (used to pre-warm the slow suite)

#include <cstdio>
#include <cstring>
#include <string>

#include "acceptance.hpp"
#include "deepen/linalg.hpp"

namespace acceptance {

Outcome run_c1();
Outcome run_c2();
Outcome run_c3();
Outcome run_c4();
Outcome run_c5();
Outcome run_c6();
Outcome run_c7();
Outcome run_c8();
Outcome run_c9();
Outcome run_c10();
Outcome run_c11();
Outcome run_c12();

const std::vector<Criterion>& registry() {
  static const std::vector<Criterion> criteria = {
      {1, "gradient correctness (finite differences, 50 instances)", false,
       run_c1},
      {2, "function preservation of zeroing expansions", false, run_c2},
      {3, "spectral condition at build and after random expansion", false,
       run_c3},
      {4, "newton-schulz singular values in [0.7, 1.3]", false, run_c4},
      {5, "convex bounds on 100 planted problems", false, run_c5},
      {6, "schedule mass values and wsd < cosine ordering", false, run_c6},
      {7, "desk-scale mixing replication (wsd mixes, cosine at 0.8T does not)",
       true, run_c7},
      {8, "mixing-time transfer across tau (wsd yes, cosine no)", true,
       run_c8},
      {9, "single- vs multi-stage expansion", true, run_c9},
      {10, "mixing needs data, not iterations (4x batch)", true, run_c10},
      {11, "flop closed form and 0.216 staged ratio", false, run_c11},
      {12, "learning-rate transfer across width", true, run_c12},
  };
  return criteria;
}

}  // namespace acceptance

namespace {

int run_one(const acceptance::Criterion& c) {
  const auto outcome = c.run();
  std::printf("[%s] C%d: %s\n        %s\n", outcome.pass ? "PASS" : "FAIL",
              c.id, c.title.c_str(), outcome.details.c_str());
  std::fflush(stdout);
  return outcome.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  int criterion = 0;
  bool all = false, fast_only = false, list = false;
  std::string run_name;
  int threads = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc)
      criterion = std::atoi(argv[++i]);
    else if (arg == "--all")
      all = true;
    else if (arg == "--fast")
      fast_only = true;
    else if (arg == "--list")
      list = true;
    else if (arg == "--run" && i + 1 < argc)
      run_name = argv[++i];
    else if (arg == "--threads" && i + 1 < argc)
      threads = std::atoi(argv[++i]);
    else {
      std::fprintf(stderr, "unknown argument: %s\n", arg.c_str());
      return 2;
    }
  }
  if (threads > 0) deepen::set_compute_threads(threads);

  if (list) {
    for (const auto& c : acceptance::registry())
      std::printf("C%-3d %s%s\n", c.id, c.title.c_str(),
                  c.slow ? "  [slow]" : "");
    return 0;
  }
  if (!run_name.empty()) {
    try {
      const auto log = acceptance::cached_run(run_name);
      std::printf("%s: %zu records, final val loss %.6f\n", run_name.c_str(),
                  log.records.size(), log.final_val_loss());
      return 0;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "run %s failed: %s\n", run_name.c_str(), e.what());
      return 2;
    }
  }

  int failures = 0;
  bool matched = false;
  for (const auto& c : acceptance::registry()) {
    if (criterion != 0 && c.id != criterion) continue;
    if (criterion == 0 && !all) continue;
    if (fast_only && c.slow) continue;
    matched = true;
    try {
      failures += run_one(c);
    } catch (const std::exception& e) {
      std::printf("[FAIL] C%d: %s\n        exception: %s\n", c.id,
                  c.title.c_str(), e.what());
      ++failures;
    }
  }
  if (!matched) {
    std::fprintf(stderr,
                 "usage: acceptance --criterion N | --all [--fast] | --list | "
                 "--run NAME\n");
    return 2;
  }
  return failures > 0 ? 1 : 0;
}
