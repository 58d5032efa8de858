#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepen/config.hpp"
#include "deepen/runlog.hpp"

namespace deepen {

// Training-cost model: one step over batch_items costs 6 * N * B, so a
// staged run totals 6B(tau * N_small + (T - tau) * N_large).
std::int64_t flops_per_step(std::int64_t n_params, std::int64_t batch_items);

// What happened at one expansion event, including the function-
// preservation probe on the event-step batch.
struct ExpansionRecord {
  std::int64_t step = 0;
  int source_depth = 0;
  int target_depth = 0;
  ExpansionMethod method = ExpansionMethod::Random;
  InsertionSite site = InsertionSite::Bottom;
  OsPolicy os_policy = OsPolicy::Inherit;
  double loss_before = 0.0;
  double loss_after = 0.0;
  double abs_delta = 0.0;
  double rel_delta = 0.0;
  std::int64_t n_before = 0;
  std::int64_t n_after = 0;
  bool outside_stable = false;  // tau outside [warmup_end, stable_end]
};

struct RunResult {
  RunLog log;
  std::vector<ExpansionRecord> expansions;
  double final_val_loss = std::numeric_limits<double>::quiet_NaN();
  std::int64_t total_flops = 0;
  std::int64_t total_tokens = 0;
  std::string out_dir;
};

// Raised when a run hits a non-finite loss; the diagnostic record has
// already been written to the run directory at that point.
struct TrainAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Executes a full run: warmup/stable/decay schedule, expansion events
// applied between the previous update and the event step's forward pass,
// per-step logging, checkpoints at events and at the end. Deterministic
// for a fixed config and thread count. With a non-empty out_dir, writes
// runlog.csv, config.json, events.jsonl, result.json and checkpoints.
RunResult train(const ExperimentConfig& cfg);

// Runs independent configs concurrently (each must carry its own
// out_dir/seed); results return in input order.
std::vector<RunResult> run_sweep(const std::vector<ExperimentConfig>& configs,
                                 int jobs);

}  // namespace deepen
