#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepen/dataset.hpp"
#include "deepen/expansion.hpp"
#include "deepen/model.hpp"
#include "deepen/optimizer.hpp"
#include "deepen/schedule.hpp"

namespace deepen {

// A scheduled depth-expansion event. batch_scale multiplies the per-step
// batch from this event on (data-vs-iterations experiments).
struct EventSpec {
  std::int64_t step = 0;
  int target_depth = 0;
  ExpansionMethod method = ExpansionMethod::Random;
  InsertionSite site = InsertionSite::Bottom;
  OsPolicy os_policy = OsPolicy::Inherit;
  double batch_scale = 1.0;

  bool operator==(const EventSpec&) const = default;
};

struct ExperimentConfig {
  ModelConfig model;
  DatasetSpec data;
  OptimizerConfig optimizer;
  ScheduleConfig schedule;

  std::int64_t steps = 1000;
  std::int64_t batch = 1024;  // tokens per step (LM) or samples (MLP)
  std::int64_t eval_interval = 50;
  int eval_batches = 4;
  std::int64_t log_interval = 1;
  std::vector<EventSpec> events;  // strictly increasing steps

  std::uint64_t seed = 0;
  std::string out_dir;
  int precision = 32;  // 32 | 64
  int threads = 0;     // 0 keeps the current setting

  void validate() const;
};

// JSON round-trip. The file schema mirrors the struct: nested sections
// model / data / optimizer / schedule / events plus run-level fields;
// see docs/config_schema.md. Parsing applies the documented defaults
// (e.g. the per-optimizer, per-schedule peak learning rates).
ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);
std::string config_to_json_text(const ExperimentConfig& cfg, int indent = 2);

// Stable content hash of the canonical JSON form; names cached run
// directories.
std::string config_fingerprint(const ExperimentConfig& cfg);

}  // namespace deepen
