#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace deepen {

// One logged training step. val_loss is NaN on rows without an
// evaluation; the CSV writes an empty field for those.
struct RunRecord {
  std::int64_t step = 0;
  std::int64_t tokens = 0;
  std::int64_t flops = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  std::int64_t n_params = 0;

  bool has_val() const { return val_loss == val_loss; }
};

struct RunLog {
  std::vector<RunRecord> records;

  void save_csv(const std::string& path) const;
  static RunLog load_csv(const std::string& path);

  // Records carrying a validation loss, in step order.
  std::vector<const RunRecord*> eval_points() const;
  double final_val_loss() const;  // throws if no eval was recorded
  // Latest record with step <= s (nullptr when none).
  const RunRecord* at_or_before(std::int64_t s) const;
};

}  // namespace deepen
