#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "deepen/model.hpp"
#include "deepen/optimizer.hpp"

namespace deepen {

// Single-file archive: magic "DPNC" + u32 version + u64 manifest length +
// JSON manifest + raw little-endian tensor payloads. The manifest lists
// the model config, the role table and per-parameter id/shape/dtype/
// offset, and (optionally) optimizer state keyed by parameter id. Layout
// details in docs/checkpoint_format.md.
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct CheckpointData {
  Model<T> model;
  std::optional<OptimizerState<T>> state;
  OptimizerConfig opt;  // meaningful when state is present
  std::int64_t step = -1;
};

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model,
                     const OptimizerState<T>* state, const OptimizerConfig* opt,
                     std::int64_t step);

// Element width of the stored tensors: 32 or 64.
int checkpoint_precision(const std::string& path);

// Loads an archive; stored payloads are converted to T when the stored
// dtype differs.
template <typename T>
CheckpointData<T> load_checkpoint(const std::string& path);

}  // namespace deepen
