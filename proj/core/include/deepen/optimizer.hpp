#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "deepen/model.hpp"
#include "deepen/tensor.hpp"

namespace deepen {

enum class OptimizerKind { MuonNsgd, AdamW, Sgd };

std::string optimizer_str(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::MuonNsgd;
  double peak_lr = 0.01;
  double weight_decay = 0.1;
  double momentum = 0.95;  // muon_nsgd / sgd momentum coefficient
  double beta1 = 0.9;      // adamw
  double beta2 = 0.999;
  double eps = 1e-8;
  int ns_steps = 5;

  void validate() const;

  bool operator==(const OptimizerConfig&) const = default;
};

// Per-parameter buffers, keyed by parameter id so state survives depth
// expansion. `v` and `step` are used by AdamW only.
template <typename T>
struct ParamState {
  Tensor<T> m;
  Tensor<T> v;
  std::int64_t step = 0;
};

template <typename T>
using OptimizerState = std::map<std::string, ParamState<T>>;

template <typename T>
OptimizerState<T> init_optimizer_state(const Model<T>& model,
                                       const OptimizerConfig& cfg);

struct NewtonSchulzResult {
  bool degenerate = false;  // zero input; output left as the zero matrix
};

// Odd-polynomial Newton-Schulz iteration mapping a rank-2 tensor toward
// the nearest semi-orthogonal one (singular values -> ~1). Pre-normalizes
// by the Frobenius norm and iterates X <- aX + b(XX^T)X + c(XX^T)^2 X
// with (a, b, c) = (3.4445, -4.7750, 2.0315); tall inputs are transposed
// so the Gram product uses the smaller dimension.
template <typename T>
NewtonSchulzResult newton_schulz_orthogonalize(Tensor<T>& m, int steps);

// One optimizer step; gradients must already be populated. Rank-2
// parameters take the Muon branch (Newton-Schulz of the momentum), all
// other ranks the NSGD branch (momentum over its global L2 norm); both
// share the learning rate and the decoupled decay factor (1 - lr*wd).
template <typename T>
void muon_nsgd_step(Model<T>& model, OptimizerState<T>& state, double lr,
                    double weight_decay, double momentum, int ns_steps);

template <typename T>
void adamw_step(Model<T>& model, OptimizerState<T>& state, double lr,
                double weight_decay, double beta1, double beta2, double eps);

template <typename T>
void sgd_step(Model<T>& model, OptimizerState<T>& state, double lr,
              double weight_decay, double momentum);

template <typename T>
void optimizer_step(Model<T>& model, OptimizerState<T>& state,
                    const OptimizerConfig& cfg, double lr);

}  // namespace deepen
