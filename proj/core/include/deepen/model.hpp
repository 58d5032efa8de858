#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "deepen/parameter.hpp"
#include "deepen/tape.hpp"
#include "deepen/tensor.hpp"

namespace deepen {

enum class Family { ResidualMlp, TinyTransformer };

std::string family_str(Family f);
Family parse_family(std::string_view s);

struct ModelConfig {
  Family family = Family::TinyTransformer;
  int depth = 0;  // hidden residual blocks; 0 means embedding + readout only
  int width = 64;

  // transformer
  int heads = 0;  // 0 resolves to width / kDefaultHeadDim
  int vocab = 0;
  int seq_len = 0;  // context length / position-table rows

  // residual MLP
  int input_dim = 0;
  int output_dim = 0;

  std::uint64_t seed = 0;
  double ln_eps = 1e-5;

  static constexpr int kDefaultHeadDim = 16;

  int resolved_heads() const;
  void validate() const;  // throws std::invalid_argument

  bool operator==(const ModelConfig&) const = default;
};

// Parameter indices of one residual block. Transformer blocks use all
// fields; MLP blocks use ln1/fc1/fc2.
struct BlockRef {
  std::string name;  // lineage name, stable across expansion
  int ln1 = -1;
  int wq = -1, wk = -1, wv = -1, wo = -1;
  int ln2 = -1;
  int fc1 = -1, fc2 = -1;
};

template <typename T>
struct Model {
  ModelConfig config;
  std::vector<Parameter<T>> params;  // order: E..., H blocks..., L...

  // E
  int emb_w = -1;  // mlp input weight / transformer token table
  int emb_b = -1;  // mlp input bias / transformer position table
  // H
  std::vector<BlockRef> blocks;
  // L
  int final_ln = -1;  // transformer only
  int readout_w = -1;
  int readout_b = -1;  // mlp only

  int depth() const { return static_cast<int>(blocks.size()); }
  Parameter<T>& at(int idx) { return params[static_cast<std::size_t>(idx)]; }
  const Parameter<T>& at(int idx) const {
    return params[static_cast<std::size_t>(idx)];
  }
  Parameter<T>* find(std::string_view id);
  void zero_grad();
};

// One training batch. Token fields serve the transformer family, the
// tensor fields the MLP family.
template <typename T>
struct Batch {
  std::vector<int> inputs;   // [bsz * seq]
  std::vector<int> targets;  // [bsz * seq]
  int bsz = 0, seq = 0;

  Tensor<T> x, y;

  bool is_lm() const { return bsz > 0; }
  std::int64_t item_count() const {
    return is_lm() ? static_cast<std::int64_t>(bsz) * seq : x.dim(0);
  }
};

// Per-layer activation scale ||a||_2 / sqrt(n), averaged over the batch,
// recorded at every block boundary (depth + 1 entries).
struct ActivationProfile {
  std::vector<double> r;
};

// Builds a model with spectrally-scaled initialization: hidden rank-2
// weights are semi-orthogonal with spectral norm sqrt(n_out/n_in),
// embedding tables have unit-RMS rows, the readout follows the spectral
// rule, gains start at one and biases at zero.
template <typename T>
Model<T> build(const ModelConfig& config);

// Records the forward pass on the given tape and returns the scalar loss
// node. Optionally fills an activation profile.
template <typename T>
typename Tape<T>::Id forward(Model<T>& model, const Batch<T>& batch,
                             Tape<T>& tape,
                             ActivationProfile* profile = nullptr);

// Forward pass on a throwaway tape; no gradients.
template <typename T>
T forward_loss(Model<T>& model, const Batch<T>& batch);

template <typename T>
ActivationProfile activation_rms_profile(Model<T>& model,
                                         const Batch<T>& batch);

// Power-iteration spectral-norm estimates for every rank-2 parameter.
template <typename T>
std::map<std::string, double> spectral_norms(const Model<T>& model,
                                             int steps = 50);

template <typename T>
std::int64_t param_count(const Model<T>& model);

// True for the hidden-block matrices the spectral condition applies to.
bool is_hidden_matrix(const Role& role, int rank);

// Spectral-norm target sqrt(n_out/n_in) for an [n_in, n_out] weight.
double spectral_target(const Shape& shape);

extern template struct Model<float>;
extern template struct Model<double>;

}  // namespace deepen
