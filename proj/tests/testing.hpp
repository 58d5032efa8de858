#pragma once

// Shared helpers for the test suites. Oracles here (SVD, dense grids,
// hand recomputation) stay independent of the implementation paths they
// check.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "deepen/model.hpp"
#include "deepen/rng.hpp"
#include "deepen/tensor.hpp"

namespace testing {

template <typename T>
deepen::Tensor<T> random_tensor(deepen::Shape shape, deepen::Rng& rng,
                                double scale = 1.0) {
  deepen::Tensor<T> t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(rng.normal() * scale);
  return t;
}

// Normwise relative error: max |a-b| over max(|b|_inf, floor).
template <typename T>
double rel_err(const deepen::Tensor<T>& a, const deepen::Tensor<T>& b,
               double floor = 1e-10) {
  double diff = 0.0, ref = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(a[i]) - b[i]));
    ref = std::max(ref, std::abs(static_cast<double>(b[i])));
  }
  return diff / std::max(ref, floor);
}

// SVD oracle on a rank-2 tensor (via Eigen, independent of the library's
// power iteration).
template <typename T>
std::vector<double> singular_values(const deepen::Tensor<T>& w) {
  const int rows = w.dim(0), cols = w.dim(1);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      m(i, j) = static_cast<double>(w[static_cast<std::int64_t>(i) * cols + j]);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  return std::vector<double>(sv.data(), sv.data() + sv.size());
}

template <typename T>
double svd_spectral_norm(const deepen::Tensor<T>& w) {
  return singular_values(w).front();
}

// Random token batch for the transformer family.
template <typename T>
deepen::Batch<T> random_lm_batch(int bsz, int seq, int vocab,
                                 deepen::Rng& rng) {
  deepen::Batch<T> b;
  b.bsz = bsz;
  b.seq = seq;
  b.inputs.resize(static_cast<std::size_t>(bsz) * seq);
  b.targets.resize(b.inputs.size());
  for (auto& t : b.inputs) t = static_cast<int>(rng.uniform_int(vocab));
  for (auto& t : b.targets) t = static_cast<int>(rng.uniform_int(vocab));
  return b;
}

// Random sample batch for the MLP family.
template <typename T>
deepen::Batch<T> random_mlp_batch(int bsz, int d_in, int d_out,
                                  deepen::Rng& rng) {
  deepen::Batch<T> b;
  b.x = random_tensor<T>({bsz, d_in}, rng);
  b.y = random_tensor<T>({bsz, d_out}, rng);
  return b;
}

template <typename T>
deepen::Batch<T> random_batch_for(const deepen::ModelConfig& cfg, int bsz,
                                  deepen::Rng& rng) {
  if (cfg.family == deepen::Family::TinyTransformer)
    return random_lm_batch<T>(bsz, cfg.seq_len, cfg.vocab, rng);
  return random_mlp_batch<T>(bsz, cfg.input_dim, cfg.output_dim, rng);
}

}  // namespace testing
