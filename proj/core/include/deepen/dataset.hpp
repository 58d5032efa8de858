#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "deepen/model.hpp"

namespace deepen {

enum class DataKind { ByteLm, Markov, MlpRegression };

std::string data_kind_str(DataKind k);
DataKind parse_data_kind(std::string_view s);

struct DatasetSpec {
  DataKind kind = DataKind::Markov;

  std::string path;  // byte_lm source file

  int vocab = 32;  // markov
  int order = 2;
  double concentration = 0.3;  // Dirichlet parameter of transition rows

  int d_in = 16;  // mlp_regression teacher
  int d_out = 4;
  std::uint64_t teacher_seed = 0;

  std::int64_t length = 1 << 20;  // tokens (markov) or samples (mlp)
  double val_frac = 0.05;         // deterministic tail split

  bool operator==(const DatasetSpec&) const = default;
};

// Materialized dataset with a deterministic train/val split (the last
// val_frac of the stream is validation).
struct Dataset {
  DataKind kind = DataKind::Markov;

  // token stream (byte_lm / markov)
  int vocab = 0;
  std::vector<std::uint16_t> tokens;

  // sample stream (mlp_regression), row-major
  int d_in = 0, d_out = 0;
  std::vector<double> x, y;

  // markov internals, kept for diagnostics
  int order = 0;
  std::vector<double> transition;  // [vocab^order, vocab]

  std::int64_t count() const;      // tokens or samples
  std::int64_t val_start() const;  // first index of the validation tail
  std::int64_t val_count() const { return count() - val_start(); }
  double val_frac = 0.05;

  // Analytic entropy rate of the generating chain (nats/token), from the
  // stationary distribution of the order-k state chain. Markov only.
  double entropy_rate() const;
};

Dataset generate_dataset(const DatasetSpec& spec, std::uint64_t seed);

// Deterministic training batch for a given step: the draw depends only on
// (seed, step), so runs that share a data seed see identical batches at
// identical steps regardless of model state.
template <typename T>
Batch<T> sample_train_batch(const Dataset& data, std::int64_t batch_items,
                            int seq_len, std::int64_t step,
                            std::uint64_t seed);

// Frozen validation batches drawn from the held-out tail; identical for
// every run over the same dataset.
template <typename T>
std::vector<Batch<T>> make_eval_batches(const Dataset& data, int n_batches,
                                        std::int64_t batch_items, int seq_len);

}  // namespace deepen
