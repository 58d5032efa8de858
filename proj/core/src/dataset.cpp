#include "deepen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "deepen/rng.hpp"

namespace deepen {

std::string data_kind_str(DataKind k) {
  switch (k) {
    case DataKind::ByteLm:
      return "byte_lm";
    case DataKind::Markov:
      return "markov";
    case DataKind::MlpRegression:
      return "mlp_regression";
  }
  return "?";
}

DataKind parse_data_kind(std::string_view s) {
  if (s == "byte_lm") return DataKind::ByteLm;
  if (s == "markov") return DataKind::Markov;
  if (s == "mlp_regression") return DataKind::MlpRegression;
  throw std::invalid_argument("unknown dataset kind: " + std::string(s));
}

std::int64_t Dataset::count() const {
  if (kind == DataKind::MlpRegression)
    return static_cast<std::int64_t>(x.size()) / d_in;
  return static_cast<std::int64_t>(tokens.size());
}

std::int64_t Dataset::val_start() const {
  const std::int64_t n = count();
  return n - static_cast<std::int64_t>(val_frac * static_cast<double>(n));
}

namespace {

// Gamma(alpha, 1) via Marsaglia-Tsang, boosted for alpha < 1.
double sample_gamma(double alpha, Rng& rng) {
  if (alpha < 1.0) {
    const double u = rng.uniform();
    return sample_gamma(alpha + 1.0, rng) * std::pow(u, 1.0 / alpha);
  }
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double z, v;
    do {
      z = rng.normal();
      v = 1.0 + c * z;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * z * z * z * z) return d * v;
    if (std::log(u) < 0.5 * z * z + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::int64_t ipow(std::int64_t base, int exp) {
  std::int64_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

Dataset make_markov(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.vocab < 2 || spec.order < 1)
    throw std::invalid_argument("markov spec needs vocab >= 2, order >= 1");
  if (spec.length <= 0)
    throw std::invalid_argument("markov spec needs positive length");
  Dataset d;
  d.kind = DataKind::Markov;
  d.vocab = spec.vocab;
  d.order = spec.order;
  d.val_frac = spec.val_frac;

  const std::int64_t states = ipow(spec.vocab, spec.order);
  const int v = spec.vocab;
  Rng rng = Rng(seed).fork(0x6d61726b);
  d.transition.resize(static_cast<std::size_t>(states) * v);
  for (std::int64_t s = 0; s < states; ++s) {
    double* row = d.transition.data() + s * v;
    double total = 0.0;
    for (int j = 0; j < v; ++j) {
      row[j] = sample_gamma(spec.concentration, rng);
      total += row[j];
    }
    for (int j = 0; j < v; ++j) row[j] /= total;
  }

  std::int64_t state = 0;
  for (int i = 0; i < spec.order; ++i) state = state * v + rng.uniform_int(v);
  auto next_token = [&](std::int64_t s) {
    const double* row = d.transition.data() + s * v;
    double r = rng.uniform();
    for (int j = 0; j < v - 1; ++j) {
      r -= row[j];
      if (r < 0.0) return j;
    }
    return v - 1;
  };
  const std::int64_t wrap = ipow(v, spec.order - 1);
  for (int i = 0; i < 1000; ++i)  // burn-in
    state = (state % wrap) * v + next_token(state);
  d.tokens.resize(static_cast<std::size_t>(spec.length));
  for (std::int64_t i = 0; i < spec.length; ++i) {
    const int t = next_token(state);
    d.tokens[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(t);
    state = (state % wrap) * v + t;
  }
  return d;
}

Dataset make_byte_lm(const DatasetSpec& spec) {
  std::ifstream in(spec.path, std::ios::binary);
  if (!in) throw std::runtime_error("byte_lm: cannot read " + spec.path);
  Dataset d;
  d.kind = DataKind::ByteLm;
  d.vocab = 256;
  d.val_frac = spec.val_frac;
  char c;
  while (in.get(c))
    d.tokens.push_back(
        static_cast<std::uint16_t>(static_cast<unsigned char>(c)));
  if (d.tokens.empty()) throw std::runtime_error("byte_lm: empty file");
  return d;
}

Dataset make_mlp(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.d_in < 1 || spec.d_out < 1)
    throw std::invalid_argument("mlp_regression spec needs positive dims");
  Dataset d;
  d.kind = DataKind::MlpRegression;
  d.d_in = spec.d_in;
  d.d_out = spec.d_out;
  d.val_frac = spec.val_frac;

  // Fixed random teacher: y = tanh(x W1) W2.
  const int hidden = 2 * std::max(spec.d_in, spec.d_out);
  Rng trng(spec.teacher_seed ? spec.teacher_seed : mix64(seed ^ 0x7ea));
  std::vector<double> w1(static_cast<std::size_t>(spec.d_in) * hidden);
  std::vector<double> w2(static_cast<std::size_t>(hidden) * spec.d_out);
  for (auto& w : w1) w = trng.normal() / std::sqrt(spec.d_in);
  for (auto& w : w2) w = trng.normal() / std::sqrt(hidden);

  Rng rng = Rng(seed).fork(0x6d6c70);
  d.x.resize(static_cast<std::size_t>(spec.length) * spec.d_in);
  d.y.resize(static_cast<std::size_t>(spec.length) * spec.d_out);
  std::vector<double> h(static_cast<std::size_t>(hidden));
  for (std::int64_t i = 0; i < spec.length; ++i) {
    double* xi = d.x.data() + i * spec.d_in;
    double* yi = d.y.data() + i * spec.d_out;
    for (int j = 0; j < spec.d_in; ++j) xi[j] = rng.normal();
    for (int k = 0; k < hidden; ++k) {
      double acc = 0;
      for (int j = 0; j < spec.d_in; ++j)
        acc += xi[j] * w1[static_cast<std::size_t>(j) * hidden + k];
      h[static_cast<std::size_t>(k)] = std::tanh(acc);
    }
    for (int o = 0; o < spec.d_out; ++o) {
      double acc = 0;
      for (int k = 0; k < hidden; ++k)
        acc += h[static_cast<std::size_t>(k)] *
               w2[static_cast<std::size_t>(k) * spec.d_out + o];
      yi[o] = acc;
    }
  }
  return d;
}

}  // namespace

Dataset generate_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  switch (spec.kind) {
    case DataKind::Markov:
      return make_markov(spec, seed);
    case DataKind::ByteLm:
      return make_byte_lm(spec);
    case DataKind::MlpRegression:
      return make_mlp(spec, seed);
  }
  throw std::invalid_argument("unknown dataset kind");
}

double Dataset::entropy_rate() const {
  if (kind != DataKind::Markov || transition.empty())
    throw std::logic_error("entropy_rate: markov datasets only");
  const int v = vocab;
  const std::int64_t states = static_cast<std::int64_t>(transition.size()) / v;
  const std::int64_t wrap = states / v;
  std::vector<double> pi(static_cast<std::size_t>(states),
                         1.0 / static_cast<double>(states));
  std::vector<double> next(pi.size());
  for (int iter = 0; iter < 500; ++iter) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::int64_t s = 0; s < states; ++s) {
      const double ps = pi[static_cast<std::size_t>(s)];
      if (ps == 0.0) continue;
      const double* row = transition.data() + s * v;
      const std::int64_t base = (s % wrap) * v;
      for (int j = 0; j < v; ++j)
        next[static_cast<std::size_t>(base + j)] += ps * row[j];
    }
    double delta = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i)
      delta += std::abs(next[i] - pi[i]);
    pi.swap(next);
    if (delta < 1e-13) break;
  }
  double h = 0.0;
  for (std::int64_t s = 0; s < states; ++s) {
    const double ps = pi[static_cast<std::size_t>(s)];
    if (ps == 0.0) continue;
    const double* row = transition.data() + s * v;
    double hs = 0.0;
    for (int j = 0; j < v; ++j)
      if (row[j] > 0.0) hs -= row[j] * std::log(row[j]);
    h += ps * hs;
  }
  return h;
}

namespace {

template <typename T>
Batch<T> lm_batch_at(const Dataset& data, const std::vector<std::int64_t>& offs,
                     int seq_len) {
  Batch<T> b;
  b.bsz = static_cast<int>(offs.size());
  b.seq = seq_len;
  b.inputs.resize(offs.size() * static_cast<std::size_t>(seq_len));
  b.targets.resize(b.inputs.size());
  for (std::size_t r = 0; r < offs.size(); ++r) {
    const std::int64_t o = offs[r];
    for (int t = 0; t < seq_len; ++t) {
      b.inputs[r * static_cast<std::size_t>(seq_len) + t] =
          data.tokens[static_cast<std::size_t>(o + t)];
      b.targets[r * static_cast<std::size_t>(seq_len) + t] =
          data.tokens[static_cast<std::size_t>(o + t + 1)];
    }
  }
  return b;
}

template <typename T>
Batch<T> mlp_batch_at(const Dataset& data,
                      const std::vector<std::int64_t>& idx) {
  Batch<T> b;
  const int n = static_cast<int>(idx.size());
  b.x = Tensor<T>({n, data.d_in});
  b.y = Tensor<T>({n, data.d_out});
  for (int r = 0; r < n; ++r) {
    for (int j = 0; j < data.d_in; ++j)
      b.x[static_cast<std::int64_t>(r) * data.d_in + j] =
          static_cast<T>(data.x[static_cast<std::size_t>(idx[r]) * data.d_in + j]);
    for (int j = 0; j < data.d_out; ++j)
      b.y[static_cast<std::int64_t>(r) * data.d_out + j] =
          static_cast<T>(data.y[static_cast<std::size_t>(idx[r]) * data.d_out + j]);
  }
  return b;
}

}  // namespace

template <typename T>
Batch<T> sample_train_batch(const Dataset& data, std::int64_t batch_items,
                            int seq_len, std::int64_t step,
                            std::uint64_t seed) {
  Rng rng = Rng(seed).fork(0xba7c000000000000ull + static_cast<std::uint64_t>(step));
  if (data.kind == DataKind::MlpRegression) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(batch_items));
    for (auto& i : idx) i = rng.uniform_int(data.val_start());
    return mlp_batch_at<T>(data, idx);
  }
  if (seq_len <= 0 || batch_items % seq_len != 0)
    throw std::invalid_argument(
        "lm batch: batch tokens must be a positive multiple of seq_len");
  const std::int64_t n_seqs = batch_items / seq_len;
  const std::int64_t max_off = data.val_start() - seq_len - 1;
  if (max_off < 1)
    throw std::invalid_argument("dataset too short for this sequence length");
  std::vector<std::int64_t> offs(static_cast<std::size_t>(n_seqs));
  for (auto& o : offs) o = rng.uniform_int(max_off);
  return lm_batch_at<T>(data, offs, seq_len);
}

template <typename T>
std::vector<Batch<T>> make_eval_batches(const Dataset& data, int n_batches,
                                        std::int64_t batch_items,
                                        int seq_len) {
  std::vector<Batch<T>> out;
  if (data.kind == DataKind::MlpRegression) {
    std::int64_t cursor = data.val_start();
    for (int k = 0; k < n_batches; ++k) {
      std::vector<std::int64_t> idx;
      for (std::int64_t i = 0; i < batch_items; ++i) {
        if (cursor >= data.count()) cursor = data.val_start();
        idx.push_back(cursor++);
      }
      out.push_back(mlp_batch_at<T>(data, idx));
    }
    return out;
  }
  if (seq_len <= 0 || batch_items % seq_len != 0)
    throw std::invalid_argument(
        "lm eval: batch tokens must be a positive multiple of seq_len");
  const std::int64_t n_seqs = batch_items / seq_len;
  std::int64_t cursor = data.val_start();
  const std::int64_t last = data.count() - seq_len - 1;
  if (last <= data.val_start())
    throw std::invalid_argument("validation tail too short for eval batches");
  for (int k = 0; k < n_batches; ++k) {
    std::vector<std::int64_t> offs;
    for (std::int64_t i = 0; i < n_seqs; ++i) {
      if (cursor > last) cursor = data.val_start();
      offs.push_back(cursor);
      cursor += seq_len;
    }
    out.push_back(lm_batch_at<T>(data, offs, seq_len));
  }
  return out;
}

#define DEEPEN_INSTANTIATE(T)                                               \
  template Batch<T> sample_train_batch<T>(const Dataset&, std::int64_t, int, \
                                          std::int64_t, std::uint64_t);     \
  template std::vector<Batch<T>> make_eval_batches<T>(const Dataset&, int,  \
                                                      std::int64_t, int);

DEEPEN_INSTANTIATE(float)
DEEPEN_INSTANTIATE(double)
#undef DEEPEN_INSTANTIATE

}  // namespace deepen
