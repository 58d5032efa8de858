#include "deepen/model.hpp"

#include <cmath>
#include <stdexcept>

#include "deepen/linalg.hpp"
#include "deepen/rng.hpp"

namespace deepen {

std::string family_str(Family f) {
  return f == Family::ResidualMlp ? "residual_mlp" : "tiny_transformer";
}

Family parse_family(std::string_view s) {
  if (s == "residual_mlp" || s == "mlp") return Family::ResidualMlp;
  if (s == "tiny_transformer" || s == "transformer")
    return Family::TinyTransformer;
  throw std::invalid_argument("unknown model family: " + std::string(s));
}

int ModelConfig::resolved_heads() const {
  if (heads > 0) return heads;
  const int h = width / kDefaultHeadDim;
  return h > 0 ? h : 1;
}

void ModelConfig::validate() const {
  if (depth < 0) throw std::invalid_argument("model depth must be >= 0");
  if (width <= 0) throw std::invalid_argument("model width must be positive");
  if (family == Family::TinyTransformer) {
    if (vocab <= 0)
      throw std::invalid_argument("transformer config needs vocab > 0");
    if (seq_len <= 0)
      throw std::invalid_argument("transformer config needs seq_len > 0");
    if (width % resolved_heads() != 0)
      throw std::invalid_argument(
          "width " + std::to_string(width) + " not divisible by heads " +
          std::to_string(resolved_heads()));
  } else {
    if (input_dim <= 0 || output_dim <= 0)
      throw std::invalid_argument("mlp config needs input_dim/output_dim > 0");
  }
  if (!(ln_eps > 0)) throw std::invalid_argument("ln_eps must be positive");
}

bool is_hidden_matrix(const Role& role, int rank) {
  return role.kind == Role::Kind::Hidden && rank == 2;
}

double spectral_target(const Shape& shape) {
  return std::sqrt(static_cast<double>(shape[1]) /
                   static_cast<double>(shape[0]));
}

template <typename T>
Parameter<T>* Model<T>::find(std::string_view id) {
  for (auto& p : params)
    if (p.id == id) return &p;
  return nullptr;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& p : params) p.zero_grad();
}

namespace {

template <typename T>
Tensor<T> unit_rms_rows(int rows, int cols, Rng& rng) {
  Tensor<T> t({rows, cols});
  for (int i = 0; i < rows; ++i) {
    T* row = t.data() + static_cast<std::int64_t>(i) * cols;
    double sq = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double v = rng.normal();
      row[j] = static_cast<T>(v);
      sq += v * v;
    }
    const double rms = std::sqrt(sq / cols);
    for (int j = 0; j < cols; ++j) row[j] = static_cast<T>(row[j] / rms);
  }
  return t;
}

template <typename T>
int push_param(Model<T>& m, std::string id, Role role, Tensor<T> value) {
  m.params.emplace_back(std::move(id), role, std::move(value));
  return static_cast<int>(m.params.size()) - 1;
}

// Hidden or readout linear, [n_in, n_out], all singular values at
// sqrt(n_out/n_in) so the spectral condition holds exactly.
template <typename T>
Tensor<T> spectral_linear(int n_in, int n_out, Rng& rng) {
  const double sv = std::sqrt(static_cast<double>(n_out) / n_in);
  return semi_orthogonal<T>(n_in, n_out, sv, rng);
}

}  // namespace

template <typename T>
Model<T> build(const ModelConfig& config) {
  config.validate();
  Model<T> m;
  m.config = config;
  Rng rng(config.seed);
  const int w = config.width;

  if (config.family == Family::TinyTransformer) {
    m.emb_w = push_param(m, "e.tok", Role::E(),
                         unit_rms_rows<T>(config.vocab, w, rng));
    m.emb_b = push_param(m, "e.pos", Role::E(),
                         unit_rms_rows<T>(config.seq_len, w, rng));
    for (int i = 0; i < config.depth; ++i) {
      BlockRef b;
      b.name = "h" + std::to_string(i);
      const Role role = Role::H(i);
      b.ln1 = push_param(m, b.name + ".ln1", role, Tensor<T>::full({w}, T(1)));
      b.wq = push_param(m, b.name + ".wq", role, spectral_linear<T>(w, w, rng));
      b.wk = push_param(m, b.name + ".wk", role, spectral_linear<T>(w, w, rng));
      b.wv = push_param(m, b.name + ".wv", role, spectral_linear<T>(w, w, rng));
      b.wo = push_param(m, b.name + ".wo", role, spectral_linear<T>(w, w, rng));
      b.ln2 = push_param(m, b.name + ".ln2", role, Tensor<T>::full({w}, T(1)));
      b.fc1 = push_param(m, b.name + ".fc1", role,
                         spectral_linear<T>(w, 4 * w, rng));
      b.fc2 = push_param(m, b.name + ".fc2", role,
                         spectral_linear<T>(4 * w, w, rng));
      m.blocks.push_back(std::move(b));
    }
    m.final_ln = push_param(m, "l.ln", Role::L(), Tensor<T>::full({w}, T(1)));
    m.readout_w = push_param(m, "l.w", Role::L(),
                             spectral_linear<T>(w, config.vocab, rng));
  } else {
    m.emb_w = push_param(m, "e.w", Role::E(),
                         spectral_linear<T>(config.input_dim, w, rng));
    m.emb_b = push_param(m, "e.b", Role::E(), Tensor<T>::zeros({w}));
    for (int i = 0; i < config.depth; ++i) {
      BlockRef b;
      b.name = "h" + std::to_string(i);
      const Role role = Role::H(i);
      b.ln1 = push_param(m, b.name + ".ln", role, Tensor<T>::full({w}, T(1)));
      b.fc1 = push_param(m, b.name + ".fc1", role,
                         spectral_linear<T>(w, 4 * w, rng));
      b.fc2 = push_param(m, b.name + ".fc2", role,
                         spectral_linear<T>(4 * w, w, rng));
      m.blocks.push_back(std::move(b));
    }
    m.readout_w = push_param(m, "l.w", Role::L(),
                             spectral_linear<T>(w, config.output_dim, rng));
    m.readout_b =
        push_param(m, "l.b", Role::L(), Tensor<T>::zeros({config.output_dim}));
  }
  return m;
}

namespace {

template <typename T>
void record_boundary(const Tape<T>& tape, int id, ActivationProfile* profile) {
  if (!profile) return;
  const Tensor<T>& v = tape.value(id);
  const int n = v.dim(v.rank() - 1);
  const std::int64_t rows = v.size() / n;
  double acc = 0.0;
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = v.data() + r * n;
    double sq = 0.0;
    for (int j = 0; j < n; ++j) sq += static_cast<double>(row[j]) * row[j];
    acc += std::sqrt(sq / n);
  }
  profile->r.push_back(acc / static_cast<double>(rows));
}

}  // namespace

template <typename T>
typename Tape<T>::Id forward(Model<T>& model, const Batch<T>& batch,
                             Tape<T>& tape, ActivationProfile* profile) {
  const ModelConfig& cfg = model.config;
  const T eps = static_cast<T>(cfg.ln_eps);

  if (cfg.family == Family::TinyTransformer) {
    if (!batch.is_lm())
      throw std::invalid_argument("transformer forward needs a token batch");
    if (batch.seq > cfg.seq_len)
      throw std::invalid_argument(
          "batch seq " + std::to_string(batch.seq) + " exceeds context " +
          std::to_string(cfg.seq_len));
    const int bsz = batch.bsz, seq = batch.seq;
    std::vector<int> positions(static_cast<std::size_t>(bsz) * seq);
    for (int b = 0; b < bsz; ++b)
      for (int t = 0; t < seq; ++t)
        positions[static_cast<std::size_t>(b) * seq + t] = t;

    auto tok = tape.embedding(tape.param(model.at(model.emb_w)), batch.inputs,
                              {bsz, seq, cfg.width});
    auto pos = tape.embedding(tape.param(model.at(model.emb_b)),
                              std::move(positions), {bsz, seq, cfg.width});
    auto x = tape.add(tok, pos);
    record_boundary(tape, x, profile);
    const int heads = cfg.resolved_heads();
    for (const BlockRef& blk : model.blocks) {
      auto a = tape.layer_norm(x, tape.param(model.at(blk.ln1)), eps);
      auto att = tape.causal_attention(a, tape.param(model.at(blk.wq)),
                                       tape.param(model.at(blk.wk)),
                                       tape.param(model.at(blk.wv)),
                                       tape.param(model.at(blk.wo)), heads);
      x = tape.add(x, att);
      auto h = tape.layer_norm(x, tape.param(model.at(blk.ln2)), eps);
      auto u = tape.matmul(h, tape.param(model.at(blk.fc1)));
      u = tape.gelu(u);
      auto o = tape.matmul(u, tape.param(model.at(blk.fc2)));
      x = tape.add(x, o);
      record_boundary(tape, x, profile);
    }
    auto f = tape.layer_norm(x, tape.param(model.at(model.final_ln)), eps);
    auto logits = tape.matmul(f, tape.param(model.at(model.readout_w)));
    return tape.softmax_cross_entropy(logits, batch.targets);
  }

  if (batch.is_lm())
    throw std::invalid_argument("mlp forward needs a sample batch");
  if (batch.x.rank() != 2 || batch.x.dim(1) != cfg.input_dim)
    throw std::invalid_argument("mlp batch x " + shape_str(batch.x.shape()) +
                                " does not match input_dim " +
                                std::to_string(cfg.input_dim));
  auto x0 = tape.constant(batch.x);
  auto h = tape.matmul(x0, tape.param(model.at(model.emb_w)));
  h = tape.add_rows(h, tape.param(model.at(model.emb_b)));
  record_boundary(tape, h, profile);
  for (const BlockRef& blk : model.blocks) {
    auto a = tape.layer_norm(h, tape.param(model.at(blk.ln1)), eps);
    auto u = tape.matmul(a, tape.param(model.at(blk.fc1)));
    u = tape.gelu(u);
    auto o = tape.matmul(u, tape.param(model.at(blk.fc2)));
    h = tape.add(h, o);
    record_boundary(tape, h, profile);
  }
  auto pred = tape.matmul(h, tape.param(model.at(model.readout_w)));
  pred = tape.add_rows(pred, tape.param(model.at(model.readout_b)));
  return tape.mse(pred, batch.y);
}

template <typename T>
T forward_loss(Model<T>& model, const Batch<T>& batch) {
  Tape<T> tape;
  return tape.scalar(forward(model, batch, tape));
}

template <typename T>
ActivationProfile activation_rms_profile(Model<T>& model,
                                         const Batch<T>& batch) {
  Tape<T> tape;
  ActivationProfile profile;
  forward(model, batch, tape, &profile);
  return profile;
}

template <typename T>
std::map<std::string, double> spectral_norms(const Model<T>& model,
                                             int steps) {
  std::map<std::string, double> out;
  for (const auto& p : model.params)
    if (p.rank() == 2) out[p.id] = spectral_norm_estimate(p.value, steps);
  return out;
}

template <typename T>
std::int64_t param_count(const Model<T>& model) {
  std::int64_t n = 0;
  for (const auto& p : model.params) n += p.value.size();
  return n;
}

template struct Model<float>;
template struct Model<double>;

template Model<float> build<float>(const ModelConfig&);
template Model<double> build<double>(const ModelConfig&);
template Tape<float>::Id forward<float>(Model<float>&, const Batch<float>&,
                                        Tape<float>&, ActivationProfile*);
template Tape<double>::Id forward<double>(Model<double>&, const Batch<double>&,
                                          Tape<double>&, ActivationProfile*);
template float forward_loss<float>(Model<float>&, const Batch<float>&);
template double forward_loss<double>(Model<double>&, const Batch<double>&);
template ActivationProfile activation_rms_profile<float>(Model<float>&,
                                                         const Batch<float>&);
template ActivationProfile activation_rms_profile<double>(
    Model<double>&, const Batch<double>&);
template std::map<std::string, double> spectral_norms<float>(
    const Model<float>&, int);
template std::map<std::string, double> spectral_norms<double>(
    const Model<double>&, int);
template std::int64_t param_count<float>(const Model<float>&);
template std::int64_t param_count<double>(const Model<double>&);

}  // namespace deepen
