#include "deepen/optimizer.hpp"

#include <cmath>
#include <stdexcept>

#include "eigen_map.hpp"

namespace deepen {

namespace {
constexpr double kNsA = 3.4445;
constexpr double kNsB = -4.7750;
constexpr double kNsC = 2.0315;
}  // namespace

std::string optimizer_str(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::MuonNsgd:
      return "muon_nsgd";
    case OptimizerKind::AdamW:
      return "adamw";
    case OptimizerKind::Sgd:
      return "sgd";
  }
  return "?";
}

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "muon_nsgd" || s == "muon") return OptimizerKind::MuonNsgd;
  if (s == "adamw") return OptimizerKind::AdamW;
  if (s == "sgd") return OptimizerKind::Sgd;
  throw std::invalid_argument("unknown optimizer: " + std::string(s));
}

void OptimizerConfig::validate() const {
  if (!(peak_lr > 0)) throw std::invalid_argument("peak_lr must be positive");
  if (momentum < 0 || momentum >= 1)
    throw std::invalid_argument("momentum must be in [0, 1)");
  if (weight_decay < 0)
    throw std::invalid_argument("weight_decay must be >= 0");
  if (ns_steps <= 0) throw std::invalid_argument("ns_steps must be positive");
}

template <typename T>
OptimizerState<T> init_optimizer_state(const Model<T>& model,
                                       const OptimizerConfig& cfg) {
  OptimizerState<T> state;
  for (const auto& p : model.params) {
    ParamState<T> s;
    s.m = Tensor<T>::zeros(p.value.shape());
    if (cfg.kind == OptimizerKind::AdamW)
      s.v = Tensor<T>::zeros(p.value.shape());
    state.emplace(p.id, std::move(s));
  }
  return state;
}

template <typename T>
NewtonSchulzResult newton_schulz_orthogonalize(Tensor<T>& m, int steps) {
  if (m.rank() != 2)
    throw std::invalid_argument("newton_schulz: need rank-2, got " +
                                shape_str(m.shape()));
  double fro = 0.0;
  for (std::int64_t i = 0; i < m.size(); ++i)
    fro += static_cast<double>(m[i]) * static_cast<double>(m[i]);
  fro = std::sqrt(fro);
  if (fro == 0.0) return {.degenerate = true};

  const int rows = m.dim(0), cols = m.dim(1);
  const bool tall = rows > cols;
  const int r = tall ? cols : rows;  // small dimension carries the Gram
  const int c = tall ? rows : cols;

  detail::RowMat<T> x(r, c);
  {
    detail::ConstMatMap<T> src(m.data(), rows, cols);
    if (tall)
      x = src.transpose() / static_cast<T>(fro);
    else
      x = src / static_cast<T>(fro);
  }
  detail::RowMat<T> gram(r, r), poly(r, r);
  for (int s = 0; s < steps; ++s) {
    gram.noalias() = x * x.transpose();
    poly.noalias() = static_cast<T>(kNsC) * (gram * gram);
    poly += static_cast<T>(kNsB) * gram;
    x = static_cast<T>(kNsA) * x + poly * x;
  }
  detail::MatMap<T> dst(m.data(), rows, cols);
  if (tall)
    dst = x.transpose();
  else
    dst = x;
  return {.degenerate = false};
}

template <typename T>
void muon_nsgd_step(Model<T>& model, OptimizerState<T>& state, double lr,
                    double weight_decay, double momentum, int ns_steps) {
  const T decay = static_cast<T>(1.0 - lr * weight_decay);
  for (auto& p : model.params) {
    auto it = state.find(p.id);
    if (it == state.end())
      throw std::invalid_argument("optimizer state missing parameter " + p.id);
    Tensor<T>& m = it->second.m;
    detail::ArrMap<T> mm(m.data(), m.size());
    mm = static_cast<T>(momentum) * mm +
         detail::ConstArrMap<T>(p.grad.data(), p.grad.size());

    detail::ArrMap<T> w(p.value.data(), p.value.size());
    w *= decay;

    if (p.rank() == 2) {
      Tensor<T> update = m;
      const auto ns = newton_schulz_orthogonalize(update, ns_steps);
      if (!ns.degenerate)
        w -= static_cast<T>(lr) *
             detail::ConstArrMap<T>(update.data(), update.size());
    } else {
      const double n2 = std::sqrt(static_cast<double>(
          detail::ConstArrMap<T>(m.data(), m.size()).square().sum()));
      if (n2 > 0.0)
        w -= static_cast<T>(lr / n2) * detail::ConstArrMap<T>(m.data(), m.size());
      // zero momentum: skip the update, decay already applied
    }
  }
}

template <typename T>
void adamw_step(Model<T>& model, OptimizerState<T>& state, double lr,
                double weight_decay, double beta1, double beta2, double eps) {
  const T decay = static_cast<T>(1.0 - lr * weight_decay);
  for (auto& p : model.params) {
    auto it = state.find(p.id);
    if (it == state.end())
      throw std::invalid_argument("optimizer state missing parameter " + p.id);
    ParamState<T>& s = it->second;
    if (s.v.size() != p.value.size())
      s.v = Tensor<T>::zeros(p.value.shape());
    s.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(s.step));
    T* w = p.value.data();
    T* m = s.m.data();
    T* v = s.v.data();
    const T* g = p.grad.data();
    for (std::int64_t i = 0; i < p.value.size(); ++i) {
      m[i] = static_cast<T>(beta1 * m[i] + (1.0 - beta1) * g[i]);
      v[i] = static_cast<T>(beta2 * v[i] +
                            (1.0 - beta2) * static_cast<double>(g[i]) * g[i]);
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      w[i] = static_cast<T>(decay * w[i] - lr * mh / (std::sqrt(vh) + eps));
    }
  }
}

template <typename T>
void sgd_step(Model<T>& model, OptimizerState<T>& state, double lr,
              double weight_decay, double momentum) {
  const T decay = static_cast<T>(1.0 - lr * weight_decay);
  for (auto& p : model.params) {
    auto it = state.find(p.id);
    if (it == state.end())
      throw std::invalid_argument("optimizer state missing parameter " + p.id);
    Tensor<T>& m = it->second.m;
    detail::ArrMap<T> mm(m.data(), m.size());
    mm = static_cast<T>(momentum) * mm +
         detail::ConstArrMap<T>(p.grad.data(), p.grad.size());
    detail::ArrMap<T> w(p.value.data(), p.value.size());
    w = decay * w - static_cast<T>(lr) * mm;
  }
}

template <typename T>
void optimizer_step(Model<T>& model, OptimizerState<T>& state,
                    const OptimizerConfig& cfg, double lr) {
  switch (cfg.kind) {
    case OptimizerKind::MuonNsgd:
      muon_nsgd_step(model, state, lr, cfg.weight_decay, cfg.momentum,
                     cfg.ns_steps);
      break;
    case OptimizerKind::AdamW:
      adamw_step(model, state, lr, cfg.weight_decay, cfg.beta1, cfg.beta2,
                 cfg.eps);
      break;
    case OptimizerKind::Sgd:
      sgd_step(model, state, lr, cfg.weight_decay, cfg.momentum);
      break;
  }
}

#define DEEPEN_INSTANTIATE(T)                                                  \
  template OptimizerState<T> init_optimizer_state<T>(const Model<T>&,         \
                                                     const OptimizerConfig&); \
  template NewtonSchulzResult newton_schulz_orthogonalize<T>(Tensor<T>&,      \
                                                             int);            \
  template void muon_nsgd_step<T>(Model<T>&, OptimizerState<T>&, double,      \
                                  double, double, int);                       \
  template void adamw_step<T>(Model<T>&, OptimizerState<T>&, double, double,  \
                              double, double, double);                        \
  template void sgd_step<T>(Model<T>&, OptimizerState<T>&, double, double,    \
                            double);                                          \
  template void optimizer_step<T>(Model<T>&, OptimizerState<T>&,              \
                                  const OptimizerConfig&, double);

DEEPEN_INSTANTIATE(float)
DEEPEN_INSTANTIATE(double)
#undef DEEPEN_INSTANTIATE

}  // namespace deepen
