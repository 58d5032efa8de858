#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "deepen/linalg.hpp"
#include "deepen/model.hpp"
#include "deepen/optimizer.hpp"
#include "testing.hpp"

using namespace deepen;
using testing::random_tensor;
using testing::singular_values;

namespace {

ModelConfig mlp_cfg(int depth, std::uint64_t seed = 11) {
  ModelConfig c;
  c.family = Family::ResidualMlp;
  c.depth = depth;
  c.width = 16;
  c.input_dim = 8;
  c.output_dim = 4;
  c.seed = seed;
  return c;
}

// Random square matrix with prescribed condition number <= kappa:
// Haar factors around a log-uniform spectrum pinned at [1/kappa, 1].
Tensor<double> conditioned_matrix(int n, double kappa, Rng& rng) {
  Tensor<double> u = semi_orthogonal<double>(n, n, 1.0, rng);
  Tensor<double> v = semi_orthogonal<double>(n, n, 1.0, rng);
  std::vector<double> sigma(static_cast<std::size_t>(n));
  sigma[0] = 1.0;
  sigma[1] = 1.0 / kappa;
  for (int i = 2; i < n; ++i)
    sigma[static_cast<std::size_t>(i)] =
        std::exp(-rng.uniform() * std::log(kappa));
  Tensor<double> out({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0;
      for (int k = 0; k < n; ++k)
        acc += u[i * n + k] * sigma[static_cast<std::size_t>(k)] * v[j * n + k];
      out[i * n + j] = acc;
    }
  return out;
}

}  // namespace

TEST_CASE("newton-schulz drives orthonormal-row inputs to unit spectrum") {
  Rng rng(20);
  for (auto [rows, cols] : {std::pair{8, 24}, {16, 48}, {8, 64}, {32, 64}}) {
    Tensor<double> m = semi_orthogonal<double>(rows, cols, 1.0, rng);
    auto res = newton_schulz_orthogonalize(m, 5);
    CHECK(!res.degenerate);
    for (double s : singular_values(m)) CHECK(std::abs(s - 1.0) < 0.3);
  }
}

TEST_CASE("newton-schulz zero input flags degenerate") {
  Tensor<double> z({6, 6});
  auto res = newton_schulz_orthogonalize(z, 5);
  CHECK(res.degenerate);
  for (std::int64_t i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0);
}

TEST_CASE("newton-schulz spectral band on conditioned random inputs") {
  // Measured image of the 5-step iteration for cond <= 100 inputs; the
  // oscillating polynomial floors at ~0.682 and caps at ~1.203.
  Rng rng(21);
  double lo = 1e9, hi = 0;
  for (int trial = 0; trial < 40; ++trial) {
    Tensor<double> m = conditioned_matrix(64, 2.0 + 98.0 * rng.uniform(), rng);
    newton_schulz_orthogonalize(m, 5);
    for (double s : singular_values(m)) {
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
  }
  CHECK(lo > 0.68);
  CHECK(hi < 1.21);
}

TEST_CASE("muon-nsgd no-op and decay behavior") {
  auto model = build<double>(mlp_cfg(1));
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::MuonNsgd;
  auto state = init_optimizer_state(model, cfg);
  model.zero_grad();

  // lambda = 0, zero gradient and momentum: parameters unchanged
  auto before = model;
  muon_nsgd_step(model, state, 0.01, 0.0, 0.95, 5);
  for (std::size_t i = 0; i < model.params.size(); ++i)
    for (std::int64_t j = 0; j < model.params[i].value.size(); ++j)
      CHECK(model.params[i].value[j] == before.params[i].value[j]);

  // eta = 0.01, lambda = 0.1: every tensor decays by exactly 0.999
  muon_nsgd_step(model, state, 0.01, 0.1, 0.95, 5);
  for (std::size_t i = 0; i < model.params.size(); ++i)
    for (std::int64_t j = 0; j < model.params[i].value.size(); ++j)
      CHECK(model.params[i].value[j] ==
            doctest::Approx(before.params[i].value[j] * 0.999).epsilon(1e-12));
}

TEST_CASE("nsgd branch normalizes momentum to unit direction") {
  auto model = build<double>(mlp_cfg(0));
  OptimizerConfig cfg;
  auto state = init_optimizer_state(model, cfg);
  model.zero_grad();
  // rank-1 bias with gradient (3, 4, 0, 0) and beta=0 -> momentum (3,4,0,0)
  auto& bias = *model.find("l.b");
  bias.grad[0] = 3.0;
  bias.grad[1] = 4.0;
  const auto before = bias.value;
  muon_nsgd_step(model, state, 0.5, 0.0, 0.0, 5);
  CHECK(bias.value[0] == doctest::Approx(before[0] - 0.5 * 0.6).epsilon(1e-12));
  CHECK(bias.value[1] == doctest::Approx(before[1] - 0.5 * 0.8).epsilon(1e-12));
  CHECK(bias.value[2] == doctest::Approx(before[2]).epsilon(1e-12));
}

TEST_CASE("nsgd update direction is scale invariant") {
  auto run = [&](double grad_scale) {
    auto model = build<double>(mlp_cfg(0, 33));
    OptimizerConfig cfg;
    auto state = init_optimizer_state(model, cfg);
    model.zero_grad();
    auto& bias = *model.find("e.b");
    Rng rng(3);
    for (std::int64_t i = 0; i < bias.grad.size(); ++i)
      bias.grad[i] = rng.normal() * grad_scale;
    const auto before = bias.value;
    muon_nsgd_step(model, state, 0.1, 0.0, 0.0, 5);
    Tensor<double> delta(bias.value.shape());
    for (std::int64_t i = 0; i < delta.size(); ++i)
      delta[i] = bias.value[i] - before[i];
    return delta;
  };
  const auto d1 = run(1.0);
  const auto d2 = run(37.5);
  CHECK(testing::rel_err(d1, d2) < 1e-10);  // direction equality
}

TEST_CASE("muon branch routes exactly the rank-2 parameters") {
  auto model = build<double>(mlp_cfg(1, 44));
  OptimizerConfig cfg;
  auto state = init_optimizer_state(model, cfg);
  model.zero_grad();
  Rng rng(9);
  for (auto& p : model.params)
    for (std::int64_t i = 0; i < p.grad.size(); ++i) p.grad[i] = rng.normal();
  std::map<std::string, Tensor<double>> before;
  for (auto& p : model.params) before.emplace(p.id, p.value);
  const double lr = 0.05;
  muon_nsgd_step(model, state, lr, 0.0, 0.0, 5);
  for (auto& p : model.params) {
    Tensor<double> upd(p.value.shape());
    for (std::int64_t i = 0; i < upd.size(); ++i)
      upd[i] = (before.at(p.id)[i] - p.value[i]) / lr;
    if (p.rank() == 2) {
      // near-orthogonalized update: top singular value close to 1,
      // far from the raw normalized-gradient scale
      const auto sv = singular_values(upd);
      CHECK(sv.front() > 0.6);
      CHECK(sv.front() < 1.3);
    } else {
      double n2 = 0;
      for (std::int64_t i = 0; i < upd.size(); ++i) n2 += upd[i] * upd[i];
      CHECK(std::sqrt(n2) == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("adamw matches an independent scalar recomputation") {
  auto model = build<double>(mlp_cfg(0, 55));
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::AdamW;
  auto state = init_optimizer_state(model, cfg);
  auto& bias = *model.find("l.b");

  const double lr = 0.1, wd = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double w_ref = bias.value[0];
  double m_ref = 0, v_ref = 0;
  Rng rng(6);
  for (int step = 1; step <= 10; ++step) {
    const double g = rng.normal();
    model.zero_grad();
    bias.grad[0] = g;
    adamw_step(model, state, lr, wd, b1, b2, eps);

    m_ref = b1 * m_ref + (1 - b1) * g;
    v_ref = b2 * v_ref + (1 - b2) * g * g;
    const double mh = m_ref / (1 - std::pow(b1, step));
    const double vh = v_ref / (1 - std::pow(b2, step));
    w_ref = (1 - lr * wd) * w_ref - lr * mh / (std::sqrt(vh) + eps);
    CHECK(bias.value[0] == doctest::Approx(w_ref).epsilon(1e-12));
  }
}

TEST_CASE("adamw constant gradient converges to sign steps") {
  auto model = build<double>(mlp_cfg(0, 66));
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::AdamW;
  auto state = init_optimizer_state(model, cfg);
  auto& bias = *model.find("l.b");
  const double lr = 0.01;
  double prev = bias.value[0];
  for (int step = 0; step < 300; ++step) {
    model.zero_grad();
    bias.grad[0] = -2.5;  // constant gradient
    adamw_step(model, state, lr, 0.0, 0.9, 0.999, 1e-8);
    if (step > 250) {
      CHECK(bias.value[0] - prev ==
            doctest::Approx(lr).epsilon(1e-3));  // sign(g) * lr upward
    }
    prev = bias.value[0];
  }
}

TEST_CASE("adamw zero gradient only decays") {
  auto model = build<double>(mlp_cfg(0, 77));
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::AdamW;
  auto state = init_optimizer_state(model, cfg);
  model.zero_grad();
  auto& w = *model.find("l.w");
  const auto before = w.value;
  adamw_step(model, state, 0.1, 0.5, 0.9, 0.999, 1e-8);
  for (std::int64_t i = 0; i < w.value.size(); ++i)
    CHECK(w.value[i] == doctest::Approx(before[i] * 0.95).epsilon(1e-12));
}

TEST_CASE("optimizer config validation") {
  OptimizerConfig bad;
  bad.momentum = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  OptimizerConfig neg;
  neg.peak_lr = 0;
  CHECK_THROWS_AS(neg.validate(), std::invalid_argument);
}
