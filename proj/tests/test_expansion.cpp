#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "deepen/expansion.hpp"
#include "deepen/model.hpp"
#include "deepen/tape.hpp"
#include "testing.hpp"

using namespace deepen;
using testing::random_batch_for;
using testing::svd_spectral_norm;

namespace {

ModelConfig tf_cfg(int depth, std::uint64_t seed = 101, int width = 16) {
  ModelConfig c;
  c.family = Family::TinyTransformer;
  c.depth = depth;
  c.width = width;
  c.vocab = 13;
  c.seq_len = 8;
  c.seed = seed;
  return c;
}

ModelConfig mlp_cfg(int depth, std::uint64_t seed = 102) {
  ModelConfig c;
  c.family = Family::ResidualMlp;
  c.depth = depth;
  c.width = 16;
  c.input_dim = 8;
  c.output_dim = 4;
  c.seed = seed;
  return c;
}

std::vector<int> mapping_of(int ls, int lt, ExpansionMethod m,
                            InsertionSite site = InsertionSite::Bottom) {
  return plan_expansion(ls, lt, m, site).mapping;
}

}  // namespace

TEST_CASE("plan mappings reproduce the reference layouts") {
  using M = ExpansionMethod;
  const int N = ExpansionPlan::kNew;
  CHECK(mapping_of(3, 6, M::CopyingStack) == std::vector<int>{0, 1, 2, 0, 1, 2});
  CHECK(mapping_of(3, 6, M::CopyingInter) == std::vector<int>{0, 0, 1, 1, 2, 2});
  CHECK(mapping_of(3, 6, M::CopyingLast) == std::vector<int>{0, 1, 2, 2, 2, 2});
  CHECK(mapping_of(3, 6, M::Random) == std::vector<int>{0, 1, 2, N, N, N});
  CHECK(mapping_of(3, 6, M::Random, InsertionSite::Top) ==
        std::vector<int>{N, N, N, 0, 1, 2});
  // one-layer expansion: stack == inter element-wise
  CHECK(mapping_of(1, 6, M::CopyingStack) == mapping_of(1, 6, M::CopyingInter));
  CHECK(mapping_of(1, 6, M::CopyingStack) == std::vector<int>{0, 0, 0, 0, 0, 0});
  // non-divisible: whole cycles + prefix / balanced counts from the front
  CHECK(mapping_of(3, 8, M::CopyingStack) ==
        std::vector<int>{0, 1, 2, 0, 1, 2, 0, 1});
  CHECK(mapping_of(3, 8, M::CopyingInter) ==
        std::vector<int>{0, 0, 0, 1, 1, 1, 2, 2});
}

TEST_CASE("plan validation") {
  CHECK_THROWS_AS(plan_expansion(0, 4, ExpansionMethod::CopyingStack),
                  std::invalid_argument);
  CHECK_THROWS_AS(plan_expansion(4, 2, ExpansionMethod::Random),
                  std::invalid_argument);
  CHECK_THROWS_AS(plan_expansion(1, 4, ExpansionMethod::Zero,
                                 InsertionSite::Top),
                  std::invalid_argument);
  // zero from depth 0 is allowed
  CHECK(plan_expansion(0, 4, ExpansionMethod::Zero).mapping.size() == 4);
}

TEST_CASE("mapping totality and copy flags") {
  const auto plan = plan_expansion(2, 7, ExpansionMethod::CopyingStack);
  for (int v : plan.mapping) CHECK(v != ExpansionPlan::kNew);
  CHECK(plan.is_copy ==
        std::vector<bool>{false, false, true, true, true, true, true});
}

TEST_CASE("function preservation of the zeroing methods") {
  using M = ExpansionMethod;
  Rng batch_rng(7);
  for (auto family_cfg : {tf_cfg(0), tf_cfg(1), tf_cfg(3)}) {
    for (M method : {M::Zero, M::CopyingZeroNorm, M::CopyingZeroLastLinear}) {
      if (method != M::Zero && family_cfg.depth < 1) continue;
      auto small = build<double>(family_cfg);
      const auto plan = plan_expansion(family_cfg.depth, 6, method);
      auto grown = expand(small, plan, 999);
      for (int trial = 0; trial < 5; ++trial) {
        auto batch = random_batch_for<double>(family_cfg, 4, batch_rng);
        const auto rep =
            verify_function_preserving(small, grown.model, batch, 1e-12);
        CHECK(rep.preserved);
        CHECK(rep.rel_delta <= 1e-12);
      }
    }
  }
  // MLP family too
  auto small = build<double>(mlp_cfg(1));
  auto grown = expand(small, plan_expansion(1, 4, M::CopyingZeroLastLinear), 1);
  auto batch = random_batch_for<double>(mlp_cfg(1), 6, batch_rng);
  CHECK(verify_function_preserving(small, grown.model, batch, 1e-12).preserved);
}

TEST_CASE("random and copying expansions change the loss") {
  Rng batch_rng(8);
  auto small = build<double>(tf_cfg(3));
  auto batch = random_batch_for<double>(tf_cfg(3), 4, batch_rng);
  for (auto method : {ExpansionMethod::Random, ExpansionMethod::CopyingStack,
                      ExpansionMethod::CopyingInter,
                      ExpansionMethod::CopyingLast}) {
    auto grown = expand(small, plan_expansion(3, 6, method), 31);
    const auto rep = verify_function_preserving(small, grown.model, batch, 1e-12);
    CHECK(!rep.preserved);
    CHECK(rep.rel_delta > 1e-3);
  }
}

TEST_CASE("source model is never mutated") {
  auto small = build<double>(tf_cfg(2));
  auto snapshot = small;
  (void)expand(small, plan_expansion(2, 6, ExpansionMethod::CopyingZeroNorm), 5);
  (void)expand(small, plan_expansion(2, 8, ExpansionMethod::Random), 5);
  REQUIRE(snapshot.params.size() == small.params.size());
  for (std::size_t i = 0; i < small.params.size(); ++i)
    for (std::int64_t j = 0; j < small.params[i].value.size(); ++j)
      CHECK(small.params[i].value[j] == snapshot.params[i].value[j]);
}

TEST_CASE("random expansion meets the spectral rule on new blocks") {
  auto small = build<double>(tf_cfg(0, 77, 32));
  auto grown = expand(small, plan_expansion(0, 4, ExpansionMethod::Random), 7);
  int checked = 0;
  for (const auto& p : grown.model.params) {
    if (!is_hidden_matrix(p.role, p.rank())) continue;
    CHECK(std::abs(svd_spectral_norm(p.value) - spectral_target(p.value.shape())) <
          1e-3);
    ++checked;
  }
  CHECK(checked == 4 * 6);  // 6 matrices per transformer block
}

TEST_CASE("zero expansion kills gradient flow into new blocks") {
  auto cfg = tf_cfg(1);
  auto small = build<double>(cfg);
  auto grown = expand(small, plan_expansion(1, 4, ExpansionMethod::Zero), 3);
  Rng rng(12);
  auto batch = random_batch_for<double>(cfg, 4, rng);
  grown.model.zero_grad();
  Tape<double> tape;
  tape.backward(forward(grown.model, batch, tape));
  for (std::size_t b = 1; b < 4; ++b) {  // blocks 1..3 are the zero blocks
    for (int slot :
         {grown.model.blocks[b].ln1, grown.model.blocks[b].wq,
          grown.model.blocks[b].fc1, grown.model.blocks[b].fc2}) {
      const auto& g = grown.model.at(slot).grad;
      for (std::int64_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
    }
  }
}

TEST_CASE("copying_zero_last_linear keeps copied blocks trainable") {
  auto cfg = tf_cfg(1);
  auto small = build<double>(cfg);
  auto grown = expand(
      small, plan_expansion(1, 6, ExpansionMethod::CopyingZeroLastLinear), 3);
  Rng rng(13);
  auto batch = random_batch_for<double>(cfg, 4, rng);
  grown.model.zero_grad();
  Tape<double> tape;
  tape.backward(forward(grown.model, batch, tape));
  for (const auto& blk : grown.model.blocks) {
    double mass = 0;
    for (int slot : {blk.ln1, blk.wq, blk.wk, blk.wv, blk.wo, blk.ln2, blk.fc1,
                     blk.fc2}) {
      const auto& g = grown.model.at(slot).grad;
      for (std::int64_t i = 0; i < g.size(); ++i) mass += std::abs(g[i]);
    }
    CHECK(mass > 0.0);  // every block receives gradient signal
  }
}

TEST_CASE("optimizer state policies") {
  OptimizerConfig opt;
  opt.kind = OptimizerKind::MuonNsgd;

  SUBCASE("inherit from depth 0 gives [E, zeros, L]") {
    auto small = build<double>(tf_cfg(0));
    auto state = init_optimizer_state(small, opt);
    Rng rng(5);
    for (auto& [id, s] : state)
      for (std::int64_t i = 0; i < s.m.size(); ++i) s.m[i] = rng.normal();

    auto grown = expand(small, plan_expansion(0, 12, ExpansionMethod::Random), 9);
    auto big = expand_optimizer_state(state, grown, OsPolicy::Inherit, opt);
    for (const auto& p : grown.model.params) {
      const auto& m = big.at(p.id).m;
      if (p.role.kind == Role::Kind::Hidden) {
        for (std::int64_t i = 0; i < m.size(); ++i) CHECK(m[i] == 0.0);
      } else {
        const auto& src = state.at(p.id).m;
        for (std::int64_t i = 0; i < m.size(); ++i) CHECK(m[i] == src[i]);
      }
    }
  }

  SUBCASE("reset zeroes every buffer") {
    auto small = build<double>(tf_cfg(2));
    auto state = init_optimizer_state(small, opt);
    for (auto& [id, s] : state) s.m.fill(0.5);
    auto grown =
        expand(small, plan_expansion(2, 4, ExpansionMethod::CopyingStack), 9);
    auto big = expand_optimizer_state(state, grown, OsPolicy::Reset, opt);
    for (const auto& [id, s] : big)
      for (std::int64_t i = 0; i < s.m.size(); ++i) CHECK(s.m[i] == 0.0);
  }

  SUBCASE("copy clones momenta onto stacked copies bit for bit") {
    auto small = build<double>(tf_cfg(3));
    auto state = init_optimizer_state(small, opt);
    Rng rng(6);
    for (auto& [id, s] : state)
      for (std::int64_t i = 0; i < s.m.size(); ++i) s.m[i] = rng.normal();
    auto grown =
        expand(small, plan_expansion(3, 6, ExpansionMethod::CopyingStack), 9);
    auto big = expand_optimizer_state(state, grown, OsPolicy::Copy, opt);
    // positions 3..5 copy blocks 0..2
    for (int pos = 3; pos < 6; ++pos) {
      const auto& copy_blk = grown.model.blocks[static_cast<std::size_t>(pos)];
      const auto& src_blk = small.blocks[static_cast<std::size_t>(pos - 3)];
      const auto& mc = big.at(grown.model.at(copy_blk.wq).id).m;
      const auto& ms = state.at(small.at(src_blk.wq).id).m;
      REQUIRE(mc.size() == ms.size());
      for (std::int64_t i = 0; i < mc.size(); ++i) CHECK(mc[i] == ms[i]);
    }
  }

  SUBCASE("unknown parameter id raises") {
    auto small = build<double>(tf_cfg(1));
    auto state = init_optimizer_state(small, opt);
    state.erase("h0.wq");
    auto grown =
        expand(small, plan_expansion(1, 2, ExpansionMethod::CopyingStack), 9);
    CHECK_THROWS_AS(expand_optimizer_state(state, grown, OsPolicy::Inherit, opt),
                    std::invalid_argument);
  }
}

TEST_CASE("expand validates the plan against the model") {
  auto small = build<double>(tf_cfg(2));
  const auto plan = plan_expansion(3, 6, ExpansionMethod::Random);
  CHECK_THROWS_AS(expand(small, plan, 1), std::invalid_argument);
}
