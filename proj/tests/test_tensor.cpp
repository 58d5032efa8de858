#include <doctest.h>

#include <stdexcept>

#include "deepen/rng.hpp"
#include "deepen/tensor.hpp"

using namespace deepen;

TEST_CASE("tensor shape and storage invariants") {
  Tensor<double> t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  CHECK(shape_str(t.shape()) == "[2x3x4]");
  for (std::int64_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0);

  CHECK_THROWS_AS(Tensor<double>({2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor<double>({2, 2}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("finiteness guard") {
  Tensor<double> t({2}, {1.0, 2.0});
  CHECK(t.all_finite());
  t[1] = std::numeric_limits<double>::infinity();
  CHECK(!t.all_finite());
  CHECK_THROWS_AS(t.check_finite("unit"), std::runtime_error);
}

TEST_CASE("rng determinism and fork independence") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c(42);
  Rng f1 = c.fork(1), f1b = Rng(42).fork(1), f2 = c.fork(2);
  CHECK(f1.next_u64() == f1b.next_u64());
  CHECK(f1.next_u64() != f2.next_u64());

  // normal() has roughly standard moments
  Rng n(7);
  double mean = 0, var = 0;
  const int k = 20000;
  for (int i = 0; i < k; ++i) {
    const double v = n.normal();
    mean += v;
    var += v * v;
  }
  mean /= k;
  var = var / k - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);
}
