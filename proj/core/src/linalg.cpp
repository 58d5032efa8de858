#include "deepen/linalg.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "eigen_map.hpp"

namespace deepen {

namespace {
std::atomic<int> g_threads{0};
}

void set_compute_threads(int n) {
  if (n < 1) n = 1;
  g_threads.store(n);
  Eigen::setNbThreads(n);
}

int compute_threads() {
  const int n = g_threads.load();
  return n > 0 ? n : Eigen::nbThreads();
}

template <typename T>
double spectral_norm_estimate(const Tensor<T>& w, int steps,
                              std::uint64_t seed) {
  if (w.rank() != 2)
    throw std::invalid_argument("spectral_norm_estimate: need rank-2, got " +
                                shape_str(w.shape()));
  const int rows = w.dim(0), cols = w.dim(1);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      m(i, j) = static_cast<double>(w[static_cast<std::int64_t>(i) * cols + j]);

  Rng rng(seed);
  Eigen::VectorXd v(cols);
  for (int j = 0; j < cols; ++j) v(j) = rng.normal();
  double nv = v.norm();
  if (nv == 0.0) v(0) = 1.0, nv = 1.0;
  v /= nv;
  for (int s = 0; s < steps; ++s) {
    Eigen::VectorXd u = m * v;
    v = m.transpose() * u;
    const double n = v.norm();
    if (n == 0.0) return 0.0;  // v fell in the null space; operator is 0 there
    v /= n;
  }
  return (m * v).norm();
}

template <typename T>
Tensor<T> semi_orthogonal(int rows, int cols, double sv, Rng& rng) {
  if (rows <= 0 || cols <= 0)
    throw std::invalid_argument("semi_orthogonal: extents must be positive");
  const bool tall = rows >= cols;
  const int big = tall ? rows : cols;
  const int small = tall ? cols : rows;

  Eigen::MatrixXd g(big, small);
  for (int i = 0; i < big; ++i)
    for (int j = 0; j < small; ++j) g(i, j) = rng.normal();

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  // Fix the QR sign ambiguity so the factor is Haar-distributed.
  Eigen::MatrixXd r = qr.matrixQR().topRows(small).template triangularView<Eigen::Upper>();
  for (int j = 0; j < small; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);

  Tensor<T> out({rows, cols});
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const double val = tall ? q(i, j) : q(j, i);
      out[static_cast<std::int64_t>(i) * cols + j] = static_cast<T>(sv * val);
    }
  return out;
}

template double spectral_norm_estimate<float>(const Tensor<float>&, int,
                                              std::uint64_t);
template double spectral_norm_estimate<double>(const Tensor<double>&, int,
                                               std::uint64_t);
template Tensor<float> semi_orthogonal<float>(int, int, double, Rng&);
template Tensor<double> semi_orthogonal<double>(int, int, double, Rng&);

}  // namespace deepen
