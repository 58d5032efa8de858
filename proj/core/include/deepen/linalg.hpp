#pragma once

#include <cstdint>

#include "deepen/rng.hpp"
#include "deepen/tensor.hpp"

namespace deepen {

// Global compute-thread setting for the GEMM backend. Fixed reduction
// order per output block keeps results bit-reproducible for a given
// thread count.
void set_compute_threads(int n);
int compute_threads();

// Top-singular-value estimate by power iteration on W^T W (internally in
// double). For well-conditioned matrices 50 steps land within 1% of the
// true value; equal-spectrum inputs converge in one step.
template <typename T>
double spectral_norm_estimate(const Tensor<T>& w, int steps = 50,
                              std::uint64_t seed = 0x5eed);

// Random [rows x cols] matrix whose singular values all equal `sv`
// (orthonormal columns or rows, whichever fits, via QR of a Gaussian).
template <typename T>
Tensor<T> semi_orthogonal(int rows, int cols, double sv, Rng& rng);

}  // namespace deepen
