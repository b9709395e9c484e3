#pragma once

#include <cstddef>

// Double-precision inner-loop kernels used by the layers, the forest and the
// resamplers. Scalar reference implementations are the semantic ground truth;
// an AVX2 variant of each kernel is selected at runtime when the CPU supports
// it. Both variants use a fixed accumulation order, so a given machine always
// produces the same bits; scalar and AVX2 agree to rounding (equivalence is
// covered by tests, not assumed).

namespace sits::kernels {

struct Ops {
  const char* name;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // sum_i x[i]
  double (*sum)(const double* x, std::size_t n);
  // sum_i (x[i] - mu)^2
  double (*sumsqdiff)(const double* x, double mu, std::size_t n);
  // sum_i (a[i] - b[i])^2
  double (*sqdist)(const double* a, const double* b, std::size_t n);
  // index of the first maximum element; n must be >= 1
  std::size_t (*argmax)(const double* x, std::size_t n);
};

const Ops& scalar_ops();

// AVX2+FMA variant; only valid to call when avx2_supported() is true.
const Ops& avx2_ops();

bool avx2_supported();

// Kernels picked for this process: AVX2 when supported, unless the
// SITS_KERNELS environment variable ("scalar" or "avx2") overrides.
const Ops& ops();

inline double dot(const double* a, const double* b, std::size_t n) { return ops().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { ops().axpy(alpha, x, y, n); }
inline double sum(const double* x, std::size_t n) { return ops().sum(x, n); }
inline double sumsqdiff(const double* x, double mu, std::size_t n) { return ops().sumsqdiff(x, mu, n); }
inline double sqdist(const double* a, const double* b, std::size_t n) { return ops().sqdist(a, b, n); }
inline std::size_t argmax(const double* x, std::size_t n) { return ops().argmax(x, n); }

}  // namespace sits::kernels
