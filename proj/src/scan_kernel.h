#pragma once

#include <cstddef>

namespace safire::kernel {

struct ScanDims {
  std::size_t length;   // T
  std::size_t channels; // D
  std::size_t state;    // N
};

// Raw selective-scan recurrence. `a` holds the (negative) state matrix [D, N].
// `a_bar` and `h` receive per-step values [T, D, N] in visiting order for the
// backward sweep. `h0` may be null.
void scan_forward(const ScanDims& dims, const double* x, const double* delta, const double* b, const double* c,
                  const double* a, const double* d_skip, const std::size_t* order, const double* h0, double* y,
                  double* a_bar, double* h);

// Accumulates gradients. Any output pointer may be null to skip it; `ga` is the
// gradient with respect to `a`, not a_log.
void scan_backward(const ScanDims& dims, const double* gy, const double* x, const double* delta, const double* b,
                   const double* c, const double* a, const double* d_skip, const std::size_t* order,
                   const double* h0, const double* a_bar, const double* h, double* gx, double* gdelta, double* gb,
                   double* gc, double* ga, double* gd_skip);

}  // namespace safire::kernel
