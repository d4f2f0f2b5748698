// Compiled with -ffast-math so the per-state exp loop vectorises.

#include "scan_kernel.h"

#include <cmath>
#include <vector>

namespace safire::kernel {

void scan_forward(const ScanDims& dims, const double* x, const double* delta, const double* b, const double* c,
                  const double* a, const double* d_skip, const std::size_t* order, const double* h0, double* y,
                  double* a_bar, double* h) {
  const std::size_t T = dims.length;
  const std::size_t D = dims.channels;
  const std::size_t N = dims.state;
  std::vector<double> zero(D * N, 0.0);
  const double* prev = h0 != nullptr ? h0 : zero.data();

  for (std::size_t s = 0; s < T; ++s) {
    const std::size_t t = order[s];
    const double* bt = b + t * N;
    const double* ct = c + t * N;
    double* ab_s = a_bar + s * D * N;
    double* h_s = h + s * D * N;
    for (std::size_t d = 0; d < D; ++d) {
      const double dt = delta[t * D + d];
      const double xt = x[t * D + d];
      const double dx = dt * xt;
      const double* ad = a + d * N;
      double* abd = ab_s + d * N;
      double* hd = h_s + d * N;
      const double* pd = prev + d * N;
      for (std::size_t n = 0; n < N; ++n) abd[n] = std::exp(dt * ad[n]);
      double acc = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double hv = abd[n] * pd[n] + dx * bt[n];
        hd[n] = hv;
        acc += ct[n] * hv;
      }
      y[t * D + d] = acc + d_skip[d] * xt;
    }
    prev = h_s;
  }
}

void scan_backward(const ScanDims& dims, const double* gy, const double* x, const double* delta, const double* b,
                   const double* c, const double* a, const double* d_skip, const std::size_t* order,
                   const double* h0, const double* a_bar, const double* h, double* gx, double* gdelta, double* gb,
                   double* gc, double* ga, double* gd_skip) {
  const std::size_t T = dims.length;
  const std::size_t D = dims.channels;
  const std::size_t N = dims.state;
  std::vector<double> carry(D * N, 0.0);
  std::vector<double> zero(D * N, 0.0);
  std::vector<double> gb_t(N);
  std::vector<double> gc_t(N);

  for (std::size_t si = T; si-- > 0;) {
    const std::size_t t = order[si];
    const double* bt = b + t * N;
    const double* ct = c + t * N;
    const double* ab_s = a_bar + si * D * N;
    const double* h_s = h + si * D * N;
    const double* hp_s = si > 0 ? h + (si - 1) * D * N : (h0 != nullptr ? h0 : zero.data());
    for (std::size_t n = 0; n < N; ++n) {
      gb_t[n] = 0.0;
      gc_t[n] = 0.0;
    }
    for (std::size_t d = 0; d < D; ++d) {
      const double g = gy[t * D + d];
      const double dt = delta[t * D + d];
      const double xt = x[t * D + d];
      const double dx = dt * xt;
      const double* abd = ab_s + d * N;
      const double* hd = h_s + d * N;
      const double* hpd = hp_s + d * N;
      const double* ad = a + d * N;
      double* cd = carry.data() + d * N;
      double gdelta_acc = 0.0;
      double gx_acc = g * d_skip[d];
      if (gd_skip != nullptr) gd_skip[d] += g * xt;
      for (std::size_t n = 0; n < N; ++n) {
        gc_t[n] += g * hd[n];
        const double dh = cd[n] + g * ct[n];
        const double gab = dh * hpd[n] * abd[n];
        gdelta_acc += gab * ad[n] + dh * bt[n] * xt;
        if (ga != nullptr) ga[d * N + n] += gab * dt;
        gb_t[n] += dh * dx;
        gx_acc += dh * dt * bt[n];
        cd[n] = dh * abd[n];
      }
      if (gdelta != nullptr) gdelta[t * D + d] += gdelta_acc;
      if (gx != nullptr) gx[t * D + d] += gx_acc;
    }
    if (gb != nullptr)
      for (std::size_t n = 0; n < N; ++n) gb[t * N + n] += gb_t[n];
    if (gc != nullptr)
      for (std::size_t n = 0; n < N; ++n) gc[t * N + n] += gc_t[n];
  }
}

}  // namespace safire::kernel
