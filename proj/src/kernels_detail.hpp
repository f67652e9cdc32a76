#pragma once

#include <cstddef>
#include <cstdint>

using std::size_t;

// Per-element routines shared by both backends. Each writes exactly one output
// element (or one gradient row) with a fixed-order inner loop; backend choice
// therefore never changes a single bit of the result.

namespace phaseforge::kernels::detail {

// Four fixed-order accumulators break the FP-add latency chain. The summation
// order is part of the kernel contract: serial and OpenMP backends share it,
// so backend choice never changes a bit.
inline double dot(const double* a, const double* b, int n) {
  double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 += a[i] * b[i];
    acc1 += a[i + 1] * b[i + 1];
    acc2 += a[i + 2] * b[i + 2];
    acc3 += a[i + 3] * b[i + 3];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc0 + acc1) + (acc2 + acc3)) + tail;
}

inline void affine_row(const double* W, const double* b, int C, const double* x, double* y, int r) {
  y[r] = (b ? b[r] : 0.0) + dot(W + static_cast<size_t>(r) * C, x, C);
}

inline void affine_add_row(const double* W, int C, const double* x, double* y, int r) {
  y[r] += dot(W + static_cast<size_t>(r) * C, x, C);
}

// Column c of W^T dy, i.e. dx[c] = sum_r W[r][c] dy[r].
inline void bwd_input_col(const double* W, int R, int C, const double* dy, double* dx, int c) {
  double acc = 0.0;
  const double* w = W + c;
  for (int r = 0; r < R; ++r) acc += w[static_cast<size_t>(r) * C] * dy[r];
  dx[c] = acc;
}

// Whole-row variant used by the batch input-backward: dX[t] = W^T dY[t] done
// as an accumulation over rows so the inner loop streams W contiguously.
inline void bwd_input_sample(const double* W, int R, int C, const double* dy, double* dx) {
  for (int c = 0; c < C; ++c) dx[c] = 0.0;
  for (int r = 0; r < R; ++r) {
    const double g = dy[r];
    if (g == 0.0) continue;
    const double* w = W + static_cast<size_t>(r) * C;
    for (int c = 0; c < C; ++c) dx[c] += g * w[c];
  }
}

// One gradient row: gW[r] += sum_t dY[t][r] * X[t], gb[r] += sum_t dY[t][r].
// t ascends so the accumulation order is independent of the backend.
inline void grad_row(const double* X, const double* dY, int R, int C, int T, double* gW, double* gb, int r) {
  double* grow = gW + static_cast<size_t>(r) * C;
  double gbias = 0.0;
  for (int t = 0; t < T; ++t) {
    const double g = dY[static_cast<size_t>(t) * R + r];
    gbias += g;
    if (g == 0.0) continue;
    const double* xrow = X + static_cast<size_t>(t) * C;
    for (int c = 0; c < C; ++c) grow[c] += g * xrow[c];
  }
  if (gb) gb[r] += gbias;
}

}  // namespace phaseforge::kernels::detail
