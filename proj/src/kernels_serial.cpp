#include "phaseforge/kernels.hpp"

#include "kernels_detail.hpp"

namespace phaseforge::kernels::serial {

using namespace detail;

void affine(const double* W, const double* b, int R, int C, const double* x, double* y) {
  for (int r = 0; r < R; ++r) affine_row(W, b, C, x, y, r);
}

void affine_add(const double* W, int R, int C, const double* x, double* y) {
  for (int r = 0; r < R; ++r) affine_add_row(W, C, x, y, r);
}

void affine_batch(const double* W, const double* b, int R, int C, const double* X, int T, double* Y) {
  for (int t = 0; t < T; ++t) {
    const double* x = X + static_cast<size_t>(t) * C;
    double* y = Y + static_cast<size_t>(t) * R;
    for (int r = 0; r < R; ++r) affine_row(W, b, C, x, y, r);
  }
}

void affine_bwd_input(const double* W, int R, int C, const double* dy, double* dx) {
  bwd_input_sample(W, R, C, dy, dx);
}

void affine_bwd_input_batch(const double* W, int R, int C, const double* dY, int T, double* dX) {
  for (int t = 0; t < T; ++t)
    bwd_input_sample(W, R, C, dY + static_cast<size_t>(t) * R, dX + static_cast<size_t>(t) * C);
}

void affine_grad_batch(const double* X, const double* dY, int R, int C, int T, double* gW, double* gb) {
  for (int r = 0; r < R; ++r) grad_row(X, dY, R, C, T, gW, gb, r);
}

void relu(const double* z, double* a, int64_t n) {
  for (int64_t i = 0; i < n; ++i) a[i] = z[i] > 0.0 ? z[i] : 0.0;
}

void relu_bwd(const double* a, const double* da, double* dz, int64_t n) {
  for (int64_t i = 0; i < n; ++i) dz[i] = a[i] > 0.0 ? da[i] : 0.0;
}

}  // namespace phaseforge::kernels::serial
