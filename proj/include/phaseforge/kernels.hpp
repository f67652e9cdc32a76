#pragma once

#include <cstdint>

// Dense kernels behind the network math. Two backends share one contract:
// kernels::serial is the reference, the OpenMP backend splits work across
// independent output elements only. Every output element is produced by the
// same inlined element routine with a fixed-order inner summation, so both
// backends return bit-identical results for any thread count. Training and
// experiment determinism rests on that property; kernels_test asserts it.

namespace phaseforge::kernels {

// Thread configuration. threads <= 1 selects the serial backend.
void configure_threads(int threads);
// Reads PHASEFORGE_THREADS (unset -> hardware default).
void configure_threads_from_env();
int thread_count();
bool parallel_enabled();

// y = W x + b           W: R x C row-major, b may be null
void affine(const double* W, const double* b, int R, int C, const double* x, double* y);
// y += W x
void affine_add(const double* W, int R, int C, const double* x, double* y);
// Y[t] = W X[t] + b     X: T x C, Y: T x R
void affine_batch(const double* W, const double* b, int R, int C, const double* X, int T, double* Y);
// dx = W^T dy
void affine_bwd_input(const double* W, int R, int C, const double* dy, double* dx);
// dX[t] = W^T dY[t]
void affine_bwd_input_batch(const double* W, int R, int C, const double* dY, int T, double* dX);
// gW += sum_t dY[t] X[t]^T ; gb += sum_t dY[t]   (gb may be null)
void affine_grad_batch(const double* X, const double* dY, int R, int C, int T, double* gW, double* gb);
void relu(const double* z, double* a, int64_t n);
// dz = da where a > 0 else 0    (a is the post-activation)
void relu_bwd(const double* a, const double* da, double* dz, int64_t n);

namespace serial {
void affine(const double* W, const double* b, int R, int C, const double* x, double* y);
void affine_add(const double* W, int R, int C, const double* x, double* y);
void affine_batch(const double* W, const double* b, int R, int C, const double* X, int T, double* Y);
void affine_bwd_input(const double* W, int R, int C, const double* dy, double* dx);
void affine_bwd_input_batch(const double* W, int R, int C, const double* dY, int T, double* dX);
void affine_grad_batch(const double* X, const double* dY, int R, int C, int T, double* gW, double* gb);
void relu(const double* z, double* a, int64_t n);
void relu_bwd(const double* a, const double* da, double* dz, int64_t n);
}  // namespace serial

namespace omp {
void affine(const double* W, const double* b, int R, int C, const double* x, double* y);
void affine_add(const double* W, int R, int C, const double* x, double* y);
void affine_batch(const double* W, const double* b, int R, int C, const double* X, int T, double* Y);
void affine_bwd_input(const double* W, int R, int C, const double* dy, double* dx);
void affine_bwd_input_batch(const double* W, int R, int C, const double* dY, int T, double* dX);
void affine_grad_batch(const double* X, const double* dY, int R, int C, int T, double* gW, double* gb);
void relu(const double* z, double* a, int64_t n);
void relu_bwd(const double* a, const double* da, double* dz, int64_t n);
}  // namespace omp

}  // namespace phaseforge::kernels
