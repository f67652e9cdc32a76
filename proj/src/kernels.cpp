#include "phaseforge/kernels.hpp"

#include <algorithm>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace phaseforge::kernels {

namespace {
int g_threads = 1;
}

void configure_threads(int threads) {
#ifdef _OPENMP
  if (threads <= 0) threads = omp_get_num_procs();
  g_threads = threads;
  omp_set_num_threads(threads);
#else
  g_threads = 1;
  (void)threads;
#endif
}

void configure_threads_from_env() {
  const char* env = std::getenv("PHASEFORGE_THREADS");
  configure_threads(env ? std::atoi(env) : 0);
}

int thread_count() { return g_threads; }

bool parallel_enabled() {
#ifdef _OPENMP
  return g_threads > 1;
#else
  return false;
#endif
}

namespace {
// Forking a parallel region costs tens of microseconds on this runtime; below
// this much work the serial path wins. Both backends are bit-identical, so the
// threshold is purely a throughput knob.
constexpr int64_t kParallelMinWork = 1 << 21;

inline bool go_parallel(int64_t work) { return parallel_enabled() && work >= kParallelMinWork; }
}  // namespace

#define PF_DISPATCH(work, fn, ...)    \
  do {                                \
    if (go_parallel(work))            \
      omp::fn(__VA_ARGS__);           \
    else                              \
      serial::fn(__VA_ARGS__);        \
  } while (0)

void affine(const double* W, const double* b, int R, int C, const double* x, double* y) {
  PF_DISPATCH(2LL * R * C, affine, W, b, R, C, x, y);
}
void affine_add(const double* W, int R, int C, const double* x, double* y) {
  PF_DISPATCH(2LL * R * C, affine_add, W, R, C, x, y);
}
void affine_batch(const double* W, const double* b, int R, int C, const double* X, int T, double* Y) {
  PF_DISPATCH(2LL * R * C * T, affine_batch, W, b, R, C, X, T, Y);
}
void affine_bwd_input(const double* W, int R, int C, const double* dy, double* dx) {
  PF_DISPATCH(2LL * R * C, affine_bwd_input, W, R, C, dy, dx);
}
void affine_bwd_input_batch(const double* W, int R, int C, const double* dY, int T, double* dX) {
  PF_DISPATCH(2LL * R * C * T, affine_bwd_input_batch, W, R, C, dY, T, dX);
}
void affine_grad_batch(const double* X, const double* dY, int R, int C, int T, double* gW, double* gb) {
  PF_DISPATCH(2LL * R * C * T, affine_grad_batch, X, dY, R, C, T, gW, gb);
}
void relu(const double* z, double* a, int64_t n) { PF_DISPATCH(n, relu, z, a, n); }
void relu_bwd(const double* a, const double* da, double* dz, int64_t n) {
  PF_DISPATCH(n, relu_bwd, a, da, dz, n);
}

#undef PF_DISPATCH

}  // namespace phaseforge::kernels
