// Benchmark: serial reference kernels vs the OpenMP backend, at the shapes the
// training loop actually uses, plus one end-to-end training step.

#include <chrono>
#include <cstdio>
#include <vector>

#include "phaseforge/kernels.hpp"
#include "phaseforge/nn.hpp"
#include "phaseforge/rng.hpp"
#include "phaseforge/synth.hpp"
#include "phaseforge/train.hpp"

using namespace phaseforge;
namespace k = phaseforge::kernels;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  using clock = std::chrono::steady_clock;
  fn();  // warm-up
  auto t0 = clock::now();
  for (int i = 0; i < reps; ++i) fn();
  auto t1 = clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

Vec random_vec(size_t n, Rng& rng) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void bench_kernel(const char* name, const std::function<void()>& serial_fn,
                  const std::function<void()>& omp_fn, int reps) {
  double ts = time_ms(serial_fn, reps);
  double tp = time_ms(omp_fn, reps);
  std::printf("%-28s %10.3f ms %10.3f ms %8.2fx\n", name, ts, tp, ts / tp);
}

}  // namespace

int main() {
  k::configure_threads_from_env();
  std::printf("threads: %d\n", k::thread_count());
  std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

  Rng rng(7);
  // LSTM-shaped: 4H x (F+H) with H=128, F=24; chunk length 500
  const int H = 128, F = 24, T = 500;
  Vec W = random_vec(static_cast<size_t>(4 * H) * (F + H), rng);
  Vec b = random_vec(4 * H, rng);
  Vec X = random_vec(static_cast<size_t>(T) * (F + H), rng);
  Vec Y(static_cast<size_t>(T) * 4 * H);
  Vec dY = random_vec(Y.size(), rng);
  Vec dX(X.size());
  Vec gW(W.size()), gb(b.size());
  Vec x1 = random_vec(F + H, rng), y1(4 * H);

  bench_kernel(
      "affine 512x152",
      [&] { k::serial::affine(W.data(), b.data(), 4 * H, F + H, x1.data(), y1.data()); },
      [&] { k::omp::affine(W.data(), b.data(), 4 * H, F + H, x1.data(), y1.data()); }, 2000);
  bench_kernel(
      "affine_batch 500x512x152",
      [&] { k::serial::affine_batch(W.data(), b.data(), 4 * H, F + H, X.data(), T, Y.data()); },
      [&] { k::omp::affine_batch(W.data(), b.data(), 4 * H, F + H, X.data(), T, Y.data()); }, 20);
  bench_kernel(
      "bwd_input_batch",
      [&] {
        k::serial::affine_bwd_input_batch(W.data(), 4 * H, F + H, dY.data(), T, dX.data());
      },
      [&] { k::omp::affine_bwd_input_batch(W.data(), 4 * H, F + H, dY.data(), T, dX.data()); },
      20);
  bench_kernel(
      "grad_batch",
      [&] {
        std::fill(gW.begin(), gW.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        k::serial::affine_grad_batch(X.data(), dY.data(), 4 * H, F + H, T, gW.data(), gb.data());
      },
      [&] {
        std::fill(gW.begin(), gW.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        k::omp::affine_grad_batch(X.data(), dY.data(), 4 * H, F + H, T, gW.data(), gb.data());
      },
      20);

  // one full truncated-BPTT training step on a toy-default video
  synth::WorkflowModel wm;
  wm.phase_duration_mean = {30, 90, 60, 90, 40, 40, 50};
  wm.phase_duration_std = {10, 25, 15, 25, 10, 10, 15};
  synth::SurgeryRecord rec = synth::generate_surgery(wm, 11, "bench");
  synth::PaddedSequence padded = synth::pad_sequence(rec, 600);
  nn::ArchSpec spec;
  spec.encoder_widths = {16, 32, 24};
  spec.lstm_hidden = H;
  spec.num_phases = 7;
  spec.variant = nn::Variant::EndoN2NVanilla;
  nn::ParamStore params = nn::init_params(spec, 3);

  auto step = [&] {
    train::BpttResult r = train::truncated_bptt_grads(params, padded.features, padded.labels,
                                                      padded.mask, 50, rec.fps);
    (void)r;
  };
  int saved = k::thread_count();
  k::configure_threads(1);
  double ts = time_ms(step, 3);
  k::configure_threads(saved);
  double tp = time_ms(step, 3);
  std::printf("%-28s %10.3f ms %10.3f ms %8.2fx\n", "tbptt step (600 frames)", ts, tp, ts / tp);
  return 0;
}
