#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "phaseforge/common.hpp"
#include "phaseforge/kernels.hpp"
#include "phaseforge/rng.hpp"

using namespace phaseforge;
namespace k = phaseforge::kernels;

namespace {
Vec random_vec(size_t n, Rng& rng) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}
bool bit_equal(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}
}  // namespace

// The OpenMP backend must be bit-identical to the serial reference: every
// output element is computed by the same routine with the same inner order.
TEST_CASE("omp kernels match serial bit for bit") {
  k::configure_threads(4);
  Rng rng(123);
  for (auto [R, C, T] : {std::tuple{17, 9, 31}, {64, 33, 7}, {512, 152, 100}, {1, 5, 3}}) {
    Vec W = random_vec(static_cast<size_t>(R) * C, rng);
    Vec b = random_vec(R, rng);
    Vec x = random_vec(C, rng);
    Vec X = random_vec(static_cast<size_t>(T) * C, rng);
    Vec dy = random_vec(R, rng);
    Vec dY = random_vec(static_cast<size_t>(T) * R, rng);

    Vec y1(R), y2(R);
    k::serial::affine(W.data(), b.data(), R, C, x.data(), y1.data());
    k::omp::affine(W.data(), b.data(), R, C, x.data(), y2.data());
    CHECK(bit_equal(y1, y2));

    Vec a1 = y1, a2 = y1;
    k::serial::affine_add(W.data(), R, C, x.data(), a1.data());
    k::omp::affine_add(W.data(), R, C, x.data(), a2.data());
    CHECK(bit_equal(a1, a2));

    Vec Y1(static_cast<size_t>(T) * R), Y2(Y1.size());
    k::serial::affine_batch(W.data(), b.data(), R, C, X.data(), T, Y1.data());
    k::omp::affine_batch(W.data(), b.data(), R, C, X.data(), T, Y2.data());
    CHECK(bit_equal(Y1, Y2));

    Vec dx1(C), dx2(C);
    k::serial::affine_bwd_input(W.data(), R, C, dy.data(), dx1.data());
    k::omp::affine_bwd_input(W.data(), R, C, dy.data(), dx2.data());
    CHECK(bit_equal(dx1, dx2));

    Vec dX1(static_cast<size_t>(T) * C), dX2(dX1.size());
    k::serial::affine_bwd_input_batch(W.data(), R, C, dY.data(), T, dX1.data());
    k::omp::affine_bwd_input_batch(W.data(), R, C, dY.data(), T, dX2.data());
    CHECK(bit_equal(dX1, dX2));

    Vec gW1(W.size(), 0.0), gW2(W.size(), 0.0), gb1(R, 0.0), gb2(R, 0.0);
    k::serial::affine_grad_batch(X.data(), dY.data(), R, C, T, gW1.data(), gb1.data());
    k::omp::affine_grad_batch(X.data(), dY.data(), R, C, T, gW2.data(), gb2.data());
    CHECK(bit_equal(gW1, gW2));
    CHECK(bit_equal(gb1, gb2));
  }
}

TEST_CASE("affine computes Wx + b") {
  // 2x3 hand case
  Vec W = {1, 2, 3, 4, 5, 6};
  Vec b = {0.5, -0.5};
  Vec x = {1, 0, -1};
  Vec y(2);
  k::affine(W.data(), b.data(), 2, 3, x.data(), y.data());
  CHECK(y[0] == doctest::Approx(1 - 3 + 0.5));
  CHECK(y[1] == doctest::Approx(4 - 6 - 0.5));

  Vec dy = {1.0, -2.0};
  Vec dx(3);
  k::affine_bwd_input(W.data(), 2, 3, dy.data(), dx.data());
  CHECK(dx[0] == doctest::Approx(1 * 1 + 4 * -2));
  CHECK(dx[1] == doctest::Approx(2 * 1 + 5 * -2));
  CHECK(dx[2] == doctest::Approx(3 * 1 + 6 * -2));
}

TEST_CASE("grad_batch accumulates sum_t dy x^T") {
  // T=2, R=1, C=2
  Vec X = {1, 2, 3, 4};
  Vec dY = {0.5, -1.0};
  Vec gW(2, 1.0), gb(1, 1.0);  // accumulates on top of existing values
  k::affine_grad_batch(X.data(), dY.data(), 1, 2, 2, gW.data(), gb.data());
  CHECK(gW[0] == doctest::Approx(1.0 + 0.5 * 1 - 1.0 * 3));
  CHECK(gW[1] == doctest::Approx(1.0 + 0.5 * 2 - 1.0 * 4));
  CHECK(gb[0] == doctest::Approx(1.0 + 0.5 - 1.0));
}

TEST_CASE("relu and backward") {
  Vec z = {-1.0, 0.0, 2.5};
  Vec a(3);
  k::relu(z.data(), a.data(), 3);
  CHECK(a == Vec{0.0, 0.0, 2.5});
  Vec da = {1.0, 1.0, 1.0};
  Vec dz(3);
  k::relu_bwd(a.data(), da.data(), dz.data(), 3);
  CHECK(dz == Vec{0.0, 0.0, 1.0});
}

TEST_CASE("results independent of thread count") {
  Rng rng(9);
  const int R = 64, C = 48, T = 33;
  Vec W = random_vec(static_cast<size_t>(R) * C, rng);
  Vec b = random_vec(R, rng);
  Vec X = random_vec(static_cast<size_t>(T) * C, rng);
  Vec ref(static_cast<size_t>(T) * R);
  k::configure_threads(1);
  k::affine_batch(W.data(), b.data(), R, C, X.data(), T, ref.data());
  for (int threads : {2, 3, 8}) {
    k::configure_threads(threads);
    Vec got(ref.size());
    k::affine_batch(W.data(), b.data(), R, C, X.data(), T, got.data());
    CHECK(bit_equal(ref, got));
  }
  k::configure_threads(0);
}
