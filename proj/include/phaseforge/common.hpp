#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace phaseforge {

using Vec = std::vector<double>;

// Dense row-major matrix. Vectors are stored as rows==n, cols==1.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

  static Matrix vector(int n, double fill = 0.0) { return Matrix(n, 1, fill); }

  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

// Named gradient / parameter arrays keyed by tensor name. std::map keeps
// iteration order stable, which every determinism contract relies on.
using TensorMap = std::map<std::string, Matrix>;

inline bool all_finite(const Matrix& m) {
  for (double v : m.data)
    if (!std::isfinite(v)) return false;
  return true;
}

struct PhaseforgeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw PhaseforgeError(msg);
}

// Relative error with a floor so near-zero pairs compare on an absolute scale.
inline double rel_err(double a, double b, double floor = 1e-4) {
  double denom = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / denom;
}

inline double max_rel_err(const Matrix& a, const Matrix& b, double floor = 1e-4) {
  assert(a.same_shape(b));
  double worst = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    worst = std::max(worst, rel_err(a.data[i], b.data[i], floor));
  return worst;
}

inline double max_rel_err(const TensorMap& a, const TensorMap& b, double floor = 1e-4) {
  double worst = 0.0;
  for (const auto& [name, t] : a) {
    auto it = b.find(name);
    require(it != b.end(), "max_rel_err: missing tensor " + name);
    worst = std::max(worst, max_rel_err(t, it->second, floor));
  }
  return worst;
}

}  // namespace phaseforge
