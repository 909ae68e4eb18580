#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace advrec {

// Dense row-major float32 matrix. Parameters are stored in single precision
// (matching the on-disk format); arithmetic on them accumulates in double.
struct MatF {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  MatF() = default;
  MatF(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  std::span<float> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const float> row(std::size_t i) const {
    return {data.data() + i * cols, cols};
  }

  float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool same_shape(const MatF& other) const {
    return rows == other.rows && cols == other.cols;
  }
};

inline double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += double(a[k]) * double(b[k]);
  return acc;
}

inline double l2_norm(std::span<const float> a) {
  double acc = 0.0;
  for (float v : a) acc += double(v) * double(v);
  return std::sqrt(acc);
}

inline double l2_norm(std::span<const double> a) {
  double acc = 0.0;
  for (double v : a) acc += v * v;
  return std::sqrt(acc);
}

inline bool all_finite(const MatF& m) {
  for (float v : m.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace advrec
