#ifndef VBBLOCKS_MATRIX_HPP
#define VBBLOCKS_MATRIX_HPP

#include <cstddef>
#include <span>
#include <vector>

namespace vbb {

/// Dense row-major matrix; for data sets rows are time steps.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }

  std::vector<double> column(std::size_t c) const {
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) out[r] = (*this)(r, c);
    return out;
  }
};

}  // namespace vbb

#endif  // VBBLOCKS_MATRIX_HPP
