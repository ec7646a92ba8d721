#pragma once

#include <cassert>
#include <initializer_list>
#include <span>
#include <vector>

namespace tad {

// Dense row-major matrix of doubles. Small sizes only (device counts and
// token batches), so no BLAS backing.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {
    assert(rows >= 0 && cols >= 0);
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(static_cast<int>(rows.size()),
             rows.size() ? static_cast<int>(rows.begin()->size()) : 0);
    int r = 0;
    for (const auto& row : rows) {
      assert(static_cast<int>(row.size()) == m.cols_);
      int c = 0;
      for (double v : row) m.at(r, c++) = v;
      ++r;
    }
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& at(int r, int c) {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return data_[static_cast<size_t>(r) * cols_ + c];
  }
  double at(int r, int c) const {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return data_[static_cast<size_t>(r) * cols_ + c];
  }

  std::span<double> row(int r) { return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)}; }
  std::span<const double> row(int r) const {
    return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  double row_sum(int r) const {
    double s = 0.0;
    for (double v : row(r)) s += v;
    return s;
  }
  double col_sum(int c) const {
    double s = 0.0;
    for (int r = 0; r < rows_; ++r) s += at(r, c);
    return s;
  }
  double max_value() const {
    double m = data_.empty() ? 0.0 : data_[0];
    for (double v : data_)
      if (v > m) m = v;
    return m;
  }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// C = A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  assert(a.cols() == b.rows());
  Matrix c(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) c.at(i, j) += aik * b.at(k, j);
    }
  }
  return c;
}

// C += alpha * A^T * B
inline void add_atb(Matrix& c, const Matrix& a, const Matrix& b, double alpha = 1.0) {
  assert(a.rows() == b.rows() && c.rows() == a.cols() && c.cols() == b.cols());
  for (int k = 0; k < a.rows(); ++k)
    for (int i = 0; i < a.cols(); ++i) {
      const double w = alpha * a.at(k, i);
      if (w == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) c.at(i, j) += w * b.at(k, j);
    }
}

}  // namespace tad
