#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace selfcf {

// Row-major matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  void fill(double v);
  bool same_shape(const DenseMatrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Compressed sparse row matrix. Column indices are strictly increasing inside
// each row; the constructor rejects anything else.
class SparseMatrix {
 public:
  struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
  };

  SparseMatrix() = default;
  // All-zero matrix.
  SparseMatrix(std::size_t rows, std::size_t cols);
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_offsets,
               std::vector<std::size_t> col_indices, std::vector<double> values);

  // Duplicate coordinates are summed.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<Triplet> triplets);
  static SparseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return col_indices_.size(); }

  std::span<const std::size_t> row_offsets() const { return row_offsets_; }
  std::span<const std::size_t> col_indices() const { return col_indices_; }
  std::span<const double> values() const { return values_; }

  // Value at (r, c), zero when the entry is not stored.
  double at(std::size_t r, std::size_t c) const;
  DenseMatrix to_dense() const;

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<std::size_t> col_indices_;
  std::vector<double> values_;
};

// Uniform Glorot initialization on [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))).
DenseMatrix xavier_init(std::size_t rows, std::size_t cols, std::uint64_t seed);

DenseMatrix spmm(const SparseMatrix& s, const DenseMatrix& d);

// Dense products used by the predictor and the tests.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul_at_b(const DenseMatrix& a, const DenseMatrix& b);  // a^T b
DenseMatrix matmul_a_bt(const DenseMatrix& a, const DenseMatrix& b);  // a b^T

// a += scale * b
void axpy(DenseMatrix& a, const DenseMatrix& b, double scale = 1.0);
void scale_inplace(DenseMatrix& a, double scale);
double frobenius_dot(const DenseMatrix& a, const DenseMatrix& b);
double dot(std::span<const double> a, std::span<const double> b);

DenseMatrix gather_rows(const DenseMatrix& table, std::span<const std::size_t> rows);
// table.row(rows[k]) += grads.row(k), duplicates accumulate.
void scatter_add_rows(DenseMatrix& table, std::span<const std::size_t> rows,
                      const DenseMatrix& grads);

// Stacks a on top of b (same column count).
DenseMatrix vstack(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix slice_rows(const DenseMatrix& m, std::size_t begin, std::size_t end);

struct AdamState {
  DenseMatrix first_moment;
  DenseMatrix second_moment;
  std::uint64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(std::size_t rows, std::size_t cols, double lr = 1e-3)
      : first_moment(rows, cols), second_moment(rows, cols), learning_rate(lr) {}
};

// One bias-corrected Adam update of params in place.
void adam_step(DenseMatrix& params, const DenseMatrix& grads, AdamState& state);

using ScalarFunction = std::function<double(const DenseMatrix&)>;

// Central-difference gradient of f at point. Test oracle only.
DenseMatrix finite_diff_grad(const ScalarFunction& f, const DenseMatrix& point, double h);

}  // namespace selfcf
