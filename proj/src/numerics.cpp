#include "selfcf/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "selfcf/errors.hpp"
#include "selfcf/rng.hpp"

namespace selfcf {
namespace {

std::string shape(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

std::string shape(const DenseMatrix& m) { return shape(m.rows(), m.cols()); }

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* what) {
  if (!a.same_shape(b)) {
    throw InvalidDimension(std::string(what) + ": shape " + shape(a) + " vs " + shape(b));
  }
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() == 0 ? 0 : rows.begin()->size()) {
  values_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw InvalidDimension("ragged initializer list");
    values_.insert(values_.end(), r.begin(), r.end());
  }
}

void DenseMatrix::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool DenseMatrix::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), row_offsets_(rows + 1, 0) {}

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols,
                           std::vector<std::size_t> row_offsets,
                           std::vector<std::size_t> col_indices, std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  if (row_offsets_.size() != rows_ + 1 || row_offsets_.front() != 0 ||
      row_offsets_.back() != col_indices_.size() || col_indices_.size() != values_.size()) {
    throw InvalidDimension("inconsistent CSR arrays");
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    if (row_offsets_[r] > row_offsets_[r + 1]) throw InvalidDimension("row offsets decrease");
    for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      if (col_indices_[k] >= cols_) throw InvalidIndex("column index out of range");
      if (k > row_offsets_[r] && col_indices_[k] <= col_indices_[k - 1]) {
        throw InvalidIndex("column indices not strictly increasing in row " +
                           std::to_string(r));
      }
      if (!std::isfinite(values_[k])) throw NumericError("non-finite sparse value");
    }
  }
}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                         std::vector<Triplet> triplets) {
  for (const auto& t : triplets) {
    if (t.row >= rows || t.col >= cols) throw InvalidIndex("triplet out of range");
  }
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<std::size_t> offsets(rows + 1, 0);
  std::vector<std::size_t> cols_out;
  std::vector<double> vals;
  cols_out.reserve(triplets.size());
  vals.reserve(triplets.size());
  std::size_t prev_row = rows;
  for (const auto& t : triplets) {
    if (!cols_out.empty() && prev_row == t.row && cols_out.back() == t.col) {
      vals.back() += t.value;
      continue;
    }
    cols_out.push_back(t.col);
    vals.push_back(t.value);
    ++offsets[t.row + 1];
    prev_row = t.row;
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  return SparseMatrix(rows, cols, std::move(offsets), std::move(cols_out), std::move(vals));
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  std::vector<std::size_t> offsets(n + 1);
  std::iota(offsets.begin(), offsets.end(), std::size_t{0});
  std::vector<std::size_t> cols(n);
  std::iota(cols.begin(), cols.end(), std::size_t{0});
  return SparseMatrix(n, n, std::move(offsets), std::move(cols), std::vector<double>(n, 1.0));
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  auto first = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[r]);
  auto last = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[r + 1]);
  auto it = std::lower_bound(first, last, c);
  if (it == last || *it != c) return 0.0;
  return values_[static_cast<std::size_t>(it - col_indices_.begin())];
}

DenseMatrix SparseMatrix::to_dense() const {
  DenseMatrix out(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      out(r, col_indices_[k]) = values_[k];
    }
  }
  return out;
}

DenseMatrix xavier_init(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  if (rows == 0 || cols == 0) {
    throw InvalidDimension("xavier_init needs positive dimensions, got " + shape(rows, cols));
  }
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Rng rng(seed, /*stream=*/0x78617669ULL);
  DenseMatrix out(rows, cols);
  for (double& v : out.values()) v = rng.uniform(-bound, bound);
  return out;
}

DenseMatrix spmm(const SparseMatrix& s, const DenseMatrix& d) {
  if (s.cols() != d.rows()) {
    throw InvalidDimension("spmm: sparse " + shape(s.rows(), s.cols()) + " times dense " +
                           shape(d));
  }
  DenseMatrix out(s.rows(), d.cols());
  const auto offsets = s.row_offsets();
  const auto cols = s.col_indices();
  const auto vals = s.values();
  for (std::size_t r = 0; r < s.rows(); ++r) {
    auto dst = out.row(r);
    for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) {
      const double w = vals[k];
      auto src = d.row(cols[k]);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += w * src[c];
    }
  }
  return out;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw InvalidDimension("matmul: " + shape(a) + " times " + shape(b));
  }
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double w = a(i, k);
      auto src = b.row(k);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += w * src[j];
    }
  }
  return out;
}

DenseMatrix matmul_at_b(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) {
    throw InvalidDimension("matmul_at_b: " + shape(a) + "^T times " + shape(b));
  }
  DenseMatrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto src = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double w = a(k, i);
      auto dst = out.row(i);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += w * src[j];
    }
  }
  return out;
}

DenseMatrix matmul_a_bt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) {
    throw InvalidDimension("matmul_a_bt: " + shape(a) + " times " + shape(b) + "^T");
  }
  DenseMatrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  }
  return out;
}

void axpy(DenseMatrix& a, const DenseMatrix& b, double scale) {
  require_same_shape(a, b, "axpy");
  auto dst = a.values();
  auto src = b.values();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
}

void scale_inplace(DenseMatrix& a, double scale) {
  for (double& v : a.values()) v *= scale;
}

double frobenius_dot(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "frobenius_dot");
  return dot(a.values(), b.values());
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

DenseMatrix gather_rows(const DenseMatrix& table, std::span<const std::size_t> rows) {
  DenseMatrix out(rows.size(), table.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= table.rows()) {
      throw InvalidIndex("row " + std::to_string(rows[k]) + " out of range for table with " +
                         std::to_string(table.rows()) + " rows");
    }
    std::copy_n(table.row(rows[k]).begin(), table.cols(), out.row(k).begin());
  }
  return out;
}

void scatter_add_rows(DenseMatrix& table, std::span<const std::size_t> rows,
                      const DenseMatrix& grads) {
  if (grads.rows() != rows.size() || grads.cols() != table.cols()) {
    throw InvalidDimension("scatter_add_rows: " + shape(grads) + " into " + shape(table));
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= table.rows()) throw InvalidIndex("scatter row out of range");
    auto dst = table.row(rows[k]);
    auto src = grads.row(k);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
  }
}

DenseMatrix vstack(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) throw InvalidDimension("vstack: column mismatch");
  DenseMatrix out(a.rows() + b.rows(), a.cols());
  std::copy(a.values().begin(), a.values().end(), out.values().begin());
  std::copy(b.values().begin(), b.values().end(),
            out.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

DenseMatrix slice_rows(const DenseMatrix& m, std::size_t begin, std::size_t end) {
  if (begin > end || end > m.rows()) throw InvalidIndex("slice_rows out of range");
  DenseMatrix out(end - begin, m.cols());
  auto first = m.values().begin() + static_cast<std::ptrdiff_t>(begin * m.cols());
  std::copy(first, first + static_cast<std::ptrdiff_t>(out.size()), out.values().begin());
  return out;
}

void adam_step(DenseMatrix& params, const DenseMatrix& grads, AdamState& state) {
  require_same_shape(params, grads, "adam_step grads");
  require_same_shape(params, state.first_moment, "adam_step first moment");
  require_same_shape(params, state.second_moment, "adam_step second moment");
  if (!grads.all_finite()) throw NumericError("adam_step: non-finite gradient");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  auto p = params.values();
  auto g = grads.values();
  auto m = state.first_moment.values();
  auto v = state.second_moment.values();
  for (std::size_t k = 0; k < p.size(); ++k) {
    m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
    v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
    const double m_hat = m[k] / correction1;
    const double v_hat = v[k] / correction2;
    p[k] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

DenseMatrix finite_diff_grad(const ScalarFunction& f, const DenseMatrix& point, double h) {
  if (!(h > 0.0)) throw InvalidParameter("finite_diff_grad: step must be positive");
  DenseMatrix x = point;
  DenseMatrix grad(point.rows(), point.cols());
  auto xs = x.values();
  auto gs = grad.values();
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double orig = xs[k];
    xs[k] = orig + h;
    const double up = f(x);
    xs[k] = orig - h;
    const double down = f(x);
    xs[k] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: non-finite function value at coordinate " +
                         std::to_string(k));
    }
    gs[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace selfcf
