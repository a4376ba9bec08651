#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace lossyckpt {

using Vector = std::vector<double>;
using index_t = std::int32_t;

/// Throws NonFiniteError if any entry is NaN or infinite.
void require_finite(std::span<const double> v, const char* what = "vector");

/// Immutable sparse matrix in compressed-sparse-row layout.
///
/// Column indices are strictly increasing within each row and every
/// structural invariant is checked on construction, so a CsrMatrix that
/// exists is always well formed.
class CsrMatrix {
 public:
  CsrMatrix() = default;
  CsrMatrix(std::size_t nrows, std::size_t ncols, std::vector<std::int64_t> row_ptr,
            std::vector<index_t> col_idx, std::vector<double> values);

  /// Builds from unordered (row, col, value) triplets; duplicates are summed.
  struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
  };
  static CsrMatrix from_triplets(std::size_t nrows, std::size_t ncols,
                                 std::vector<Triplet> triplets);

  std::size_t nrows() const noexcept { return nrows_; }
  std::size_t ncols() const noexcept { return ncols_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  std::span<const std::int64_t> row_ptr() const noexcept { return row_ptr_; }
  std::span<const index_t> col_idx() const noexcept { return col_idx_; }
  std::span<const double> values() const noexcept { return values_; }

  /// Entry (i, j), zero when not stored.
  double at(std::size_t i, std::size_t j) const;
  Vector diagonal() const;
  CsrMatrix transpose() const;
  double frobenius_norm() const;

  friend bool operator==(const CsrMatrix&, const CsrMatrix&) = default;

 private:
  std::size_t nrows_ = 0;
  std::size_t ncols_ = 0;
  std::vector<std::int64_t> row_ptr_{0};
  std::vector<index_t> col_idx_;
  std::vector<double> values_;
};

/// Seven-point finite-difference Laplacian on an n x n x n grid with
/// Dirichlet boundaries: +6 on the diagonal and -1 for each axis neighbour,
/// so the matrix is symmetric positive definite. Unknown (i, j, k) maps to
/// row i + n*j + n*n*k.
CsrMatrix poisson3d(std::size_t n);

Vector spmv(const CsrMatrix& a, std::span<const double> x);
/// y <- A x without allocating.
void spmv_into(const CsrMatrix& a, std::span<const double> x, std::span<double> y);

double dot(std::span<const double> x, std::span<const double> y);
double norm2(std::span<const double> x);
/// Returns y + alpha * x.
Vector axpy(double alpha, std::span<const double> x, std::span<const double> y);
/// y <- y + alpha * x in place.
void axpy_inplace(double alpha, std::span<const double> x, std::span<double> y);
/// Returns b - A x.
Vector residual(const CsrMatrix& a, std::span<const double> x, std::span<const double> b);

/// Matrix Market coordinate format (real general / real symmetric).
namespace mtx {

CsrMatrix read(std::istream& in);
CsrMatrix read_file(const std::string& path);
/// Writes `general` layout, or lower triangle with a `symmetric` header when
/// `as_symmetric` is set (the caller asserts the matrix is symmetric).
void write(std::ostream& out, const CsrMatrix& a, bool as_symmetric = false);
void write_file(const std::string& path, const CsrMatrix& a, bool as_symmetric = false);

}  // namespace mtx

}  // namespace lossyckpt
