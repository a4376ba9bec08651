#include "lossyckpt/sparse.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "lossyckpt/errors.hpp"

namespace lossyckpt {

void require_finite(std::span<const double> v, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NonFiniteError(std::string(what) + ": non-finite entry at index " +
                           std::to_string(i));
    }
  }
}

CsrMatrix::CsrMatrix(std::size_t nrows, std::size_t ncols, std::vector<std::int64_t> row_ptr,
                     std::vector<index_t> col_idx, std::vector<double> values)
    : nrows_(nrows),
      ncols_(ncols),
      row_ptr_(std::move(row_ptr)),
      col_idx_(std::move(col_idx)),
      values_(std::move(values)) {
  if (row_ptr_.size() != nrows_ + 1) throw DimensionError("csr: row_ptr length must be nrows+1");
  if (row_ptr_.front() != 0) throw DimensionError("csr: row_ptr[0] must be 0");
  if (col_idx_.size() != values_.size())
    throw DimensionError("csr: col_idx and values lengths differ");
  if (static_cast<std::size_t>(row_ptr_.back()) != values_.size())
    throw DimensionError("csr: row_ptr[nrows] must equal nnz");
  for (std::size_t i = 0; i < nrows_; ++i) {
    if (row_ptr_[i + 1] < row_ptr_[i]) throw DimensionError("csr: row_ptr must be non-decreasing");
    for (auto k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
      if (col_idx_[k] < 0 || static_cast<std::size_t>(col_idx_[k]) >= ncols_)
        throw DimensionError("csr: column index out of range in row " + std::to_string(i));
      if (k > row_ptr_[i] && col_idx_[k] <= col_idx_[k - 1])
        throw DimensionError("csr: column indices must be strictly increasing in row " +
                             std::to_string(i));
    }
  }
}

CsrMatrix CsrMatrix::from_triplets(std::size_t nrows, std::size_t ncols,
                                   std::vector<Triplet> triplets) {
  for (const auto& t : triplets) {
    if (t.row >= nrows || t.col >= ncols) throw DimensionError("triplet index out of range");
  }
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<std::int64_t> row_ptr(nrows + 1, 0);
  std::vector<index_t> cols;
  std::vector<double> vals;
  cols.reserve(triplets.size());
  vals.reserve(triplets.size());
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    const auto& t = triplets[k];
    if (k > 0 && t.row == triplets[k - 1].row && t.col == triplets[k - 1].col) {
      vals.back() += t.value;
      continue;
    }
    cols.push_back(static_cast<index_t>(t.col));
    vals.push_back(t.value);
    ++row_ptr[t.row + 1];
  }
  for (std::size_t i = 0; i < nrows; ++i) row_ptr[i + 1] += row_ptr[i];
  return CsrMatrix(nrows, ncols, std::move(row_ptr), std::move(cols), std::move(vals));
}

double CsrMatrix::at(std::size_t i, std::size_t j) const {
  if (i >= nrows_ || j >= ncols_) throw DimensionError("csr: index out of range");
  const auto first = col_idx_.begin() + row_ptr_[i];
  const auto last = col_idx_.begin() + row_ptr_[i + 1];
  const auto it = std::lower_bound(first, last, static_cast<index_t>(j));
  if (it == last || *it != static_cast<index_t>(j)) return 0.0;
  return values_[static_cast<std::size_t>(it - col_idx_.begin())];
}

Vector CsrMatrix::diagonal() const {
  Vector d(std::min(nrows_, ncols_), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = at(i, i);
  return d;
}

CsrMatrix CsrMatrix::transpose() const {
  std::vector<std::int64_t> ptr(ncols_ + 1, 0);
  for (auto c : col_idx_) ++ptr[static_cast<std::size_t>(c) + 1];
  for (std::size_t j = 0; j < ncols_; ++j) ptr[j + 1] += ptr[j];
  std::vector<index_t> cols(nnz());
  std::vector<double> vals(nnz());
  auto next = ptr;
  for (std::size_t i = 0; i < nrows_; ++i) {
    for (auto k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
      const auto dst = next[static_cast<std::size_t>(col_idx_[k])]++;
      cols[dst] = static_cast<index_t>(i);
      vals[dst] = values_[k];
    }
  }
  return CsrMatrix(ncols_, nrows_, std::move(ptr), std::move(cols), std::move(vals));
}

double CsrMatrix::frobenius_norm() const { return norm2(values_); }

CsrMatrix poisson3d(std::size_t n) {
  if (n == 0) throw DimensionError("poisson3d: n must be >= 1");
  constexpr auto max_index = static_cast<std::size_t>(std::numeric_limits<index_t>::max());
  if (n > 1290 || n * n * n > max_index) {
    throw DimensionError("poisson3d: n^3 exceeds the addressable index range");
  }
  const std::size_t n2 = n * n;
  const std::size_t dim = n2 * n;
  std::vector<std::int64_t> row_ptr(dim + 1, 0);
  std::vector<index_t> cols;
  std::vector<double> vals;
  cols.reserve(7 * dim);
  vals.reserve(7 * dim);

  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t row = i + n * j + n2 * k;
        auto push = [&](std::size_t col, double v) {
          cols.push_back(static_cast<index_t>(col));
          vals.push_back(v);
        };
        // ascending column order: -z, -y, -x, diag, +x, +y, +z
        if (k > 0) push(row - n2, -1.0);
        if (j > 0) push(row - n, -1.0);
        if (i > 0) push(row - 1, -1.0);
        push(row, 6.0);
        if (i + 1 < n) push(row + 1, -1.0);
        if (j + 1 < n) push(row + n, -1.0);
        if (k + 1 < n) push(row + n2, -1.0);
        row_ptr[row + 1] = static_cast<std::int64_t>(cols.size());
      }
    }
  }
  return CsrMatrix(dim, dim, std::move(row_ptr), std::move(cols), std::move(vals));
}

void spmv_into(const CsrMatrix& a, std::span<const double> x, std::span<double> y) {
  if (a.ncols() != x.size() || a.nrows() != y.size()) throw DimensionError("spmv: dimension mismatch");
  const auto ptr = a.row_ptr();
  const auto col = a.col_idx();
  const auto val = a.values();
  for (std::size_t i = 0; i < a.nrows(); ++i) {
    double sum = 0.0;
    for (auto k = ptr[i]; k < ptr[i + 1]; ++k) sum += val[k] * x[static_cast<std::size_t>(col[k])];
    y[i] = sum;
  }
}

Vector spmv(const CsrMatrix& a, std::span<const double> x) {
  Vector y(a.nrows());
  spmv_into(a, x, y);
  return y;
}

double dot(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

Vector axpy(double alpha, std::span<const double> x, std::span<const double> y) {
  Vector out(y.begin(), y.end());
  axpy_inplace(alpha, x, out);
  return out;
}

void axpy_inplace(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw DimensionError("axpy: dimension mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Vector residual(const CsrMatrix& a, std::span<const double> x, std::span<const double> b) {
  if (b.size() != a.nrows()) throw DimensionError("residual: dimension mismatch");
  Vector r = spmv(a, x);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  return r;
}

namespace mtx {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

CsrMatrix read(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("mtx: empty input");
  std::istringstream header(line);
  std::string banner, object, format, field, symmetry;
  header >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%MatrixMarket" || lower(object) != "matrix" || lower(format) != "coordinate")
    throw Error("mtx: expected '%%MatrixMarket matrix coordinate' header");
  field = lower(field);
  symmetry = lower(symmetry);
  if (field != "real" && field != "integer") throw Error("mtx: unsupported field '" + field + "'");
  const bool symmetric = symmetry == "symmetric";
  if (!symmetric && symmetry != "general")
    throw Error("mtx: unsupported symmetry '" + symmetry + "'");

  do {
    if (!std::getline(in, line)) throw Error("mtx: missing size line");
  } while (line.empty() || line[0] == '%');
  std::size_t nrows = 0, ncols = 0, entries = 0;
  {
    std::istringstream sizes(line);
    if (!(sizes >> nrows >> ncols >> entries)) throw Error("mtx: malformed size line");
  }
  if (symmetric && nrows != ncols) throw Error("mtx: symmetric matrix must be square");

  std::vector<CsrMatrix::Triplet> triplets;
  triplets.reserve(symmetric ? 2 * entries : entries);
  for (std::size_t e = 0; e < entries; ++e) {
    std::size_t i = 0, j = 0;
    double v = 0.0;
    if (!(in >> i >> j >> v)) throw Error("mtx: truncated entry list");
    if (i == 0 || j == 0 || i > nrows || j > ncols) throw Error("mtx: entry index out of range");
    triplets.push_back({i - 1, j - 1, v});
    if (symmetric && i != j) triplets.push_back({j - 1, i - 1, v});
  }
  return CsrMatrix::from_triplets(nrows, ncols, std::move(triplets));
}

CsrMatrix read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("mtx: cannot open '" + path + "'");
  return read(in);
}

void write(std::ostream& out, const CsrMatrix& a, bool as_symmetric) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < a.nrows(); ++i) {
    for (auto k = a.row_ptr()[i]; k < a.row_ptr()[i + 1]; ++k) {
      if (!as_symmetric || static_cast<std::size_t>(a.col_idx()[k]) <= i) ++count;
    }
  }
  out << "%%MatrixMarket matrix coordinate real " << (as_symmetric ? "symmetric" : "general")
      << '\n'
      << a.nrows() << ' ' << a.ncols() << ' ' << count << '\n'
      << std::setprecision(17);
  for (std::size_t i = 0; i < a.nrows(); ++i) {
    for (auto k = a.row_ptr()[i]; k < a.row_ptr()[i + 1]; ++k) {
      const auto j = static_cast<std::size_t>(a.col_idx()[k]);
      if (as_symmetric && j > i) continue;
      out << i + 1 << ' ' << j + 1 << ' ' << a.values()[k] << '\n';
    }
  }
}

void write_file(const std::string& path, const CsrMatrix& a, bool as_symmetric) {
  std::ofstream out(path);
  if (!out) throw Error("mtx: cannot write '" + path + "'");
  write(out, a, as_symmetric);
}

}  // namespace mtx

}  // namespace lossyckpt
