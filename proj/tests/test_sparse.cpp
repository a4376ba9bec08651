#include <sstream>

#include "catch_amalgamated.hpp"
#include "lossyckpt/errors.hpp"
#include "lossyckpt/sparse.hpp"

using namespace lossyckpt;
using Catch::Matchers::WithinAbs;

TEST_CASE("poisson3d has the seven-point structure") {
  const CsrMatrix a = poisson3d(4);
  REQUIRE(a.nrows() == 64);
  REQUIRE(a.ncols() == 64);
  // 6 n^3 - 6 n^2 off-diagonal neighbours plus the diagonal.
  REQUIRE(a.nnz() == 64 + 6 * 64 - 6 * 16);
  CHECK(a.at(0, 0) == 6.0);
  CHECK(a.at(0, 1) == -1.0);
  CHECK(a.at(0, 4) == -1.0);
  CHECK(a.at(0, 16) == -1.0);
  CHECK(a.at(3, 4) == 0.0);  // i = 3 has no +x neighbour
  CHECK(a.transpose() == a);
}

TEST_CASE("poisson3d of size one is the scalar 6") {
  const CsrMatrix a = poisson3d(1);
  REQUIRE(a.nnz() == 1);
  CHECK(a.at(0, 0) == 6.0);
}

TEST_CASE("poisson3d rejects degenerate and overflowing sizes") {
  CHECK_THROWS_AS(poisson3d(0), DimensionError);
  CHECK_THROWS_AS(poisson3d(1300), DimensionError);
}

TEST_CASE("spmv with ones gives the boundary-face count") {
  const CsrMatrix a = poisson3d(3);
  const Vector y = spmv(a, Vector(27, 1.0));
  CHECK(y[13] == 0.0);  // interior point
  CHECK(y[0] == 3.0);   // corner
  CHECK(y[1] == 2.0);   // edge
}

TEST_CASE("spmv checks dimensions") {
  const CsrMatrix a = poisson3d(2);
  CHECK_THROWS_AS(spmv(a, Vector(7, 1.0)), DimensionError);
}

TEST_CASE("from_triplets sums duplicates and sorts columns") {
  const CsrMatrix a = CsrMatrix::from_triplets(2, 3, {{0, 2, 1.0}, {0, 0, 2.0}, {0, 2, 0.5}, {1, 1, -1.0}});
  CHECK(a.nnz() == 3);
  CHECK(a.at(0, 2) == 1.5);
  CHECK(a.at(0, 0) == 2.0);
  CHECK(a.col_idx()[0] == 0);
  CHECK(a.col_idx()[1] == 2);
}

TEST_CASE("CsrMatrix rejects malformed structure") {
  CHECK_THROWS_AS(CsrMatrix(2, 2, {0, 1, 1}, {0, 1}, {1.0, 2.0}), DimensionError);
  CHECK_THROWS_AS(CsrMatrix(1, 2, {0, 2}, {1, 0}, {1.0, 2.0}), DimensionError);
  CHECK_THROWS_AS(CsrMatrix(1, 2, {0, 1}, {5}, {1.0}), DimensionError);
}

TEST_CASE("vector kernels") {
  const Vector x{3.0, 4.0};
  const Vector y{1.0, -1.0};
  CHECK(dot(x, y) == -1.0);
  CHECK(norm2(x) == 5.0);
  CHECK(axpy(2.0, y, x) == Vector{5.0, 2.0});
  CHECK_THROWS_AS(dot(x, Vector{1.0}), DimensionError);
  CHECK_THROWS_AS(require_finite(Vector{1.0, std::nan("")}), NonFiniteError);
}

TEST_CASE("residual of the exact solution is zero") {
  const CsrMatrix a = poisson3d(5);
  const Vector ones(a.nrows(), 1.0);
  const Vector b = spmv(a, ones);
  CHECK(norm2(residual(a, ones, b)) == 0.0);
}

TEST_CASE("Matrix Market round trip") {
  const CsrMatrix a = poisson3d(3);
  for (bool sym : {false, true}) {
    std::stringstream ss;
    mtx::write(ss, a, sym);
    CHECK(mtx::read(ss) == a);
  }
}

TEST_CASE("Matrix Market rejects bad headers") {
  std::stringstream ss("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n");
  CHECK_THROWS_AS(mtx::read(ss), Error);
}
