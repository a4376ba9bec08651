#include <bit>
#include <cmath>
#include <limits>
#include <random>

#include "catch_amalgamated.hpp"
#include "lossyckpt/codec.hpp"
#include "lossyckpt/errors.hpp"
#include "lossyckpt/solvers.hpp"

using namespace lossyckpt;

namespace {

bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

Vector converged_solution() {
  const CsrMatrix a = poisson3d(16);
  const Vector b = spmv(a, Vector(a.nrows(), 1.0));
  SolverConfig cfg;
  cfg.method = Method::GMRES;
  cfg.rtol = SolverConfig::default_rtol(Method::GMRES);
  return solve(a, b, cfg).x;
}

Vector awkward_values() {
  const double inf_min = std::numeric_limits<double>::denorm_min();
  return {0.0, -0.0, 1.0, -1.0, inf_min, -inf_min, 1e-310, 1e300, -1e300,
          std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest(),
          std::numeric_limits<double>::min(), 3.14159, -2.5e-8};
}

}  // namespace

TEST_CASE("spec strings round trip") {
  for (const auto& s : {"identity", "lossless", "lossy:1e-04", "lossy:0.5", "lossy:3.3e-07"})
    CHECK(CodecSpec::parse(s).to_string() == s);
  for (double eb : {1e-4, 0.1 + 0.2, 1.0 / 3.0})
    CHECK(CodecSpec::parse(CodecSpec::lossy_rel(eb).to_string()).eb == eb);
  CHECK(CodecSpec::parse("lossy:1e-4") == CodecSpec::lossy_rel(1e-4));
  CHECK_THROWS_AS(CodecSpec::parse("lossy:0"), ConfigError);
  CHECK_THROWS_AS(CodecSpec::parse("lossy:1"), ConfigError);
  CHECK_THROWS_AS(CodecSpec::parse("lossy:abc"), ConfigError);
  CHECK_THROWS_AS(CodecSpec::parse("lossy:1e-4x"), ConfigError);
  CHECK_THROWS_AS(CodecSpec::parse("zstd"), ConfigError);
}

TEST_CASE("exact codecs reproduce every bit") {
  const Vector v = awkward_values();
  for (const auto& spec : {CodecSpec::identity(), CodecSpec::lossless()}) {
    const auto f = compress(v, spec);
    CHECK(bitwise_equal(decompress(f), v));
    CHECK(bitwise_equal(decompress(CompressedFrame::parse(f.serialize())), v));
  }
}

TEST_CASE("lossless is bitwise exact on random data") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::uint64_t> bits;
  Vector v(5000);
  for (auto& x : v) {
    do x = std::bit_cast<double>(bits(rng));
    while (!std::isfinite(x));
  }
  CHECK(bitwise_equal(decompress(compress(v, CodecSpec::lossless())), v));
}

TEST_CASE("lossy bound holds on random vectors") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> exp10(-12.0, 12.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_int_distribution<int> len(0, 3000);
  const double ebs[] = {1e-1, 1e-2, 1e-4, 1e-6, 1e-9, 1e-12};
  for (int trial = 0; trial < 120; ++trial) {
    Vector v(static_cast<std::size_t>(len(rng)));
    const int shape = trial % 3;
    double walk = 1.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (shape == 0) v[i] = unit(rng) * std::pow(10.0, exp10(rng));
      else if (shape == 1) v[i] = std::sin(0.01 * static_cast<double>(i)) + 1e-3 * unit(rng);
      else v[i] = (walk += 0.05 * unit(rng));
      if (i % 97 == 5) v[i] = 0.0;
    }
    const double eb = ebs[trial % 6];
    const auto f = compress(v, CodecSpec::lossy_rel(eb));
    const Vector r = decompress(CompressedFrame::parse(f.serialize()));
    REQUIRE(r.size() == v.size());
    CHECK(max_pointwise_relative_error(v, r) <= eb);
  }
}

TEST_CASE("lossy keeps zeros and subnormals exact") {
  const Vector v = awkward_values();
  const Vector r = decompress(compress(v, CodecSpec::lossy_rel(1e-3)));
  for (std::size_t i = 0; i < v.size(); ++i)
    if (std::abs(v[i]) < kExactStorageFloor) CHECK(std::bit_cast<std::uint64_t>(r[i]) == std::bit_cast<std::uint64_t>(v[i]));
  CHECK(max_pointwise_relative_error(v, r) <= 1e-3);
}

TEST_CASE("converged solutions compress well") {
  const Vector x = converged_solution();
  const double lossless = compression_ratio(compress(x, CodecSpec::lossless()));
  const auto lossy_frame = compress(x, CodecSpec::lossy_rel(1e-4));
  const double lossy = compression_ratio(lossy_frame);
  CHECK(lossless > 1.0);
  CHECK(lossy > lossless);
  CHECK(lossy >= 10.0);
  CHECK(max_pointwise_relative_error(x, decompress(lossy_frame)) <= 1e-4);
  CHECK(compression_ratio(compress(x, CodecSpec::lossy_rel(1e-6))) < lossy);
  CHECK(compression_ratio(compress(x, CodecSpec::identity())) == 1.0);
}

TEST_CASE("frame layout") {
  const Vector v{1.0, 2.0, 3.0};
  const auto f = compress(v, CodecSpec::lossy_rel(0.25));
  const auto bytes = f.serialize();
  CHECK(bytes.size() == f.serialized_size());
  CHECK(bytes.size() == CompressedFrame::kHeaderBytes + f.payload.size());
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "LCKP");
  CHECK(bytes[5] == static_cast<std::uint8_t>(CodecKind::LossyRel));
  const auto g = CompressedFrame::parse(bytes);
  CHECK(g.count == 3);
  CHECK(g.eb == 0.25);
  CHECK(g.checksum == crc32(f.payload));
}

TEST_CASE("corruption is detected") {
  const Vector v(200, 1.5);
  for (const auto& spec : {CodecSpec::identity(), CodecSpec::lossless(), CodecSpec::lossy_rel(1e-4)}) {
    auto bytes = compress(v, spec).serialize();
    bytes.back() ^= 0x40;
    CHECK_THROWS_AS(decompress(CompressedFrame::parse(bytes)), CorruptFrameError);
  }
  auto bytes = compress(v, CodecSpec::identity()).serialize();
  CHECK_THROWS_AS(CompressedFrame::parse(std::span(bytes).first(10)), CorruptFrameError);
  bytes[0] = 'X';
  CHECK_THROWS_AS(CompressedFrame::parse(bytes), CorruptFrameError);
  bytes[0] = 'L';
  bytes[4] = 9;
  CHECK_THROWS_AS(CompressedFrame::parse(bytes), CorruptFrameError);
}

TEST_CASE("unknown codec ids are rejected") {
  auto f = compress(Vector(4, 2.0), CodecSpec::identity());
  f.codec = static_cast<CodecKind>(7);
  CHECK_THROWS_AS(decompress(f), UnknownCodecError);

  auto g = compress(Vector(4, 2.0), CodecSpec::lossless());
  g.payload[0] = 99;
  g.checksum = crc32(g.payload);
  CHECK_THROWS_AS(decompress(g), UnknownCodecError);
}

TEST_CASE("non-finite input is rejected") {
  for (double bad : {std::nan(""), std::numeric_limits<double>::infinity()}) {
    const Vector v{1.0, bad};
    for (const auto& spec : {CodecSpec::identity(), CodecSpec::lossless(), CodecSpec::lossy_rel(1e-4)})
      CHECK_THROWS_AS(compress(v, spec), NonFiniteError);
  }
}

TEST_CASE("empty arrays") {
  for (const auto& spec : {CodecSpec::identity(), CodecSpec::lossless(), CodecSpec::lossy_rel(1e-4)}) {
    const auto f = compress(Vector{}, spec);
    CHECK(compression_ratio(f) == 1.0);
    CHECK(decompress(CompressedFrame::parse(f.serialize())).empty());
  }
}

TEST_CASE("error metric") {
  CHECK(max_pointwise_relative_error(Vector{2.0, 0.0}, Vector{2.2, 0.0}) == Catch::Approx(0.1));
  CHECK(std::isinf(max_pointwise_relative_error(Vector{0.0}, Vector{1e-20})));
  CHECK_THROWS_AS(max_pointwise_relative_error(Vector{1.0}, Vector{}), DimensionError);
}
