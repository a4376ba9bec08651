#include <bit>
#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

#include "catch_amalgamated.hpp"
#include "lossyckpt/checkpoint.hpp"
#include "lossyckpt/errors.hpp"
#include "lossyckpt/solvers.hpp"

using namespace lossyckpt;
namespace fs = std::filesystem;

namespace {

Vector random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Vector v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

bool same_bits(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("lossyckpt_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter++));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Registry cg_registry(CodecSpec x_codec) {
  Registry reg;
  reg.protect("A", VariableClass::Static, CodecSpec::lossless(), PayloadKind::Matrix)
      .protect("b", VariableClass::Static, CodecSpec::lossless())
      .protect("i", VariableClass::Dynamic, CodecSpec::identity(), PayloadKind::Scalar)
      .protect("x", VariableClass::Dynamic, x_codec)
      .protect("r", VariableClass::Recomputed);
  return reg;
}

}  // namespace

TEST_CASE("registry rejects duplicate ids") {
  Registry reg;
  reg.protect("x", VariableClass::Dynamic);
  CHECK_THROWS_AS(reg.protect("x", VariableClass::Static), DuplicateIdError);
  CHECK(reg.find("x") != nullptr);
  CHECK(reg.find("y") == nullptr);
  CHECK_THROWS(reg.set_codec("y", CodecSpec::lossless()));
}

TEST_CASE("identity round trip is bitwise exact") {
  const Vector x = random_vector(1000, 3);
  const CsrMatrix a = poisson3d(4);
  Registry reg = cg_registry(CodecSpec::identity());
  MemoryStore store;
  const Bindings values{{"A", a}, {"b", Vector(a.nrows(), 2.0)}, {"i", 17.0}, {"x", x}};
  snapshot(reg, 17, values, store);
  const auto res = restore(store, reg);
  REQUIRE_FALSE(res.from_scratch);
  CHECK(res.iteration == 17);
  CHECK(same_bits(std::get<Vector>(res.values.at("x")), x));
  CHECK(std::get<double>(res.values.at("i")) == 17.0);
  const auto& a2 = std::get<CsrMatrix>(res.values.at("A"));
  CHECK(a2.nnz() == a.nnz());
  CHECK(same_bits(Vector(a2.values().begin(), a2.values().end()), Vector(a.values().begin(), a.values().end())));
  CHECK(res.values.count("r") == 0);
}

TEST_CASE("lossy restore honours the error bound") {
  const Vector x = random_vector(4000, 5);
  for (double eb : {1e-2, 1e-4, 1e-8}) {
    Registry reg;
    reg.protect("x", VariableClass::Dynamic, CodecSpec::lossy_rel(eb));
    MemoryStore store;
    snapshot(reg, 3, {{"x", x}}, store);
    const auto res = restore(store, reg);
    CHECK(max_pointwise_relative_error(x, std::get<Vector>(res.values.at("x"))) <= eb);
  }
}

TEST_CASE("no image means start from scratch") {
  Registry reg = cg_registry(CodecSpec::identity());
  MemoryStore store;
  CHECK(restore(store, reg).from_scratch);
  TempDir tmp;
  DirectoryStore dir(tmp.path);
  CHECK(restore(dir, reg).from_scratch);
}

TEST_CASE("latest image wins and older ones are dropped") {
  Registry reg;
  reg.protect("x", VariableClass::Dynamic);
  MemoryStore store;
  for (std::size_t it : {10, 20, 30}) snapshot(reg, it, {{"x", Vector(8, static_cast<double>(it))}}, store);
  const auto res = restore(store, reg);
  CHECK(res.iteration == 30);
  CHECK(std::get<Vector>(res.values.at("x"))[0] == 30.0);
  CHECK_FALSE(store.get(checkpoint_name(20)).has_value());
  CHECK_FALSE(store.get(checkpoint_name(10)).has_value());
}

TEST_CASE("static variables go to the epoch image once") {
  const CsrMatrix a = poisson3d(5);
  Registry reg = cg_registry(CodecSpec::lossless());
  MemoryStore store;
  const Bindings values{{"A", a}, {"b", Vector(a.nrows(), 1.0)}, {"i", 0.0}, {"x", Vector(a.nrows(), 0.5)}};
  const auto first = snapshot(reg, 5, values, store);
  const auto second = snapshot(reg, 10, values, store);
  CHECK(first.wrote_epoch);
  CHECK_FALSE(second.wrote_epoch);
  CHECK(first.bytes == first.epoch_bytes + first.image.size_bytes());
  CHECK(second.bytes == second.image.size_bytes());
  for (const auto& e : second.image.manifest) CHECK(e.cls == VariableClass::Dynamic);
  CHECK(store.get(kEpochImageName).has_value());
}

TEST_CASE("regenerated statics are not stored") {
  Registry reg;
  reg.protect("A", VariableClass::Static, CodecSpec::identity(), PayloadKind::Matrix, true)
      .protect("x", VariableClass::Dynamic);
  CHECK_FALSE(reg.needs_epoch_image());
  MemoryStore store;
  const auto snap = snapshot(reg, 4, {{"x", Vector(3, 1.0)}}, store);
  CHECK_FALSE(snap.wrote_epoch);
  const auto res = restore(store, reg);
  CHECK(res.regenerate == std::vector<std::string>{"A"});
  CHECK(res.values.count("A") == 0);
}

TEST_CASE("recomputed variables are never serialized") {
  Registry reg;
  reg.protect("x", VariableClass::Dynamic).protect("r", VariableClass::Recomputed);
  const auto img = build_image(reg, 1, {{"x", Vector(4, 1.0)}, {"r", Vector(4, 9.0)}}, VariableClass::Dynamic);
  REQUIRE(img.manifest.size() == 1);
  CHECK(img.manifest[0].id == "x");
  CHECK_THROWS_AS(build_image(reg, 1, {{"r", Vector(4, 9.0)}}, VariableClass::Dynamic), Error);
  CHECK_THROWS_AS(build_image(reg, 1, {{"x", 1.0}}, VariableClass::Dynamic), Error);
}

TEST_CASE("image size accounting is exact") {
  const CsrMatrix a = poisson3d(6);
  Registry reg = cg_registry(CodecSpec::lossy_rel(1e-4));
  const Bindings values{{"A", a}, {"b", Vector(a.nrows(), 1.0)}, {"i", 3.0}, {"x", random_vector(a.nrows(), 9)}};
  for (auto cls : {VariableClass::Static, VariableClass::Dynamic}) {
    const auto img = build_image(reg, 3, values, cls, 12.5, 0.25);
    const auto bytes = img.serialize();
    CHECK(img.size_bytes() == bytes.size());
    const auto back = CheckpointImage::parse(bytes);
    CHECK(back.iteration == 3);
    CHECK(back.virtual_time == 12.5);
    CHECK(back.manifest.size() == img.manifest.size());
  }
}

TEST_CASE("damaged images raise") {
  Registry reg;
  reg.protect("x", VariableClass::Dynamic, CodecSpec::lossless());
  const auto img = build_image(reg, 2, {{"x", random_vector(300, 1)}}, VariableClass::Dynamic);
  auto bytes = img.serialize();
  auto flipped = bytes;
  flipped.back() ^= 0x01;
  CHECK_THROWS_AS(CheckpointImage::parse(flipped).decode(), CorruptFrameError);
  CHECK_THROWS_AS(CheckpointImage::parse(std::span(bytes).first(6)), CorruptFrameError);
  auto bad_magic = bytes;
  bad_magic[0] = 'Z';
  CHECK_THROWS_AS(CheckpointImage::parse(bad_magic), CorruptFrameError);

  MemoryStore store;
  store.put(checkpoint_name(2), flipped);
  store.set_latest(checkpoint_name(2));
  CHECK_THROWS_AS(restore(store, reg), CorruptFrameError);

  MemoryStore dangling;
  dangling.set_latest(checkpoint_name(99));
  CHECK_THROWS_AS(restore(dangling, reg), StorageError);
}

TEST_CASE("directory store writes atomically") {
  TempDir tmp;
  DirectoryStore store(tmp.path);
  Registry reg;
  reg.protect("x", VariableClass::Dynamic);
  snapshot(reg, 10, {{"x", Vector(64, 1.0)}}, store);
  store.fail_next_put_after(20);
  CHECK_THROWS_AS(snapshot(reg, 20, {{"x", Vector(64, 2.0)}}, store), StorageError);
  const auto res = restore(store, reg);
  CHECK(res.iteration == 10);
  CHECK(std::get<Vector>(res.values.at("x"))[0] == 1.0);
  CHECK_FALSE(fs::exists(tmp.path / checkpoint_name(20)));
  CHECK(store.latest() == checkpoint_name(10));
}

TEST_CASE("jacobi resumes from a checkpoint at iteration 500") {
  const CsrMatrix a = poisson3d(16);
  const Vector b(a.nrows(), 1.0);
  SolverConfig cfg;
  cfg.method = Method::Jacobi;
  cfg.rtol = SolverConfig::default_rtol(Method::Jacobi);
  const auto reference = solve(a, b, cfg);
  REQUIRE(reference.iterations > 500);

  TempDir tmp;
  DirectoryStore store(tmp.path);
  Registry reg;
  reg.protect("A", VariableClass::Static, CodecSpec::identity(), PayloadKind::Matrix, true)
      .protect("b", VariableClass::Static, CodecSpec::identity(), PayloadKind::Vector, true)
      .protect("i", VariableClass::Dynamic, CodecSpec::identity(), PayloadKind::Scalar)
      .protect("x", VariableClass::Dynamic);

  IterativeSolver first(a, b, cfg);
  while (first.iteration() < 500) first.step();
  snapshot(reg, 500, {{"i", 500.0}, {"x", first.current_x()}}, store);

  const auto res = restore(store, reg);
  CHECK(res.iteration == 500);
  IterativeSolver second(a, b, cfg);
  second.restart_from(std::get<Vector>(res.values.at("x")), res.iteration);
  while (!second.converged()) second.step();
  CHECK(second.iteration() == reference.iterations);
  CHECK(same_bits(second.current_x(), reference.x));
}
