#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lossyckpt/harness.hpp"
#include "lossyckpt/solvers.hpp"
#include "lossyckpt/sparse.hpp"

namespace lossyckpt {

/// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "LOSSYCKPT_OUTPUT_DIR";

/// Experiment description shared by every CLI subcommand.
///
/// JSON schema (every key optional, unknown keys rejected):
///   matrix: {"poisson3d": n} | {"mtx": path}
///   rhs: "ones_solution" (b = A * ones) | "ones"
///   solver: {method, rtol, max_iters, preconditioner, gmres_restart, cg_restart}
///   codec: codec for compress/probe ("identity" | "lossless" | "lossy:<eb>")
///   adaptive_eb, adaptive_safety
///   lambda, seeds: [..], schemes: [..], interval: "young" | n
///   cost: {t_it, baseline_seconds, vector_write_seconds,
///          vector_compress_seconds, vector_decompress_seconds,
///          static_rebuild_seconds}
///   horizon_factor, threads
///   probe: {trials, seed}
///   output_dir
struct ExperimentConfig {
  std::optional<std::size_t> poisson_n = 16;
  std::optional<std::string> mtx_path;
  std::string rhs = "ones_solution";
  SolverConfig solver{Method::GMRES, 7e-5};
  CodecSpec codec = CodecSpec::lossy_rel(1e-4);
  bool adaptive_eb = false;
  double adaptive_safety = 0.01;
  double lambda = 1.0 / 3600.0;
  std::vector<std::uint64_t> seeds{1};
  std::vector<Scheme> schemes{Scheme::Traditional, Scheme::Lossless, Scheme::Lossy};
  std::optional<std::size_t> interval;  ///< unset: Young
  CostSettings cost;
  double horizon_factor = 20.0;
  unsigned threads = 0;
  std::size_t probe_trials = 20;
  std::uint64_t probe_seed = 1;
  std::optional<std::string> output_dir;

  void validate() const;
  bool operator==(const ExperimentConfig&) const;
};

/// Failure-free reference run time (seconds) per method, used to derive
/// T_it when cost.baseline_seconds is not given.
double default_baseline_seconds(Method m);

/// Parses JSON text, applying `overrides` ("dotted.key=json-or-string")
/// first. Missing rtol and baseline_seconds default per method. Throws
/// ConfigError naming the offending key.
ExperimentConfig parse_config(std::string_view json_text, const std::vector<std::string>& overrides = {});
/// Fully explicit JSON; parse_config(to_json(c)) == c.
std::string to_json(const ExperimentConfig& c);

CsrMatrix load_matrix(const ExperimentConfig& c);
Vector make_rhs(const ExperimentConfig& c, const CsrMatrix& a);
CompareConfig compare_config(const ExperimentConfig& c);
ProbeOptions probe_options(const ExperimentConfig& c);

/// Output directory: config value, else $LOSSYCKPT_OUTPUT_DIR, else ".".
std::string resolve_output_dir(const ExperimentConfig& c);

}  // namespace lossyckpt
