#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lossyckpt/codec.hpp"
#include "lossyckpt/solvers.hpp"
#include "lossyckpt/sparse.hpp"

namespace lossyckpt {

struct FailureSchedule {
  std::uint64_t seed = 0;
  double lambda = 0.0;
  double horizon = 0.0;
  std::vector<double> failure_times;  ///< sorted, in [0, horizon)
};

/// Exponential inter-arrival times with rate `lambda`, drawn by inversion
/// from a std::mt19937_64 seeded with `seed`, so schedules are identical
/// across standard libraries.
FailureSchedule sample_failures(std::uint64_t seed, double lambda, double horizon);

enum class Scheme { Traditional, Lossless, Lossy };
std::string to_string(Scheme s);
Scheme parse_scheme(const std::string& s);

/// Virtual-clock costs.
struct CostModel {
  double t_it = 1.0;             ///< seconds per iteration
  double bandwidth = 0.0;        ///< store bytes/second; <= 0 means free I/O
  double compress_bps = 0.0;     ///< raw bytes/second; <= 0 means free
  double decompress_bps = 0.0;   ///< raw bytes/second; <= 0 means free
  double static_rebuild = 0.0;   ///< seconds to rebuild A, b and M on recovery

  void validate() const;
  double checkpoint_seconds(std::size_t image_bytes, std::size_t raw_bytes, bool compressed) const;
  double recovery_seconds(std::size_t image_bytes, std::size_t raw_bytes, bool compressed) const;
};

/// How compare_schemes derives a CostModel once the problem is known.
/// Bandwidth is chosen so that writing one raw solution vector takes
/// `vector_write_seconds`; compression throughput likewise.
struct CostSettings {
  std::optional<double> t_it;     ///< overrides baseline_seconds / N
  double baseline_seconds = 7200.0;
  double vector_write_seconds = 120.0;
  double vector_compress_seconds = 0.5;
  double vector_decompress_seconds = 0.2;
  double static_rebuild_seconds = 5.0;

  void validate() const;
  friend bool operator==(const CostSettings&, const CostSettings&) = default;
  CostModel resolve(std::size_t vector_length, std::size_t baseline_iterations) const;
};

struct ExperimentSpec {
  SolverConfig solver;  ///< the method actually run (see scheme_solver)
  Scheme scheme = Scheme::Traditional;
  /// Codec of the dynamic vectors; ignored for x when adaptive_eb is set.
  CodecSpec codec = CodecSpec::identity();
  /// Lossy GMRES: eb = safety * ||b - A x|| / ||b|| at every checkpoint.
  bool adaptive_eb = false;
  double adaptive_safety = 0.01;
  std::size_t interval = 1;  ///< iterations between checkpoints
  CostModel cost;
  std::size_t baseline_iterations = 0;
  double horizon = 0.0;  ///< virtual seconds before giving up
};

/// Solver and codec used for `scheme` given a base configuration: lossy CG
/// runs restarted CG and stores x alone; the other schemes keep classic CG
/// and store x, p and rho.
SolverConfig scheme_solver(const SolverConfig& base, Scheme scheme);
CodecSpec scheme_codec(Scheme scheme, double eb);

struct ExperimentReport {
  Scheme scheme = Scheme::Traditional;
  std::uint64_t seed = 0;
  bool converged = false;
  std::size_t interval = 0;
  double total_time = 0.0;
  double productive_time = 0.0;       ///< N * T_it for the failure-free N
  double extra_iteration_time = 0.0;  ///< (final iterations - N) * T_it
  double checkpoint_overhead = 0.0;   ///< includes aborted checkpoints
  double recovery_overhead = 0.0;     ///< includes interrupted recoveries
  double rollback_overhead = 0.0;     ///< computation lost to failures
  std::size_t failures = 0;
  std::size_t recoveries = 0;
  std::size_t checkpoints = 0;
  std::size_t aborted_checkpoints = 0;
  std::size_t baseline_iterations = 0;
  std::size_t final_iterations = 0;
  long long extra_iterations = 0;
  double mean_checkpoint_bytes = 0.0;
  double mean_checkpoint_seconds = 0.0;
  /// Mean modelled recovery cost of the committed images.
  double mean_recovery_seconds = 0.0;
  double max_lost_work = 0.0;
  std::vector<std::size_t> restore_iterations;

  double overhead() const { return total_time - productive_time; }
};

/// Runs one solve on the virtual clock, injecting the failures of
/// `schedule`. Checkpoints go to an in-memory store with the cost model's
/// bandwidth. A failure mid-checkpoint discards that image; a failure
/// during recovery restarts the recovery.
ExperimentReport run_experiment(const CsrMatrix& a, std::span<const double> b, const ExperimentSpec& spec,
                                const FailureSchedule& schedule);

struct ProbeOptions {
  std::size_t trials = 20;
  std::uint64_t seed = 1;
  double eb = 1e-4;            ///< 0 disables compression (identity restart)
  bool adaptive_eb = false;    ///< GMRES: eb from the residual at t
  double adaptive_safety = 0.01;
};

struct ProbeTrial {
  std::size_t t = 0;
  double eb = 0.0;
  std::size_t iterations = 0;
  long long extra_iterations = 0;
  bool converged = false;
  double residual_before = 0.0;  ///< ||b - A x|| at t
  double residual_after = 0.0;   ///< ||b - A x'|| after compress/decompress
  double max_relative_error = 0.0;
  double bound = 0.0;  ///< stationary bound at t (Jacobi only, else NaN)
};

struct ProbeReport {
  std::size_t baseline_iterations = 0;
  double b_norm = 0.0;
  double spectral_radius = 0.0;  ///< NaN unless the method is Jacobi
  std::vector<ProbeTrial> trials;

  double mean_extra() const;
};

/// Picks t uniformly in [1, N-1] for each trial, replaces x by its
/// compress/decompress image at t, restarts, and counts the iterations
/// beyond the failure-free N. Throws Error if the baseline does not converge.
ProbeReport probe_restart_delay(const CsrMatrix& a, std::span<const double> b, const SolverConfig& config,
                                const ProbeOptions& options);

struct CompareConfig {
  SolverConfig solver;
  std::vector<Scheme> schemes{Scheme::Traditional, Scheme::Lossless, Scheme::Lossy};
  double lambda = 1.0 / 3600.0;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> interval;  ///< unset: per-scheme Young interval
  double eb = 1e-4;
  bool adaptive_eb = false;
  double adaptive_safety = 0.01;
  CostSettings cost;
  double horizon_factor = 20.0;  ///< horizon = factor * N * T_it
  unsigned threads = 0;          ///< 0: hardware concurrency
};

struct SchemeSummary {
  Scheme scheme = Scheme::Traditional;
  std::size_t interval = 0;
  double t_ckp = 0.0;  ///< pilot mean checkpoint cost
  double t_rc = 0.0;   ///< pilot mean recovery cost
  std::size_t runs = 0;
  std::size_t converged = 0;
  double mean_overhead = 0.0;
  double se_overhead = 0.0;
  double mean_failures = 0.0;
  double mean_extra_iterations = 0.0;
  double n_prime = 0.0;  ///< pooled extra iterations per recovery, floored at 0
  double predicted_overhead = 0.0;     ///< T_rc approximated by T_ckp
  double predicted_overhead_rc = 0.0;  ///< with the pilot T_rc
  std::optional<std::string> model_error;
};

/// Mean and standard error of per-seed overhead differences a - b.
struct PairedDifference {
  Scheme a = Scheme::Lossy;
  Scheme b = Scheme::Traditional;
  double mean = 0.0;
  double se = 0.0;
};

struct Comparison {
  std::size_t baseline_iterations = 0;
  CostModel cost;
  double lambda = 0.0;
  std::vector<ExperimentReport> reports;  ///< scheme-major, seed order
  std::vector<SchemeSummary> summaries;
  std::vector<PairedDifference> differences;

  const SchemeSummary& summary(Scheme s) const;
  const PairedDifference* difference(Scheme a, Scheme b) const;
};

/// Every scheme sees the same failure schedule per seed.
Comparison compare_schemes(const CsrMatrix& a, std::span<const double> b, const CompareConfig& config);

void write_reports_csv(std::ostream& out, std::span<const ExperimentReport> reports);
std::string comparison_json(const Comparison& c);

}  // namespace lossyckpt
