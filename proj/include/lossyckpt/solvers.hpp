#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lossyckpt/sparse.hpp"

namespace lossyckpt {

enum class Method { Jacobi, CG, RestartedCG, GMRES };
enum class PreconditionerKind { None, PointJacobi, ILU0 };

std::string to_string(Method m);
std::string to_string(PreconditionerKind p);
Method parse_method(const std::string& s);
PreconditionerKind parse_preconditioner(const std::string& s);

struct SolverConfig {
  Method method = Method::CG;
  double rtol = 1e-7;
  std::size_t max_iters = 100000;
  PreconditionerKind preconditioner = PreconditionerKind::None;
  /// Restart length m of GMRES(m).
  std::size_t gmres_restart = 30;
  /// Restarted CG: rebuild the Krylov sequence from x every this many
  /// iterations. 0 means only on recovery.
  std::size_t cg_restart = 0;

  /// Throws ConfigError on 0 >= rtol >= 1 or m == 0.
  void validate() const;

  /// Relative tolerances used in the reference experiments.
  static double default_rtol(Method m);
  friend bool operator==(const SolverConfig&, const SolverConfig&) = default;
};

/// Checkpointable solver state. `p` and `rho` are only meaningful for
/// classic CG; restarted methods persist {iteration, x} alone.
struct SolverState {
  std::size_t iteration = 0;
  Vector x;
  Vector p;
  double rho = 0.0;
  std::vector<double> residual_history;
};

struct SolveOutcome {
  bool converged = false;
  std::size_t iterations = 0;
  double final_relative_residual = 0.0;
  Vector x;
  std::vector<double> residual_history;
};

/// ILU(0) factors stored with the sparsity pattern of A. `lower` carries an
/// explicit unit diagonal.
struct IluFactors {
  CsrMatrix lower;
  CsrMatrix upper;

  /// Solves L U z = r.
  Vector solve(std::span<const double> r) const;
};

/// Zero-fill incomplete LU. Throws BreakdownError on a missing or zero pivot.
IluFactors ilu0(const CsrMatrix& a);

/// z = M^{-1} r for the configured preconditioner.
class Preconditioner {
 public:
  Preconditioner(const CsrMatrix& a, PreconditionerKind kind);
  PreconditionerKind kind() const noexcept { return kind_; }
  void apply(std::span<const double> r, std::span<double> z) const;
  Vector apply(std::span<const double> r) const;

 private:
  PreconditionerKind kind_;
  Vector inv_diag_;
  std::optional<IluFactors> ilu_;
};

/// One stationary Jacobi sweep D^{-1}(b - (A - D) x).
Vector jacobi_step(const CsrMatrix& a, std::span<const double> b, std::span<const double> x);

/// R = (||r_N|| / ||r_0||)^(1/N) from a residual-norm history. Throws Error
/// when the history is too short, non-positive, or not contracting.
double estimate_spectral_radius(std::span<const double> residual_history);

/// Iterative solver driven one iteration at a time, so that callers can
/// checkpoint, inject failures, and restart between iterations.
///
/// The monitored quantity is the (preconditioned) residual norm relative
/// to the initial one from x0 = 0; for stationary Jacobi it is ||b - A x||.
/// The reference norm depends only on A, M and b, so it survives restarts.
class IterativeSolver {
 public:
  IterativeSolver(const CsrMatrix& a, Vector b, SolverConfig config);
  ~IterativeSolver();
  IterativeSolver(IterativeSolver&&) noexcept;
  IterativeSolver& operator=(IterativeSolver&&) noexcept;

  const SolverConfig& config() const noexcept;
  const CsrMatrix& matrix() const noexcept;
  std::span<const double> rhs() const noexcept;

  /// Advances by one iteration. No-op once converged.
  void step();
  bool converged() const;
  std::size_t iteration() const;
  double relative_residual() const;
  double reference_norm() const;
  const std::vector<double>& residual_history() const;

  /// Current approximate solution; GMRES materializes it from the partial
  /// Arnoldi cycle without disturbing it.
  Vector current_x() const;
  /// State to checkpoint: {i, x} for restarted methods, plus {p, rho} for CG.
  SolverState state() const;

  /// Treats `x` as a fresh initial guess at iteration `iteration`,
  /// recomputing r, z, p, rho (CG) or opening a new Arnoldi cycle (GMRES).
  /// The residual history is truncated (or padded with NaN) to `iteration`
  /// entries before the new residual is appended.
  void restart_from(std::span<const double> x, std::size_t iteration);
  /// Resumes from a checkpointed state. Classic CG continues with the saved
  /// direction and rho; other methods delegate to restart_from.
  void restore(const SolverState& state);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Hooks fired by solve(). Any may be left empty.
struct SolveHooks {
  std::function<void(std::size_t, const IterativeSolver&)> on_iteration;
  /// Checkpoint interval in iterations; 0 disables checkpoint_due.
  std::size_t checkpoint_interval = 0;
  std::function<void(std::size_t, const IterativeSolver&)> checkpoint_due;
  /// Called before the first iteration; returning a state resumes from it.
  std::function<std::optional<SolverState>()> on_restore;
};

SolveOutcome solve(const CsrMatrix& a, std::span<const double> b, const SolverConfig& config,
                   const SolveHooks& hooks = {});

/// Builds a solver positioned at `x` as if restarted at iteration
/// `state.iteration`, and returns its rebuilt state.
SolverState restart_from(const SolverState& state, const CsrMatrix& a, std::span<const double> b,
                         const SolverConfig& config);

}  // namespace lossyckpt
