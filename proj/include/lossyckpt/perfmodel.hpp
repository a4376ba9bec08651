#pragma once

#include <cstddef>
#include <optional>

namespace lossyckpt::perfmodel {

/// Traditional checkpoint/restart parameters (all times in seconds).
struct ModelParams {
  double t_it = 1.0;     ///< mean time of one iteration
  double t_ckp = 0.0;    ///< mean time of one checkpoint
  std::optional<double> t_rc;  ///< mean recovery time; defaults to t_ckp
  double lambda = 0.0;   ///< failures per second (1 / MTTI)
  double n_iters = 0.0;  ///< iterations to converge without failures
  double k = 0.0;        ///< iterations between checkpoints (0: use Young)

  double recovery() const { return t_rc.value_or(t_ckp); }
  void validate() const;
};

/// Lossy checkpointing adds compression costs and a per-recovery delay.
struct LossyModelParams {
  ModelParams base;
  double t_comp = 0.0;
  double t_decomp = 0.0;
  double t_ckp_lossy = 0.0;  ///< includes t_comp
  std::optional<double> t_rc_lossy;  ///< includes t_decomp; defaults to t_ckp_lossy
  double n_prime = 0.0;      ///< mean extra iterations per lossy recovery

  double recovery() const { return t_rc_lossy.value_or(t_ckp_lossy); }
  void validate() const;
};

/// sqrt(2 lambda t) + lambda t: the fraction of time lost per unit time to
/// checkpointing and recovery at the Young-optimal interval.
double failure_cost_fraction(double t, double lambda);

struct YoungInterval {
  double seconds = 0.0;
  std::size_t iterations = 1;
};

/// k * T_it = sqrt(2 T_f T_ckp), with k rounded to the nearest integer >= 1.
YoungInterval young_interval(double mtti, double t_ckp, double t_it);

/// Expected total run time for an arbitrary checkpoint period tau (seconds):
/// N T_it / (1 - T_ckp / tau - lambda (T_rc + tau / 2)). Young's interval
/// minimizes it. Throws ModelInvalidError where the denominator is <= 0.
double expected_total_time(double n_iters, double t_it, double t_ckp, double t_rc, double lambda,
                           double tau);

/// Overhead-to-productive-time ratio f / (1 - f) with f = sqrt(2 lambda T_ckp)
/// + lambda T_rc (T_rc = T_ckp unless given).
double overhead_ratio_traditional(double lambda, double t_ckp, std::optional<double> t_rc = {});
/// The same ratio scaled by the productive time N * T_it.
double overhead_traditional(double lambda, double t_ckp, double t_it, double n_iters,
                            std::optional<double> t_rc = {});

struct LossyOverhead {
  double seconds = 0.0;
  double ratio = 0.0;
};

/// Expected lossy checkpointing overhead. With t_rc_lossy unset the recovery
/// time is approximated by t_ckp_lossy.
LossyOverhead overhead_lossy(double lambda, double t_ckp_lossy, std::optional<double> t_rc_lossy,
                             double n_prime, double t_it, double n_iters);

struct Breakeven {
  double n_prime_max = 0.0;
  /// False when the bound is negative: lossy never beats traditional.
  bool profitable = true;
};

/// Largest mean extra-iteration count per recovery at which lossy
/// checkpointing still has lower expected overhead than traditional:
/// (f(T_trad) - f(T_lossy)) / (lambda T_it).
Breakeven breakeven_extra_iters(double lambda, double t_ckp_trad, double t_ckp_lossy, double t_it);

/// Upper bound on extra iterations of a stationary method restarted at
/// iteration t from a vector with pointwise relative error eb:
/// t - log_R(R^t + eb).
double stationary_extra_bound(double spectral_radius, double eb, double t);

enum class ExpectationWeighting { Uniform, FailureDensity };

struct StationaryExpectation {
  double expected = 0.0;  ///< mean bound over the failure iteration
  double lo = 0.0;        ///< bound at t = (N + 1) / 2
  double hi = 0.0;        ///< bound at t = N
};

/// Expected stationary extra-iteration bound when the failure iteration is
/// uniform on {1..N}, or (FailureDensity) geometrically distributed with
/// per-iteration failure probability `failure_prob_per_iter` truncated to
/// {1..N}. Also returns the closed interval endpoints.
StationaryExpectation stationary_expected_bound_interval(
    double spectral_radius, double eb, std::size_t n_iters,
    ExpectationWeighting weighting = ExpectationWeighting::Uniform,
    double failure_prob_per_iter = 0.0);

inline constexpr double kAdaptiveEbMin = 1e-12;
inline constexpr double kAdaptiveEbMax = 1e-1;

/// Error bound of order ||r|| / ||b|| for a lossy GMRES restart:
/// safety * r_norm / b_norm clamped to [eb_min, eb_max].
double gmres_adaptive_eb(double r_norm, double b_norm, double safety = 1.0,
                         double eb_min = kAdaptiveEbMin, double eb_max = kAdaptiveEbMax);

/// Every quantity the model derives from one parameter set.
struct ModelReport {
  YoungInterval young_traditional;
  YoungInterval young_lossy;
  double ratio_traditional = 0.0;
  double overhead_traditional = 0.0;
  LossyOverhead lossy;
  Breakeven breakeven;
};

/// `params.base.t_ckp` is the traditional checkpoint time.
ModelReport evaluate(const LossyModelParams& params);

}  // namespace lossyckpt::perfmodel
