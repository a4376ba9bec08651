#include "lossyckpt/perfmodel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lossyckpt/errors.hpp"

namespace lossyckpt::perfmodel {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ModelInvalidError(what);
}

double ratio_from_fraction(double f) {
  require(f < 1.0, "model invalid: checkpoint/failure cost fraction >= 1 (overhead undefined)");
  return f / (1.0 - f);
}

}  // namespace

void ModelParams::validate() const {
  require(t_it > 0.0, "T_it must be positive");
  require(t_ckp >= 0.0, "T_ckp must be non-negative");
  require(recovery() >= 0.0, "T_rc must be non-negative");
  require(lambda >= 0.0, "lambda must be non-negative");
  require(n_iters >= 0.0, "N must be non-negative");
  require(k >= 0.0, "k must be non-negative");
}

void LossyModelParams::validate() const {
  base.validate();
  require(t_comp >= 0.0 && t_decomp >= 0.0, "compression times must be non-negative");
  require(t_ckp_lossy >= t_comp, "T_ckp_lossy must include T_comp");
  require(recovery() >= t_decomp, "T_rc_lossy must include T_decomp");
  require(n_prime >= 0.0, "N' must be non-negative");
}

double failure_cost_fraction(double t, double lambda) {
  require(t >= 0.0 && lambda >= 0.0, "f(t, lambda) needs non-negative arguments");
  return std::sqrt(2.0 * lambda * t) + lambda * t;
}

YoungInterval young_interval(double mtti, double t_ckp, double t_it) {
  require(mtti > 0.0 && t_ckp >= 0.0 && t_it > 0.0, "young interval needs positive T_f, T_it and T_ckp >= 0");
  YoungInterval y;
  y.seconds = std::sqrt(2.0 * mtti * t_ckp);
  y.iterations = static_cast<std::size_t>(std::max(1.0, std::round(y.seconds / t_it)));
  return y;
}

double expected_total_time(double n_iters, double t_it, double t_ckp, double t_rc, double lambda,
                           double tau) {
  require(tau > 0.0, "checkpoint period must be positive");
  const double denom = 1.0 - t_ckp / tau - lambda * (t_rc + tau / 2.0);
  require(denom > 0.0, "model invalid: expected run time diverges for this period");
  return n_iters * t_it / denom;
}

double overhead_ratio_traditional(double lambda, double t_ckp, std::optional<double> t_rc) {
  require(lambda >= 0.0 && t_ckp >= 0.0, "overhead needs non-negative lambda and T_ckp");
  const double rc = t_rc.value_or(t_ckp);
  require(rc >= 0.0, "T_rc must be non-negative");
  return ratio_from_fraction(std::sqrt(2.0 * lambda * t_ckp) + lambda * rc);
}

double overhead_traditional(double lambda, double t_ckp, double t_it, double n_iters,
                            std::optional<double> t_rc) {
  return n_iters * t_it * overhead_ratio_traditional(lambda, t_ckp, t_rc);
}

LossyOverhead overhead_lossy(double lambda, double t_ckp_lossy, std::optional<double> t_rc_lossy,
                             double n_prime, double t_it, double n_iters) {
  require(lambda >= 0.0 && t_ckp_lossy >= 0.0 && n_prime >= 0.0 && t_it > 0.0,
          "lossy overhead needs non-negative parameters and T_it > 0");
  const double rc = t_rc_lossy.value_or(t_ckp_lossy);
  const double f = std::sqrt(2.0 * lambda * t_ckp_lossy) + lambda * rc + lambda * n_prime * t_it;
  LossyOverhead out;
  out.ratio = ratio_from_fraction(f);
  out.seconds = n_iters * t_it * out.ratio;
  return out;
}

Breakeven breakeven_extra_iters(double lambda, double t_ckp_trad, double t_ckp_lossy, double t_it) {
  require(lambda > 0.0 && t_it > 0.0, "break-even needs lambda > 0 and T_it > 0");
  require(t_ckp_trad >= 0.0 && t_ckp_lossy >= 0.0, "checkpoint times must be non-negative");
  Breakeven b;
  b.n_prime_max = (failure_cost_fraction(t_ckp_trad, lambda) - failure_cost_fraction(t_ckp_lossy, lambda)) /
                  (lambda * t_it);
  b.profitable = b.n_prime_max >= 0.0;
  return b;
}

double stationary_extra_bound(double spectral_radius, double eb, double t) {
  require(spectral_radius > 0.0 && spectral_radius < 1.0, "spectral radius must lie in (0, 1)");
  require(eb >= 0.0 && eb < 1.0, "eb must lie in [0, 1)");
  require(t >= 0.0, "t must be non-negative");
  // t - log_R(R^t + eb) = log(1 + eb R^-t) / -log R
  const double log_r = std::log(spectral_radius);
  return std::log1p(eb * std::exp(-t * log_r)) / -log_r;
}

StationaryExpectation stationary_expected_bound_interval(double spectral_radius, double eb,
                                                         std::size_t n_iters,
                                                         ExpectationWeighting weighting,
                                                         double failure_prob_per_iter) {
  require(n_iters >= 1, "N must be >= 1");
  if (weighting == ExpectationWeighting::FailureDensity)
    require(failure_prob_per_iter > 0.0 && failure_prob_per_iter < 1.0,
            "failure-density weighting needs a per-iteration probability in (0, 1)");
  StationaryExpectation e;
  const double n = static_cast<double>(n_iters);
  e.lo = stationary_extra_bound(spectral_radius, eb, (n + 1.0) / 2.0);
  e.hi = stationary_extra_bound(spectral_radius, eb, n);

  double weighted = 0.0;
  double total = 0.0;
  const double log_survive = std::log1p(-failure_prob_per_iter);
  for (std::size_t t = 1; t <= n_iters; ++t) {
    const double w = weighting == ExpectationWeighting::Uniform
                         ? 1.0
                         : std::exp(static_cast<double>(t - 1) * log_survive);
    weighted += w * stationary_extra_bound(spectral_radius, eb, static_cast<double>(t));
    total += w;
  }
  e.expected = weighted / total;
  return e;
}

double gmres_adaptive_eb(double r_norm, double b_norm, double safety, double eb_min, double eb_max) {
  require(b_norm > 0.0, "adaptive eb needs ||b|| > 0");
  require(r_norm >= 0.0 && safety > 0.0, "adaptive eb needs ||r|| >= 0 and safety > 0");
  require(eb_min > 0.0 && eb_min <= eb_max && eb_max < 1.0, "adaptive eb clamp must satisfy 0 < min <= max < 1");
  return std::clamp(safety * r_norm / b_norm, eb_min, eb_max);
}

ModelReport evaluate(const LossyModelParams& p) {
  p.validate();
  const auto& b = p.base;
  require(b.lambda > 0.0, "model needs lambda > 0");
  ModelReport r;
  r.young_traditional = young_interval(1.0 / b.lambda, b.t_ckp, b.t_it);
  r.young_lossy = young_interval(1.0 / b.lambda, p.t_ckp_lossy, b.t_it);
  r.ratio_traditional = overhead_ratio_traditional(b.lambda, b.t_ckp, b.t_rc);
  r.overhead_traditional = b.n_iters * b.t_it * r.ratio_traditional;
  r.lossy = overhead_lossy(b.lambda, p.t_ckp_lossy, p.t_rc_lossy, p.n_prime, b.t_it, b.n_iters);
  r.breakeven = breakeven_extra_iters(b.lambda, b.t_ckp, p.t_ckp_lossy, b.t_it);
  return r;
}

}  // namespace lossyckpt::perfmodel
