#include <algorithm>
#include <numeric>
#include <sstream>

#include "catch_amalgamated.hpp"
#include "lossyckpt/errors.hpp"
#include "lossyckpt/harness.hpp"

using namespace lossyckpt;

namespace {

struct Problem {
  CsrMatrix a;
  Vector b;
  explicit Problem(std::size_t n) : a(poisson3d(n)), b(spmv(a, Vector(a.nrows(), 1.0))) {}
};

SolverConfig config(Method m) {
  SolverConfig c;
  c.method = m;
  c.rtol = SolverConfig::default_rtol(m);
  return c;
}

ExperimentSpec jacobi_spec(const Problem& p, Scheme scheme, std::size_t interval) {
  ExperimentSpec s;
  s.solver = config(Method::Jacobi);
  s.scheme = scheme;
  s.codec = scheme_codec(scheme, 1e-4);
  s.interval = interval;
  s.baseline_iterations = solve(p.a, p.b, s.solver).iterations;
  CostSettings cs;
  cs.baseline_seconds = 3000.0;
  s.cost = cs.resolve(p.a.nrows(), s.baseline_iterations);
  s.horizon = 1e6;
  return s;
}

}  // namespace

TEST_CASE("failure schedules") {
  CHECK(sample_failures(1, 0.0, 1e9).failure_times.empty());
  const auto a = sample_failures(42, 1.0 / 3600.0, 1e6);
  const auto b = sample_failures(42, 1.0 / 3600.0, 1e6);
  CHECK(a.failure_times == b.failure_times);
  CHECK(sample_failures(43, 1.0 / 3600.0, 1e6).failure_times != a.failure_times);
  CHECK(std::is_sorted(a.failure_times.begin(), a.failure_times.end()));
  CHECK(a.failure_times.back() < 1e6);
  CHECK(a.failure_times.front() >= 0.0);
}

TEST_CASE("mean gap between failures matches the rate") {
  const double mtti = 3600.0;
  double total_gap = 0.0;
  std::size_t gaps = 0;
  for (std::uint64_t seed = 1; seed <= 64; ++seed) {
    const auto s = sample_failures(seed, 1.0 / mtti, 100.0 * 3600.0);
    double prev = 0.0;
    for (double t : s.failure_times) {
      total_gap += t - prev;
      prev = t;
      ++gaps;
    }
  }
  REQUIRE(gaps > 1000);
  CHECK(std::abs(total_gap / static_cast<double>(gaps) - mtti) < 0.05 * mtti);
}

TEST_CASE("scheme names") {
  for (auto s : {Scheme::Traditional, Scheme::Lossless, Scheme::Lossy}) CHECK(parse_scheme(to_string(s)) == s);
  CHECK_THROWS_AS(parse_scheme("bogus"), ConfigError);
}

TEST_CASE("lossy cg runs the restarted variant") {
  const auto base = config(Method::CG);
  CHECK(scheme_solver(base, Scheme::Lossy).method == Method::RestartedCG);
  CHECK(scheme_solver(base, Scheme::Lossless).method == Method::CG);
  CHECK(scheme_solver(config(Method::GMRES), Scheme::Lossy).method == Method::GMRES);
}

TEST_CASE("failure-free run costs only checkpoints") {
  const Problem p(8);
  const auto spec = jacobi_spec(p, Scheme::Traditional, 10);
  const auto rep = run_experiment(p.a, p.b, spec, sample_failures(1, 0.0, 0.0));
  CHECK(rep.converged);
  CHECK(rep.failures == 0);
  CHECK(rep.extra_iterations == 0);
  CHECK(rep.checkpoints == spec.baseline_iterations / 10);
  CHECK(rep.overhead() == Catch::Approx(rep.checkpoint_overhead));
}

TEST_CASE("time accounting closes") {
  const Problem p(8);
  for (auto scheme : {Scheme::Traditional, Scheme::Lossless, Scheme::Lossy}) {
    const auto spec = jacobi_spec(p, scheme, 8);
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
      const auto sched = sample_failures(seed, 1.0 / 500.0, spec.horizon);
      const auto r = run_experiment(p.a, p.b, spec, sched);
      REQUIRE(r.converged);
      const double parts = r.productive_time + r.extra_iteration_time + r.checkpoint_overhead +
                           r.recovery_overhead + r.rollback_overhead;
      CHECK(r.total_time == Catch::Approx(parts).epsilon(1e-9));
      CHECK(r.recoveries == r.restore_iterations.size());
      const std::size_t seen =
          std::count_if(sched.failure_times.begin(), sched.failure_times.end(), [&](double t) { return t < r.total_time; });
      CHECK(r.failures == seen);
    }
  }
}

TEST_CASE("lost work is bounded by one interval") {
  const Problem p(8);
  const auto spec = jacobi_spec(p, Scheme::Traditional, 6);
  for (std::uint64_t seed = 1; seed <= 16; ++seed) {
    const auto r = run_experiment(p.a, p.b, spec, sample_failures(seed, 1.0 / 400.0, spec.horizon));
    REQUIRE(r.converged);
    const double t_ckp = std::max(r.mean_checkpoint_seconds, spec.cost.t_it);
    CHECK(r.max_lost_work <= 6.0 * spec.cost.t_it + t_ckp + 1e-9);
    for (std::size_t it : r.restore_iterations) CHECK(it % 6 == 0);
  }
}

TEST_CASE("runs are deterministic") {
  const Problem p(8);
  const auto spec = jacobi_spec(p, Scheme::Lossy, 8);
  const auto sched = sample_failures(5, 1.0 / 500.0, spec.horizon);
  const auto a = run_experiment(p.a, p.b, spec, sched);
  const auto b = run_experiment(p.a, p.b, spec, sched);
  CHECK(a.total_time == b.total_time);
  CHECK(a.restore_iterations == b.restore_iterations);
}

TEST_CASE("cheaper checkpoints cost less without failures") {
  const Problem p(8);
  CompareConfig cfg;
  cfg.solver = config(Method::GMRES);
  cfg.lambda = 0.0;
  cfg.seeds = {1};
  cfg.interval = 5;
  cfg.threads = 1;
  const auto c = compare_schemes(p.a, p.b, cfg);
  const double trad = c.summary(Scheme::Traditional).mean_overhead;
  const double lossless = c.summary(Scheme::Lossless).mean_overhead;
  const double lossy = c.summary(Scheme::Lossy).mean_overhead;
  CHECK(trad > 0.0);
  CHECK(lossless < trad);
  CHECK(lossy < lossless);
}

TEST_CASE("comparison output does not depend on thread count") {
  const Problem p(8);
  CompareConfig cfg;
  cfg.solver = config(Method::GMRES);
  cfg.lambda = 1.0 / 1800.0;
  cfg.seeds = {1, 2, 3, 4, 5, 6};
  cfg.adaptive_eb = true;
  std::string csv[2];
  for (unsigned t : {1u, 4u}) {
    cfg.threads = t;
    const auto c = compare_schemes(p.a, p.b, cfg);
    std::ostringstream os;
    write_reports_csv(os, c.reports);
    csv[t == 1 ? 0 : 1] = os.str();
    CHECK(c.reports.size() == 18);
    REQUIRE(c.difference(Scheme::Lossy, Scheme::Lossless) != nullptr);
    CHECK(comparison_json(c).find("\"paired_differences\"") != std::string::npos);
  }
  CHECK(csv[0] == csv[1]);
  CHECK(csv[0].rfind("scheme,seed,converged", 0) == 0);
}

TEST_CASE("probe reports every trial") {
  const Problem p(8);
  ProbeOptions opt;
  opt.trials = 5;
  const auto r = probe_restart_delay(p.a, p.b, config(Method::Jacobi), opt);
  REQUIRE(r.trials.size() == 5);
  CHECK(r.spectral_radius > 0.0);
  CHECK(r.spectral_radius < 1.0);
  for (const auto& t : r.trials) {
    CHECK(t.converged);
    CHECK(t.t >= 1);
    CHECK(t.t < r.baseline_iterations);
    CHECK(t.max_relative_error <= 1e-4);
    CHECK(static_cast<double>(t.extra_iterations) <= t.bound + 1.0);
  }

  ProbeOptions exact = opt;
  exact.eb = 0.0;
  for (const auto& t : probe_restart_delay(p.a, p.b, config(Method::Jacobi), exact).trials)
    CHECK(t.extra_iterations == 0);
}
