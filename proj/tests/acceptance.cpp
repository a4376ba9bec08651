// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.
#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lossyckpt/codec.hpp"
#include "lossyckpt/harness.hpp"
#include "lossyckpt/perfmodel.hpp"
#include "lossyckpt/solvers.hpp"

using namespace lossyckpt;
namespace pm = lossyckpt::perfmodel;

namespace {

constexpr double kLambda = 1.0 / 3600.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

SolverConfig config(Method m) {
  SolverConfig c;
  c.method = m;
  c.rtol = SolverConfig::default_rtol(m);
  return c;
}

struct Problem {
  CsrMatrix a;
  Vector b;
  explicit Problem(std::size_t n) : a(poisson3d(n)), b(spmv(a, Vector(a.nrows(), 1.0))) {}
};

Outcome breakeven() {
  const auto be = pm::breakeven_extra_iters(kLambda, 120.0, 25.0, 1.2);
  return {std::abs(be.n_prime_max - 500.0) <= 1.0, fmt("N'_max = %.4f (target 500 +/- 1)", be.n_prime_max)};
}

Outcome overhead_point() {
  const double r = pm::overhead_ratio_traditional(kLambda, 120.0);
  return {std::abs(r - 0.41) <= 0.01, fmt("ratio = %.4f (target 0.41 +/- 0.01)", r)};
}

Outcome young() {
  const double costs[] = {120.0, 72.0, 25.0};
  const double minutes[] = {16.0, 12.0, 7.0};
  bool ok = true;
  std::string d;
  for (int i = 0; i < 3; ++i) {
    const double m = pm::young_interval(3600.0, costs[i], 1.0).seconds / 60.0;
    ok = ok && std::abs(m - minutes[i]) < 1.0;
    d += fmt("%s%.2f min (~%g)", i ? ", " : "", m, minutes[i]);
  }
  return {ok, d};
}

Outcome expected_stationary_bound() {
  const auto e = pm::stationary_expected_bound_interval(0.99998, 1e-4, 3941);
  return {e.expected >= 4.0 && e.expected <= 8.0,
          fmt("expected = %.4f in [%.4f, %.4f] (target [4, 8])", e.expected, e.lo, e.hi)};
}

Outcome jacobi_zero_delay() {
  const Problem p(16);
  ProbeOptions opt;
  opt.trials = 20;
  opt.seed = 1;
  opt.eb = 1e-4;
  const auto r = probe_restart_delay(p.a, p.b, config(Method::Jacobi), opt);
  std::size_t zero = 0, over = 0;
  long long worst = 0;
  for (const auto& t : r.trials) {
    if (t.extra_iterations <= 0) ++zero;
    if (!t.converged || static_cast<double>(t.extra_iterations) > t.bound) ++over;
    worst = std::max(worst, t.extra_iterations);
  }
  return {zero >= 18 && over == 0,
          fmt("%zu/20 zero-delay, max extra %lld, %zu above bound (R = %.5f, N = %zu)", zero, worst, over,
              r.spectral_radius, r.baseline_iterations)};
}

Outcome gmres_residual_jump() {
  const Problem p(12);
  ProbeOptions opt;
  opt.trials = 50;
  opt.seed = 1;
  opt.adaptive_eb = true;
  const auto r = probe_restart_delay(p.a, p.b, config(Method::GMRES), opt);
  std::size_t bad = 0;
  double worst = 0.0;
  for (const auto& t : r.trials) {
    const double limit = (1.0 + t.eb) * t.residual_before + t.eb * r.b_norm + 1e-12;
    if (!(t.residual_after <= limit)) ++bad;
    worst = std::max(worst, t.residual_after / limit);
  }
  return {bad == 0, fmt("%zu/50 violations, worst ||r'|| / limit = %.4f", bad, worst)};
}

Outcome codec_soundness() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> decades(-8.0, 8.0);
  std::uniform_int_distribution<int> len(1, 1500);
  const double ebs[] = {1e-2, 1e-4, 1e-6};
  std::size_t violations = 0, lossless_mismatch = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    Vector v(static_cast<std::size_t>(len(rng)));
    const bool smooth = trial % 2 == 0;
    const double freq = 0.001 + 0.05 * std::abs(unit(rng));
    const double scale = std::pow(10.0, decades(rng));
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = smooth ? scale * (std::sin(freq * static_cast<double>(i)) + 1e-6 * unit(rng))
                    : unit(rng) * std::pow(10.0, decades(rng));
      if (trial % 7 == 0 && i % 53 == 0) v[i] = 0.0;
    }
    const double eb = ebs[trial % 3];
    const Vector r = decompress(compress(v, CodecSpec::lossy_rel(eb)));
    for (std::size_t i = 0; i < v.size(); ++i) {
      const bool ok = std::abs(v[i]) < kExactStorageFloor ? r[i] == v[i] : std::abs(v[i] - r[i]) <= eb * std::abs(v[i]);
      if (!ok) ++violations;
    }
    const Vector l = decompress(compress(v, CodecSpec::lossless()));
    for (std::size_t i = 0; i < v.size(); ++i)
      if (std::bit_cast<std::uint64_t>(l[i]) != std::bit_cast<std::uint64_t>(v[i])) ++lossless_mismatch;
  }

  const Problem p(16);
  const Vector x = solve(p.a, p.b, config(Method::GMRES)).x;
  const double lossless = compression_ratio(compress(x, CodecSpec::lossless()));
  const double lossy = compression_ratio(compress(x, CodecSpec::lossy_rel(1e-4)));
  return {violations == 0 && lossless_mismatch == 0 && lossy > lossless && lossy >= 10.0,
          fmt("%zu bound violations, %zu lossless mismatches; converged x: lossy %.1fx vs lossless %.2fx", violations,
              lossless_mismatch, lossy, lossless)};
}

struct SimResults {
  bool ran = false;
  Comparison c;
};

const Comparison& scheme_comparison() {
  static SimResults cache;
  if (!cache.ran) {
    const Problem p(16);
    CompareConfig cfg;
    cfg.solver = config(Method::GMRES);
    cfg.lambda = kLambda;
    for (std::uint64_t s = 1; s <= 32; ++s) cfg.seeds.push_back(s);
    cfg.adaptive_eb = true;
    cache.c = compare_schemes(p.a, p.b, cfg);
    cache.ran = true;
  }
  return cache.c;
}

Outcome scheme_ordering() {
  const auto& c = scheme_comparison();
  const auto& tr = c.summary(Scheme::Traditional);
  const auto& ll = c.summary(Scheme::Lossless);
  const auto& ly = c.summary(Scheme::Lossy);
  const auto* d1 = c.difference(Scheme::Lossless, Scheme::Traditional);
  const auto* d2 = c.difference(Scheme::Lossy, Scheme::Lossless);
  if (!d1 || !d2) return {false, "missing paired differences"};
  const bool all_converged = tr.converged == tr.runs && ll.converged == ll.runs && ly.converged == ly.runs;
  const bool ok = all_converged && d1->mean <= -2.0 * d1->se && d2->mean <= -2.0 * d2->se;
  return {ok, fmt("overhead trad %.0f, lossless %.0f, lossy %.0f s; lossless-trad %.0f (%.1f SE), "
                  "lossy-lossless %.0f (%.1f SE)",
                  tr.mean_overhead, ll.mean_overhead, ly.mean_overhead, d1->mean, -d1->mean / d1->se, d2->mean,
                  -d2->mean / d2->se)};
}

Outcome model_agreement() {
  const auto& ly = scheme_comparison().summary(Scheme::Lossy);
  if (ly.model_error) return {false, "model invalid: " + *ly.model_error};
  const double rel = std::abs(ly.mean_overhead - ly.predicted_overhead) / ly.predicted_overhead;
  return {rel <= 0.25, fmt("lossy measured %.0f s vs predicted %.0f s (%.1f%%, N' = %.2f)", ly.mean_overhead,
                           ly.predicted_overhead, 100.0 * rel, ly.n_prime)};
}

Outcome breakeven_property() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  std::size_t drawn = 0;
  while (drawn < 1000) {
    const double mtti = 600.0 + u(rng) * 48.0 * 3600.0;
    const double lambda = 1.0 / mtti;
    const double t_trad = 1.0 + u(rng) * 600.0;
    const double t_lossy = t_trad * (0.01 + 0.98 * u(rng));
    const double t_it = 0.01 + u(rng) * 20.0;
    const double n = 100.0 + u(rng) * 1e5;
    if (pm::failure_cost_fraction(t_trad, lambda) >= 0.9) continue;
    ++drawn;
    const double nmax = pm::breakeven_extra_iters(lambda, t_trad, t_lossy, t_it).n_prime_max;
    const double lossy = pm::overhead_lossy(lambda, t_lossy, {}, nmax, t_it, n).seconds;
    const double trad = pm::overhead_traditional(lambda, t_trad, t_it, n);
    worst = std::max(worst, std::abs(lossy - trad) / trad);
  }
  return {worst <= 1e-9, fmt("worst relative gap %.3g over 1000 draws", worst)};
}

Outcome cg_probe() {
  // Mean delay of seed 1 as first measured; other seeds must stay within 50%.
  constexpr double kPinned = 8.25;
  const Problem p(16);
  const auto cfg = config(Method::RestartedCG);
  ProbeOptions opt;
  opt.trials = 20;
  opt.eb = 1e-4;
  bool ok = true;
  std::string d = fmt("pinned %.2f;", kPinned);
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    opt.seed = seed;
    const double m = probe_restart_delay(p.a, p.b, cfg, opt).mean_extra();
    const bool in = m > 0.0 && std::abs(m - kPinned) <= 0.5 * kPinned;
    ok = ok && in;
    d += fmt(" s%llu=%.2f%s", static_cast<unsigned long long>(seed), m, in ? "" : "(out)");
  }
  return {ok, d};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"break-even extra iterations", breakeven},
      {"traditional overhead ratio", overhead_point},
      {"young intervals", young},
      {"stationary expected bound", expected_stationary_bound},
      {"jacobi zero-delay restarts", jacobi_zero_delay},
      {"gmres residual jump", gmres_residual_jump},
      {"codec soundness", codec_soundness},
      {"scheme ordering under failures", scheme_ordering},
      {"lossy model vs simulation", model_agreement},
      {"break-even consistency property", breakeven_property},
      {"cg probe stability", cg_probe},
  };
  int failed = 0;
  int index = 0;
  for (const auto& [name, check] : criteria) {
    ++index;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    std::printf("[%s] %2d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", index, name, o.detail.c_str(), s);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", index - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
