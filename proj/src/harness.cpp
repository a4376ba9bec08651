#include "lossyckpt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <thread>

#include "json.hpp"
#include "lossyckpt/checkpoint.hpp"
#include "lossyckpt/errors.hpp"
#include "lossyckpt/perfmodel.hpp"

namespace lossyckpt {

namespace {

// Uniform in [0, 1) from the top 53 bits; std::generate_canonical is not
// pinned down across standard libraries.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double standard_error(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

class Clock {
 public:
  explicit Clock(const FailureSchedule& s) : times_(s.failure_times) {}
  double now() const { return now_; }
  /// Next failure strictly inside [now, now + d), if any.
  std::optional<double> failure_within(double d) const {
    if (next_ < times_.size() && times_[next_] < now_ + d) return times_[next_];
    return std::nullopt;
  }
  void advance(double d) { now_ += d; }
  void jump_to_failure() { now_ = std::max(now_, times_[next_++]); }

 private:
  const std::vector<double>& times_;
  std::size_t next_ = 0;
  double now_ = 0.0;
};

}  // namespace

FailureSchedule sample_failures(std::uint64_t seed, double lambda, double horizon) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error("sample_failures: lambda must be finite and >= 0");
  if (!(horizon >= 0.0)) throw Error("sample_failures: horizon must be >= 0");
  FailureSchedule s{seed, lambda, horizon, {}};
  if (lambda == 0.0) return s;
  std::mt19937_64 rng(seed);
  double t = 0.0;
  for (;;) {
    t += -std::log1p(-unit_uniform(rng)) / lambda;
    if (t >= horizon) break;
    s.failure_times.push_back(t);
  }
  return s;
}

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::Traditional: return "traditional";
    case Scheme::Lossless: return "lossless";
    case Scheme::Lossy: return "lossy";
  }
  return "?";
}

Scheme parse_scheme(const std::string& s) {
  if (s == "traditional") return Scheme::Traditional;
  if (s == "lossless") return Scheme::Lossless;
  if (s == "lossy") return Scheme::Lossy;
  throw ConfigError("unknown scheme '" + s + "' (expected traditional, lossless or lossy)");
}

void CostModel::validate() const {
  if (!(t_it > 0.0)) throw ConfigError("cost model: T_it must be positive");
  if (static_rebuild < 0.0) throw ConfigError("cost model: static rebuild time must be >= 0");
}

double CostModel::checkpoint_seconds(std::size_t image_bytes, std::size_t raw_bytes, bool compressed) const {
  double t = bandwidth > 0.0 ? static_cast<double>(image_bytes) / bandwidth : 0.0;
  if (compressed && compress_bps > 0.0) t += static_cast<double>(raw_bytes) / compress_bps;
  return t;
}

double CostModel::recovery_seconds(std::size_t image_bytes, std::size_t raw_bytes, bool compressed) const {
  double t = static_rebuild + (bandwidth > 0.0 ? static_cast<double>(image_bytes) / bandwidth : 0.0);
  if (compressed && decompress_bps > 0.0) t += static_cast<double>(raw_bytes) / decompress_bps;
  return t;
}

void CostSettings::validate() const {
  if (t_it && !(*t_it > 0.0)) throw ConfigError("cost.t_it must be positive");
  if (!(baseline_seconds > 0.0)) throw ConfigError("cost.baseline_seconds must be positive");
  if (!(vector_write_seconds >= 0.0) || !(vector_compress_seconds >= 0.0) || !(vector_decompress_seconds >= 0.0) ||
      !(static_rebuild_seconds >= 0.0))
    throw ConfigError("cost times must be non-negative");
}

CostModel CostSettings::resolve(std::size_t vector_length, std::size_t baseline_iterations) const {
  validate();
  const double raw = static_cast<double>(vector_length * sizeof(double));
  CostModel m;
  m.t_it = t_it ? *t_it : baseline_seconds / static_cast<double>(std::max<std::size_t>(1, baseline_iterations));
  m.bandwidth = vector_write_seconds > 0.0 ? raw / vector_write_seconds : 0.0;
  m.compress_bps = vector_compress_seconds > 0.0 ? raw / vector_compress_seconds : 0.0;
  m.decompress_bps = vector_decompress_seconds > 0.0 ? raw / vector_decompress_seconds : 0.0;
  m.static_rebuild = static_rebuild_seconds;
  return m;
}

SolverConfig scheme_solver(const SolverConfig& base, Scheme scheme) {
  SolverConfig c = base;
  if (scheme == Scheme::Lossy && c.method == Method::CG) c.method = Method::RestartedCG;
  if (scheme != Scheme::Lossy && c.method == Method::RestartedCG) c.method = Method::CG;
  return c;
}

CodecSpec scheme_codec(Scheme scheme, double eb) {
  switch (scheme) {
    case Scheme::Traditional: return CodecSpec::identity();
    case Scheme::Lossless: return CodecSpec::lossless();
    case Scheme::Lossy: return CodecSpec::lossy_rel(eb);
  }
  return CodecSpec::identity();
}

ExperimentReport run_experiment(const CsrMatrix& a, std::span<const double> b, const ExperimentSpec& spec,
                                const FailureSchedule& schedule) {
  spec.cost.validate();
  if (spec.interval == 0) throw ConfigError("run_experiment: interval must be >= 1 iteration");
  if (spec.baseline_iterations == 0) throw ConfigError("run_experiment: baseline iteration count is required");
  const double horizon = spec.horizon > 0.0 ? spec.horizon : std::numeric_limits<double>::infinity();
  const CostModel& cost = spec.cost;
  const bool classic_cg = spec.solver.method == Method::CG;
  const bool compressed = spec.codec.kind != CodecKind::Identity || spec.adaptive_eb;
  const double b_norm = norm2(b);

  Registry reg;
  // A, b (and M) are regenerated from the problem definition on recovery.
  reg.protect("A", VariableClass::Static, CodecSpec::identity(), PayloadKind::Matrix, true);
  reg.protect("b", VariableClass::Static, CodecSpec::identity(), PayloadKind::Vector, true);
  reg.protect("i", VariableClass::Dynamic, CodecSpec::identity(), PayloadKind::Scalar);
  reg.protect("x", VariableClass::Dynamic, spec.codec);
  if (classic_cg) {
    reg.protect("p", VariableClass::Dynamic, spec.codec);
    reg.protect("rho", VariableClass::Dynamic, CodecSpec::identity(), PayloadKind::Scalar);
  }
  reg.protect("r", VariableClass::Recomputed);

  MemoryStore store(cost.bandwidth);
  IterativeSolver solver(a, Vector(b.begin(), b.end()), spec.solver);
  Clock clock(schedule);

  ExperimentReport rep;
  rep.scheme = spec.scheme;
  rep.seed = schedule.seed;
  rep.interval = spec.interval;
  rep.baseline_iterations = spec.baseline_iterations;

  std::optional<std::size_t> last_ckpt;
  double uncommitted = 0.0;  // seconds of computation not yet protected
  double committed_image_bytes = 0.0;
  double committed_raw_bytes = 0.0;
  double sum_bytes = 0.0, sum_ckpt = 0.0, sum_rc = 0.0;

  auto recover = [&] {
    const bool have = store.latest().has_value();
    const double t_rc = have ? cost.recovery_seconds(static_cast<std::size_t>(committed_image_bytes),
                                                     static_cast<std::size_t>(committed_raw_bytes), compressed)
                             : cost.static_rebuild;
    for (;;) {
      if (auto f = clock.failure_within(t_rc)) {
        rep.recovery_overhead += *f - clock.now();
        clock.jump_to_failure();
        ++rep.failures;
        continue;
      }
      clock.advance(t_rc);
      rep.recovery_overhead += t_rc;
      break;
    }
    const RestoreResult rr = restore(store, reg);
    SolverState st;
    if (rr.from_scratch) {
      st.iteration = 0;
      st.x.assign(b.size(), 0.0);
    } else {
      st.iteration = rr.iteration;
      st.x = std::get<Vector>(rr.values.at("x"));
      if (classic_cg) {
        st.p = std::get<Vector>(rr.values.at("p"));
        st.rho = std::get<double>(rr.values.at("rho"));
      }
    }
    solver.restore(st);
    last_ckpt = st.iteration;
    ++rep.recoveries;
    rep.restore_iterations.push_back(st.iteration);
  };

  auto on_failure = [&](double partial) {
    const double lost = uncommitted + partial;
    rep.max_lost_work = std::max(rep.max_lost_work, lost);
    rep.rollback_overhead += uncommitted;
    uncommitted = 0.0;
    clock.jump_to_failure();
    ++rep.failures;
    recover();
  };

  while (!solver.converged() && clock.now() < horizon && solver.iteration() < spec.solver.max_iters) {
    const std::size_t i = solver.iteration();
    if (i > 0 && i % spec.interval == 0 && last_ckpt != i) {
      const Vector x = solver.current_x();
      if (spec.adaptive_eb)
        reg.set_codec("x", CodecSpec::lossy_rel(perfmodel::gmres_adaptive_eb(norm2(residual(a, x, b)), b_norm,
                                                                             spec.adaptive_safety)));
      Bindings vals{{"i", static_cast<double>(i)}, {"x", x}};
      if (classic_cg) {
        const SolverState st = solver.state();
        vals["p"] = st.p;
        vals["rho"] = st.rho;
      }
      CheckpointImage img = build_image(reg, i, vals, VariableClass::Dynamic, clock.now());
      const std::size_t bytes = img.size_bytes();
      const double t_ckp = cost.checkpoint_seconds(bytes, img.raw_payload_bytes, compressed);
      if (auto f = clock.failure_within(t_ckp)) {
        // The partial image never reaches the store.
        const double partial = *f - clock.now();
        rep.checkpoint_overhead += partial;
        ++rep.aborted_checkpoints;
        const double lost = uncommitted + partial;
        rep.max_lost_work = std::max(rep.max_lost_work, lost);
        rep.rollback_overhead += uncommitted;
        uncommitted = 0.0;
        clock.jump_to_failure();
        ++rep.failures;
        recover();
        continue;
      }
      const auto serialized = img.serialize();
      const auto previous = store.latest();
      store.put(checkpoint_name(i), serialized);
      store.set_latest(checkpoint_name(i));
      if (previous && *previous != checkpoint_name(i)) store.remove(*previous);
      clock.advance(t_ckp);
      rep.checkpoint_overhead += t_ckp;
      ++rep.checkpoints;
      uncommitted = 0.0;
      last_ckpt = i;
      committed_image_bytes = static_cast<double>(bytes);
      committed_raw_bytes = static_cast<double>(img.raw_payload_bytes);
      sum_bytes += static_cast<double>(bytes);
      sum_ckpt += t_ckp;
      sum_rc += cost.recovery_seconds(bytes, img.raw_payload_bytes, compressed);
      continue;
    }
    if (auto f = clock.failure_within(cost.t_it)) {
      const double partial = *f - clock.now();
      rep.rollback_overhead += partial;
      on_failure(partial);
      continue;
    }
    solver.step();
    clock.advance(cost.t_it);
    uncommitted += cost.t_it;
  }

  rep.converged = solver.converged();
  rep.total_time = clock.now();
  rep.final_iterations = solver.iteration();
  rep.extra_iterations =
      static_cast<long long>(rep.final_iterations) - static_cast<long long>(spec.baseline_iterations);
  rep.productive_time = static_cast<double>(spec.baseline_iterations) * cost.t_it;
  rep.extra_iteration_time = static_cast<double>(rep.extra_iterations) * cost.t_it;
  if (rep.checkpoints > 0) {
    const double n = static_cast<double>(rep.checkpoints);
    rep.mean_checkpoint_bytes = sum_bytes / n;
    rep.mean_checkpoint_seconds = sum_ckpt / n;
    rep.mean_recovery_seconds = sum_rc / n;
  }
  return rep;
}

double ProbeReport::mean_extra() const {
  if (trials.empty()) return 0.0;
  double s = 0.0;
  for (const auto& t : trials) s += static_cast<double>(t.extra_iterations);
  return s / static_cast<double>(trials.size());
}

ProbeReport probe_restart_delay(const CsrMatrix& a, std::span<const double> b, const SolverConfig& config,
                                const ProbeOptions& options) {
  if (options.trials == 0) throw ConfigError("probe: trials must be >= 1");
  if (!(options.eb >= 0.0 && options.eb < 1.0)) throw ConfigError("probe: eb must lie in [0, 1)");
  const SolveOutcome base = solve(a, b, config);
  if (!base.converged) throw Error("probe: baseline solve did not converge within max_iters");
  if (base.iterations < 2) throw Error("probe: baseline converged in fewer than 2 iterations");

  ProbeReport rep;
  rep.baseline_iterations = base.iterations;
  rep.b_norm = norm2(b);
  rep.spectral_radius = std::numeric_limits<double>::quiet_NaN();
  if (config.method == Method::Jacobi) rep.spectral_radius = estimate_spectral_radius(base.residual_history);

  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(1, base.iterations - 1);
  for (std::size_t trial = 0; trial < options.trials; ++trial) {
    ProbeTrial tr;
    tr.t = pick(rng);
    IterativeSolver solver(a, Vector(b.begin(), b.end()), config);
    while (solver.iteration() < tr.t && !solver.converged()) solver.step();
    const Vector x = solver.current_x();
    tr.residual_before = norm2(residual(a, x, b));
    tr.eb = options.adaptive_eb
                ? perfmodel::gmres_adaptive_eb(tr.residual_before, rep.b_norm, options.adaptive_safety)
                : options.eb;
    Vector xp = x;
    if (tr.eb > 0.0) xp = decompress(compress(x, CodecSpec::lossy_rel(tr.eb)));
    tr.max_relative_error = max_pointwise_relative_error(x, xp);
    tr.residual_after = norm2(residual(a, xp, b));
    solver.restart_from(xp, tr.t);
    while (!solver.converged() && solver.iteration() < config.max_iters) solver.step();
    tr.converged = solver.converged();
    tr.iterations = solver.iteration();
    tr.extra_iterations = static_cast<long long>(tr.iterations) - static_cast<long long>(base.iterations);
    tr.bound = std::isnan(rep.spectral_radius)
                   ? std::numeric_limits<double>::quiet_NaN()
                   : perfmodel::stationary_extra_bound(rep.spectral_radius, tr.eb, static_cast<double>(tr.t));
    rep.trials.push_back(tr);
  }
  return rep;
}

const SchemeSummary& Comparison::summary(Scheme s) const {
  for (const auto& x : summaries)
    if (x.scheme == s) return x;
  throw Error("comparison has no scheme '" + to_string(s) + "'");
}

const PairedDifference* Comparison::difference(Scheme a, Scheme b) const {
  for (const auto& d : differences)
    if (d.a == a && d.b == b) return &d;
  return nullptr;
}

Comparison compare_schemes(const CsrMatrix& a, std::span<const double> b, const CompareConfig& config) {
  if (config.schemes.empty()) throw ConfigError("simulate: no schemes selected");
  if (config.seeds.empty()) throw ConfigError("simulate: no seeds selected");
  if (!(config.lambda >= 0.0)) throw ConfigError("simulate: lambda must be >= 0");
  if (!(config.horizon_factor > 1.0)) throw ConfigError("simulate: horizon_factor must exceed 1");
  if (config.interval && *config.interval == 0) throw ConfigError("simulate: interval must be >= 1");

  Comparison out;
  out.lambda = config.lambda;
  const SolveOutcome base = solve(a, b, scheme_solver(config.solver, Scheme::Traditional));
  if (!base.converged) throw Error("simulate: failure-free baseline did not converge");
  out.baseline_iterations = base.iterations;
  out.cost = config.cost.resolve(b.size(), base.iterations);
  const double n_t_it = static_cast<double>(base.iterations) * out.cost.t_it;

  std::vector<ExperimentSpec> specs;
  for (Scheme s : config.schemes) {
    ExperimentSpec spec;
    spec.solver = scheme_solver(config.solver, s);
    spec.scheme = s;
    spec.codec = scheme_codec(s, config.eb);
    spec.adaptive_eb = s == Scheme::Lossy && config.adaptive_eb;
    spec.adaptive_safety = config.adaptive_safety;
    spec.cost = out.cost;
    spec.baseline_iterations = base.iterations;
    spec.horizon = config.horizon_factor * n_t_it;

    // Failure-free pilot measures this scheme's checkpoint and recovery cost.
    spec.interval = std::max<std::size_t>(1, base.iterations / 10);
    const ExperimentReport pilot = run_experiment(a, b, spec, FailureSchedule{});
    SchemeSummary sum;
    sum.scheme = s;
    sum.t_ckp = pilot.mean_checkpoint_seconds;
    sum.t_rc = pilot.mean_recovery_seconds;
    if (config.interval) {
      spec.interval = *config.interval;
    } else if (config.lambda > 0.0) {
      spec.interval = perfmodel::young_interval(1.0 / config.lambda, sum.t_ckp, out.cost.t_it).iterations;
    }
    sum.interval = spec.interval;
    specs.push_back(spec);
    out.summaries.push_back(sum);
  }

  // Seeds fan out over worker threads; slots keep the merge order fixed.
  const std::size_t ns = config.seeds.size();
  std::vector<std::vector<ExperimentReport>> by_seed(ns);
  std::atomic<std::size_t> next{0};
  unsigned nthreads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  nthreads = static_cast<unsigned>(std::min<std::size_t>(nthreads, ns));
  std::vector<std::exception_ptr> errors(ns);
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < ns;) {
      try {
        const auto sched = sample_failures(config.seeds[k], config.lambda, specs.front().horizon);
        for (const auto& spec : specs) by_seed[k].push_back(run_experiment(a, b, spec, sched));
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<std::vector<double>> overheads(specs.size());
  for (std::size_t si = 0; si < specs.size(); ++si) {
    SchemeSummary& sum = out.summaries[si];
    double failures = 0.0, extra = 0.0, recoveries = 0.0;
    for (std::size_t k = 0; k < ns; ++k) {
      const ExperimentReport& r = by_seed[k][si];
      out.reports.push_back(r);
      overheads[si].push_back(r.overhead());
      failures += static_cast<double>(r.failures);
      extra += static_cast<double>(r.extra_iterations);
      recoveries += static_cast<double>(r.recoveries);
      sum.converged += r.converged ? 1 : 0;
    }
    sum.runs = ns;
    sum.mean_overhead = mean_of(overheads[si]);
    sum.se_overhead = standard_error(overheads[si]);
    sum.mean_failures = failures / static_cast<double>(ns);
    sum.mean_extra_iterations = extra / static_cast<double>(ns);
    sum.n_prime = recoveries > 0.0 ? std::max(0.0, extra / recoveries) : 0.0;
    try {
      const double n = static_cast<double>(base.iterations);
      if (sum.scheme == Scheme::Lossy) {
        sum.predicted_overhead =
            perfmodel::overhead_lossy(config.lambda, sum.t_ckp, std::nullopt, sum.n_prime, out.cost.t_it, n).seconds;
        sum.predicted_overhead_rc =
            perfmodel::overhead_lossy(config.lambda, sum.t_ckp, sum.t_rc, sum.n_prime, out.cost.t_it, n).seconds;
      } else {
        sum.predicted_overhead = perfmodel::overhead_traditional(config.lambda, sum.t_ckp, out.cost.t_it, n);
        sum.predicted_overhead_rc =
            perfmodel::overhead_traditional(config.lambda, sum.t_ckp, out.cost.t_it, n, sum.t_rc);
      }
    } catch (const ModelInvalidError& e) {
      sum.model_error = e.what();
    }
  }
  for (std::size_t i = 0; i < specs.size(); ++i)
    for (std::size_t j = 0; j < specs.size(); ++j) {
      if (i == j) continue;
      std::vector<double> d(ns);
      for (std::size_t k = 0; k < ns; ++k) d[k] = overheads[i][k] - overheads[j][k];
      out.differences.push_back({specs[i].scheme, specs[j].scheme, mean_of(d), standard_error(d)});
    }
  return out;
}

void write_reports_csv(std::ostream& out, std::span<const ExperimentReport> reports) {
  out << "scheme,seed,converged,interval,total_time,productive_time,extra_iteration_time,checkpoint_overhead,"
         "recovery_overhead,rollback_overhead,overhead,failures,recoveries,checkpoints,aborted_checkpoints,"
         "baseline_iterations,final_iterations,extra_iterations,mean_checkpoint_bytes,mean_checkpoint_seconds,"
         "mean_recovery_seconds,max_lost_work\n";
  const auto old_prec = out.precision(17);
  for (const auto& r : reports) {
    out << to_string(r.scheme) << ',' << r.seed << ',' << (r.converged ? 1 : 0) << ',' << r.interval << ','
        << r.total_time << ',' << r.productive_time << ',' << r.extra_iteration_time << ','
        << r.checkpoint_overhead << ',' << r.recovery_overhead << ',' << r.rollback_overhead << ','
        << r.overhead() << ',' << r.failures << ',' << r.recoveries << ',' << r.checkpoints << ','
        << r.aborted_checkpoints << ',' << r.baseline_iterations << ',' << r.final_iterations << ','
        << r.extra_iterations << ',' << r.mean_checkpoint_bytes << ',' << r.mean_checkpoint_seconds << ','
        << r.mean_recovery_seconds << ',' << r.max_lost_work << '\n';
  }
  out.precision(old_prec);
}

std::string comparison_json(const Comparison& c) {
  using nlohmann::json;
  json schemes = json::array();
  for (const auto& s : c.summaries) {
    json j = {{"scheme", to_string(s.scheme)},
              {"interval", s.interval},
              {"t_ckp", s.t_ckp},
              {"t_rc", s.t_rc},
              {"runs", s.runs},
              {"converged", s.converged},
              {"mean_overhead", s.mean_overhead},
              {"se_overhead", s.se_overhead},
              {"mean_failures", s.mean_failures},
              {"mean_extra_iterations", s.mean_extra_iterations},
              {"n_prime", s.n_prime},
              {"predicted_overhead", s.predicted_overhead},
              {"predicted_overhead_rc", s.predicted_overhead_rc}};
    if (s.model_error) j["model_error"] = *s.model_error;
    schemes.push_back(std::move(j));
  }
  json diffs = json::array();
  for (const auto& d : c.differences)
    diffs.push_back({{"a", to_string(d.a)}, {"b", to_string(d.b)}, {"mean", d.mean}, {"se", d.se}});
  json out = {{"baseline_iterations", c.baseline_iterations},
              {"lambda", c.lambda},
              {"cost",
               {{"t_it", c.cost.t_it},
                {"bandwidth", c.cost.bandwidth},
                {"compress_bps", c.cost.compress_bps},
                {"decompress_bps", c.cost.decompress_bps},
                {"static_rebuild", c.cost.static_rebuild}}},
              {"schemes", schemes},
              {"paired_differences", diffs}};
  return out.dump(2);
}

}  // namespace lossyckpt
