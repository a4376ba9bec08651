#include "lossyckpt/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lossyckpt/codec.hpp"
#include "lossyckpt/config.hpp"
#include "lossyckpt/errors.hpp"
#include "lossyckpt/harness.hpp"
#include "lossyckpt/perfmodel.hpp"
#include "lossyckpt/solvers.hpp"

namespace lossyckpt::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using SteadyClock = std::chrono::steady_clock;

/// Options shared by the config-driven subcommands.
struct CommonOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::size_t> n;
  std::optional<std::string> method;
  std::optional<std::string> precond;
  std::optional<double> rtol;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> seed_count;
  std::optional<double> lambda;
  std::optional<double> eb;
  std::optional<std::string> codec;
  std::optional<std::size_t> trials;
  std::optional<unsigned> threads;
  std::optional<std::string> out;
  bool adaptive = false;
  bool json_output = false;
  bool wallclock = false;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config_path, "JSON experiment config");
  app->add_option("--set", o.sets, "Override a config key: dotted.key=value");
  app->add_option("--n", o.n, "poisson3d grid size");
  app->add_option("--method", o.method, "jacobi | cg | restarted_cg | gmres");
  app->add_option("--precond", o.precond, "none | jacobi | ilu0");
  app->add_option("--rtol", o.rtol, "Relative residual tolerance");
  app->add_option("--seed", o.seed, "Seed (simulate: first seed; probe: trial seed)");
  app->add_option("--seeds", o.seed_count, "simulate: number of consecutive seeds");
  app->add_option("--lambda", o.lambda, "Failure rate (1/s)");
  app->add_option("--eb", o.eb, "Pointwise relative error bound of the lossy codec");
  app->add_option("--codec", o.codec, "identity | lossless | lossy:<eb>");
  app->add_option("--trials", o.trials, "probe: number of trials");
  app->add_option("--threads", o.threads, "simulate: worker threads");
  app->add_option("--out", o.out, std::string("Output directory (default $") + kOutputDirEnv + " or .)");
  app->add_flag("--adaptive", o.adaptive, "GMRES: residual-scaled error bound");
  app->add_flag("--json", o.json_output, "Print JSON to stdout");
  app->add_flag("--wallclock", o.wallclock, "Measure real times (log sidecar / cost calibration)");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig load_config(const CommonOptions& o) {
  std::vector<std::string> sets = o.sets;
  auto put = [&](const std::string& key, const json& v) { sets.push_back(key + "=" + v.dump()); };
  if (o.n) put("matrix", json{{"poisson3d", *o.n}});
  if (o.method) put("solver.method", *o.method);
  if (o.precond) put("solver.preconditioner", *o.precond);
  if (o.rtol) put("solver.rtol", *o.rtol);
  if (o.lambda) put("lambda", *o.lambda);
  if (o.codec) put("codec", *o.codec);
  if (o.eb) put("codec", *o.eb == 0.0 ? std::string("identity") : CodecSpec::lossy_rel(*o.eb).to_string());
  if (o.adaptive) put("adaptive_eb", true);
  if (o.trials) put("probe.trials", *o.trials);
  if (o.threads) put("threads", *o.threads);
  if (o.out) put("output_dir", *o.out);
  if (o.seed) {
    put("probe.seed", *o.seed);
    json seeds = json::array();
    for (std::size_t k = 0; k < o.seed_count.value_or(1); ++k) seeds.push_back(*o.seed + k);
    put("seeds", seeds);
  } else if (o.seed_count) {
    json seeds = json::array();
    for (std::size_t k = 0; k < *o.seed_count; ++k) seeds.push_back(1 + k);
    put("seeds", seeds);
  }
  const std::string text = o.config_path.empty() ? std::string("{}") : read_text(o.config_path);
  return parse_config(text, sets);
}

fs::path prepare_output(const ExperimentConfig& c) {
  fs::path dir = resolve_output_dir(c);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw StorageError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw StorageError("cannot write " + p.string());
  return f;
}

/// Timestamps live only in this sidecar so the data files stay reproducible.
void log_line(const fs::path& dir, const std::string& msg) {
  std::ofstream log(dir / "run.log", std::ios::app);
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  log << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << msg << '\n';
}

double seconds_since(SteadyClock::time_point t0) {
  return std::chrono::duration<double>(SteadyClock::now() - t0).count();
}

int cmd_solve(const CommonOptions& o, std::ostream& out) {
  const ExperimentConfig c = load_config(o);
  const CsrMatrix a = load_matrix(c);
  const Vector b = make_rhs(c, a);
  const fs::path dir = prepare_output(c);
  const auto t0 = SteadyClock::now();
  const SolveOutcome res = solve(a, b, c.solver);
  const double wall = seconds_since(t0);

  auto csv = open_out(dir / "residuals.csv");
  csv << "iteration,relative_residual\n" << std::setprecision(17);
  for (std::size_t i = 0; i < res.residual_history.size(); ++i) csv << i << ',' << res.residual_history[i] << '\n';
  if (o.wallclock) log_line(dir, "solve wall_seconds=" + std::to_string(wall));

  const json summary = {{"method", to_string(c.solver.method)},
                        {"n", a.nrows()},
                        {"converged", res.converged},
                        {"iterations", res.iterations},
                        {"final_relative_residual", res.final_relative_residual},
                        {"rtol", c.solver.rtol}};
  if (o.json_output)
    out << summary.dump(2) << '\n';
  else
    out << to_string(c.solver.method) << " n=" << a.nrows() << (res.converged ? " converged" : " NOT converged")
        << " in " << res.iterations << " iterations, relative residual " << res.final_relative_residual << '\n';
  return res.converged ? kOk : kNotConverged;
}

struct ModelOptions {
  double lambda = 1.0 / 3600.0;
  std::optional<double> mtti;
  double t_it = 1.2;
  double t_ckp = 120.0;
  std::optional<double> t_rc;
  double t_ckp_lossy = 25.0;
  std::optional<double> t_rc_lossy;
  std::optional<double> t_ckp_lossless;
  double t_comp = 0.0;
  double t_decomp = 0.0;
  double n_iters = 5875.0;
  double n_prime = 0.0;
  std::optional<double> spectral_radius;
  double eb = 1e-4;
  std::string weighting = "uniform";
  std::optional<double> r_norm;
  std::optional<double> b_norm;
  double safety = 1.0;
};

json young_json(const perfmodel::YoungInterval& y) {
  return {{"seconds", y.seconds}, {"minutes", y.seconds / 60.0}, {"iterations", y.iterations}};
}

int cmd_model(const ModelOptions& m, std::ostream& out) {
  perfmodel::LossyModelParams p;
  p.base.lambda = m.mtti ? 1.0 / *m.mtti : m.lambda;
  p.base.t_it = m.t_it;
  p.base.t_ckp = m.t_ckp;
  p.base.t_rc = m.t_rc;
  p.base.n_iters = m.n_iters;
  p.t_comp = m.t_comp;
  p.t_decomp = m.t_decomp;
  p.t_ckp_lossy = m.t_ckp_lossy;
  p.t_rc_lossy = m.t_rc_lossy;
  p.n_prime = m.n_prime;
  const auto r = perfmodel::evaluate(p);

  json j = {{"inputs",
             {{"lambda", p.base.lambda},
              {"t_it", p.base.t_it},
              {"t_ckp", p.base.t_ckp},
              {"t_rc", p.base.recovery()},
              {"t_ckp_lossy", p.t_ckp_lossy},
              {"t_rc_lossy", p.recovery()},
              {"t_comp", p.t_comp},
              {"t_decomp", p.t_decomp},
              {"n_iters", p.base.n_iters},
              {"n_prime", p.n_prime}}},
            {"young_traditional", young_json(r.young_traditional)},
            {"young_lossy", young_json(r.young_lossy)},
            {"overhead_ratio_traditional", r.ratio_traditional},
            {"overhead_traditional_seconds", r.overhead_traditional},
            {"overhead_ratio_lossy", r.lossy.ratio},
            {"overhead_lossy_seconds", r.lossy.seconds},
            {"breakeven_n_prime_max", r.breakeven.n_prime_max},
            {"lossy_profitable", r.breakeven.profitable}};
  if (m.t_ckp_lossless)
    j["young_lossless"] = young_json(perfmodel::young_interval(1.0 / p.base.lambda, *m.t_ckp_lossless, m.t_it));
  if (m.spectral_radius) {
    const auto weighting = m.weighting == "failure" ? perfmodel::ExpectationWeighting::FailureDensity
                                                    : perfmodel::ExpectationWeighting::Uniform;
    if (m.weighting != "failure" && m.weighting != "uniform")
      throw ConfigError("--weighting must be uniform or failure");
    const auto n = static_cast<std::size_t>(std::llround(m.n_iters));
    const double q = -std::expm1(-p.base.lambda * m.t_it);
    const auto e = perfmodel::stationary_expected_bound_interval(*m.spectral_radius, m.eb, n, weighting, q);
    j["stationary"] = {{"spectral_radius", *m.spectral_radius},
                       {"eb", m.eb},
                       {"bound_at_n", perfmodel::stationary_extra_bound(*m.spectral_radius, m.eb, m.n_iters)},
                       {"expected", e.expected},
                       {"lo", e.lo},
                       {"hi", e.hi},
                       {"weighting", m.weighting}};
  }
  if (m.r_norm && m.b_norm) j["gmres_adaptive_eb"] = perfmodel::gmres_adaptive_eb(*m.r_norm, *m.b_norm, m.safety);
  out << j.dump(2) << '\n';
  return kOk;
}

/// Real T_it and codec throughput for the configured problem.
void calibrate(ExperimentConfig& c, const CsrMatrix& a, const Vector& b, const fs::path& dir) {
  const auto t0 = SteadyClock::now();
  const SolveOutcome base = solve(a, b, c.solver);
  const double solve_s = seconds_since(t0);
  if (!base.converged) throw Error("wallclock calibration: baseline did not converge");
  const double eb = c.codec.kind == CodecKind::LossyRel ? c.codec.eb : 1e-4;
  const auto t1 = SteadyClock::now();
  const CompressedFrame f = compress(base.x, CodecSpec::lossy_rel(eb));
  const double comp_s = seconds_since(t1);
  const auto t2 = SteadyClock::now();
  (void)decompress(f);
  const double decomp_s = seconds_since(t2);
  c.cost.t_it = solve_s / static_cast<double>(std::max<std::size_t>(1, base.iterations));
  c.cost.vector_compress_seconds = comp_s;
  c.cost.vector_decompress_seconds = decomp_s;
  log_line(dir, "wallclock t_it=" + std::to_string(*c.cost.t_it) + " compress=" + std::to_string(comp_s) +
                    " decompress=" + std::to_string(decomp_s));
}

int cmd_simulate(const CommonOptions& o, std::ostream& out) {
  ExperimentConfig c = load_config(o);
  const CsrMatrix a = load_matrix(c);
  const Vector b = make_rhs(c, a);
  const fs::path dir = prepare_output(c);
  log_line(dir, "simulate start");
  if (o.wallclock) calibrate(c, a, b, dir);
  open_out(dir / "effective_config.json") << to_json(c) << '\n';

  const Comparison cmp = compare_schemes(a, b, compare_config(c));
  {
    auto csv = open_out(dir / "simulate.csv");
    write_reports_csv(csv, cmp.reports);
  }
  const std::string summary = comparison_json(cmp);
  open_out(dir / "simulate_summary.json") << summary << '\n';
  log_line(dir, "simulate done");

  if (o.json_output) {
    out << summary << '\n';
  } else {
    out << "baseline iterations " << cmp.baseline_iterations << ", T_it " << cmp.cost.t_it << " s\n";
    for (const auto& s : cmp.summaries)
      out << std::left << std::setw(12) << to_string(s.scheme) << " k=" << s.interval << " T_ckp=" << s.t_ckp
          << " mean overhead " << s.mean_overhead << " +- " << s.se_overhead << " (model " << s.predicted_overhead
          << ")\n";
  }
  for (const auto& s : cmp.summaries)
    if (s.converged != s.runs) return kNotConverged;
  return kOk;
}

Vector load_vector_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot read input '" + path + "'");
  Vector v;
  if (fs::path(path).extension() == ".bin") {
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % sizeof(double) != 0) throw StorageError("'" + path + "' is not a whole number of float64 values");
    v.resize(bytes.size() / sizeof(double));
    std::memcpy(v.data(), bytes.data(), bytes.size());
  } else {
    double x;
    while (in >> x) v.push_back(x);
    if (!in.eof()) throw StorageError("'" + path + "' contains a non-numeric token");
  }
  return v;
}

int cmd_compress_bench(const CommonOptions& o, const std::string& input, const std::vector<std::string>& codecs,
                       std::ostream& out) {
  ExperimentConfig c = load_config(o);
  Vector data;
  std::string source = input;
  if (input.empty() || input.rfind("poisson3d:", 0) == 0) {
    if (!input.empty()) c.poisson_n = std::stoul(input.substr(10));
    const CsrMatrix a = poisson3d(*c.poisson_n);
    const SolveOutcome res = solve(a, make_rhs(c, a), c.solver);
    if (!res.converged) throw Error("compress-bench: reference solve did not converge");
    data = res.x;
    source = "poisson3d:" + std::to_string(*c.poisson_n) + " converged solution";
  } else {
    data = load_vector_file(input);
  }

  json rows = json::array();
  for (const auto& name : codecs) {
    const CodecSpec spec = CodecSpec::parse(name);
    const auto t0 = SteadyClock::now();
    const CompressedFrame f = compress(data, spec);
    const double tc = seconds_since(t0);
    const auto t1 = SteadyClock::now();
    const Vector back = decompress(f);
    const double td = seconds_since(t1);
    const double raw = static_cast<double>(data.size() * sizeof(double));
    const double err = max_pointwise_relative_error(data, back);
    std::size_t violations = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double bound = spec.kind == CodecKind::LossyRel && std::abs(data[i]) >= kExactStorageFloor
                               ? spec.eb * std::abs(data[i])
                               : 0.0;
      if (!(std::abs(data[i] - back[i]) <= bound)) ++violations;
    }
    rows.push_back({{"codec", spec.to_string()},
                    {"bytes", f.serialized_size()},
                    {"ratio", compression_ratio(f)},
                    {"compress_bytes_per_second", tc > 0.0 ? raw / tc : 0.0},
                    {"decompress_bytes_per_second", td > 0.0 ? raw / td : 0.0},
                    {"max_relative_error", err},
                    {"bound_violations", violations}});
  }
  if (o.json_output) {
    out << json{{"source", source}, {"elements", data.size()}, {"codecs", rows}}.dump(2) << '\n';
  } else {
    out << source << ", " << data.size() << " elements\n";
    out << std::left << std::setw(22) << "codec" << std::setw(12) << "ratio" << std::setw(14) << "comp MB/s"
        << std::setw(14) << "decomp MB/s" << std::setw(14) << "max rel err" << "violations\n";
    for (const auto& r : rows)
      out << std::left << std::setw(22) << r["codec"].get<std::string>() << std::setw(12)
          << r["ratio"].get<double>() << std::setw(14) << r["compress_bytes_per_second"].get<double>() / 1e6
          << std::setw(14) << r["decompress_bytes_per_second"].get<double>() / 1e6 << std::setw(14)
          << r["max_relative_error"].get<double>() << r["bound_violations"].get<std::size_t>() << '\n';
  }
  for (const auto& r : rows)
    if (r["bound_violations"].get<std::size_t>() != 0) return kUsage;
  return kOk;
}

int cmd_probe(const CommonOptions& o, std::ostream& out) {
  ExperimentConfig c = load_config(o);
  // Classic CG restarts perturb its search directions; the probe measures
  // the effect of x alone, so CG runs restarted.
  SolverConfig solver = c.solver;
  if (solver.method == Method::CG) solver.method = Method::RestartedCG;
  const CsrMatrix a = load_matrix(c);
  const Vector b = make_rhs(c, a);
  const fs::path dir = prepare_output(c);
  const ProbeReport rep = probe_restart_delay(a, b, solver, probe_options(c));

  auto csv = open_out(dir / "probe.csv");
  csv << "trial,t,eb,iterations,extra_iterations,converged,residual_before,residual_after,max_relative_error,bound\n"
      << std::setprecision(17);
  for (std::size_t k = 0; k < rep.trials.size(); ++k) {
    const auto& t = rep.trials[k];
    csv << k << ',' << t.t << ',' << t.eb << ',' << t.iterations << ',' << t.extra_iterations << ','
        << (t.converged ? 1 : 0) << ',' << t.residual_before << ',' << t.residual_after << ','
        << t.max_relative_error << ',' << t.bound << '\n';
  }
  json j = {{"method", to_string(solver.method)},
            {"baseline_iterations", rep.baseline_iterations},
            {"trials", rep.trials.size()},
            {"mean_extra_iterations", rep.mean_extra()},
            {"mean_delay_fraction", rep.mean_extra() / static_cast<double>(rep.baseline_iterations)}};
  if (!std::isnan(rep.spectral_radius)) j["spectral_radius"] = rep.spectral_radius;
  if (o.json_output)
    out << j.dump(2) << '\n';
  else
    out << to_string(solver.method) << ": baseline " << rep.baseline_iterations << " iterations, mean extra "
        << rep.mean_extra() << " over " << rep.trials.size() << " trials\n";
  for (const auto& t : rep.trials)
    if (!t.converged) return kNotConverged;
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lossy checkpoint/restart lab for iterative solvers", "lossyckpt"};
  app.require_subcommand(1);

  CommonOptions common;
  auto* solve_cmd = app.add_subcommand("solve", "Failure-free solve; writes residuals.csv");
  add_common(solve_cmd, common);

  ModelOptions mo;
  auto* model_cmd = app.add_subcommand("model", "Evaluate the performance model; prints JSON");
  model_cmd->add_option("--lambda", mo.lambda, "Failure rate (1/s)");
  model_cmd->add_option("--mtti", mo.mtti, "Mean time to interruption (s); overrides --lambda");
  model_cmd->add_option("--t-it", mo.t_it, "Seconds per iteration");
  model_cmd->add_option("--t-ckp", mo.t_ckp, "Traditional checkpoint time (s)");
  model_cmd->add_option("--t-rc", mo.t_rc, "Traditional recovery time (s)");
  model_cmd->add_option("--t-ckp-lossy", mo.t_ckp_lossy, "Lossy checkpoint time incl. compression (s)");
  model_cmd->add_option("--t-rc-lossy", mo.t_rc_lossy, "Lossy recovery time incl. decompression (s)");
  model_cmd->add_option("--t-ckp-lossless", mo.t_ckp_lossless, "Lossless checkpoint time (s)");
  model_cmd->add_option("--t-comp", mo.t_comp, "Compression time (s)");
  model_cmd->add_option("--t-decomp", mo.t_decomp, "Decompression time (s)");
  model_cmd->add_option("--n-iters", mo.n_iters, "Failure-free iteration count N");
  model_cmd->add_option("--n-prime", mo.n_prime, "Extra iterations per lossy recovery");
  model_cmd->add_option("--spectral-radius", mo.spectral_radius, "Stationary method convergence rate R");
  model_cmd->add_option("--eb", mo.eb, "Error bound for the stationary bound");
  model_cmd->add_option("--weighting", mo.weighting, "uniform | failure");
  model_cmd->add_option("--r-norm", mo.r_norm, "Residual norm for the adaptive GMRES bound");
  model_cmd->add_option("--b-norm", mo.b_norm, "Right-hand-side norm for the adaptive GMRES bound");
  model_cmd->add_option("--safety", mo.safety, "Adaptive bound safety factor");

  auto* sim_cmd = app.add_subcommand("simulate", "Virtual-clock comparison of checkpoint schemes");
  add_common(sim_cmd, common);

  std::string input;
  std::vector<std::string> codecs{"identity", "lossless", "lossy:1e-2", "lossy:1e-4", "lossy:1e-6"};
  auto* bench_cmd = app.add_subcommand("compress-bench", "Codec ratio, throughput and error table");
  add_common(bench_cmd, common);
  bench_cmd->add_option("--input", input, "poisson3d:<n> | vector file (.bin float64 or text)");
  bench_cmd->add_option("--codecs", codecs, "Codec list")->delimiter(',');

  auto* probe_cmd = app.add_subcommand("probe", "Random lossy restarts; counts extra iterations");
  add_common(probe_cmd, common);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*solve_cmd) return cmd_solve(common, out);
    if (*model_cmd) return cmd_model(mo, out);
    if (*sim_cmd) return cmd_simulate(common, out);
    if (*bench_cmd) return cmd_compress_bench(common, input, codecs, out);
    if (*probe_cmd) return cmd_probe(common, out);
  } catch (const ModelInvalidError& e) {
    err << "error: " << e.what() << '\n';
    return kModelInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace lossyckpt::cli
