#include "lossyckpt/config.hpp"

#include <cstdlib>
#include <set>

#include "json.hpp"
#include "lossyckpt/errors.hpp"

namespace lossyckpt {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [k, v] : obj.items())
    if (!allowed.contains(k))
      throw ConfigError("config: unknown key '" + (where.empty() ? k : where + "." + k) + "'");
}

template <class T>
T get_as(const json& obj, const std::string& key, const std::string& path) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: '" + path + "' has the wrong type");
  }
}

template <class T>
void read_opt(const json& obj, const std::string& key, const std::string& path, T& out) {
  if (obj.contains(key)) out = get_as<T>(obj, key, path);
}

std::size_t read_count(const json& obj, const std::string& key, const std::string& path) {
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError("config: '" + path + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

/// "a.b.c=value": value parsed as JSON when possible, else taken as a string.
void apply_override(json& root, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + spec + "' is not key=value");
  const std::string key = spec.substr(0, eq);
  const std::string text = spec.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &root;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + spec + "' has an empty key component");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    if (!node->is_object()) throw ConfigError("override '" + spec + "': '" + part + "' is not an object");
    start = dot + 1;
  }
}

}  // namespace

double default_baseline_seconds(Method m) {
  switch (m) {
    case Method::Jacobi: return 3000.0;
    case Method::GMRES: return 7200.0;
    case Method::CG:
    case Method::RestartedCG: return 2100.0;
  }
  return 7200.0;
}

void ExperimentConfig::validate() const {
  if (poisson_n.has_value() == mtx_path.has_value())
    throw ConfigError("config: 'matrix' needs exactly one of poisson3d or mtx");
  if (poisson_n && *poisson_n == 0) throw ConfigError("config: 'matrix.poisson3d' must be >= 1");
  if (rhs != "ones_solution" && rhs != "ones")
    throw ConfigError("config: 'rhs' must be \"ones_solution\" or \"ones\"");
  try {
    solver.validate();
    codec.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!(adaptive_safety > 0.0)) throw ConfigError("config: 'adaptive_safety' must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("config: 'lambda' must be >= 0");
  if (seeds.empty()) throw ConfigError("config: 'seeds' must not be empty");
  if (schemes.empty()) throw ConfigError("config: 'schemes' must not be empty");
  if (interval && *interval == 0) throw ConfigError("config: 'interval' must be >= 1 or \"young\"");
  cost.validate();
  if (!(horizon_factor > 1.0)) throw ConfigError("config: 'horizon_factor' must exceed 1");
  if (probe_trials == 0) throw ConfigError("config: 'probe.trials' must be >= 1");
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
  return poisson_n == o.poisson_n && mtx_path == o.mtx_path && rhs == o.rhs && solver == o.solver &&
         codec == o.codec && adaptive_eb == o.adaptive_eb && adaptive_safety == o.adaptive_safety &&
         lambda == o.lambda && seeds == o.seeds && schemes == o.schemes && interval == o.interval &&
         cost == o.cost && horizon_factor == o.horizon_factor && threads == o.threads &&
         probe_trials == o.probe_trials && probe_seed == o.probe_seed && output_dir == o.output_dir;
}

ExperimentConfig parse_config(std::string_view json_text, const std::vector<std::string>& overrides) {
  json root;
  if (json_text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    root = json::object();
  } else {
    try {
      root = json::parse(json_text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config: malformed JSON: ") + e.what());
    }
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  for (const auto& o : overrides) apply_override(root, o);

  check_keys(root, "", {"matrix", "rhs", "solver", "codec", "adaptive_eb", "adaptive_safety", "lambda", "seeds",
                        "schemes", "interval", "cost", "horizon_factor", "threads", "probe", "output_dir"});
  ExperimentConfig c;
  if (root.contains("matrix")) {
    const json& m = root["matrix"];
    check_keys(m, "matrix", {"poisson3d", "mtx"});
    c.poisson_n.reset();
    if (m.contains("poisson3d")) c.poisson_n = read_count(m, "poisson3d", "matrix.poisson3d");
    if (m.contains("mtx")) c.mtx_path = get_as<std::string>(m, "mtx", "matrix.mtx");
  }
  read_opt(root, "rhs", "rhs", c.rhs);

  bool have_rtol = false;
  if (root.contains("solver")) {
    const json& s = root["solver"];
    check_keys(s, "solver", {"method", "rtol", "max_iters", "preconditioner", "gmres_restart", "cg_restart"});
    try {
      if (s.contains("method")) c.solver.method = parse_method(get_as<std::string>(s, "method", "solver.method"));
      if (s.contains("preconditioner"))
        c.solver.preconditioner =
            parse_preconditioner(get_as<std::string>(s, "preconditioner", "solver.preconditioner"));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(std::string("config: solver: ") + e.what());
    }
    if (s.contains("rtol")) {
      c.solver.rtol = get_as<double>(s, "rtol", "solver.rtol");
      have_rtol = true;
    }
    if (s.contains("max_iters")) c.solver.max_iters = read_count(s, "max_iters", "solver.max_iters");
    if (s.contains("gmres_restart")) c.solver.gmres_restart = read_count(s, "gmres_restart", "solver.gmres_restart");
    if (s.contains("cg_restart")) c.solver.cg_restart = read_count(s, "cg_restart", "solver.cg_restart");
  }
  if (!have_rtol) c.solver.rtol = SolverConfig::default_rtol(c.solver.method);

  if (root.contains("codec")) {
    try {
      c.codec = CodecSpec::parse(get_as<std::string>(root, "codec", "codec"));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(std::string("config: codec: ") + e.what());
    }
  }
  read_opt(root, "adaptive_eb", "adaptive_eb", c.adaptive_eb);
  read_opt(root, "adaptive_safety", "adaptive_safety", c.adaptive_safety);
  read_opt(root, "lambda", "lambda", c.lambda);
  read_opt(root, "seeds", "seeds", c.seeds);
  if (root.contains("schemes")) {
    c.schemes.clear();
    for (const auto& s : get_as<std::vector<std::string>>(root, "schemes", "schemes")) c.schemes.push_back(parse_scheme(s));
  }
  if (root.contains("interval")) {
    const json& v = root["interval"];
    if (v.is_string() && v.get<std::string>() == "young")
      c.interval.reset();
    else if (v.is_number_integer() && v.get<long long>() >= 1)
      c.interval = v.get<std::size_t>();
    else
      throw ConfigError("config: 'interval' must be \"young\" or an integer >= 1");
  }

  bool have_baseline = false;
  if (root.contains("cost")) {
    const json& k = root["cost"];
    check_keys(k, "cost", {"t_it", "baseline_seconds", "vector_write_seconds", "vector_compress_seconds",
                           "vector_decompress_seconds", "static_rebuild_seconds"});
    if (k.contains("t_it") && !k["t_it"].is_null()) c.cost.t_it = get_as<double>(k, "t_it", "cost.t_it");
    if (k.contains("baseline_seconds")) {
      c.cost.baseline_seconds = get_as<double>(k, "baseline_seconds", "cost.baseline_seconds");
      have_baseline = true;
    }
    read_opt(k, "vector_write_seconds", "cost.vector_write_seconds", c.cost.vector_write_seconds);
    read_opt(k, "vector_compress_seconds", "cost.vector_compress_seconds", c.cost.vector_compress_seconds);
    read_opt(k, "vector_decompress_seconds", "cost.vector_decompress_seconds", c.cost.vector_decompress_seconds);
    read_opt(k, "static_rebuild_seconds", "cost.static_rebuild_seconds", c.cost.static_rebuild_seconds);
  }
  if (!have_baseline) c.cost.baseline_seconds = default_baseline_seconds(c.solver.method);

  read_opt(root, "horizon_factor", "horizon_factor", c.horizon_factor);
  read_opt(root, "threads", "threads", c.threads);
  if (root.contains("probe")) {
    const json& p = root["probe"];
    check_keys(p, "probe", {"trials", "seed"});
    if (p.contains("trials")) c.probe_trials = read_count(p, "trials", "probe.trials");
    read_opt(p, "seed", "probe.seed", c.probe_seed);
  }
  if (root.contains("output_dir") && !root["output_dir"].is_null())
    c.output_dir = get_as<std::string>(root, "output_dir", "output_dir");
  c.validate();
  return c;
}

std::string to_json(const ExperimentConfig& c) {
  json matrix = json::object();
  if (c.poisson_n) matrix["poisson3d"] = *c.poisson_n;
  if (c.mtx_path) matrix["mtx"] = *c.mtx_path;
  json schemes = json::array();
  for (Scheme s : c.schemes) schemes.push_back(to_string(s));
  json root = {
      {"matrix", matrix},
      {"rhs", c.rhs},
      {"solver",
       {{"method", to_string(c.solver.method)},
        {"rtol", c.solver.rtol},
        {"max_iters", c.solver.max_iters},
        {"preconditioner", to_string(c.solver.preconditioner)},
        {"gmres_restart", c.solver.gmres_restart},
        {"cg_restart", c.solver.cg_restart}}},
      {"codec", c.codec.to_string()},
      {"adaptive_eb", c.adaptive_eb},
      {"adaptive_safety", c.adaptive_safety},
      {"lambda", c.lambda},
      {"seeds", c.seeds},
      {"schemes", schemes},
      {"interval", c.interval ? json(*c.interval) : json("young")},
      {"cost",
       {{"t_it", c.cost.t_it ? json(*c.cost.t_it) : json(nullptr)},
        {"baseline_seconds", c.cost.baseline_seconds},
        {"vector_write_seconds", c.cost.vector_write_seconds},
        {"vector_compress_seconds", c.cost.vector_compress_seconds},
        {"vector_decompress_seconds", c.cost.vector_decompress_seconds},
        {"static_rebuild_seconds", c.cost.static_rebuild_seconds}}},
      {"horizon_factor", c.horizon_factor},
      {"threads", c.threads},
      {"probe", {{"trials", c.probe_trials}, {"seed", c.probe_seed}}},
      {"output_dir", c.output_dir ? json(*c.output_dir) : json(nullptr)}};
  return root.dump(2);
}

CsrMatrix load_matrix(const ExperimentConfig& c) {
  if (c.poisson_n) return poisson3d(*c.poisson_n);
  return mtx::read_file(*c.mtx_path);
}

Vector make_rhs(const ExperimentConfig& c, const CsrMatrix& a) {
  const Vector ones(a.ncols(), 1.0);
  if (c.rhs == "ones") return Vector(a.nrows(), 1.0);
  return spmv(a, ones);
}

CompareConfig compare_config(const ExperimentConfig& c) {
  CompareConfig cc;
  cc.solver = c.solver;
  cc.schemes = c.schemes;
  cc.lambda = c.lambda;
  cc.seeds = c.seeds;
  cc.interval = c.interval;
  cc.eb = c.codec.kind == CodecKind::LossyRel ? c.codec.eb : 1e-4;
  cc.adaptive_eb = c.adaptive_eb;
  cc.adaptive_safety = c.adaptive_safety;
  cc.cost = c.cost;
  cc.horizon_factor = c.horizon_factor;
  cc.threads = c.threads;
  return cc;
}

ProbeOptions probe_options(const ExperimentConfig& c) {
  ProbeOptions p;
  p.trials = c.probe_trials;
  p.seed = c.probe_seed;
  p.eb = c.codec.kind == CodecKind::LossyRel ? c.codec.eb : 0.0;
  p.adaptive_eb = c.adaptive_eb;
  p.adaptive_safety = c.adaptive_safety;
  return p;
}

std::string resolve_output_dir(const ExperimentConfig& c) {
  if (c.output_dir) return *c.output_dir;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return ".";
}

}  // namespace lossyckpt
