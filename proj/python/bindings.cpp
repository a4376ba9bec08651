#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "lossyckpt/cli.hpp"
#include "lossyckpt/codec.hpp"
#include "lossyckpt/config.hpp"
#include "lossyckpt/errors.hpp"
#include "lossyckpt/harness.hpp"
#include "lossyckpt/perfmodel.hpp"
#include "lossyckpt/solvers.hpp"
#include "lossyckpt/sparse.hpp"

namespace py = pybind11;
using namespace lossyckpt;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::span<const double> view(const DoubleArray& a) {
  if (a.ndim() != 1) throw DimensionError("expected a 1-d array");
  return {a.data(), static_cast<std::size_t>(a.shape(0))};
}

DoubleArray to_numpy(const Vector& v) {
  DoubleArray out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

SolverConfig make_config(const std::string& method, std::optional<double> rtol, const std::string& precond,
                         std::size_t max_iters) {
  SolverConfig c;
  c.method = parse_method(method);
  c.rtol = rtol.value_or(SolverConfig::default_rtol(c.method));
  c.preconditioner = parse_preconditioner(precond);
  c.max_iters = max_iters;
  return c;
}

py::dict probe_dict(const ProbeReport& r) {
  py::list trials;
  for (const auto& t : r.trials) {
    py::dict d;
    d["t"] = t.t;
    d["eb"] = t.eb;
    d["iterations"] = t.iterations;
    d["extra_iterations"] = t.extra_iterations;
    d["converged"] = t.converged;
    d["residual_before"] = t.residual_before;
    d["residual_after"] = t.residual_after;
    d["max_relative_error"] = t.max_relative_error;
    d["bound"] = t.bound;
    trials.append(d);
  }
  py::dict out;
  out["baseline_iterations"] = r.baseline_iterations;
  out["b_norm"] = r.b_norm;
  out["spectral_radius"] = r.spectral_radius;
  out["mean_extra"] = r.mean_extra();
  out["trials"] = trials;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Lossy checkpointing for iterative solvers";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", error);
  py::register_exception<NonFiniteError>(m, "NonFiniteError", error);
  py::register_exception<BreakdownError>(m, "BreakdownError", error);
  auto corrupt = py::register_exception<CorruptFrameError>(m, "CorruptFrameError", error);
  py::register_exception<UnknownCodecError>(m, "UnknownCodecError", corrupt);
  py::register_exception<ConfigError>(m, "ConfigError", error);
  py::register_exception<ModelInvalidError>(m, "ModelInvalidError", error);

  py::class_<CsrMatrix>(m, "CsrMatrix")
      .def_property_readonly("nrows", &CsrMatrix::nrows)
      .def_property_readonly("ncols", &CsrMatrix::ncols)
      .def_property_readonly("nnz", &CsrMatrix::nnz)
      .def("matvec", [](const CsrMatrix& a, const DoubleArray& x) { return to_numpy(spmv(a, view(x))); })
      .def("__repr__", [](const CsrMatrix& a) {
        std::ostringstream os;
        os << "<CsrMatrix " << a.nrows() << "x" << a.ncols() << " nnz=" << a.nnz() << ">";
        return os.str();
      });

  m.def("poisson3d", &poisson3d, py::arg("n"), "7-point Laplacian on an n^3 grid.");
  m.def("read_matrix_market", &mtx::read_file, py::arg("path"));

  m.def(
      "solve",
      [](const CsrMatrix& a, const DoubleArray& b, const std::string& method, std::optional<double> rtol,
         const std::string& precond, std::size_t max_iters) {
        const auto cfg = make_config(method, rtol, precond, max_iters);
        SolveOutcome res;
        {
          py::gil_scoped_release release;
          res = solve(a, view(b), cfg);
        }
        py::dict d;
        d["converged"] = res.converged;
        d["iterations"] = res.iterations;
        d["relative_residual"] = res.final_relative_residual;
        d["x"] = to_numpy(res.x);
        d["residual_history"] = res.residual_history;
        return d;
      },
      py::arg("a"), py::arg("b"), py::arg("method") = "gmres", py::arg("rtol") = py::none(),
      py::arg("precond") = "none", py::arg("max_iters") = SolverConfig{}.max_iters);

  m.def(
      "compress",
      [](const DoubleArray& data, const std::string& codec) {
        const auto bytes = compress(view(data), CodecSpec::parse(codec)).serialize();
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      },
      py::arg("data"), py::arg("codec") = "lossless", "Compress to a self-describing frame.");
  m.def(
      "decompress",
      [](const py::bytes& frame) {
        const std::string s = frame;
        const auto* p = reinterpret_cast<const std::uint8_t*>(s.data());
        return to_numpy(decompress(CompressedFrame::parse({p, s.size()})));
      },
      py::arg("frame"));
  m.def(
      "compression_ratio",
      [](const py::bytes& frame) {
        const std::string s = frame;
        const auto* p = reinterpret_cast<const std::uint8_t*>(s.data());
        return compression_ratio(CompressedFrame::parse({p, s.size()}));
      },
      py::arg("frame"));
  m.def(
      "max_pointwise_relative_error",
      [](const DoubleArray& a, const DoubleArray& b) { return max_pointwise_relative_error(view(a), view(b)); },
      py::arg("original"), py::arg("reconstructed"));

  auto pm = m.def_submodule("model", "Analytic performance model");
  pm.def("young_interval",
         [](double mtti, double t_ckp, double t_it) {
           const auto y = perfmodel::young_interval(mtti, t_ckp, t_it);
           return py::make_tuple(y.seconds, y.iterations);
         },
         py::arg("mtti"), py::arg("t_ckp"), py::arg("t_it") = 1.0, "Returns (seconds, iterations).");
  pm.def("overhead_ratio_traditional", &perfmodel::overhead_ratio_traditional, py::arg("lam"), py::arg("t_ckp"),
         py::arg("t_rc") = py::none());
  pm.def("overhead_traditional", &perfmodel::overhead_traditional, py::arg("lam"), py::arg("t_ckp"),
         py::arg("t_it"), py::arg("n_iters"), py::arg("t_rc") = py::none());
  pm.def("overhead_lossy",
         [](double lam, double t_ckp_lossy, std::optional<double> t_rc_lossy, double n_prime, double t_it,
            double n_iters) {
           return perfmodel::overhead_lossy(lam, t_ckp_lossy, t_rc_lossy, n_prime, t_it, n_iters).seconds;
         },
         py::arg("lam"), py::arg("t_ckp_lossy"), py::arg("t_rc_lossy"), py::arg("n_prime"), py::arg("t_it"),
         py::arg("n_iters"));
  pm.def("breakeven_extra_iters",
         [](double lam, double t_trad, double t_lossy, double t_it) {
           return perfmodel::breakeven_extra_iters(lam, t_trad, t_lossy, t_it).n_prime_max;
         },
         py::arg("lam"), py::arg("t_ckp_trad"), py::arg("t_ckp_lossy"), py::arg("t_it"));
  pm.def("stationary_extra_bound", &perfmodel::stationary_extra_bound, py::arg("spectral_radius"), py::arg("eb"),
         py::arg("t"));
  pm.def("stationary_expected_bound",
         [](double r, double eb, std::size_t n) {
           const auto e = perfmodel::stationary_expected_bound_interval(r, eb, n);
           return py::make_tuple(e.expected, e.lo, e.hi);
         },
         py::arg("spectral_radius"), py::arg("eb"), py::arg("n_iters"), "Returns (expected, lo, hi).");
  pm.def("gmres_adaptive_eb", &perfmodel::gmres_adaptive_eb, py::arg("r_norm"), py::arg("b_norm"),
         py::arg("safety") = 1.0, py::arg("eb_min") = perfmodel::kAdaptiveEbMin,
         py::arg("eb_max") = perfmodel::kAdaptiveEbMax);

  m.def("sample_failures",
        [](std::uint64_t seed, double lam, double horizon) { return sample_failures(seed, lam, horizon).failure_times; },
        py::arg("seed"), py::arg("lam"), py::arg("horizon"));

  m.def(
      "probe",
      [](const CsrMatrix& a, const DoubleArray& b, const std::string& method, std::size_t trials,
         std::uint64_t seed, double eb, bool adaptive) {
        ProbeOptions opt;
        opt.trials = trials;
        opt.seed = seed;
        opt.eb = eb;
        opt.adaptive_eb = adaptive;
        const auto cfg = make_config(method, std::nullopt, "none", SolverConfig{}.max_iters);
        ProbeReport r;
        {
          py::gil_scoped_release release;
          r = probe_restart_delay(a, view(b), cfg, opt);
        }
        return probe_dict(r);
      },
      py::arg("a"), py::arg("b"), py::arg("method") = "jacobi", py::arg("trials") = 20, py::arg("seed") = 1,
      py::arg("eb") = 1e-4, py::arg("adaptive") = false);

  m.def(
      "simulate",
      [](const std::string& config_json, const std::vector<std::string>& overrides) {
        const auto cfg = parse_config(config_json, overrides);
        const CsrMatrix a = load_matrix(cfg);
        const Vector b = make_rhs(cfg, a);
        std::string out;
        {
          py::gil_scoped_release release;
          out = comparison_json(compare_schemes(a, b, compare_config(cfg)));
        }
        return out;
      },
      py::arg("config_json") = "{}", py::arg("overrides") = std::vector<std::string>{},
      "Virtual-clock scheme comparison; returns the summary as JSON text.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a CLI subcommand in-process; returns (exit code, stdout, stderr).");
}
