#include "lossyckpt/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lossyckpt/errors.hpp"

namespace lossyckpt {

std::string to_string(Method m) {
  switch (m) {
    case Method::Jacobi: return "jacobi";
    case Method::CG: return "cg";
    case Method::RestartedCG: return "restarted_cg";
    case Method::GMRES: return "gmres";
  }
  return "unknown";
}

std::string to_string(PreconditionerKind p) {
  switch (p) {
    case PreconditionerKind::None: return "none";
    case PreconditionerKind::PointJacobi: return "jacobi";
    case PreconditionerKind::ILU0: return "ilu0";
  }
  return "unknown";
}

Method parse_method(const std::string& s) {
  if (s == "jacobi") return Method::Jacobi;
  if (s == "cg") return Method::CG;
  if (s == "restarted_cg") return Method::RestartedCG;
  if (s == "gmres") return Method::GMRES;
  throw ConfigError("unknown method '" + s + "' (expected jacobi|cg|restarted_cg|gmres)");
}

PreconditionerKind parse_preconditioner(const std::string& s) {
  if (s == "none") return PreconditionerKind::None;
  if (s == "jacobi") return PreconditionerKind::PointJacobi;
  if (s == "ilu0") return PreconditionerKind::ILU0;
  throw ConfigError("unknown preconditioner '" + s + "' (expected none|jacobi|ilu0)");
}

void SolverConfig::validate() const {
  if (!(rtol > 0.0 && rtol < 1.0)) throw ConfigError("rtol must lie in (0, 1)");
  if (method == Method::GMRES && gmres_restart == 0) throw ConfigError("GMRES restart length must be >= 1");
  if (max_iters == 0) throw ConfigError("max_iters must be >= 1");
}

double SolverConfig::default_rtol(Method m) {
  switch (m) {
    case Method::Jacobi: return 1e-4;
    case Method::GMRES: return 7e-5;
    case Method::CG:
    case Method::RestartedCG: return 1e-7;
  }
  return 1e-7;
}

// ---------------------------------------------------------------------------
// ILU(0)

IluFactors ilu0(const CsrMatrix& a) {
  if (a.nrows() != a.ncols()) throw DimensionError("ilu0: matrix must be square");
  const std::size_t n = a.nrows();
  const auto ptr = a.row_ptr();
  const auto col = a.col_idx();
  std::vector<double> lu(a.values().begin(), a.values().end());
  std::vector<std::int64_t> diag_pos(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto k = ptr[i]; k < ptr[i + 1]; ++k) {
      if (static_cast<std::size_t>(col[k]) == i) diag_pos[i] = k;
    }
    if (diag_pos[i] < 0) throw BreakdownError("ilu0: structurally zero diagonal in row " + std::to_string(i));
  }

  std::vector<std::int64_t> position(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto k = ptr[i]; k < ptr[i + 1]; ++k) position[static_cast<std::size_t>(col[k])] = k;
    for (auto ik = ptr[i]; ik < ptr[i + 1]; ++ik) {
      const auto k = static_cast<std::size_t>(col[ik]);
      if (k >= i) break;
      const double pivot = lu[diag_pos[k]];
      if (pivot == 0.0) throw BreakdownError("ilu0: zero pivot in row " + std::to_string(k));
      lu[ik] /= pivot;
      for (auto kj = diag_pos[k] + 1; kj < ptr[k + 1]; ++kj) {
        const auto pos = position[static_cast<std::size_t>(col[kj])];
        if (pos >= 0) lu[pos] -= lu[ik] * lu[kj];
      }
    }
    for (auto k = ptr[i]; k < ptr[i + 1]; ++k) position[static_cast<std::size_t>(col[k])] = -1;
    if (lu[diag_pos[i]] == 0.0) throw BreakdownError("ilu0: zero pivot in row " + std::to_string(i));
  }

  std::vector<std::int64_t> lptr(n + 1, 0), uptr(n + 1, 0);
  std::vector<index_t> lcol, ucol;
  std::vector<double> lval, uval;
  for (std::size_t i = 0; i < n; ++i) {
    for (auto k = ptr[i]; k < ptr[i + 1]; ++k) {
      const auto j = static_cast<std::size_t>(col[k]);
      if (j < i) {
        lcol.push_back(col[k]);
        lval.push_back(lu[k]);
      } else {
        if (j == i) {
          lcol.push_back(col[k]);
          lval.push_back(1.0);
        }
        ucol.push_back(col[k]);
        uval.push_back(lu[k]);
      }
    }
    lptr[i + 1] = static_cast<std::int64_t>(lcol.size());
    uptr[i + 1] = static_cast<std::int64_t>(ucol.size());
  }
  return {CsrMatrix(n, n, std::move(lptr), std::move(lcol), std::move(lval)),
          CsrMatrix(n, n, std::move(uptr), std::move(ucol), std::move(uval))};
}

Vector IluFactors::solve(std::span<const double> r) const {
  const std::size_t n = lower.nrows();
  if (r.size() != n) throw DimensionError("ilu solve: dimension mismatch");
  Vector z(r.begin(), r.end());
  {
    const auto ptr = lower.row_ptr();
    const auto col = lower.col_idx();
    const auto val = lower.values();
    for (std::size_t i = 0; i < n; ++i) {
      double s = z[i];
      for (auto k = ptr[i]; k < ptr[i + 1]; ++k) {
        const auto j = static_cast<std::size_t>(col[k]);
        if (j < i) s -= val[k] * z[j];
      }
      z[i] = s;
    }
  }
  {
    const auto ptr = upper.row_ptr();
    const auto col = upper.col_idx();
    const auto val = upper.values();
    for (std::size_t ii = n; ii-- > 0;) {
      double s = z[ii];
      double d = 0.0;
      for (auto k = ptr[ii]; k < ptr[ii + 1]; ++k) {
        const auto j = static_cast<std::size_t>(col[k]);
        if (j == ii) d = val[k];
        else s -= val[k] * z[j];
      }
      z[ii] = s / d;
    }
  }
  return z;
}

// ---------------------------------------------------------------------------
// Preconditioner

Preconditioner::Preconditioner(const CsrMatrix& a, PreconditionerKind kind) : kind_(kind) {
  switch (kind_) {
    case PreconditionerKind::None: break;
    case PreconditionerKind::PointJacobi: {
      inv_diag_ = a.diagonal();
      for (std::size_t i = 0; i < inv_diag_.size(); ++i) {
        if (inv_diag_[i] == 0.0) throw BreakdownError("jacobi preconditioner: zero diagonal in row " + std::to_string(i));
        inv_diag_[i] = 1.0 / inv_diag_[i];
      }
      break;
    }
    case PreconditionerKind::ILU0: ilu_ = ilu0(a); break;
  }
}

void Preconditioner::apply(std::span<const double> r, std::span<double> z) const {
  if (r.size() != z.size()) throw DimensionError("preconditioner: dimension mismatch");
  switch (kind_) {
    case PreconditionerKind::None: std::copy(r.begin(), r.end(), z.begin()); break;
    case PreconditionerKind::PointJacobi:
      for (std::size_t i = 0; i < r.size(); ++i) z[i] = inv_diag_[i] * r[i];
      break;
    case PreconditionerKind::ILU0: {
      const Vector tmp = ilu_->solve(r);
      std::copy(tmp.begin(), tmp.end(), z.begin());
      break;
    }
  }
}

Vector Preconditioner::apply(std::span<const double> r) const {
  Vector z(r.size());
  apply(r, z);
  return z;
}

// ---------------------------------------------------------------------------

Vector jacobi_step(const CsrMatrix& a, std::span<const double> b, std::span<const double> x) {
  if (a.nrows() != a.ncols() || b.size() != a.nrows() || x.size() != a.ncols())
    throw DimensionError("jacobi_step: dimension mismatch");
  const auto ptr = a.row_ptr();
  const auto col = a.col_idx();
  const auto val = a.values();
  Vector out(x.size());
  for (std::size_t i = 0; i < a.nrows(); ++i) {
    double off = 0.0;
    double d = 0.0;
    for (auto k = ptr[i]; k < ptr[i + 1]; ++k) {
      const auto j = static_cast<std::size_t>(col[k]);
      if (j == i) d = val[k];
      else off += val[k] * x[j];
    }
    if (d == 0.0) throw BreakdownError("jacobi_step: zero diagonal in row " + std::to_string(i));
    out[i] = (b[i] - off) / d;
  }
  return out;
}

double estimate_spectral_radius(std::span<const double> history) {
  if (history.size() < 2) throw Error("spectral radius: history needs at least two entries");
  const double first = history.front();
  const double last = history.back();
  if (!(first > 0.0) || !(last > 0.0)) throw Error("spectral radius: history entries must be positive");
  const auto steps = static_cast<double>(history.size() - 1);
  const double r = std::pow(last / first, 1.0 / steps);
  if (!(r < 1.0)) throw Error("spectral radius: history is not contracting (estimate >= 1)");
  return std::clamp(r, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

// ---------------------------------------------------------------------------
// IterativeSolver

struct IterativeSolver::Impl {
  const CsrMatrix* a;
  Vector b;
  SolverConfig cfg;
  Preconditioner precond;
  Vector inv_diag;
  double ref_norm = 0.0;

  std::size_t iter = 0;
  Vector x;
  std::vector<double> history;
  bool done = false;

  // CG
  Vector r, z, p, q;
  double rho = 0.0;
  std::size_t since_restart = 0;

  // GMRES(m): Arnoldi basis, rotated Hessenberg columns, Givens rotations.
  Vector x0;
  std::vector<Vector> basis;
  std::vector<Vector> hess;
  std::vector<double> cs, sn, g;
  std::size_t inner = 0;
  bool cycle_open = false;

  Impl(const CsrMatrix& matrix, Vector rhs, SolverConfig config)
      : a(&matrix), b(std::move(rhs)), cfg(config),
        precond(matrix, config.method == Method::Jacobi ? PreconditionerKind::None : config.preconditioner) {
    cfg.validate();
    if (a->nrows() != a->ncols()) throw DimensionError("solver: matrix must be square");
    if (b.size() != a->nrows()) throw DimensionError("solver: rhs length does not match matrix");
    require_finite(b, "rhs");
    if (cfg.method == Method::Jacobi) {
      inv_diag = a->diagonal();
      for (std::size_t i = 0; i < inv_diag.size(); ++i) {
        if (inv_diag[i] == 0.0) throw BreakdownError("jacobi: zero diagonal in row " + std::to_string(i));
        inv_diag[i] = 1.0 / inv_diag[i];
      }
      ref_norm = norm2(b);
    } else {
      ref_norm = norm2(precond.apply(b));
    }
    const Vector zero(b.size(), 0.0);
    rebuild(zero, 0);
  }

  std::size_t n() const { return b.size(); }

  double relative() const {
    if (ref_norm == 0.0) return 0.0;
    return history.back() / ref_norm;
  }

  void check_converged() { done = relative() <= cfg.rtol; }

  void rebuild(std::span<const double> guess, std::size_t iteration) {
    if (guess.size() != n()) throw DimensionError("restart: x length does not match matrix");
    x.assign(guess.begin(), guess.end());
    iter = iteration;
    if (history.size() > iter) history.resize(iter);
    while (history.size() < iter) history.push_back(std::numeric_limits<double>::quiet_NaN());
    r = residual(*a, x, b);
    switch (cfg.method) {
      case Method::Jacobi:
        history.push_back(norm2(r));
        break;
      case Method::CG:
      case Method::RestartedCG:
        z = precond.apply(r);
        p = z;
        rho = dot(r, z);
        q.assign(n(), 0.0);
        history.push_back(norm2(z));
        since_restart = 0;
        break;
      case Method::GMRES:
        z = precond.apply(r);
        open_cycle(z);
        history.push_back(g[0]);
        break;
    }
    check_converged();
  }

  void open_cycle(const Vector& prec_residual) {
    x0 = x;
    const double beta = norm2(prec_residual);
    basis.clear();
    hess.clear();
    cs.clear();
    sn.clear();
    g.assign(1, beta);
    inner = 0;
    cycle_open = beta > 0.0;
    if (cycle_open) {
      Vector v(prec_residual);
      for (double& e : v) e /= beta;
      basis.push_back(std::move(v));
    }
  }

  // y solving the leading inner x inner upper-triangular system.
  Vector gmres_correction() const {
    const std::size_t k = inner;
    Vector y(k, 0.0);
    for (std::size_t ii = k; ii-- > 0;) {
      double s = g[ii];
      for (std::size_t jj = ii + 1; jj < k; ++jj) s -= hess[jj][ii] * y[jj];
      y[ii] = s / hess[ii][ii];
    }
    Vector out = x0;
    for (std::size_t jj = 0; jj < k; ++jj) axpy_inplace(y[jj], basis[jj], out);
    return out;
  }

  void step_jacobi() {
    for (std::size_t i = 0; i < n(); ++i) x[i] += inv_diag[i] * r[i];
    r = residual(*a, x, b);
    ++iter;
    history.push_back(norm2(r));
  }

  void step_cg() {
    spmv_into(*a, p, q);
    const double pq = dot(p, q);
    if (!(pq > 0.0)) throw BreakdownError("cg: non-positive curvature p^T A p; matrix is not SPD");
    const double alpha = rho / pq;
    axpy_inplace(alpha, p, x);
    axpy_inplace(-alpha, q, r);
    precond.apply(r, z);
    const double rho_next = dot(r, z);
    const double beta = rho_next / rho;
    for (std::size_t i = 0; i < n(); ++i) p[i] = z[i] + beta * p[i];
    rho = rho_next;
    ++iter;
    ++since_restart;
    history.push_back(norm2(z));
    if (cfg.method == Method::RestartedCG && cfg.cg_restart > 0 && since_restart >= cfg.cg_restart &&
        relative() > cfg.rtol) {
      rebuild(Vector(x), iter);
    }
  }

  void close_cycle() {
    x = gmres_correction();
    r = residual(*a, x, b);
    z = precond.apply(r);
    const double true_norm = norm2(z);
    history.back() = true_norm;
    open_cycle(z);
  }

  void step_gmres() {
    if (!cycle_open) {
      // exact solution reached; nothing left to reduce
      ++iter;
      history.push_back(g[0]);
      return;
    }
    const std::size_t j = inner;
    Vector w = precond.apply(spmv(*a, basis[j]));
    Vector h(j + 2, 0.0);
    for (std::size_t i = 0; i <= j; ++i) {
      h[i] = dot(w, basis[i]);
      axpy_inplace(-h[i], basis[i], w);
    }
    h[j + 1] = norm2(w);
    const double column_scale = norm2(h);
    for (std::size_t i = 0; i < j; ++i) {
      const double t = cs[i] * h[i] + sn[i] * h[i + 1];
      h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
      h[i] = t;
    }
    const bool lucky = h[j + 1] <= std::numeric_limits<double>::epsilon() * column_scale;
    if (!lucky) {
      for (double& e : w) e /= h[j + 1];
      basis.push_back(std::move(w));
    }
    const double denom = std::hypot(h[j], h[j + 1]);
    const double c = h[j] / denom;
    const double s = h[j + 1] / denom;
    h[j] = denom;
    h[j + 1] = 0.0;
    cs.push_back(c);
    sn.push_back(s);
    g.push_back(-s * g[j]);
    g[j] *= c;
    hess.push_back(std::move(h));
    ++inner;
    ++iter;
    history.push_back(std::abs(g[j + 1]));
    if (lucky || inner >= cfg.gmres_restart || relative() <= cfg.rtol) close_cycle();
  }

  void step() {
    if (done) return;
    switch (cfg.method) {
      case Method::Jacobi: step_jacobi(); break;
      case Method::CG:
      case Method::RestartedCG: step_cg(); break;
      case Method::GMRES: step_gmres(); break;
    }
    check_converged();
  }

  Vector current() const {
    if (cfg.method == Method::GMRES && cycle_open && inner > 0) return gmres_correction();
    return x;
  }
};

IterativeSolver::IterativeSolver(const CsrMatrix& a, Vector b, SolverConfig config)
    : impl_(std::make_unique<Impl>(a, std::move(b), config)) {}
IterativeSolver::~IterativeSolver() = default;
IterativeSolver::IterativeSolver(IterativeSolver&&) noexcept = default;
IterativeSolver& IterativeSolver::operator=(IterativeSolver&&) noexcept = default;

const SolverConfig& IterativeSolver::config() const noexcept { return impl_->cfg; }
const CsrMatrix& IterativeSolver::matrix() const noexcept { return *impl_->a; }
std::span<const double> IterativeSolver::rhs() const noexcept { return impl_->b; }
void IterativeSolver::step() { impl_->step(); }
bool IterativeSolver::converged() const { return impl_->done; }
std::size_t IterativeSolver::iteration() const { return impl_->iter; }
double IterativeSolver::relative_residual() const { return impl_->relative(); }
double IterativeSolver::reference_norm() const { return impl_->ref_norm; }
const std::vector<double>& IterativeSolver::residual_history() const { return impl_->history; }
Vector IterativeSolver::current_x() const { return impl_->current(); }

SolverState IterativeSolver::state() const {
  SolverState s;
  s.iteration = impl_->iter;
  s.x = impl_->current();
  if (impl_->cfg.method == Method::CG) {
    s.p = impl_->p;
    s.rho = impl_->rho;
  }
  s.residual_history = impl_->history;
  return s;
}

void IterativeSolver::restart_from(std::span<const double> x, std::size_t iteration) {
  impl_->rebuild(x, iteration);
}

void IterativeSolver::restore(const SolverState& state) {
  auto& m = *impl_;
  if (!state.residual_history.empty()) m.history = state.residual_history;
  if (m.cfg.method != Method::CG || state.p.empty()) {
    m.rebuild(state.x, state.iteration);
    return;
  }
  if (state.x.size() != m.n() || state.p.size() != m.n())
    throw DimensionError("restore: state vector length does not match matrix");
  m.x = state.x;
  m.iter = state.iteration;
  if (m.history.size() > m.iter) m.history.resize(m.iter);
  while (m.history.size() < m.iter) m.history.push_back(std::numeric_limits<double>::quiet_NaN());
  m.r = residual(*m.a, m.x, m.b);
  m.z = m.precond.apply(m.r);
  m.p = state.p;
  m.rho = state.rho;
  m.q.assign(m.n(), 0.0);
  m.history.push_back(norm2(m.z));
  m.check_converged();
}

SolveOutcome solve(const CsrMatrix& a, std::span<const double> b, const SolverConfig& config,
                   const SolveHooks& hooks) {
  IterativeSolver solver(a, Vector(b.begin(), b.end()), config);
  if (hooks.on_restore) {
    if (auto st = hooks.on_restore()) solver.restore(*st);
  }
  while (!solver.converged() && solver.iteration() < config.max_iters) {
    solver.step();
    const std::size_t i = solver.iteration();
    if (hooks.on_iteration) hooks.on_iteration(i, solver);
    if (hooks.checkpoint_interval > 0 && hooks.checkpoint_due && i % hooks.checkpoint_interval == 0 &&
        !solver.converged()) {
      hooks.checkpoint_due(i, solver);
    }
  }
  SolveOutcome out;
  out.converged = solver.converged();
  out.iterations = solver.iteration();
  out.final_relative_residual = solver.relative_residual();
  out.x = solver.current_x();
  out.residual_history = solver.residual_history();
  return out;
}

SolverState restart_from(const SolverState& state, const CsrMatrix& a, std::span<const double> b,
                         const SolverConfig& config) {
  IterativeSolver solver(a, Vector(b.begin(), b.end()), config);
  solver.restart_from(state.x, state.iteration);
  return solver.state();
}

}  // namespace lossyckpt
