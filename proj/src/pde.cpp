#include "roughbsde/pde.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "roughbsde/errors.hpp"

namespace roughbsde {

namespace {

double eval_tx(const std::function<double(double, double)>& fn, double t, double x) { return fn ? fn(t, x) : 0.0; }
double eval_t(const std::function<double(double)>& fn, double t) { return fn ? fn(t) : 0.0; }

double uniform01(std::uint64_t& state) {
  state = splitmix64(state);
  return static_cast<double>(state >> 11) * 0x1.0p-53;
}

// Left breakpoint of the cell containing t; audits probe drivers off-grid, so the
// composed driver reads the walk as left-constant between grid points.
std::size_t floor_index(const TimeGrid& grid, double t) {
  const auto& pts = grid.points();
  const auto it = std::upper_bound(pts.begin(), pts.end(), t);
  if (it == pts.begin()) return 0;
  return std::min(static_cast<std::size_t>(it - pts.begin()) - 1, grid.n_points() - 1);
}

// Tridiagonal solve in place; rhs becomes the solution.
void thomas_solve(std::vector<double>& lo, std::vector<double>& di, std::vector<double>& up,
                  std::vector<double>& rhs) {
  const std::size_t n = di.size();
  for (std::size_t j = 1; j < n; ++j) {
    if (std::abs(di[j - 1]) < 1e-12) fail(ErrCode::numeric, "finite difference system is ill-conditioned");
    const double w = lo[j] / di[j - 1];
    di[j] -= w * up[j - 1];
    rhs[j] -= w * rhs[j - 1];
  }
  if (std::abs(di[n - 1]) < 1e-12) fail(ErrCode::numeric, "finite difference system is ill-conditioned");
  rhs[n - 1] /= di[n - 1];
  for (std::size_t j = n - 1; j-- > 0;) rhs[j] = (rhs[j] - up[j] * rhs[j + 1]) / di[j];
}

}  // namespace

MarkovianAudit audit_markovian(const MarkovianProblem& prob, double T, double x_lo, double x_hi, int probes) {
  if (!(x_hi > x_lo)) fail(ErrCode::invalid_argument, "audit needs a nondegenerate x range");
  MarkovianAudit rep;
  std::uint64_t st = 0x9e3779b97f4a7c15ull;
  auto note = [&rep](double v) {
    if (!std::isfinite(v)) rep.ok = false;
    return v;
  };
  for (int k = 0; k < probes; ++k) {
    const double t = T * uniform01(st);
    const double x1 = x_lo + (x_hi - x_lo) * uniform01(st);
    const double x2 = x_lo + (x_hi - x_lo) * uniform01(st);
    const double gap = std::abs(x1 - x2);
    if (prob.b) {
      const double b1 = note(prob.b(t, x1)), b2 = note(prob.b(t, x2));
      rep.b_sup = std::max(rep.b_sup, std::abs(b1));
      if (gap > 1e-9) rep.b_lip = std::max(rep.b_lip, std::abs(b1 - b2) / gap);
    }
    if (prob.sigma) {
      const double s1 = note(prob.sigma(t, x1)), s2 = note(prob.sigma(t, x2));
      rep.sigma_sup = std::max(rep.sigma_sup, std::abs(s1));
      if (gap > 1e-9) rep.sigma_lip = std::max(rep.sigma_lip, std::abs(s1 - s2) / gap);
    }
    if (prob.l) {
      const double l1 = note(prob.l(x1)), l2 = note(prob.l(x2));
      rep.l_sup = std::max(rep.l_sup, std::abs(l1));
      if (gap > 1e-9) rep.l_lip = std::max(rep.l_lip, std::abs(l1 - l2) / gap);
    }
    if (prob.f) {
      const double y1 = 2.0 * uniform01(st) - 1.0, y2 = 2.0 * uniform01(st) - 1.0;
      const double z1 = 2.0 * uniform01(st) - 1.0, z2 = 2.0 * uniform01(st) - 1.0;
      const double f11 = note(prob.f(t, x1, y1, z1));
      const double f21 = note(prob.f(t, x1, y2, z1));
      const double f12 = note(prob.f(t, x1, y1, z2));
      if (std::abs(y1 - y2) > 1e-9) rep.f_lip_y = std::max(rep.f_lip_y, std::abs(f11 - f21) / std::abs(y1 - y2));
      if (std::abs(z1 - z2) > 1e-9) rep.f_lip_z = std::max(rep.f_lip_z, std::abs(f11 - f12) / std::abs(z1 - z2));
    }
  }
  return rep;
}

EnsField simulate_forward_sde(const MarkovianProblem& prob, std::size_t start, double x, const Model& model) {
  const std::size_t ns = model.n_samples(), np = model.grid().n_points();
  if (start >= np) fail(ErrCode::invalid_argument, "start index beyond the grid");
  EnsField S(ns, np, 1);
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t i = 0; i <= start; ++i) S.v(s, i, 0) = x;
    for (std::size_t i = start; i + 1 < np; ++i) {
      const double t = model.grid().t(i), cur = S.v(s, i, 0);
      // The first Brownian component drives the scalar walk.
      S.v(s, i + 1, 0) = cur + eval_tx(prob.b, t, cur) * model.grid().dt(i) +
                         eval_tx(prob.sigma, t, cur) * model.increment(s, i, 0);
    }
  }
  return S;
}

namespace {

// Linear rough problem for the walk frozen at x before the start index.
LinearRoughBsdeProblem compose_subproblem(const MarkovianProblem& prob, std::shared_ptr<const RoughDrive> drive,
                                          const Model& model, const EssBoundedControlledPath& G, std::size_t start,
                                          double x) {
  const std::size_t ns = model.n_samples(), np = model.grid().n_points();
  LinearRoughBsdeProblem lp;
  lp.n = 1;
  lp.e = 1;
  lp.drive = drive;
  lp.G = G;
  lp.H = zero_forcing(model, 1, 1, drive);
  auto S = std::make_shared<EnsField>(simulate_forward_sde(prob, start, x, model));
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t i = 0; i < np; ++i) {
      const double t = model.grid().t(i);
      lp.H.Y.v(s, i, 0) = eval_tx(prob.h, t, S->v(s, i, 0)) + eval_t(prob.H, t);
      lp.H.Yp.v(s, i, 0) = eval_t(prob.Hp, t);
    }
  lp.xi.resize(ns);
  for (std::size_t s = 0; s < ns; ++s) lp.xi[s] = prob.l ? prob.l(S->v(s, np - 1, 0)) : 0.0;
  lp.driver.n = 1;
  lp.driver.d = model.d();
  lp.driver.lipschitz_L = prob.lipschitz_L;
  const TimeGrid grid = model.grid();
  auto fm = prob.f;
  lp.driver.f = [fm, S, grid](double t, const double* y, const double* z, std::size_t s, double* out) {
    if (!fm) {
      out[0] = 0.0;
      return;
    }
    out[0] = fm(t, S->v(s, floor_index(grid, t), 0), y[0], z[0]);
  };
  return lp;
}

}  // namespace

RoughPdeSolution feynman_kac_u(const MarkovianProblem& prob, std::shared_ptr<const RoughDrive> drive,
                               const Model& model, const std::vector<double>& xs, const RoughBsdeOptions& opts) {
  if (!drive || drive->paths.empty()) fail(ErrCode::invalid_argument, "controlled path needs a drive");
  if (xs.empty()) fail(ErrCode::invalid_argument, "value surface needs at least one x probe");
  if (!drive->at(0).grid().same_as(model.grid())) fail(ErrCode::invalid_argument, "grid mismatch");
  const std::size_t ns = model.n_samples(), np = model.grid().n_points(), nx = xs.size();

  EssBoundedControlledPath G;
  G.n = 1;
  G.e = 1;
  G.p = drive->at(0).p();
  G.drive = drive;
  G.G = EnsField(1, np, 1);
  G.Gp = EnsField(1, np, 1);
  for (std::size_t i = 0; i < np; ++i) {
    G.G.v(0, i, 0) = eval_t(prob.G, model.grid().t(i));
    G.Gp.v(0, i, 0) = eval_t(prob.Gp, model.grid().t(i));
  }

  RoughPdeSolution out;
  out.grid = model.grid();
  out.xs = xs;
  out.u.assign(np * nx, 0.0);
  out.provenance = PdeProvenance::stochastic;
  for (std::size_t xi = 0; xi < nx; ++xi)
    for (std::size_t ti = 0; ti < np; ++ti) {
      LinearRoughBsdeProblem lp = compose_subproblem(prob, drive, model, G, ti, xs[xi]);
      try {
        RoughBsdeSolution sol = solve_linear_rough_bsde(lp, model, opts);
        // Frozen start makes the root row constant across tree samples; the mean is
        // the right estimator on regression backends.
        double acc = 0.0;
        for (std::size_t s = 0; s < ns; ++s) acc += sol.Y.v(s, ti, 0);
        out.u[ti * nx + xi] = acc / static_cast<double>(ns);
      } catch (const RbError& e) {
        char buf[192];
        std::snprintf(buf, sizeof buf, "%s at (t=%g, x=%g)", e.what(), model.grid().t(ti), xs[xi]);
        fail(e.code(), buf);
      }
    }
  return out;
}

RoughPdeSolution fd_pde_oracle(const MarkovianProblem& prob, const SampledPath& x, const FdPdeOptions& opts) {
  if (x.e != 1) fail(ErrCode::invalid_argument, "finite difference oracle needs a scalar drive");
  if (!(opts.x_hi > opts.x_lo) || opts.dx <= 0.0 || opts.dt_target <= 0.0)
    fail(ErrCode::invalid_argument, "malformed finite difference grid");
  const std::size_t nx = static_cast<std::size_t>(std::lround((opts.x_hi - opts.x_lo) / opts.dx)) + 1;
  if (nx < 3) fail(ErrCode::invalid_argument, "malformed finite difference grid");
  const TimeGrid& tg = x.grid;
  const std::size_t np = tg.n_points();

  RoughPdeSolution out;
  out.grid = tg;
  out.xs.resize(nx);
  for (std::size_t j = 0; j < nx; ++j) out.xs[j] = opts.x_lo + static_cast<double>(j) * opts.dx;
  out.u.assign(np * nx, 0.0);
  out.provenance = PdeProvenance::finite_difference;

  std::vector<double> v(nx);
  for (std::size_t j = 0; j < nx; ++j) v[j] = prob.l ? prob.l(out.xs[j]) : 0.0;
  std::copy(v.begin(), v.end(), out.u.begin() + (np - 1) * nx);

  const double dx = opts.dx, dx2 = dx * dx;
  // Spatial operator plus rough-drift multiplier at one time level.
  auto apply_op = [&](double t, double xdot, const std::vector<double>& w, std::vector<double>& res) {
    res[0] = res[nx - 1] = 0.0;
    for (std::size_t j = 1; j + 1 < nx; ++j) {
      const double xj = out.xs[j];
      const double sig = eval_tx(prob.sigma, t, xj);
      res[j] = 0.5 * sig * sig * (w[j + 1] - 2.0 * w[j] + w[j - 1]) / dx2 +
               eval_tx(prob.b, t, xj) * (w[j + 1] - w[j - 1]) / (2.0 * dx) + eval_t(prob.G, t) * xdot * w[j];
    }
  };
  auto source = [&](double t, double xdot, const std::vector<double>& w, std::vector<double>& res) {
    res[0] = res[nx - 1] = 0.0;
    for (std::size_t j = 1; j + 1 < nx; ++j) {
      const double xj = out.xs[j];
      res[j] = (eval_tx(prob.h, t, xj) + eval_t(prob.H, t)) * xdot;
      if (prob.f) {
        const double dv = eval_tx(prob.sigma, t, xj) * (w[j + 1] - w[j - 1]) / (2.0 * dx);
        res[j] += prob.f(t, xj, w[j], dv);
      }
    }
  };

  std::vector<double> av(nx), src_b(nx), src_a(nx), lo(nx), di(nx), up(nx), rhs(nx), vn(nx);
  const double bc_lo = v[0], bc_hi = v[nx - 1];
  for (std::size_t cell = np - 1; cell-- > 0;) {
    const double dtc = tg.dt(cell);
    const double xdot = (x.value(cell + 1, 0) - x.value(cell, 0)) / dtc;
    const std::size_t m = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(dtc / opts.dt_target)));
    const double h = dtc / static_cast<double>(m);
    for (std::size_t sub = m; sub-- > 0;) {
      const double t_a = tg.t(cell) + static_cast<double>(sub) * h, t_b = t_a + h;
      apply_op(t_b, xdot, v, av);
      source(t_b, xdot, v, src_b);
      source(t_a, xdot, v, src_a);  // lagged predictor for the driver term
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t j = 1; j + 1 < nx; ++j)
          rhs[j] = v[j] + 0.5 * h * (av[j] + src_b[j] + src_a[j]);
        rhs[0] = bc_lo;
        rhs[nx - 1] = bc_hi;
        lo[0] = up[0] = lo[nx - 1] = up[nx - 1] = 0.0;
        di[0] = di[nx - 1] = 1.0;
        for (std::size_t j = 1; j + 1 < nx; ++j) {
          const double xj = out.xs[j];
          const double sig = eval_tx(prob.sigma, t_a, xj);
          const double diff = 0.5 * sig * sig / dx2, adv = eval_tx(prob.b, t_a, xj) / (2.0 * dx);
          lo[j] = -0.5 * h * (diff - adv);
          di[j] = 1.0 - 0.5 * h * (-2.0 * diff + eval_t(prob.G, t_a) * xdot);
          up[j] = -0.5 * h * (diff + adv);
        }
        thomas_solve(lo, di, up, rhs);
        vn = rhs;
        if (pass == 0) source(t_a, xdot, vn, src_a);
      }
      v = vn;
    }
    std::copy(v.begin(), v.end(), out.u.begin() + cell * nx);
  }
  return out;
}

std::vector<PdeContinuityRow> continuity_in_x_audit(const MarkovianProblem& prob,
                                                    const std::vector<std::shared_ptr<const RoughDrive>>& seq,
                                                    std::shared_ptr<const RoughDrive> ref, const Model& model,
                                                    const std::vector<double>& xs, const RoughBsdeOptions& opts) {
  RoughPdeSolution base = feynman_kac_u(prob, ref, model, xs, opts);
  std::vector<PdeContinuityRow> rows;
  rows.reserve(seq.size());
  for (const auto& drive : seq) {
    PdeContinuityRow row;
    if (drive != ref) row.input_distance = rough_distance(drive->at(0), ref->at(0));
    RoughPdeSolution uk = feynman_kac_u(prob, drive, model, xs, opts);
    for (std::size_t k = 0; k < uk.u.size(); ++k)
      row.sup_distance = std::max(row.sup_distance, std::abs(uk.u[k] - base.u[k]));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace roughbsde
