#include "roughbsde/rough_bsde.hpp"

#include <algorithm>
#include <cmath>

#include "roughbsde/errors.hpp"
#include "roughbsde/rsi.hpp"

namespace roughbsde {

namespace {

// Rows of G Y + H at every (sample, point).
EnsField apply_coefficient(const LinearRoughBsdeProblem& prob, const EnsField& Y) {
  const std::size_t ns = Y.n_samples, np = Y.n_points;
  const int n = prob.n, e = prob.e;
  EnsField V(ns, np, n * e);
  const bool det = prob.G.G.n_samples == 1;
  for (std::size_t s = 0; s < ns; ++s) {
    const std::size_t gs = det ? 0 : s;
    for (std::size_t i = 0; i < np; ++i)
      for (int ij = 0; ij < n * e; ++ij) {
        double acc = prob.H.Y.v(s, i, ij);
        for (int k = 0; k < n; ++k) acc += prob.G.G.v(gs, i, ij * n + k) * Y.v(s, i, k);
        V.v(s, i, ij) = acc;
      }
  }
  return V;
}

// (Y, GY+H) wrapped for norms and integration, with exponents fixed at (p, p).
StochasticControlledPath wrap_state(const LinearRoughBsdeProblem& prob, const EnsField& Y, const EnsField& Vy) {
  StochasticControlledPath scp;
  scp.nv = prob.n;
  scp.e = prob.e;
  const double p = prob.drive->at(0).p();
  scp.q = p;
  scp.qp = p;
  scp.m = 2.0;
  scp.drive = prob.drive;
  scp.Y = Y;
  scp.Yp = Vy;
  return scp;
}

// Integrand (V, V') with V = GY+H and V' = G V + G' Y + H'.
StochasticControlledPath drift_integrand(const LinearRoughBsdeProblem& prob, const Model& model, const EnsField& Y,
                                         const EnsField& Vy) {
  LeibnizProduct prod = leibniz_product(prob.G, wrap_state(prob, Y, Vy), model);
  StochasticControlledPath V = prod.scp;
  for (std::size_t k = 0; k < V.Y.a.size(); ++k) V.Y.a[k] += prob.H.Y.a[k];
  for (std::size_t k = 0; k < V.Yp.a.size(); ++k) V.Yp.a[k] += prob.H.Yp.a[k];
  return V;
}

EnsField drift_cumsum(const LinearRoughBsdeProblem& prob, const Model& model, const PicardState& cur, std::size_t i0,
                      std::size_t i1) {
  const std::size_t ns = model.n_samples(), np = model.grid().n_points();
  const int n = prob.n;
  EnsField D(ns, np, n);
  std::vector<double> fv(n);
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t i = i0; i < i1; ++i) {
      prob.driver.f(model.grid().t(i), cur.Y.at(s, i), cur.Z.at(s, i), s, fv.data());
      const double dt = model.grid().dt(i);
      for (int j = 0; j < n; ++j) D.v(s, i + 1, j) = D.v(s, i, j) + fv[j] * dt;
    }
    for (std::size_t i = i1 + 1; i < np; ++i)
      for (int j = 0; j < n; ++j) D.v(s, i, j) = D.v(s, i1, j);
  }
  return D;
}

double state_distance(const LinearRoughBsdeProblem& prob, const Model& model, const PicardState& a,
                      const PicardState& b, double K, std::size_t i0, std::size_t i1, std::size_t cap) {
  return controlled_distance(wrap_state(prob, a.Y, apply_coefficient(prob, a.Y)),
                             wrap_state(prob, b.Y, apply_coefficient(prob, b.Y)), model, K, i0, i1, cap)
      .total;
}

PicardState start_state(const LinearRoughBsdeProblem& prob, const Model& model, std::size_t i0, std::size_t i1,
                        const std::vector<double>& xi_w, bool terminal_extension) {
  const std::size_t ns = model.n_samples(), np = model.grid().n_points();
  const int n = prob.n, e = prob.e;
  PicardState st;
  st.Y = EnsField(ns, np, n);
  st.Z = EnsField(ns, np, n * model.d());
  for (std::size_t s = 0; s < ns; ++s)
    for (int j = 0; j < n; ++j) st.Y.v(s, i1, j) = xi_w[s * n + j];
  if (!terminal_extension) return st;
  // t -> xi - (G xi + H_T) deltaX_{t, i1}, the proof's germ-consistent start.
  const bool det = prob.G.G.n_samples == 1;
  std::vector<double> dx(e), v(n * e);
  for (std::size_t s = 0; s < ns; ++s) {
    const std::size_t gs = det ? 0 : s;
    for (int ij = 0; ij < n * e; ++ij) {
      double acc = prob.H.Y.v(s, i1, ij);
      for (int k = 0; k < n; ++k) acc += prob.G.G.v(gs, i1, ij * n + k) * xi_w[s * n + k];
      v[ij] = acc;
    }
    const RoughPath& rp = prob.drive->at(s);
    for (std::size_t i = i0; i < i1; ++i) {
      rp.delta(i, i1, dx.data());
      for (int j = 0; j < n; ++j) {
        double acc = xi_w[s * n + j];
        for (int c = 0; c < e; ++c) acc -= v[j * e + c] * dx[c];
        st.Y.v(s, i, j) = acc;
      }
    }
  }
  return st;
}

struct WindowAttempt {
  PicardState state;
  WindowInfo info;
  bool aborted = false;  // observed non-contraction; caller may bisect
};

WindowAttempt solve_window(const LinearRoughBsdeProblem& prob, const Model& model, std::size_t i0, std::size_t i1,
                           const std::vector<double>& xi_w, double K, double eps, const RoughBsdeOptions& opts) {
  WindowAttempt at;
  at.info.i0 = i0;
  at.info.i1 = i1;
  at.info.K = K;
  at.info.eps = eps;
  const std::size_t drives = prob.drive->shared() ? 1 : model.n_samples();
  for (std::size_t s = 0; s < drives; ++s)
    at.info.rough_norm = std::max(at.info.rough_norm, rough_metrics(prob.drive->at(s), i0, i1, opts.norm_cap).total);

  PicardState cur = start_state(prob, model, i0, i1, xi_w, opts.start_terminal_extension);
  double prev_dist = -1.0;
  at.info.converged = false;
  for (int k = 0; k < opts.max_iter; ++k) {
    PicardState nxt = picard_step_phi(prob, model, cur, i0, i1, xi_w);
    const double dist = state_distance(prob, model, cur, nxt, K, i0, i1, opts.norm_cap);
    cur = std::move(nxt);
    at.info.iterations = k + 1;
    if (prev_dist > 0.0) at.info.ratios.push_back(dist / prev_dist);
    prev_dist = dist;
    if (dist < opts.tol) {
      at.info.converged = true;
      break;
    }
    if (at.info.ratios.size() >= 2 && at.info.ratios.back() > opts.bisect_ratio) {
      at.aborted = true;
      return at;
    }
  }
  at.state = std::move(cur);
  return at;
}

}  // namespace

StochasticControlledPath zero_forcing(const Model& model, int n, int e, std::shared_ptr<const RoughDrive> drive) {
  StochasticControlledPath scp;
  scp.nv = n * e;
  scp.e = e;
  const double p = drive->at(0).p();
  scp.q = p;
  scp.qp = p;
  scp.m = 2.0;
  scp.drive = std::move(drive);
  scp.Y = EnsField(model.n_samples(), model.grid().n_points(), n * e);
  scp.Yp = EnsField(model.n_samples(), model.grid().n_points(), n * e * e);
  return scp;
}

EssBoundedControlledPath constant_coefficient(const Model& model, int n, int e, const std::vector<double>& mat,
                                              std::shared_ptr<const RoughDrive> drive) {
  if (mat.size() != static_cast<std::size_t>(n) * e * n)
    fail(ErrCode::invalid_argument, "coefficient matrix size must be n*e*n");
  EssBoundedControlledPath g;
  g.n = n;
  g.e = e;
  g.p = drive->at(0).p();
  g.drive = std::move(drive);
  g.G = EnsField(1, model.grid().n_points(), n * e * n);
  g.Gp = EnsField(1, model.grid().n_points(), n * e * n * e);
  for (std::size_t i = 0; i < model.grid().n_points(); ++i)
    for (std::size_t k = 0; k < mat.size(); ++k) g.G.v(0, i, static_cast<int>(k)) = mat[k];
  return g;
}

ProblemAudit audit_problem(const LinearRoughBsdeProblem& prob, const Model& model) {
  ProblemAudit rep;
  const std::size_t ns = model.n_samples(), np = model.grid().n_points();
  const int n = prob.n;
  std::vector<double> mags(ns);
  for (std::size_t s = 0; s < ns; ++s) mags[s] = vec_norm(prob.xi.data() + s * n, n);
  rep.xi_l2 = lm_reduce(mags, 2.0);
  const int nd = n * model.d();
  std::vector<double> y0(n, 0.0), z0(nd, 0.0), fv(n);
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t s = 0; s < ns; ++s) {
      prob.driver.f(model.grid().t(i), y0.data(), z0.data(), s, fv.data());
      mags[s] = vec_norm(fv.data(), n);
    }
    rep.f00_l2 = std::max(rep.f00_l2, lm_reduce(mags, 2.0));
  }
  // Difference quotients on random probes around the origin.
  std::uint64_t seed = 99;
  auto uni = [&seed]() {
    seed = splitmix64(seed);
    return 2.0 * (static_cast<double>(seed >> 11) * 0x1.0p-53) - 1.0;
  };
  std::vector<double> ya(n), yb(n), za(nd), zb(nd), fa(n), fb(n);
  for (int pb = 0; pb < 32; ++pb) {
    const double t = 0.5 * (uni() + 1.0) * model.grid().T();
    for (int j = 0; j < n; ++j) {
      ya[j] = uni();
      yb[j] = uni();
    }
    for (int j = 0; j < nd; ++j) {
      za[j] = uni();
      zb[j] = uni();
    }
    prob.driver.f(t, ya.data(), za.data(), 0, fa.data());
    prob.driver.f(t, yb.data(), zb.data(), 0, fb.data());
    double dy = 0.0, dz = 0.0, df = 0.0;
    for (int j = 0; j < n; ++j) {
      dy += std::pow(ya[j] - yb[j], 2);
      df += std::pow(fa[j] - fb[j], 2);
    }
    for (int j = 0; j < nd; ++j) dz += std::pow(za[j] - zb[j], 2);
    const double den = std::sqrt(dy) + std::sqrt(dz);
    if (den > 1e-8) rep.lipschitz_spot = std::max(rep.lipschitz_spot, std::sqrt(df) / den);
  }
  rep.g_norm = ess_norm(prob.G).total;
  rep.h_norm = controlled_norm(prob.H, model, 1.0).total;
  rep.ok = std::isfinite(rep.xi_l2) && std::isfinite(rep.f00_l2) && std::isfinite(rep.g_norm) &&
           std::isfinite(rep.h_norm);
  return rep;
}

PicardState picard_step_phi(const LinearRoughBsdeProblem& prob, const Model& model, const PicardState& cur,
                            std::size_t i0, std::size_t i1, const std::vector<double>& xi_w) {
  const std::size_t ns = model.n_samples(), np = model.grid().n_points();
  const int n = prob.n;
  if (xi_w.size() != ns * static_cast<std::size_t>(n))
    fail(ErrCode::invalid_argument, "terminal condition shape must match the model");

  EnsField Vy = apply_coefficient(prob, cur.Y);
  StochasticControlledPath V = drift_integrand(prob, model, cur.Y, Vy);
  RsiOptions ro;
  ro.sew.i0 = i0;
  ro.sew.i1 = i1;
  RoughStochasticIntegral I = rough_stochastic_integrate(V, n, model, ro);
  EnsField D = drift_cumsum(prob, model, cur, i0, i1);

  std::vector<double> total(ns * n), cond(ns * n);
  for (std::size_t s = 0; s < ns; ++s)
    for (int j = 0; j < n; ++j)
      total[s * n + j] = xi_w[s * n + j] + D.v(s, i1, j) + I.values.v(s, i1, j);

  EnsField M(ns, np, n);
  for (std::size_t i = i0; i <= i1; ++i) {
    model.condexp(total.data(), n, i, cond.data());
    for (std::size_t s = 0; s < ns; ++s)
      for (int j = 0; j < n; ++j) M.v(s, i, j) = cond[s * n + j];
  }
  // Flat extension keeps every off-window cell increment of M at zero.
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t i = 0; i < i0; ++i)
      for (int j = 0; j < n; ++j) M.v(s, i, j) = M.v(s, i0, j);
    for (std::size_t i = i1 + 1; i < np; ++i)
      for (int j = 0; j < n; ++j) M.v(s, i, j) = M.v(s, i1, j);
  }

  PicardState nxt;
  nxt.Z = martingale_representation(M, model);
  nxt.Y = EnsField(ns, np, n);
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t i = i0; i < i1; ++i)
      for (int j = 0; j < n; ++j) nxt.Y.v(s, i, j) = M.v(s, i, j) - D.v(s, i, j) - I.values.v(s, i, j);
    for (int j = 0; j < n; ++j) nxt.Y.v(s, i1, j) = xi_w[s * n + j];
  }
  return nxt;
}

PicardState picard_step_phi(const LinearRoughBsdeProblem& prob, const Model& model, const PicardState& cur) {
  return picard_step_phi(prob, model, cur, 0, model.grid().n_points() - 1, prob.xi);
}

RoughBsdeSolution solve_linear_rough_bsde(const LinearRoughBsdeProblem& prob, const Model& model,
                                          const RoughBsdeOptions& opts) {
  if (!prob.drive) fail(ErrCode::config, "controlled path needs a drive");
  if (!prob.drive->at(0).grid().same_as(model.grid())) fail(ErrCode::config, "grid mismatch");
  ProblemAudit audit = audit_problem(prob, model);
  if (!audit.ok) fail(ErrCode::audit, "problem assumptions failed");

  const std::size_t ns = model.n_samples(), np = model.grid().n_points();
  const int n = prob.n;
  const double K = 4.0 * (1.0 + opts.C_knob) * (1.0 + ess_norm(prob.G).total);
  const double eps = 1.0 / (K * K * K * K);

  RoughBsdeSolution sol;
  sol.K = K;
  sol.eps = eps;
  sol.Y = EnsField(ns, np, n);
  sol.Z = EnsField(ns, np, n * model.d());

  const std::size_t drives = prob.drive->shared() ? 1 : ns;
  auto window_ok = [&](std::size_t a, std::size_t b) {
    if (model.grid().t(b) - model.grid().t(a) > eps) return false;
    for (std::size_t s = 0; s < drives; ++s)
      if (rough_metrics(prob.drive->at(s), a, b, opts.norm_cap).total > eps) return false;
    return true;
  };

  std::vector<double> xi_w = prob.xi;
  std::size_t i1 = np - 1;
  while (i1 > 0) {
    std::size_t w0;
    switch (opts.window_mode) {
      case WindowMode::whole:
        w0 = 0;
        break;
      case WindowMode::fixed_cells:
        w0 = i1 > opts.fixed_cells ? i1 - std::max<std::size_t>(1, opts.fixed_cells) : 0;
        break;
      default:
        w0 = i1 - 1;
        while (w0 > 0 && window_ok(w0 - 1, i1)) --w0;
        break;
    }
    WindowAttempt at = solve_window(prob, model, w0, i1, xi_w, K, eps, opts);
    while (at.aborted) {
      if (i1 - w0 <= 1) fail(ErrCode::numeric, "rough path too rough for grid");
      w0 = i1 - std::max<std::size_t>(1, (i1 - w0) / 2);
      at = solve_window(prob, model, w0, i1, xi_w, K, eps, opts);
    }
    sol.windows.push_back(at.info);
    sol.converged = sol.converged && at.info.converged;
    for (std::size_t s = 0; s < ns; ++s) {
      for (std::size_t i = w0; i <= i1; ++i)
        for (int j = 0; j < n; ++j) sol.Y.v(s, i, j) = at.state.Y.v(s, i, j);
      for (std::size_t i = w0; i < i1; ++i)
        for (int k = 0; k < n * model.d(); ++k) sol.Z.v(s, i, k) = at.state.Z.v(s, i, k);
    }
    for (std::size_t s = 0; s < ns; ++s)
      for (int j = 0; j < n; ++j) xi_w[s * n + j] = at.state.Y.v(s, w0, j);
    i1 = w0;
  }

  EnsField Vy = apply_coefficient(prob, sol.Y);
  sol.controlled = wrap_state(prob, sol.Y, Vy);

  // Backward identity defect, accumulated from the terminal time.
  StochasticControlledPath V = drift_integrand(prob, model, sol.Y, Vy);
  RoughStochasticIntegral I = rough_stochastic_integrate(V, n, model);
  PicardState fin{sol.Y, sol.Z};
  EnsField D = drift_cumsum(prob, model, fin, 0, np - 1);
  std::vector<double> mags(ns);
  EnsField defect(ns, np, n);
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t i = np - 1; i-- > 0;)
      for (int j = 0; j < n; ++j) {
        double acc = defect.v(s, i + 1, j) + (D.v(s, i + 1, j) - D.v(s, i, j)) +
                     (I.values.v(s, i + 1, j) - I.values.v(s, i, j));
        for (int c = 0; c < model.d(); ++c) acc -= sol.Z.v(s, i, j * model.d() + c) * model.increment(s, i, c);
        defect.v(s, i, j) = acc;
      }
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t s = 0; s < ns; ++s) {
      double sq = 0.0;
      for (int j = 0; j < n; ++j) {
        const double r = sol.Y.v(s, i, j) - (prob.xi[s * n + j] + defect.v(s, i, j));
        sq += r * r;
      }
      mags[s] = std::sqrt(sq);
    }
    sol.residual = std::max(sol.residual, lm_reduce(mags, 2.0));
  }
  return sol;
}

EnsField duality_oracle(double g, const std::vector<double>& xi, const RoughPath& X, const Model& model) {
  const std::size_t ns = model.n_samples(), np = model.grid().n_points();
  EnsField out(ns, np, 1);
  std::vector<double> cond(ns);
  const double xT = X.path().value(np - 1, 0);
  for (std::size_t i = 0; i < np; ++i) {
    model.condexp(xi.data(), 1, i, cond.data());
    const double factor = std::exp(g * (xT - X.path().value(i, 0)));
    for (std::size_t s = 0; s < ns; ++s) out.v(s, i, 0) = factor * cond[s];
  }
  return out;
}

std::vector<BoundednessRow> boundedness_audit(const std::vector<LinearRoughBsdeProblem>& family, const Model& model,
                                              const RoughBsdeOptions& opts) {
  std::vector<BoundednessRow> rows;
  for (const LinearRoughBsdeProblem& prob : family) {
    RoughBsdeSolution sol = solve_linear_rough_bsde(prob, model, opts);
    BoundednessRow row;
    row.controlled_norm_total = controlled_norm(sol.controlled, model, 1.0).total;
    double acc = 0.0;
    for (std::size_t s = 0; s < model.n_samples(); ++s)
      for (std::size_t i = 0; i + 1 < model.grid().n_points(); ++i) {
        const double zn = vec_norm(sol.Z.at(s, i), sol.Z.nv);
        acc += zn * zn * model.grid().dt(i);
      }
    row.z_l2 = std::sqrt(acc / static_cast<double>(model.n_samples()));
    row.combined = row.controlled_norm_total + row.z_l2;
    rows.push_back(row);
  }
  return rows;
}

std::vector<SolutionContinuityRow> rough_bsde_continuity_audit(const std::vector<LinearRoughBsdeProblem>& seq,
                                                               const LinearRoughBsdeProblem& ref, const Model& model,
                                                               double K, const RoughBsdeOptions& opts) {
  RoughBsdeSolution base = solve_linear_rough_bsde(ref, model, opts);
  const std::size_t ns = model.n_samples();
  const int n = ref.n;
  std::vector<SolutionContinuityRow> rows;
  for (const LinearRoughBsdeProblem& prob : seq) {
    SolutionContinuityRow row;
    std::vector<double> mags(ns);
    for (std::size_t s = 0; s < ns; ++s) {
      double sq = 0.0;
      for (int j = 0; j < n; ++j) sq += std::pow(prob.xi[s * n + j] - ref.xi[s * n + j], 2);
      mags[s] = std::sqrt(sq);
    }
    row.input_distance = lm_reduce(mags, 2.0) + controlled_distance(prob.H, ref.H, model, 1.0).total +
                         ess_distance(prob.G, ref.G, 0, model.grid().n_points() - 1, opts.norm_cap);
    if (prob.drive != ref.drive) {
      const std::size_t drives = (prob.drive->shared() && ref.drive->shared()) ? 1 : ns;
      double rho = 0.0;
      for (std::size_t s = 0; s < drives; ++s)
        rho = std::max(rho, rough_distance(prob.drive->at(s), ref.drive->at(s)));
      row.input_distance += rho;
    }
    RoughBsdeSolution sol = solve_linear_rough_bsde(prob, model, opts);
    double acc = 0.0;
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t i = 0; i + 1 < model.grid().n_points(); ++i) {
        double sq = 0.0;
        for (int k = 0; k < sol.Z.nv; ++k) sq += std::pow(sol.Z.v(s, i, k) - base.Z.v(s, i, k), 2);
        acc += sq * model.grid().dt(i);
      }
    row.solution_distance = controlled_distance(sol.controlled, base.controlled, model, K).total +
                            K * std::sqrt(acc / static_cast<double>(ns));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace roughbsde
