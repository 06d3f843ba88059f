#include "roughbsde/bsde.hpp"

#include <algorithm>
#include <cmath>

#include "roughbsde/errors.hpp"

namespace roughbsde {

namespace {

double row_norm(const EnsField& f, std::size_t s, std::size_t i) {
  return vec_norm(f.at(s, i), f.nv);
}

double sup_field(const EnsField& f) {
  double out = 0.0;
  for (std::size_t s = 0; s < f.n_samples; ++s)
    for (std::size_t i = 0; i < f.n_points; ++i) out = std::max(out, row_norm(f, s, i));
  return out;
}

// sup over (sample, t_i) of sqrt(E_i sum_{k >= i} |Z_k|^2 dt_k).
double bmo_norm(const EnsField& Z, const Model& model) {
  const std::size_t ns = Z.n_samples, np = Z.n_points;
  const TimeGrid& g = model.grid();
  std::vector<double> tail(ns, 0.0), cond(ns);
  double out = 0.0;
  std::vector<std::vector<double>> tails(np, std::vector<double>(ns));
  for (std::size_t i = np; i-- > 0;) {
    if (i + 1 < np)
      for (std::size_t s = 0; s < ns; ++s) {
        const double zn = row_norm(Z, s, i);
        tail[s] += zn * zn * g.dt(i);
      }
    tails[i] = tail;
  }
  for (std::size_t i = 0; i < np; ++i) {
    model.condexp(tails[i].data(), 1, i, cond.data());
    for (std::size_t s = 0; s < ns; ++s) out = std::max(out, std::sqrt(std::max(0.0, cond[s])));
  }
  return out;
}

double l2_time_norm(const EnsField& Z, const TimeGrid& g) {
  double acc = 0.0;
  for (std::size_t s = 0; s < Z.n_samples; ++s)
    for (std::size_t i = 0; i + 1 < Z.n_points; ++i) {
      const double zn = row_norm(Z, s, i);
      acc += zn * zn * g.dt(i);
    }
  return std::sqrt(acc / static_cast<double>(Z.n_samples));
}

EnsField field_diff(const EnsField& a, const EnsField& b) {
  EnsField out = a;
  for (std::size_t k = 0; k < out.a.size(); ++k) out.a[k] -= b.a[k];
  return out;
}

double one_step_residual(const EnsField& Y, const EnsField& Z, const Driver& driver, const Model& model) {
  const std::size_t ns = model.n_samples(), np = model.grid().n_points();
  const int n = driver.n, d = driver.d;
  std::vector<double> fv(n), mags(ns);
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < np; ++i) {
    const double dt = model.grid().dt(i);
    for (std::size_t s = 0; s < ns; ++s) {
      driver.f(model.grid().t(i), Y.at(s, i), Z.at(s, i), s, fv.data());
      double sq = 0.0;
      for (int j = 0; j < n; ++j) {
        double r = Y.v(s, i, j) - Y.v(s, i + 1, j) - fv[j] * dt;
        for (int c = 0; c < d; ++c) r += Z.v(s, i, j * d + c) * model.increment(s, i, c);
        sq += r * r;
      }
      mags[s] = std::sqrt(sq);
    }
    worst = std::max(worst, lm_reduce(mags, 2.0));
  }
  return worst;
}

void fill_norms(BsdeSolution& sol, const Model& model) {
  sol.y_inf = sup_field(sol.Y);
  sol.z_bmo = bmo_norm(sol.Z, model);
  sol.z_l2 = l2_time_norm(sol.Z, model.grid());
}

}  // namespace

DriverBoundsReport audit_driver_bounds(const Driver& driver, double T, std::uint64_t seed, int probes) {
  DriverBoundsReport rep;
  if (!driver.has_bounds) return rep;
  const int n = driver.n, nd = driver.n * driver.d;
  std::vector<double> y(n), z(nd), fv(n), fp(n), fm(n);
  auto uni = [&seed]() {
    seed = splitmix64(seed);
    return 2.0 * (static_cast<double>(seed >> 11) * 0x1.0p-53) - 1.0;
  };
  const double h = 1e-5;
  for (int pb = 0; pb < probes; ++pb) {
    const double t = 0.5 * (uni() + 1.0) * T;
    for (double& v : y) v = uni();
    for (double& v : z) v = uni();
    driver.f(t, y.data(), z.data(), 0, fv.data());
    double jy2 = 0.0, jz2 = 0.0;
    for (int k = 0; k < n; ++k) {
      y[k] += h;
      driver.f(t, y.data(), z.data(), 0, fp.data());
      y[k] -= 2 * h;
      driver.f(t, y.data(), z.data(), 0, fm.data());
      y[k] += h;
      for (int j = 0; j < n; ++j) jy2 += std::pow((fp[j] - fm[j]) / (2 * h), 2);
    }
    for (int k = 0; k < nd; ++k) {
      z[k] += h;
      driver.f(t, y.data(), z.data(), 0, fp.data());
      z[k] -= 2 * h;
      driver.f(t, y.data(), z.data(), 0, fm.data());
      z[k] += h;
      for (int j = 0; j < n; ++j) jz2 += std::pow((fp[j] - fm[j]) / (2 * h), 2);
    }
    const double ny = vec_norm(y.data(), n), nz = vec_norm(z.data(), nd);
    const double lam = driver.lambda ? driver.lambda(t) : 0.0;
    const double mu = driver.mu ? driver.mu(t) : 0.0;
    const double L = driver.lipschitz_L;
    rep.worst_value_gap =
        std::max(rep.worst_value_gap, vec_norm(fv.data(), n) + std::sqrt(jy2) - (lam + L * (ny * ny + nz * nz)));
    rep.worst_zslope_gap = std::max(rep.worst_zslope_gap, std::sqrt(jz2) - (mu + L * (ny + nz)));
  }
  rep.ok = rep.worst_value_gap <= 1e-6 && rep.worst_zslope_gap <= 1e-6;
  return rep;
}

BsdeSolution solve_lipschitz_bsde(const std::vector<double>& xi, const Driver& driver, const Model& model) {
  const std::size_t ns = model.n_samples(), np = model.grid().n_points();
  const int n = driver.n, d = driver.d;
  if (d != model.d()) fail(ErrCode::config, "driver dimensions must match the model");
  if (xi.size() != ns * static_cast<std::size_t>(n))
    fail(ErrCode::invalid_argument, "terminal condition shape must match the model");
  if (!driver.f) fail(ErrCode::config, "driver function must be set");

  BsdeSolution sol;
  sol.Y = EnsField(ns, np, n);
  sol.Z = EnsField(ns, np, n * d);
  for (std::size_t s = 0; s < ns; ++s)
    for (int j = 0; j < n; ++j) sol.Y.v(s, np - 1, j) = xi[s * n + j];

  std::vector<double> next(ns * n), mean(ns * n), prod(ns * n * d), zrow(ns * n * d);
  std::vector<double> ycur(n), ynew(n), fv(n);
  int max_inner = 0;
  for (std::size_t i = np - 1; i-- > 0;) {
    const double dt = model.grid().dt(i);
    const double t = model.grid().t(i);
    for (std::size_t s = 0; s < ns; ++s)
      for (int j = 0; j < n; ++j) next[s * n + j] = sol.Y.v(s, i + 1, j);
    model.condexp(next.data(), n, i, mean.data());
    // One-step representation: Z_i = E_i[(Y_{i+1} - E_i Y_{i+1}) dW] / dt.
    for (std::size_t s = 0; s < ns; ++s)
      for (int j = 0; j < n; ++j)
        for (int c = 0; c < d; ++c)
          prod[(s * n + j) * d + c] = (next[s * n + j] - mean[s * n + j]) * model.increment(s, i, c);
    model.condexp(prod.data(), n * d, i, zrow.data());
    for (std::size_t s = 0; s < ns; ++s)
      for (int k = 0; k < n * d; ++k) sol.Z.v(s, i, k) = zrow[s * n * d + k] / dt;

    for (std::size_t s = 0; s < ns; ++s) {
      for (int j = 0; j < n; ++j) ycur[j] = mean[s * n + j];
      int it = 0;
      double diff = 0.0;
      for (; it < 50; ++it) {
        driver.f(t, ycur.data(), sol.Z.at(s, i), s, fv.data());
        diff = 0.0;
        for (int j = 0; j < n; ++j) {
          ynew[j] = mean[s * n + j] + fv[j] * dt;
          diff = std::max(diff, std::abs(ynew[j] - ycur[j]));
          ycur[j] = ynew[j];
        }
        if (diff <= 1e-12 * std::max(1.0, vec_norm(ycur.data(), n))) break;
      }
      if (diff > 1e-12 * std::max(1.0, vec_norm(ycur.data(), n))) fail(ErrCode::numeric, "grid too coarse for L");
      max_inner = std::max(max_inner, it + 1);
      for (int j = 0; j < n; ++j) sol.Y.v(s, i, j) = ycur[j];
    }
  }
  sol.picard_iterations = max_inner;
  fill_norms(sol, model);
  sol.residual = one_step_residual(sol.Y, sol.Z, driver, model);
  return sol;
}

QuadraticGates quadratic_gates(const std::vector<double>& xi, const Driver& driver, const Model& model,
                               const QuadraticConfig& cfg) {
  const double L = driver.lipschitz_L;
  const double c1 = cfg.c1 < 0 ? 4.0 * L + 4.0 : cfg.c1;
  const double c2 = cfg.c2 < 0 ? 4.0 * L + 4.0 : cfg.c2;
  const double c = std::max(c1, c2);
  const double T = model.grid().T();
  QuadraticGates g;
  g.eps = 1.0 / (16.0 * c * c * (T + 1.0));
  g.radius = 1.0 / (4.0 * c * (T + 1.0));
  const std::size_t ns = model.n_samples();
  const int n = driver.n;
  for (std::size_t s = 0; s < ns; ++s) g.xi_inf = std::max(g.xi_inf, vec_norm(xi.data() + s * n, n));
  if (driver.has_bounds)
    for (std::size_t i = 0; i + 1 < model.grid().n_points(); ++i) {
      const double t = model.grid().t(i);
      const double lam = driver.lambda ? driver.lambda(t) : 0.0;
      const double mu = driver.mu ? driver.mu(t) : 0.0;
      g.envelope += (lam + mu * mu) * model.grid().dt(i);
    }
  return g;
}

BsdeSolution solve_quadratic_bsde_small(const std::vector<double>& xi, const Driver& driver, const Model& model,
                                        const QuadraticConfig& cfg) {
  QuadraticGates gates = quadratic_gates(xi, driver, model, cfg);
  if (gates.xi_inf > gates.eps || gates.envelope > gates.eps) fail(ErrCode::config, "outside contraction regime");

  const std::size_t ns = model.n_samples(), np = model.grid().n_points();
  const int n = driver.n, d = driver.d;
  BsdeSolution cur;
  cur.Y = EnsField(ns, np, n);
  cur.Z = EnsField(ns, np, n * d);
  BsdeSolution sol;
  std::vector<double> dists, ratios;
  bool converged = false;
  int iters = 0;
  for (int k = 0; k < cfg.max_iter && !converged; ++k) {
    // Frozen driver: substitute the previous iterate, leaving a linear solve.
    EnsField frozen(ns, np, n);
    std::vector<double> fv(n);
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t i = 0; i < np; ++i) {
        driver.f(model.grid().t(i), cur.Y.at(s, i), cur.Z.at(s, i), s, fv.data());
        for (int j = 0; j < n; ++j) frozen.v(s, i, j) = fv[j];
      }
    Driver lin;
    lin.n = n;
    lin.d = d;
    const TimeGrid* grid = &model.grid();
    lin.f = [&frozen, grid, n](double t, const double*, const double*, std::size_t s, double* out) {
      const std::size_t i = grid->index_of(t);
      for (int j = 0; j < n; ++j) out[j] = frozen.v(s, i, j);
    };
    BsdeSolution nxt = solve_lipschitz_bsde(xi, lin, model);
    const double dist = sup_field(field_diff(nxt.Y, cur.Y)) + bmo_norm(field_diff(nxt.Z, cur.Z), model);
    if (!dists.empty() && dists.back() > 0.0) ratios.push_back(dist / dists.back());
    dists.push_back(dist);
    cur.Y = nxt.Y;
    cur.Z = nxt.Z;
    iters = k + 1;
    converged = dist < cfg.tol;
  }
  sol.Y = cur.Y;
  sol.Z = cur.Z;
  sol.picard_iterations = iters;
  sol.converged = converged;
  sol.picard_distances = dists;
  sol.picard_ratios = ratios;
  for (double r : ratios) sol.noncontraction_warning = sol.noncontraction_warning || r > 0.75;
  fill_norms(sol, model);
  sol.within_radius = sol.y_inf + sol.z_bmo <= gates.radius * (1.0 + 1e-9);
  sol.residual = one_step_residual(sol.Y, sol.Z, driver, model);
  return sol;
}

double bsde_pair_distance(const BsdeSolution& a, const BsdeSolution& b, const Model& model) {
  return sup_field(field_diff(a.Y, b.Y)) + bmo_norm(field_diff(a.Z, b.Z), model);
}

std::vector<ContinuityRow> bsde_continuity_audit(const std::vector<std::vector<double>>& xi_seq,
                                                 const std::vector<Driver>& driver_seq,
                                                 const std::vector<double>& xi_ref, const Driver& driver_ref,
                                                 const Model& model, const QuadraticConfig& cfg) {
  if (!driver_seq.empty() && driver_seq.size() != xi_seq.size())
    fail(ErrCode::invalid_argument, "perturbation sequences must have equal length");
  BsdeSolution ref = solve_quadratic_bsde_small(xi_ref, driver_ref, model, cfg);
  const std::size_t ns = model.n_samples(), np = model.grid().n_points();
  const int n = driver_ref.n;
  std::vector<ContinuityRow> rows;
  std::vector<double> fa(n), fb(n);
  for (std::size_t k = 0; k < xi_seq.size(); ++k) {
    const Driver& drv = driver_seq.empty() ? driver_ref : driver_seq[k];
    ContinuityRow row;
    for (std::size_t s = 0; s < ns; ++s) {
      double sq = 0.0;
      for (int j = 0; j < n; ++j) sq += std::pow(xi_seq[k][s * n + j] - xi_ref[s * n + j], 2);
      row.input_gap = std::max(row.input_gap, std::sqrt(sq));
    }
    // Driver gap integrated along the reference solution.
    double fgap = 0.0;
    for (std::size_t i = 0; i + 1 < np; ++i) {
      double worst = 0.0;
      for (std::size_t s = 0; s < ns; ++s) {
        drv.f(model.grid().t(i), ref.Y.at(s, i), ref.Z.at(s, i), s, fa.data());
        driver_ref.f(model.grid().t(i), ref.Y.at(s, i), ref.Z.at(s, i), s, fb.data());
        for (int j = 0; j < n; ++j) fa[j] -= fb[j];
        worst = std::max(worst, vec_norm(fa.data(), n));
      }
      fgap += worst * model.grid().dt(i);
    }
    row.input_gap += fgap;
    BsdeSolution pert = solve_quadratic_bsde_small(xi_seq[k], drv, model, cfg);
    row.solution_gap = bsde_pair_distance(pert, ref, model);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace roughbsde
