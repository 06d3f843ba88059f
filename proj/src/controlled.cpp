#include "roughbsde/controlled.hpp"

#include <algorithm>
#include <cmath>

#include "roughbsde/errors.hpp"
#include "roughbsde/pvar.hpp"

namespace roughbsde {

namespace {

void check_exponents(const StochasticControlledPath& scp) {
  if (!scp.drive) fail(ErrCode::invalid_argument, "controlled path needs a drive");
  const double p = scp.drive->at(0).p();
  if (!(scp.q >= p) || !(scp.qp >= p) || !(1.0 / scp.q + 1.0 / scp.qp > 0.5))
    fail(ErrCode::invalid_argument, "exponent constraint violated");
}

void check_window(std::size_t i0, std::size_t i1, std::size_t n_points) {
  if (i1 >= n_points || i0 > i1) fail(ErrCode::invalid_argument, "window end precedes window start");
}

// L^m norm of a pairwise field difference with an optional second operand.
struct PairNorm {
  const EnsField* a;
  const EnsField* b = nullptr;  // difference mode when set
  double m;
  double operator()(std::size_t i, std::size_t j, std::vector<double>& mags) const {
    const int nv = a->nv;
    for (std::size_t s = 0; s < a->n_samples; ++s) {
      double acc = 0.0;
      for (int c = 0; c < nv; ++c) {
        double d = a->v(s, j, c) - a->v(s, i, c);
        if (b) d -= b->v(s, j, c) - b->v(s, i, c);
        acc += d * d;
      }
      mags[s] = std::sqrt(acc);
    }
    return lm_reduce(mags, m);
  }
};

// Remainder of the drift part against the drive: R_{i,j} = δYJ_{i,j} − Y'_i δX_{i,j}.
void remainder_at(const EnsField& YJ, const EnsField& Yp, const RoughDrive& drive, int nv, int e, std::size_t s,
                  std::size_t i, std::size_t j, double* out) {
  const RoughPath& rp = drive.at(s);
  std::vector<double> dx(e);
  rp.delta(i, j, dx.data());
  for (int c = 0; c < nv; ++c) {
    double v = YJ.v(s, j, c) - YJ.v(s, i, c);
    for (int l = 0; l < e; ++l) v -= Yp.v(s, i, c * e + l) * dx[l];
    out[c] = v;
  }
}

ControlledNormReport norm_core(const StochasticControlledPath& a, const StochasticControlledPath* b,
                               const Model& model, double K, std::size_t i0, std::size_t i1, std::size_t cap) {
  check_exponents(a);
  if (b) {
    check_exponents(*b);
    if (a.nv != b->nv || a.e != b->e || a.Y.n_points != b->Y.n_points)
      fail(ErrCode::invalid_argument, "controlled paths must share shape");
  }
  if (!(K >= 1.0)) fail(ErrCode::invalid_argument, "norm weight must be at least 1");
  check_window(i0, i1, a.Y.n_points);

  MartingaleDecomposition da = martingale_decomposition(a.Y, model);
  MartingaleDecomposition db;
  if (b) db = martingale_decomposition(b->Y, model);

  const auto idx = coarsen_indices(i0, i1, cap);
  const std::size_t ns = a.Y.n_samples;
  std::vector<double> mags(ns);
  ControlledNormReport rep;
  rep.K = K;
  rep.points_used = idx.size();

  PairNorm mart{&da.YM, b ? &db.YM : nullptr, a.m};
  rep.mart_qvar = p_variation([&](std::size_t x, std::size_t y) { return mart(idx[x], idx[y], mags); },
                              idx.size(), a.q);
  PairNorm dyp{&a.Yp, b ? &b->Yp : nullptr, a.m};
  rep.yp_qpvar = p_variation([&](std::size_t x, std::size_t y) { return dyp(idx[x], idx[y], mags); },
                             idx.size(), a.qp);

  const double r = a.q * a.qp / (a.q + a.qp);
  std::vector<double> ra(a.nv), rb(a.nv);
  rep.remJ_var = p_variation(
      [&](std::size_t x, std::size_t y) {
        for (std::size_t s = 0; s < ns; ++s) {
          remainder_at(da.YJ, a.Yp, *a.drive, a.nv, a.e, s, idx[x], idx[y], ra.data());
          if (b) {
            remainder_at(db.YJ, b->Yp, *b->drive, b->nv, b->e, s, idx[x], idx[y], rb.data());
            for (int c = 0; c < a.nv; ++c) ra[c] -= rb[c];
          }
          mags[s] = vec_norm(ra.data(), a.nv);
        }
        return lm_reduce(mags, a.m);
      },
      idx.size(), r);

  for (std::size_t s = 0; s < ns; ++s) {
    double acc = 0.0;
    for (int c = 0; c < a.nv; ++c) {
      double d = a.Y.v(s, i1, c);
      if (b) d -= b->Y.v(s, i1, c);
      acc += d * d;
    }
    mags[s] = std::sqrt(acc);
  }
  rep.terminal = lm_reduce(mags, a.m);
  for (std::size_t s = 0; s < ns; ++s) {
    double acc = 0.0;
    for (int c = 0; c < a.nv * a.e; ++c) {
      double d = a.Yp.v(s, i1, c);
      if (b) d -= b->Yp.v(s, i1, c);
      acc += d * d;
    }
    mags[s] = std::sqrt(acc);
  }
  rep.terminal += lm_reduce(mags, a.m);
  rep.total = rep.terminal + K * rep.mart_qvar + rep.yp_qpvar + K * rep.remJ_var;
  return rep;
}

}  // namespace

ControlledNormReport controlled_norm(const StochasticControlledPath& scp, const Model& model, double K,
                                     std::size_t i0, std::size_t i1, std::size_t cap) {
  return norm_core(scp, nullptr, model, K, i0, i1, cap);
}

ControlledNormReport controlled_norm(const StochasticControlledPath& scp, const Model& model, double K) {
  return norm_core(scp, nullptr, model, K, 0, scp.Y.n_points - 1, 64);
}

ControlledNormReport controlled_distance(const StochasticControlledPath& a, const StochasticControlledPath& b,
                                         const Model& model, double K, std::size_t i0, std::size_t i1,
                                         std::size_t cap) {
  return norm_core(a, &b, model, K, i0, i1, cap);
}

ControlledNormReport controlled_distance(const StochasticControlledPath& a, const StochasticControlledPath& b,
                                         const Model& model, double K) {
  return norm_core(a, &b, model, K, 0, a.Y.n_points - 1, 64);
}

namespace {

double ess_pair_sup(const EnsField& f, std::size_t i, std::size_t j, const EnsField* g) {
  double worst = 0.0;
  for (std::size_t s = 0; s < f.n_samples; ++s) {
    double acc = 0.0;
    for (int c = 0; c < f.nv; ++c) {
      double d = f.v(s, j, c) - f.v(s, i, c);
      if (g) d -= g->v(s, j, c) - g->v(s, i, c);
      acc += d * d;
    }
    worst = std::max(worst, std::sqrt(acc));
  }
  return worst;
}

double ess_rem_sup(const EssBoundedControlledPath& a, const EssBoundedControlledPath* b, std::size_t i,
                   std::size_t j) {
  const int e = a.e;
  const int ncomp = a.G.nv;
  double worst = 0.0;
  std::vector<double> dx(e), ra(ncomp);
  for (std::size_t s = 0; s < a.G.n_samples; ++s) {
    a.drive->at(s).delta(i, j, dx.data());
    for (int c = 0; c < ncomp; ++c) {
      double v = a.G.v(s, j, c) - a.G.v(s, i, c);
      for (int l = 0; l < e; ++l) v -= a.Gp.v(s, i, c * e + l) * dx[l];
      ra[c] = v;
    }
    if (b) {
      std::vector<double> dxb(e);
      b->drive->at(s).delta(i, j, dxb.data());
      for (int c = 0; c < ncomp; ++c) {
        double v = b->G.v(s, j, c) - b->G.v(s, i, c);
        for (int l = 0; l < e; ++l) v -= b->Gp.v(s, i, c * e + l) * dxb[l];
        ra[c] -= v;
      }
    }
    worst = std::max(worst, vec_norm(ra.data(), ncomp));
  }
  return worst;
}

EssNormReport ess_core(const EssBoundedControlledPath& a, const EssBoundedControlledPath* b, std::size_t i0,
                       std::size_t i1, std::size_t cap) {
  if (!a.drive) fail(ErrCode::invalid_argument, "controlled path needs a drive");
  check_window(i0, i1, a.G.n_points);
  const auto idx = coarsen_indices(i0, i1, cap);
  EssNormReport rep;
  double tg = 0.0, tgp = 0.0;
  for (std::size_t s = 0; s < a.G.n_samples; ++s) {
    double accg = 0.0, accgp = 0.0;
    for (int c = 0; c < a.G.nv; ++c) {
      double d = a.G.v(s, i1, c);
      if (b) d -= b->G.v(s, i1, c);
      accg += d * d;
    }
    for (int c = 0; c < a.Gp.nv; ++c) {
      double d = a.Gp.v(s, i1, c);
      if (b) d -= b->Gp.v(s, i1, c);
      accgp += d * d;
    }
    tg = std::max(tg, std::sqrt(accg));
    tgp = std::max(tgp, std::sqrt(accgp));
  }
  rep.terminal_G = tg;
  rep.terminal_Gp = tgp;
  rep.gp_pvar = p_variation(
      [&](std::size_t x, std::size_t y) { return ess_pair_sup(a.Gp, idx[x], idx[y], b ? &b->Gp : nullptr); },
      idx.size(), a.p);
  rep.rem_p2var = p_variation(
      [&](std::size_t x, std::size_t y) { return ess_rem_sup(a, b, idx[x], idx[y]); }, idx.size(), a.p / 2.0);
  rep.total = rep.terminal_G + rep.terminal_Gp + rep.gp_pvar + rep.rem_p2var;
  return rep;
}

}  // namespace

EssNormReport ess_norm(const EssBoundedControlledPath& g, std::size_t i0, std::size_t i1, std::size_t cap) {
  return ess_core(g, nullptr, i0, i1, cap);
}

EssNormReport ess_norm(const EssBoundedControlledPath& g) {
  return ess_core(g, nullptr, 0, g.G.n_points - 1, 64);
}

double ess_distance(const EssBoundedControlledPath& a, const EssBoundedControlledPath& b, std::size_t i0,
                    std::size_t i1, std::size_t cap) {
  if (a.n != b.n || a.e != b.e || a.G.n_points != b.G.n_points)
    fail(ErrCode::invalid_argument, "controlled paths must share shape");
  return ess_core(a, &b, i0, i1, cap).total;
}

LeibnizProduct leibniz_product(const EssBoundedControlledPath& g, const StochasticControlledPath& scp,
                               const Model& model) {
  if (g.n != scp.nv || g.e != scp.e) fail(ErrCode::invalid_argument, "coefficient and path dimensions must match");
  if (g.G.n_points != scp.Y.n_points) fail(ErrCode::invalid_argument, "grid mismatch");
  if (g.G.n_samples != 1 && g.G.n_samples != scp.Y.n_samples)
    fail(ErrCode::invalid_argument, "coefficient must be deterministic or sample aligned");
  const std::size_t ns = scp.Y.n_samples, np = scp.Y.n_points;
  const int n = g.n, e = g.e;
  const int onv = n * e;

  LeibnizProduct out;
  out.scp.nv = onv;
  out.scp.e = e;
  out.scp.q = scp.q;
  out.scp.qp = scp.qp;
  out.scp.m = scp.m;
  out.scp.drive = scp.drive;
  out.scp.Y = EnsField(ns, np, onv);
  out.scp.Yp = EnsField(ns, np, onv * e);
  auto gs = [&](std::size_t s) { return g.G.n_samples == 1 ? std::size_t{0} : s; };
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t t = 0; t < np; ++t) {
      const double* G = g.G.at(gs(s), t);
      const double* Gp = g.Gp.at(gs(s), t);
      const double* Y = scp.Y.at(s, t);
      const double* Yp = scp.Yp.at(s, t);
      double* oy = out.scp.Y.at(s, t);
      double* oyp = out.scp.Yp.at(s, t);
      for (int ij = 0; ij < onv; ++ij) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k) acc += G[ij * n + k] * Y[k];
        oy[ij] = acc;
        for (int l = 0; l < e; ++l) {
          double d = 0.0;
          for (int k = 0; k < n; ++k)
            d += G[ij * n + k] * Yp[k * e + l] + Gp[(ij * n + k) * e + l] * Y[k];
          oyp[ij * e + l] = d;
        }
      }
    }

  // Martingale part by the left-point integral against δY^M.
  MartingaleDecomposition dec = martingale_decomposition(scp.Y, model);
  out.mart_integral = EnsField(ns, np, onv);
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t t = 0; t + 1 < np; ++t) {
      const double* G = g.G.at(gs(s), t);
      for (int ij = 0; ij < onv; ++ij) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k) acc += G[ij * n + k] * (dec.YM.v(s, t + 1, k) - dec.YM.v(s, t, k));
        out.mart_integral.v(s, t + 1, ij) = out.mart_integral.v(s, t, ij) + acc;
      }
    }
  return out;
}

BoundAudit leibniz_bound_audit(const EssBoundedControlledPath& g, const StochasticControlledPath& scp,
                               const LeibnizProduct& prod, const Model& model, double K) {
  BoundAudit audit;
  audit.lhs = controlled_norm(prod.scp, model, K).total;
  const double gn = ess_norm(g).total;
  const double yn = controlled_norm(scp, model, K).total;
  std::vector<double> mags(scp.Y.n_samples);
  for (std::size_t s = 0; s < scp.Y.n_samples; ++s)
    mags[s] = vec_norm(scp.Y.at(s, scp.Y.n_points - 1), scp.nv);
  const double yT = lm_reduce(mags, 2.0);
  double xvar = 0.0;
  for (std::size_t s = 0; s < (scp.drive->shared() ? 1 : scp.Y.n_samples); ++s)
    xvar = std::max(xvar, rough_metrics(scp.drive->at(s), 0, scp.Y.n_points - 1, 64).total);
  audit.rhs = gn * (K * yT + yn * (1.0 + K * xvar) * (1.0 + K * xvar));
  audit.ratio = audit.rhs > 0.0 ? audit.lhs / audit.rhs : 0.0;
  return audit;
}

DriftLift lift_drift_integral(const EnsField& F, const Model& model, std::shared_ptr<const RoughDrive> drive,
                              double p, double m) {
  if (!drive) fail(ErrCode::invalid_argument, "controlled path needs a drive");
  if (F.n_points != model.grid().n_points() || F.n_samples != model.n_samples())
    fail(ErrCode::invalid_argument, "field shape must match the model");
  const TimeGrid& grid = model.grid();
  const std::size_t ns = F.n_samples, np = F.n_points;
  const int nv = F.nv, e = drive->at(0).e();
  DriftLift out;
  out.scp.nv = nv;
  out.scp.e = e;
  out.scp.q = p;
  out.scp.qp = p;
  out.scp.m = m;
  out.scp.drive = std::move(drive);
  out.scp.Y = EnsField(ns, np, nv);
  out.scp.Yp = EnsField(ns, np, nv * e);
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t i = 0; i + 1 < np; ++i)
      for (int c = 0; c < nv; ++c)
        out.scp.Y.v(s, i + 1, c) = out.scp.Y.v(s, i, c) + F.v(s, i, c) * grid.dt(i);

  // Square-root modulus audit: exact discrete Cauchy-Schwarz, ratio never above 1.
  std::vector<double> mags(ns);
  std::vector<double> cell_l2(np - 1), cell_sq(np - 1);
  for (std::size_t i = 0; i + 1 < np; ++i) {
    double sq = 0.0;
    for (std::size_t s = 0; s < ns; ++s) {
      mags[s] = vec_norm(F.at(s, i), nv) * grid.dt(i);
      sq += mags[s] * vec_norm(F.at(s, i), nv);
    }
    cell_l2[i] = lm_reduce(mags, 2.0);
    cell_sq[i] = sq / static_cast<double>(ns);  // E|F_i|² dt_i
  }
  for (std::size_t a = 0; a + 1 < np; ++a) {
    double onevar = 0.0, fsq = 0.0;
    for (std::size_t b = a + 1; b < np; ++b) {
      onevar += cell_l2[b - 1];
      fsq += cell_sq[b - 1];
      const double rhs = std::sqrt(fsq) * std::sqrt(grid.t(b) - grid.t(a));
      if (rhs > 0.0) out.bound_max_ratio = std::max(out.bound_max_ratio, onevar / rhs);
    }
  }
  return out;
}

}  // namespace roughbsde
