#include "roughbsde/rsi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "roughbsde/errors.hpp"
#include "roughbsde/pvar.hpp"

namespace roughbsde {

namespace {

std::size_t resolve_end(const SewingOptions& sew, std::size_t n_points) {
  return sew.i1 >= n_points ? n_points - 1 : sew.i1;
}

// Linear interpolation of two drives; level-2 cells blend entrywise, which stays a
// valid two-step path because the additive relation holds by construction.
std::shared_ptr<const RoughDrive> interp_drive(const std::shared_ptr<const RoughDrive>& da,
                                               const std::shared_ptr<const RoughDrive>& db, double theta,
                                               std::size_t n_samples) {
  if (da == db || theta == 0.0) return da;
  const bool both_shared = da->shared() && db->shared();
  const std::size_t count = both_shared ? 1 : n_samples;
  std::vector<RoughPath> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    const RoughPath& A = da->at(s);
    const RoughPath& B = db->at(s);
    if (!A.grid().same_as(B.grid()) || A.e() != B.e()) fail(ErrCode::config, "grid mismatch");
    const std::size_t np = A.grid().n_points();
    const int e = A.e();
    std::vector<double> vals(np * static_cast<std::size_t>(e));
    for (std::size_t i = 0; i < np; ++i)
      for (int c = 0; c < e; ++c)
        vals[i * e + c] = (1.0 - theta) * A.path().value(i, c) + theta * B.path().value(i, c);
    std::vector<double> cells(A.cells().size());
    for (std::size_t k = 0; k < cells.size(); ++k) cells[k] = (1.0 - theta) * A.cells()[k] + theta * B.cells()[k];
    out.emplace_back(SampledPath(A.grid(), e, std::move(vals)), A.p(), std::move(cells));
  }
  return make_drive(std::move(out));
}

double drive_distance(const std::shared_ptr<const RoughDrive>& da, const std::shared_ptr<const RoughDrive>& db,
                      std::size_t n_samples) {
  if (da == db) return 0.0;
  const std::size_t count = (da->shared() && db->shared()) ? 1 : n_samples;
  double worst = 0.0;
  for (std::size_t s = 0; s < count; ++s) worst = std::max(worst, rough_distance(da->at(s), db->at(s)));
  return worst;
}

}  // namespace

RoughStochasticIntegral rough_stochastic_integrate(const StochasticControlledPath& V, int n, const Model& model,
                                                   const RsiOptions& opts) {
  if (!V.drive) fail(ErrCode::config, "controlled path needs a drive");
  const RoughPath& rp0 = V.drive->at(0);
  const int e = rp0.e();
  const double p = rp0.p();
  if (n < 1 || V.nv != n * e || V.Yp.nv != n * e * e) fail(ErrCode::invalid_argument, "integrand shape must match the drive");
  if (1.0 / p + 1.0 / V.q + 1.0 / V.qp <= 1.0) fail(ErrCode::config, "exponent constraint violated");
  const std::size_t ns = model.n_samples();
  const std::size_t np = model.grid().n_points();
  if (V.Y.n_samples != ns || V.Y.n_points != np) fail(ErrCode::invalid_argument, "field shape must match the model");
  if (!rp0.grid().same_as(model.grid())) fail(ErrCode::config, "grid mismatch");

  MartingaleDecomposition dec = martingale_decomposition(V.Y, model);

  SewingOptions sew = opts.sew;
  sew.always_floor = true;

  Germ gm;
  gm.nv = n;
  gm.adapted = true;
  gm.eval = [&dec, drive = V.drive, n, e, dx = std::vector<double>(e)](std::size_t s, std::size_t i, std::size_t j,
                                                                       double* out) mutable {
    drive->at(s).delta(i, j, dx.data());
    for (int a = 0; a < n; ++a) {
      double acc = 0.0;
      for (int b = 0; b < e; ++b) acc += dec.YM.v(s, i, a * e + b) * dx[b];
      out[a] = acc;
    }
  };

  Germ gj;
  gj.nv = n;
  gj.adapted = true;
  gj.eval = [&dec, &V, drive = V.drive, n, e, dx = std::vector<double>(e),
             x2 = std::vector<double>(static_cast<std::size_t>(e) * e)](std::size_t s, std::size_t i, std::size_t j,
                                                                        double* out) mutable {
    const RoughPath& rp = drive->at(s);
    rp.delta(i, j, dx.data());
    rp.level2(i, j, x2.data());
    for (int a = 0; a < n; ++a) {
      double acc = 0.0;
      for (int b = 0; b < e; ++b) {
        acc += dec.YJ.v(s, i, a * e + b) * dx[b];
        for (int l = 0; l < e; ++l) acc += V.Yp.v(s, i, (a * e + b) * e + l) * x2[l * e + b];
      }
      out[a] = acc;
    }
  };

  RoughStochasticIntegral out;
  out.n = n;
  out.e = e;
  out.mart_report = sew_stochastic(gm, model.grid(), model, V.m, sew);
  out.drift_report = sew_deterministic(gj, model.grid(), ns, V.m, sew);

  out.values = EnsField(ns, np, n);
  for (std::size_t k = 0; k < out.values.a.size(); ++k)
    out.values.a[k] = out.mart_report.values.a[k] + out.drift_report.values.a[k];

  out.as_controlled.nv = n;
  out.as_controlled.e = e;
  out.as_controlled.q = std::max(p, V.q);
  out.as_controlled.qp = std::max(p, V.q);
  out.as_controlled.m = V.m;
  out.as_controlled.drive = V.drive;
  out.as_controlled.Y = out.values;
  out.as_controlled.Yp = V.Y;

  if (opts.audit) {
    const std::size_t i0 = sew.i0;
    const std::size_t i1 = resolve_end(sew, np);
    std::vector<std::size_t> idx = coarsen_indices(i0, i1, opts.audit_cap);
    std::vector<double> dx(e), x2(static_cast<std::size_t>(e) * e), mags(ns);
    const std::size_t drives = V.drive->shared() ? 1 : ns;
    for (std::size_t a = 0; a + 1 < idx.size(); ++a)
      for (std::size_t b = a + 1; b < idx.size(); ++b) {
        const std::size_t wa = idx[a], wb = idx[b];
        for (std::size_t s = 0; s < ns; ++s) {
          const RoughPath& rp = V.drive->at(s);
          rp.delta(wa, wb, dx.data());
          rp.level2(wa, wb, x2.data());
          double sq = 0.0;
          for (int i = 0; i < n; ++i) {
            double v = out.values.v(s, wb, i) - out.values.v(s, wa, i);
            for (int c = 0; c < e; ++c) {
              v -= V.Y.v(s, wa, i * e + c) * dx[c];
              for (int l = 0; l < e; ++l) v -= V.Yp.v(s, wa, (i * e + c) * e + l) * x2[l * e + c];
            }
            sq += v * v;
          }
          mags[s] = std::sqrt(sq);
        }
        WindowAudit wrow;
        wrow.i0 = wa;
        wrow.i1 = wb;
        wrow.lhs = lm_reduce(mags, V.m);
        ControlledNormReport rep = controlled_norm(V, model, 1.0, wa, wb, 16);
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t s = 0; s < drives; ++s) {
          RoughPathMetrics met = rough_metrics(V.drive->at(s), wa, wb, 16);
          m1 = std::max(m1, met.p_var_level1);
          m2 = std::max(m2, met.p2_var_level2);
        }
        wrow.rhs = (rep.mart_qvar + rep.remJ_var) * m1 + rep.yp_qpvar * m2;
        wrow.ratio = wrow.rhs > 1e-14 ? wrow.lhs / wrow.rhs : 0.0;
        out.measured_C = std::max(out.measured_C, wrow.ratio);
        out.local_bound_audit.push_back(wrow);
      }
  }
  return out;
}

StabilityReport stability_audit(const StochasticControlledPath& Ya, const StochasticControlledPath& Yb, int n,
                                const Model& model, double K) {
  StabilityReport rep;
  rep.norm_ball = std::max(controlled_norm(Ya, model, K).total, controlled_norm(Yb, model, K).total);
  RoughStochasticIntegral Ia = rough_stochastic_integrate(Ya, n, model);
  const std::size_t ns = model.n_samples();
  const std::size_t last = model.grid().n_points() - 1;
  for (double theta : {0.25, 0.5, 0.75, 1.0}) {
    StochasticControlledPath Yt = Ya;
    for (std::size_t k = 0; k < Yt.Y.a.size(); ++k) Yt.Y.a[k] = (1.0 - theta) * Ya.Y.a[k] + theta * Yb.Y.a[k];
    for (std::size_t k = 0; k < Yt.Yp.a.size(); ++k) Yt.Yp.a[k] = (1.0 - theta) * Ya.Yp.a[k] + theta * Yb.Yp.a[k];
    Yt.drive = interp_drive(Ya.drive, Yb.drive, theta, ns);
    RoughStochasticIntegral It = rough_stochastic_integrate(Yt, n, model);

    StabilityRow row;
    row.theta = theta;
    row.rho = drive_distance(Ya.drive, Yt.drive, ns);
    row.input_distance = controlled_distance(Ya, Yt, model, K).total;
    std::vector<double> mags(ns);
    for (std::size_t s = 0; s < ns; ++s) {
      double sq = 0.0;
      for (int c = 0; c < Ya.nv; ++c) {
        const double d = Ya.Y.v(s, last, c) - Yt.Y.v(s, last, c);
        sq += d * d;
      }
      mags[s] = std::sqrt(sq);
    }
    row.terminal_gap = lm_reduce(mags, Ya.m);
    row.lhs = controlled_distance(Ia.as_controlled, It.as_controlled, model, K).total;
    const double denom = K * row.rho + (1.0 / K + K * row.rho) * row.input_distance;
    row.ratio = denom > 1e-14 ? std::max(0.0, row.lhs - row.terminal_gap) / denom : 0.0;
    rep.fitted_C = std::max(rep.fitted_C, row.ratio);
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace roughbsde
