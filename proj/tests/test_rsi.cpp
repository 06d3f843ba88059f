#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "roughbsde/errors.hpp"
#include "roughbsde/models.hpp"
#include "roughbsde/rough_path.hpp"
#include "roughbsde/rsi.hpp"

using namespace roughbsde;

namespace {

std::shared_ptr<const RoughDrive> tree_drive(const Model& m, double p) {
  BrownianEnsemble ens;
  ens.grid = m.grid();
  ens.n_samples = m.n_samples();
  ens.d = m.d();
  ens.W = EnsField(m.n_samples(), m.grid().n_points(), m.d());
  for (std::size_t s = 0; s < m.n_samples(); ++s)
    for (std::size_t i = 0; i < m.grid().n_points(); ++i)
      for (int c = 0; c < m.d(); ++c) ens.W.v(s, i, c) = m.brownian(s, i, c);
  return make_drive(ito_brownian_lift(ens, p, m.grid()));
}

StochasticControlledPath scp_like(const Model& m, std::shared_ptr<const RoughDrive> drive, int nv, int e) {
  StochasticControlledPath scp;
  scp.nv = nv;
  scp.e = e;
  scp.q = 2.0;
  scp.qp = 2.0;
  scp.m = 2.0;
  scp.drive = std::move(drive);
  scp.Y = EnsField(m.n_samples(), m.grid().n_points(), nv);
  scp.Yp = EnsField(m.n_samples(), m.grid().n_points(), nv * e);
  return scp;
}

std::vector<double> sin_path(const TimeGrid& g) {
  std::vector<double> x(g.n_points());
  for (std::size_t i = 0; i < g.n_points(); ++i) x[i] = std::sin(2.0 * g.t(i)) + 0.3;
  return x;
}

}  // namespace

TEST_CASE("constant integrand integrates to a scaled increment") {
  Model m = Model::tree(5, 1.0, 1);
  auto x = sin_path(m.grid());
  auto drive = make_drive(canonical_lift(SampledPath(m.grid(), 1, x), 2.0));
  auto scp = scp_like(m, drive, 1, 1);
  for (double& v : scp.Y.a) v = 0.7;
  RoughStochasticIntegral I = rough_stochastic_integrate(scp, 1, m);
  for (std::size_t s = 0; s < m.n_samples(); ++s)
    for (std::size_t i = 0; i < m.grid().n_points(); ++i)
      CHECK(I.values.v(s, i, 0) == doctest::Approx(0.7 * (x[i] - x[0])).epsilon(1e-13));
  CHECK(I.drift_report.converged);
}

TEST_CASE("tautological integrand against its own exact lift") {
  Model m = Model::tree(8, 1.0, 1);
  auto x = sin_path(m.grid());
  auto drive = make_drive(canonical_lift(SampledPath(m.grid(), 1, x), 2.0));
  auto scp = scp_like(m, drive, 1, 1);
  for (std::size_t s = 0; s < m.n_samples(); ++s)
    for (std::size_t i = 0; i < m.grid().n_points(); ++i) {
      scp.Y.v(s, i, 0) = x[i];
      scp.Yp.v(s, i, 0) = 1.0;
    }
  RoughStochasticIntegral I = rough_stochastic_integrate(scp, 1, m);
  for (std::size_t i = 0; i < m.grid().n_points(); ++i)
    CHECK(I.values.v(0, i, 0) == doctest::Approx(0.5 * (x[i] * x[i] - x[0] * x[0])).epsilon(1e-13));
}

TEST_CASE("walk against its left-point lift reproduces the discrete integral") {
  Model m = Model::tree(8, 1.0, 1);
  auto drive = tree_drive(m, 2.0);
  auto scp = scp_like(m, drive, 1, 1);
  for (std::size_t s = 0; s < m.n_samples(); ++s)
    for (std::size_t i = 0; i < m.grid().n_points(); ++i) {
      scp.Y.v(s, i, 0) = m.brownian(s, i, 0);
      scp.Yp.v(s, i, 0) = 1.0;
    }
  RoughStochasticIntegral I = rough_stochastic_integrate(scp, 1, m);
  const std::size_t last = m.grid().n_points() - 1;
  for (std::size_t s = 0; s < m.n_samples(); ++s) {
    double ito = 0.0;
    for (std::size_t k = 0; k < m.grid().n_cells(); ++k)
      ito += m.brownian(s, k, 0) * (m.brownian(s, k + 1, 0) - m.brownian(s, k, 0));
    CHECK(I.values.v(s, last, 0) == doctest::Approx(ito).epsilon(1e-12));
    const double wT = m.brownian(s, last, 0);
    CHECK(I.values.v(s, last, 0) == doctest::Approx(0.5 * (wT * wT - m.grid().T())).epsilon(1e-12));
  }
  CHECK(I.mart_report.centering_ok);
  CHECK(I.values.v(3, 0, 0) == 0.0);
  for (std::size_t k = 0; k < I.as_controlled.Yp.a.size(); ++k) CHECK(I.as_controlled.Yp.a[k] == scp.Y.a[k]);
  CHECK(controlled_norm(I.as_controlled, m, 1.0).total > 0.0);
}

TEST_CASE("coarse-grid integral matches the fine discrete integral through second level") {
  TimeGrid fine = TimeGrid::uniform(1.0, 64);
  TimeGrid coarse = TimeGrid::uniform(1.0, 8);
  const std::size_t ns = 4000;
  BrownianEnsemble ens = simulate_brownian(fine, ns, 1, 7);
  auto lifts = ito_brownian_lift(ens, 2.0, coarse);
  BrownianEnsemble cens;
  cens.grid = coarse;
  cens.n_samples = ns;
  cens.d = 1;
  cens.W = EnsField(ns, coarse.n_points(), 1);
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t i = 0; i < coarse.n_points(); ++i) cens.W.v(s, i, 0) = ens.W.v(s, 8 * i, 0);
  Model m = Model::ensemble(cens);
  auto scp = scp_like(m, make_drive(std::move(lifts)), 1, 1);
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t i = 0; i < coarse.n_points(); ++i) {
      scp.Y.v(s, i, 0) = cens.W.v(s, i, 0);
      scp.Yp.v(s, i, 0) = 1.0;
    }
  RoughStochasticIntegral I = rough_stochastic_integrate(scp, 1, m);
  std::vector<double> gaps(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    double ito = 0.0;
    for (std::size_t k = 0; k < fine.n_cells(); ++k)
      ito += ens.W.v(s, k, 0) * (ens.W.v(s, k + 1, 0) - ens.W.v(s, k, 0));
    gaps[s] = std::abs(I.values.v(s, coarse.n_points() - 1, 0) - ito);
  }
  CHECK(lm_reduce(gaps, 2.0) <= 0.15);
}

TEST_CASE("integration is linear in the integrand") {
  Model m = Model::tree(6, 1.0, 1);
  auto drive = tree_drive(m, 2.0);
  auto mk = [&](double a, double b) {
    auto scp = scp_like(m, drive, 1, 1);
    for (std::size_t s = 0; s < m.n_samples(); ++s)
      for (std::size_t i = 0; i < m.grid().n_points(); ++i) {
        const double w = m.brownian(s, i, 0);
        scp.Y.v(s, i, 0) = a * std::sin(w) + b * w * w;
        scp.Yp.v(s, i, 0) = a * std::cos(w) + 2.0 * b * w;
      }
    return scp;
  };
  auto Ia = rough_stochastic_integrate(mk(1.0, 0.0), 1, m);
  auto Ib = rough_stochastic_integrate(mk(0.0, 1.0), 1, m);
  auto Ic = rough_stochastic_integrate(mk(2.0, -3.0), 1, m);
  for (std::size_t k = 0; k < Ic.values.a.size(); ++k)
    CHECK(Ic.values.a[k] == doctest::Approx(2.0 * Ia.values.a[k] - 3.0 * Ib.values.a[k]).epsilon(1e-11));
}

TEST_CASE("integral is additive across a time split") {
  Model m = Model::tree(6, 1.0, 1);
  auto drive = tree_drive(m, 2.0);
  auto scp = scp_like(m, drive, 1, 1);
  for (std::size_t s = 0; s < m.n_samples(); ++s)
    for (std::size_t i = 0; i < m.grid().n_points(); ++i) {
      scp.Y.v(s, i, 0) = m.brownian(s, i, 0);
      scp.Yp.v(s, i, 0) = 1.0;
    }
  RoughStochasticIntegral full = rough_stochastic_integrate(scp, 1, m);
  RsiOptions tail;
  tail.sew.i0 = 3;
  RoughStochasticIntegral J = rough_stochastic_integrate(scp, 1, m, tail);
  const std::size_t last = m.grid().n_points() - 1;
  for (std::size_t s = 0; s < m.n_samples(); ++s) {
    CHECK(J.values.v(s, 3, 0) == 0.0);
    CHECK(full.values.v(s, last, 0) ==
          doctest::Approx(full.values.v(s, 3, 0) + J.values.v(s, last, 0)).epsilon(1e-12));
  }
}

TEST_CASE("integral ignores constant shifts of the driver") {
  Model m = Model::tree(6, 1.0, 1);
  BrownianEnsemble ens;
  ens.grid = m.grid();
  ens.n_samples = m.n_samples();
  ens.d = 1;
  ens.W = EnsField(m.n_samples(), m.grid().n_points(), 1);
  for (std::size_t s = 0; s < m.n_samples(); ++s)
    for (std::size_t i = 0; i < m.grid().n_points(); ++i) ens.W.v(s, i, 0) = m.brownian(s, i, 0);
  BrownianEnsemble shifted = ens;
  for (double& v : shifted.W.a) v += 5.0;
  auto mk = [&](const BrownianEnsemble& src) {
    auto scp = scp_like(m, make_drive(ito_brownian_lift(src, 2.0, m.grid())), 1, 1);
    for (std::size_t s = 0; s < m.n_samples(); ++s)
      for (std::size_t i = 0; i < m.grid().n_points(); ++i) {
        scp.Y.v(s, i, 0) = std::tanh(m.brownian(s, i, 0));
        scp.Yp.v(s, i, 0) = 0.4;
      }
    return rough_stochastic_integrate(scp, 1, m);
  };
  RoughStochasticIntegral Ia = mk(ens);
  RoughStochasticIntegral Ib = mk(shifted);
  // Exact up to rounding of the shifted increments inside the lift builder.
  for (std::size_t k = 0; k < Ia.values.a.size(); ++k)
    CHECK(Ia.values.a[k] == doctest::Approx(Ib.values.a[k]).epsilon(1e-12));
}

TEST_CASE("local expansion audit reports finite observed constants") {
  Model m = Model::tree(6, 1.0, 1);
  auto drive = tree_drive(m, 2.0);
  auto scp = scp_like(m, drive, 1, 1);
  for (std::size_t s = 0; s < m.n_samples(); ++s)
    for (std::size_t i = 0; i < m.grid().n_points(); ++i) {
      scp.Y.v(s, i, 0) = m.brownian(s, i, 0);
      scp.Yp.v(s, i, 0) = 1.0;
    }
  RsiOptions opts;
  opts.audit = true;
  opts.audit_cap = 8;
  RoughStochasticIntegral I = rough_stochastic_integrate(scp, 1, m, opts);
  CHECK(I.local_bound_audit.size() == 21);
  for (const WindowAudit& w : I.local_bound_audit) {
    CHECK(std::isfinite(w.lhs));
    CHECK(std::isfinite(w.rhs));
    CHECK(w.ratio <= I.measured_C + 1e-15);
  }
  CHECK(I.measured_C > 0.0);
}

TEST_CASE("shape and exponent guards") {
  Model m = Model::tree(4, 1.0, 1);
  auto x = sin_path(m.grid());
  auto drive = make_drive(canonical_lift(SampledPath(m.grid(), 1, x), 2.9));
  auto scp = scp_like(m, drive, 1, 1);
  scp.q = 8.0;
  scp.qp = 8.0;
  CHECK_THROWS_WITH_AS(rough_stochastic_integrate(scp, 1, m), "exponent constraint violated", RbError);
  scp.q = 2.0;
  scp.qp = 2.0;
  CHECK_THROWS_WITH_AS(rough_stochastic_integrate(scp, 2, m), "integrand shape must match the drive", RbError);
}

TEST_CASE("stability: identical inputs give zero distances") {
  Model m = Model::tree(5, 1.0, 1);
  auto drive = tree_drive(m, 2.0);
  auto scp = scp_like(m, drive, 1, 1);
  for (std::size_t s = 0; s < m.n_samples(); ++s)
    for (std::size_t i = 0; i < m.grid().n_points(); ++i) {
      scp.Y.v(s, i, 0) = std::sin(m.brownian(s, i, 0));
      scp.Yp.v(s, i, 0) = std::cos(m.brownian(s, i, 0));
    }
  StabilityReport rep = stability_audit(scp, scp, 1, m, 2.0);
  for (const StabilityRow& r : rep.rows) {
    CHECK(r.lhs == 0.0);
    CHECK(r.terminal_gap == 0.0);
    CHECK(r.rho == 0.0);
  }
  CHECK(rep.fitted_C == 0.0);
}

TEST_CASE("stability: doubling the integrand scales distances linearly") {
  Model m = Model::tree(5, 1.0, 1);
  auto drive = tree_drive(m, 2.0);
  auto scp = scp_like(m, drive, 1, 1);
  for (std::size_t s = 0; s < m.n_samples(); ++s)
    for (std::size_t i = 0; i < m.grid().n_points(); ++i) {
      scp.Y.v(s, i, 0) = std::sin(m.brownian(s, i, 0));
      scp.Yp.v(s, i, 0) = std::cos(m.brownian(s, i, 0));
    }
  StochasticControlledPath dbl = scp;
  for (double& v : dbl.Y.a) v *= 2.0;
  for (double& v : dbl.Yp.a) v *= 2.0;
  StabilityReport rep = stability_audit(scp, dbl, 1, m, 2.0);
  RoughStochasticIntegral Ia = rough_stochastic_integrate(scp, 1, m);
  const double nI = controlled_norm(Ia.as_controlled, m, 2.0).total;
  CHECK(rep.rows[3].lhs == doctest::Approx(nI).epsilon(1e-10));
  CHECK(rep.rows[1].lhs == doctest::Approx(0.5 * rep.rows[3].lhs).epsilon(1e-10));
  for (const StabilityRow& r : rep.rows) CHECK(r.rho == 0.0);
}

TEST_CASE("stability: shrinking driver perturbations shrink the output gap") {
  Model m = Model::tree(5, 1.0, 1);
  auto x = sin_path(m.grid());
  SampledPath sp(m.grid(), 1, x);
  RoughPath base = canonical_lift(sp, 2.0);
  std::vector<double> cells = base.cells();
  cells[1] += 0.3;
  RoughPath bumped(sp, 2.0, cells);
  auto mk = [&](std::shared_ptr<const RoughDrive> d) {
    auto scp = scp_like(m, std::move(d), 1, 1);
    for (std::size_t s = 0; s < m.n_samples(); ++s)
      for (std::size_t i = 0; i < m.grid().n_points(); ++i) {
        scp.Y.v(s, i, 0) = x[i];
        scp.Yp.v(s, i, 0) = 1.0;
      }
    return scp;
  };
  StabilityReport rep = stability_audit(mk(make_drive(base)), mk(make_drive(bumped)), 1, m, 2.0);
  CHECK(rep.rows[0].rho == doctest::Approx(0.25 * rep.rows[3].rho).epsilon(1e-9));
  CHECK(rep.rows[0].lhs == doctest::Approx(0.25 * rep.rows[3].lhs).epsilon(1e-9));
  CHECK(rep.rows[3].lhs > 0.0);
  CHECK(std::isfinite(rep.fitted_C));
  CHECK(rep.norm_ball > 0.0);
}
