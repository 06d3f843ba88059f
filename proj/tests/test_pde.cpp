#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "roughbsde/errors.hpp"
#include "roughbsde/pde.hpp"

using namespace roughbsde;

namespace {

SampledPath sine_path(const TimeGrid& grid, double amp, double freq) {
  SampledPath x;
  x.grid = grid;
  x.e = 1;
  x.values.resize(grid.n_points());
  for (std::size_t i = 0; i < grid.n_points(); ++i) x.values[i] = amp * std::sin(freq * grid.t(i));
  return x;
}

std::shared_ptr<const RoughDrive> sine_drive(const TimeGrid& grid, double amp, double freq) {
  return make_drive(canonical_lift(sine_path(grid, amp, freq), 2.5));
}

// Piecewise-linear reduction keeping every stride-th breakpoint.
SampledPath coarsen(const SampledPath& x, std::size_t stride) {
  SampledPath out = x;
  const std::size_t np = x.grid.n_points();
  for (std::size_t i = 0; i < np; ++i) {
    const std::size_t a = std::min((i / stride) * stride, np - 1 - stride);
    const std::size_t b = a + stride;
    const double th = (x.grid.t(i) - x.grid.t(a)) / (x.grid.t(b) - x.grid.t(a));
    out.values[i] = (1.0 - th) * x.value(a, 0) + th * x.value(b, 0);
  }
  return out;
}

MarkovianProblem heat_problem() {
  MarkovianProblem prob;
  prob.sigma = [](double, double) { return 1.0; };
  prob.l = [](double x) { return x * x; };
  return prob;
}

}  // namespace

TEST_CASE("forward walks follow the coefficients") {
  Model m = Model::tree(8, 1.0, 1);
  MarkovianProblem frozen;
  EnsField Sf = simulate_forward_sde(frozen, 3, 0.4, m);
  for (std::size_t s = 0; s < m.n_samples(); ++s)
    for (std::size_t i = 0; i < m.grid().n_points(); ++i) CHECK(Sf.v(s, i, 0) == 0.4);

  MarkovianProblem walk;
  walk.sigma = [](double, double) { return 1.0; };
  EnsField Sw = simulate_forward_sde(walk, 2, -0.1, m);
  for (std::size_t s = 0; s < m.n_samples(); ++s)
    for (std::size_t i = 0; i < m.grid().n_points(); ++i) {
      const double expect = i <= 2 ? -0.1 : -0.1 + m.brownian(s, i, 0) - m.brownian(s, 2, 0);
      CHECK(Sw.v(s, i, 0) == doctest::Approx(expect).epsilon(1e-14));
    }

  MarkovianProblem geo;
  const double mu = 0.1, nu = 0.2;
  geo.b = [mu](double, double x) { return mu * x; };
  geo.sigma = [nu](double, double x) { return nu * x; };
  EnsField Sg = simulate_forward_sde(geo, 0, 1.0, m);
  double mean = 0.0;
  const std::size_t last = m.grid().n_points() - 1;
  for (std::size_t s = 0; s < m.n_samples(); ++s) mean += Sg.v(s, last, 0);
  mean /= static_cast<double>(m.n_samples());
  const double dt = m.grid().dt(0);
  // The walk's mean closes exactly per step; against the continuum it is off by the
  // usual first-order time-step defect.
  CHECK(mean == doctest::Approx(std::pow(1.0 + mu * dt, 8)).epsilon(1e-13));
  CHECK(std::abs(mean - std::exp(mu)) <= mu * mu * dt);
}

TEST_CASE("coefficient audit reports spot constants") {
  MarkovianProblem prob;
  prob.b = [](double, double x) { return 0.3 * x; };
  prob.sigma = [](double, double) { return 1.0; };
  prob.l = [](double x) { return std::cos(x); };
  prob.f = [](double, double, double y, double z) { return 0.2 * y - 0.1 * z; };
  MarkovianAudit rep = audit_markovian(prob, 1.0, -2.0, 2.0);
  CHECK(rep.ok);
  CHECK(rep.b_lip == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(rep.b_sup <= 0.6 + 1e-12);
  CHECK(rep.sigma_sup == 1.0);
  CHECK(rep.sigma_lip == 0.0);
  CHECK(rep.l_sup <= 1.0);
  CHECK(rep.l_lip <= 1.0 + 1e-12);
  CHECK(rep.f_lip_y == doctest::Approx(0.2).epsilon(1e-9));
  CHECK(rep.f_lip_z == doctest::Approx(0.1).epsilon(1e-9));

  MarkovianProblem broken = prob;
  broken.b = [](double, double) { return std::nan(""); };
  CHECK_FALSE(audit_markovian(broken, 1.0, -2.0, 2.0).ok);
}

TEST_CASE("constant terminal data gives a constant surface") {
  Model m = Model::tree(6, 1.0, 1);
  MarkovianProblem prob;
  prob.sigma = [](double, double) { return 1.0; };
  prob.l = [](double) { return 0.7; };
  RoughPdeSolution u = feynman_kac_u(prob, sine_drive(m.grid(), 0.0, 1.0), m, {-1.0, 0.0, 1.0});
  CHECK(u.provenance == PdeProvenance::stochastic);
  for (double val : u.u) CHECK(val == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("heat terminal data is tree exact") {
  Model m = Model::tree(8, 1.0, 1);
  std::vector<double> xs = {-1.0, -0.5, 0.0, 0.5, 1.0};
  RoughPdeSolution u = feynman_kac_u(heat_problem(), sine_drive(m.grid(), 0.0, 1.0), m, xs);
  for (std::size_t ti = 0; ti < m.grid().n_points(); ++ti)
    for (std::size_t xi = 0; xi < xs.size(); ++xi) {
      const double expect = xs[xi] * xs[xi] + (1.0 - m.grid().t(ti));
      CHECK(std::abs(u.at(ti, xi) - expect) <= 1e-10);
    }
  // Terminal row is the terminal function itself.
  for (std::size_t xi = 0; xi < xs.size(); ++xi)
    CHECK(u.at(m.grid().n_points() - 1, xi) == xs[xi] * xs[xi]);
}

TEST_CASE("constant rough coefficients tilt the heat surface") {
  Model m = Model::tree(8, 1.0, 1);
  SampledPath x = sine_path(m.grid(), 0.04, 2.0);
  auto drive = make_drive(canonical_lift(x, 2.5));
  std::vector<double> xs = {-1.0, 0.0, 0.5, 1.0};
  const double g = 0.3;

  MarkovianProblem prob = heat_problem();
  prob.G = [g](double) { return g; };
  RoughPdeSolution u = feynman_kac_u(prob, drive, m, xs);
  double gap = 0.0;
  for (std::size_t ti = 0; ti < m.grid().n_points(); ++ti)
    for (std::size_t xi = 0; xi < xs.size(); ++xi) {
      const double heat = xs[xi] * xs[xi] + (1.0 - m.grid().t(ti));
      const double tilt = std::exp(g * (x.values.back() - x.values[ti]));
      gap = std::max(gap, std::abs(u.at(ti, xi) - tilt * heat));
    }
  CHECK(gap <= 5e-4);

  MarkovianProblem decay = prob;
  const double r = 0.2;
  decay.f = [r](double, double, double y, double) { return -r * y; };
  decay.lipschitz_L = r;
  RoughPdeSolution ud = feynman_kac_u(decay, drive, m, xs);
  double gap_d = 0.0;
  for (std::size_t ti = 0; ti < m.grid().n_points(); ++ti)
    for (std::size_t xi = 0; xi < xs.size(); ++xi) {
      const double heat = xs[xi] * xs[xi] + (1.0 - m.grid().t(ti));
      const double tilt = std::exp(g * (x.values.back() - x.values[ti]) - r * (1.0 - m.grid().t(ti)));
      gap_d = std::max(gap_d, std::abs(ud.at(ti, xi) - tilt * heat));
    }
  CHECK(gap_d <= 1e-2);
}

TEST_CASE("finite difference oracle matches closed forms") {
  TimeGrid grid = TimeGrid::uniform(1.0, 10);
  SampledPath x = sine_path(grid, 0.04, 2.0);

  MarkovianProblem heat = heat_problem();
  RoughPdeSolution uh = fd_pde_oracle(heat, x);
  CHECK(uh.provenance == PdeProvenance::finite_difference);
  double gap = 0.0;
  for (std::size_t ti = 0; ti < grid.n_points(); ++ti)
    for (std::size_t xi = 0; xi < uh.xs.size(); ++xi) {
      if (std::abs(uh.xs[xi]) > 1.5) continue;
      gap = std::max(gap, std::abs(uh.at(ti, xi) - (uh.xs[xi] * uh.xs[xi] + 1.0 - grid.t(ti))));
    }
  CHECK(gap <= 1e-4);

  const double g = 0.3;
  MarkovianProblem tilted = heat_problem();
  tilted.G = [g](double) { return g; };
  RoughPdeSolution ut = fd_pde_oracle(tilted, x);
  double gap_t = 0.0;
  for (std::size_t ti = 0; ti < grid.n_points(); ++ti)
    for (std::size_t xi = 0; xi < ut.xs.size(); ++xi) {
      if (std::abs(ut.xs[xi]) > 1.0) continue;
      const double tilt = std::exp(g * (x.values.back() - x.values[ti]));
      gap_t = std::max(gap_t, std::abs(ut.at(ti, xi) - tilt * uh.at(ti, xi)));
    }
  CHECK(gap_t <= 1e-4);

  MarkovianProblem empty;
  empty.sigma = [](double, double) { return 1.0; };
  RoughPdeSolution uz = fd_pde_oracle(empty, x);
  for (double val : uz.u) CHECK(val == 0.0);
}

TEST_CASE("stochastic and finite difference surfaces agree") {
  Model m = Model::tree(10, 1.0, 1);
  SampledPath x = sine_path(m.grid(), 0.04, 2.0);
  auto drive = make_drive(canonical_lift(x, 2.5));
  std::vector<double> xs = {-1.0, -0.5, 0.0, 0.5, 1.0};

  MarkovianProblem prob = heat_problem();
  prob.G = [](double) { return 0.3; };
  RoughPdeSolution fk = feynman_kac_u(prob, drive, m, xs);
  RoughPdeSolution fd = fd_pde_oracle(prob, x);
  double gap = 0.0;
  for (std::size_t ti = 0; ti < m.grid().n_points(); ++ti)
    for (std::size_t xi = 0; xi < xs.size(); ++xi) {
      const std::size_t j = static_cast<std::size_t>(std::lround((xs[xi] - fd.xs.front()) / 1e-2));
      REQUIRE(std::abs(fd.xs[j] - xs[xi]) <= 1e-12);
      gap = std::max(gap, std::abs(fk.at(ti, xi) - fd.at(ti, j)));
    }
  CHECK(gap <= 2e-2);

  MarkovianProblem forced = prob;
  forced.h = [](double, double x_) { return 0.1 * std::sin(x_); };
  forced.h_t = [](double, double) { return 0.0; };
  forced.h_x = [](double, double x_) { return 0.1 * std::cos(x_); };
  forced.h_xx = [](double, double x_) { return -0.1 * std::sin(x_); };
  forced.H = [](double) { return 0.05; };
  RoughPdeSolution fk2 = feynman_kac_u(forced, drive, m, xs);
  RoughPdeSolution fd2 = fd_pde_oracle(forced, x);
  double gap2 = 0.0;
  for (std::size_t ti = 0; ti < m.grid().n_points(); ++ti)
    for (std::size_t xi = 0; xi < xs.size(); ++xi) {
      const std::size_t j = static_cast<std::size_t>(std::lround((xs[xi] - fd2.xs.front()) / 1e-2));
      gap2 = std::max(gap2, std::abs(fk2.at(ti, xi) - fd2.at(ti, j)));
    }
  CHECK(gap2 <= 2e-2);
}

TEST_CASE("surfaces track the driving signal") {
  Model m = Model::tree(8, 1.0, 1);
  SampledPath x = sine_path(m.grid(), 0.1, 2.0);
  auto ref = make_drive(canonical_lift(x, 2.5));
  MarkovianProblem prob = heat_problem();
  prob.G = [](double) { return 0.3; };
  std::vector<double> xs = {-1.0, 0.0, 1.0};

  std::vector<std::shared_ptr<const RoughDrive>> seq;
  for (std::size_t stride : {8, 4, 2})
    seq.push_back(make_drive(canonical_lift(coarsen(x, stride), 2.5)));
  std::vector<PdeContinuityRow> rows = continuity_in_x_audit(prob, seq, ref, m, xs);
  REQUIRE(rows.size() == 3);
  for (std::size_t k = 1; k < rows.size(); ++k) {
    CHECK(rows[k].input_distance < rows[k - 1].input_distance);
    CHECK(rows[k].sup_distance < rows[k - 1].sup_distance);
  }
  CHECK(rows.back().sup_distance < 0.5 * rows.front().sup_distance);

  std::vector<PdeContinuityRow> still = continuity_in_x_audit(prob, {ref, ref}, ref, m, xs);
  for (const PdeContinuityRow& row : still) {
    CHECK(row.input_distance == 0.0);
    CHECK(row.sup_distance == 0.0);
  }
}

TEST_CASE("value surface matches the backward solution along simulated paths") {
  Model m = Model::tree(6, 1.0, 1);
  SampledPath xp = sine_path(m.grid(), 0.04, 2.0);
  auto drive = make_drive(canonical_lift(xp, 2.5));
  const double x0 = 0.2, g = 0.3;

  MarkovianProblem prob = heat_problem();
  prob.G = [g](double) { return g; };
  prob.f = [](double, double, double y, double) { return -0.1 * y; };
  prob.lipschitz_L = 0.1;
  prob.h = [](double, double x_) { return 0.05 * std::sin(x_); };
  prob.h_t = [](double, double) { return 0.0; };
  prob.h_x = [](double, double x_) { return 0.05 * std::cos(x_); };
  prob.h_xx = [](double, double x_) { return -0.05 * std::sin(x_); };

  // Lattice of reachable walk values across all times.
  const double step = std::sqrt(m.grid().dt(0));
  std::vector<double> xs;
  for (int k = -6; k <= 6; ++k) xs.push_back(x0 + k * step);
  RoughPdeSolution u = feynman_kac_u(prob, drive, m, xs);

  // One global solve of the same composed problem, assembled from public pieces.
  EnsField S = simulate_forward_sde(prob, 0, x0, m);
  LinearRoughBsdeProblem lp;
  lp.n = 1;
  lp.e = 1;
  lp.drive = drive;
  lp.G = constant_coefficient(m, 1, 1, {g}, drive);
  lp.H = zero_forcing(m, 1, 1, drive);
  for (std::size_t s = 0; s < m.n_samples(); ++s)
    for (std::size_t i = 0; i < m.grid().n_points(); ++i)
      lp.H.Y.v(s, i, 0) = prob.h(m.grid().t(i), S.v(s, i, 0));
  lp.xi.resize(m.n_samples());
  const std::size_t last = m.grid().n_points() - 1;
  for (std::size_t s = 0; s < m.n_samples(); ++s) lp.xi[s] = prob.l(S.v(s, last, 0));
  lp.driver.lipschitz_L = prob.lipschitz_L;
  const TimeGrid grid = m.grid();
  lp.driver.f = [&S, &prob, grid](double t, const double* y, const double* z, std::size_t s, double* out) {
    const auto& pts = grid.points();
    const auto it = std::upper_bound(pts.begin(), pts.end(), t);
    const std::size_t i = it == pts.begin() ? 0 : std::min<std::size_t>(it - pts.begin() - 1, pts.size() - 1);
    out[0] = prob.f(t, S.v(s, i, 0), y[0], z[0]);
  };
  RoughBsdeSolution sol = solve_linear_rough_bsde(lp, m);

  double worst = 0.0;
  for (std::size_t s = 0; s < m.n_samples(); ++s)
    for (std::size_t i = 0; i < m.grid().n_points(); ++i) {
      const long k = std::lround((S.v(s, i, 0) - x0) / step);
      const std::size_t xi = static_cast<std::size_t>(k + 6);
      REQUIRE(std::abs(xs[xi] - S.v(s, i, 0)) <= 1e-9);
      worst = std::max(worst, std::abs(sol.Y.v(s, i, 0) - u.at(i, xi)));
    }
  CHECK(worst <= 1e-8);
}

TEST_CASE("malformed inputs and annotated failures") {
  Model m = Model::tree(6, 1.0, 1);
  MarkovianProblem prob = heat_problem();
  auto drive = sine_drive(m.grid(), 0.0, 1.0);

  CHECK_THROWS_WITH_AS(feynman_kac_u(prob, drive, m, {}), "value surface needs at least one x probe", RbError);
  CHECK_THROWS_WITH_AS(feynman_kac_u(prob, nullptr, m, {0.0}), "controlled path needs a drive", RbError);
  Model m5 = Model::tree(5, 1.0, 1);
  CHECK_THROWS_WITH_AS(feynman_kac_u(prob, sine_drive(m5.grid(), 0.0, 1.0), m, {0.0}), "grid mismatch", RbError);
  CHECK_THROWS_WITH_AS(simulate_forward_sde(prob, 7, 0.0, m), "start index beyond the grid", RbError);
  CHECK_THROWS_WITH_AS(audit_markovian(prob, 1.0, 2.0, -2.0), "audit needs a nondegenerate x range", RbError);

  SampledPath wide;
  wide.grid = m.grid();
  wide.e = 2;
  wide.values.assign(2 * m.grid().n_points(), 0.0);
  CHECK_THROWS_WITH_AS(fd_pde_oracle(prob, wide), "finite difference oracle needs a scalar drive", RbError);
  SampledPath flat = sine_path(m.grid(), 0.0, 1.0);
  FdPdeOptions bad;
  bad.dx = 0.0;
  CHECK_THROWS_WITH_AS(fd_pde_oracle(prob, flat, bad), "malformed finite difference grid", RbError);

  Model m1 = Model::tree(1, 1.0, 1);
  SampledPath steep;
  steep.grid = m1.grid();
  steep.e = 1;
  steep.values = {0.0, 1.5};
  MarkovianProblem rough = heat_problem();
  rough.G = [](double) { return 2.0; };
  CHECK_THROWS_WITH_AS(feynman_kac_u(rough, make_drive(canonical_lift(steep, 2.5)), m1, {0.3}),
                       "rough path too rough for grid at (t=0, x=0.3)", RbError);
}
