#pragma once
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "roughbsde/bsde.hpp"
#include "roughbsde/grid.hpp"
#include "roughbsde/models.hpp"
#include "roughbsde/rough_path.hpp"

namespace roughbsde {

// Spatial coefficient field y -> L(R^e, R^n) with derivatives up to third order.
// g writes n*e values as out[i*e + j]; each derivative appends one innermost input
// index of size n, so Dg is [(i*e+j)*n + k], D2g is [((i*e+j)*n + k)*n + l], and so
// on. Missing derivatives are filled by central finite differences (step 1e-5) of
// the next lower order. gamma_norm is the caller-declared smoothness bound.
struct VectorField {
  int n = 1, e = 1;
  std::function<void(const double* y, double* out)> g;
  std::function<void(const double* y, double* out)> Dg;
  std::function<void(const double* y, double* out)> D2g;
  std::function<void(const double* y, double* out)> D3g;
  double gamma_norm = 1.0;
};

VectorField vf_zero(int n, int e);
VectorField vf_constant(int n, int e, std::vector<double> c);
// g(y) = A y with A flattened as [(i*e+j)*n + k].
VectorField vf_linear(int n, int e, std::vector<double> A);
// Scalar bounded field g(y) = amp * sin(freq * y) with analytic derivatives.
VectorField vf_scalar_sin(double amp, double freq);

struct FdConsistencyReport {
  double d1_gap = 0.0;  // supplied Dg vs FD of g, relative
  double d2_gap = 0.0;
  double d3_gap = 0.0;
  bool ok = true;  // every supplied derivative within 1e-6 relative of its FD
};
FdConsistencyReport vf_fd_consistency(const VectorField& field, std::uint64_t seed = 1, int probes = 32);

// Backward solution flow phi_t(y) = y + int_t^T g(phi_r(y)) dX_r of a piecewise
// linear drive, tabulated at the grid times over a fixed probe set together with
// its first three spatial derivatives from the variational equations.
struct SolutionFlow {
  TimeGrid grid;
  int n = 1, e = 1;
  std::vector<double> probes;  // nq points, flattened [q*n + i]
  std::size_t nq = 0;
  // Flattened per (time, probe): phi n, Dphi n*n, D2phi n^3, D3phi n^4.
  std::vector<double> phi, Dphi, D2phi, D3phi;
  std::vector<double> hull_lo, hull_hi;  // per-dimension probe range
  double drive_pvar = 0.0;               // level-1 p-variation of the drive

  const double* phi_at(std::size_t ti, std::size_t q) const { return phi.data() + (ti * nq + q) * n; }
  const double* dphi_at(std::size_t ti, std::size_t q) const { return Dphi.data() + (ti * nq + q) * n * n; }
  const double* d2phi_at(std::size_t ti, std::size_t q) const { return D2phi.data() + (ti * nq + q) * n * n * n; }
  const double* d3phi_at(std::size_t ti, std::size_t q) const {
    return D3phi.data() + (ti * nq + q) * n * n * n * n;
  }
  // Third-order Taylor refinement from the nearest probe. Any output pointer may be
  // null. Returns false when y lies outside the probe hull (still evaluates).
  bool eval(std::size_t ti, const double* y, double* phi_out, double* dphi_out, double* d2phi_out) const;
  // Newton inverse psi_t: solves phi_t(y) = x for y.
  void inverse(std::size_t ti, const double* x, double* y_out) const;
};

struct FlowOptions {
  int substeps = 8;       // RK4 steps per grid cell
  double pvar_q = 2.5;    // exponent for the recorded drive p-variation
};
SolutionFlow solve_backward_flow(const VectorField& field, const SampledPath& drive, std::vector<double> probes,
                                 const FlowOptions& opts = {});

// Driver substitution f~(t, y~, z~) = (Dphi)^{-1} ( f(t, phi, Dphi z~) + 1/2 D2phi z~ z~ )
// with the quadratic-growth envelope measured on random probes.
struct TransformedDriver {
  Driver driver;
  double measured_c_value = 0.0;   // (|f~| + |d_y f~|) / (lambda + mu^2 + |X|_p + |y~|^2 + |z~|^2)
  double measured_c_zslope = 0.0;  // |d_z f~| / (mu + |X|_p + |y~| + |z~|)
  std::shared_ptr<long> extrapolation_queries;  // bumped whenever y~ leaves the probe hull
};
TransformedDriver transformed_driver(std::shared_ptr<const SolutionFlow> flow, const Driver& f);

struct NonlinearOptions {
  int levels = 4;
  int substeps = 8;
  double eps_small = 0.1;      // gate on |xi|_inf, the driver envelope, and |X|_p-var
  double probe_spacing = 0.02;
  double probe_margin = 2.0;   // hull half-width factor over the data scale
  QuadraticConfig quad;
};

struct NonlinearLevel {
  int cells = 0;           // segments of the piecewise-linear approximation
  double lift_total = 0.0; // rough metrics total of the level's lift
  double cauchy = 0.0;     // |Y^k - Y^{k-1}|_inf + BMO gap of Z, zero for the first level
  double flow_sup = 0.0;   // max over probes and times of |phi - id|
  double flow_C = 0.0;     // flow_sup relative to the level's lift size
  double residual = 0.0;   // max over cells of the L2 defect of the mapped-back identity
  double y_sup = 0.0;
  bool quad_converged = true;
};

struct NonlinearSolution {
  EnsField Y, Z;
  BsdeSolution tilde;  // finest-level transformed solution
  std::vector<NonlinearLevel> levels;
  double lift_bound_ratio = 0.0;  // max over levels of lift total / input lift total
  bool converged = true;
};

// Smooth-approximation construction: dyadic piecewise-linear reductions of X, one
// flow transform and one small-data quadratic solve per level, mapped back through
// the flow. The per-level Cauchy distances evidence the limit.
NonlinearSolution solve_nonlinear_rough_bsde(const std::vector<double>& xi, const Driver& f, const VectorField& field,
                                             const RoughPath& X, const Model& model, const NonlinearOptions& opts = {});

}  // namespace roughbsde
