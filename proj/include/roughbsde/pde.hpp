#pragma once
#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "roughbsde/bsde.hpp"
#include "roughbsde/field.hpp"
#include "roughbsde/grid.hpp"
#include "roughbsde/models.hpp"
#include "roughbsde/rough_bsde.hpp"
#include "roughbsde/rough_path.hpp"

namespace roughbsde {

// Scalar Markovian data (one spatial dimension, one value dimension, scalar drive):
// forward coefficients, terminal value, running driver, and the rough-drift
// ingredients. Every slot is optional; an empty function means zero. h carries its
// own derivatives so the forcing lifts without symbolic differentiation.
struct MarkovianProblem {
  std::function<double(double t, double x)> b;
  std::function<double(double t, double x)> sigma;
  std::function<double(double x)> l;
  std::function<double(double t, double x, double y, double z)> f;
  double lipschitz_L = 0.0;
  std::function<double(double t)> G;
  std::function<double(double t)> Gp;
  std::function<double(double t)> H;
  std::function<double(double t)> Hp;
  std::function<double(double t, double x)> h;
  std::function<double(double t, double x)> h_t;
  std::function<double(double t, double x)> h_x;
  std::function<double(double t, double x)> h_xx;
};

// Spot check of boundedness and difference-quotient Lipschitz constants on random
// probes in [x_lo, x_hi] x [0, T], with |y|, |z| <= 1 for the driver slots.
struct MarkovianAudit {
  double b_sup = 0.0, sigma_sup = 0.0, l_sup = 0.0;
  double b_lip = 0.0, sigma_lip = 0.0, l_lip = 0.0;
  double f_lip_y = 0.0, f_lip_z = 0.0;
  bool ok = true;  // every probed value finite
};
MarkovianAudit audit_markovian(const MarkovianProblem& prob, double T, double x_lo, double x_hi, int probes = 64);

// Euler walk S_{i+1} = S_i + b dt + sigma dW from (start, x); rows before the start
// stay at x so the field is defined on the whole grid.
EnsField simulate_forward_sde(const MarkovianProblem& prob, std::size_t start, double x, const Model& model);

enum class PdeProvenance { stochastic, finite_difference };

struct RoughPdeSolution {
  TimeGrid grid;
  std::vector<double> xs;
  std::vector<double> u;  // row-major (time point, x index)
  PdeProvenance provenance = PdeProvenance::stochastic;
  double at(std::size_t ti, std::size_t xi) const { return u[ti * xs.size() + xi]; }
};

// Value surface from the backward representation: for each (t, x) the forward walk
// is frozen at x before t, the forcing h(S) + H is lifted with zero derivative for
// the h part, and the root of the linear rough solve fills the entry. Solver errors
// are rethrown with the offending (t, x) appended.
RoughPdeSolution feynman_kac_u(const MarkovianProblem& prob, std::shared_ptr<const RoughDrive> drive,
                               const Model& model, const std::vector<double>& xs,
                               const RoughBsdeOptions& opts = {});

struct FdPdeOptions {
  double x_lo = -6.0, x_hi = 6.0;
  double dx = 1e-2;
  double dt_target = 5e-3;  // drive cells split until each substep is below this
};

// Crank-Nicolson oracle for the smooth-drive system on one spatial dimension: value
// and rough-drift terms implicit, driver source lagged one substep with a single
// corrector pass, far-field rows pinned to the terminal function. The drive enters
// through its piecewise-linear slope, so the surface is reported at the drive
// breakpoints.
RoughPdeSolution fd_pde_oracle(const MarkovianProblem& prob, const SampledPath& x, const FdPdeOptions& opts = {});

struct PdeContinuityRow {
  double input_distance = 0.0;  // rough-path distance to the reference drive
  double sup_distance = 0.0;    // max over the (t, x) probe surface of the value gap
};

// Feynman-Kac surfaces for each approximating drive, tabulated against the surface
// for the reference drive.
std::vector<PdeContinuityRow> continuity_in_x_audit(const MarkovianProblem& prob,
                                                    const std::vector<std::shared_ptr<const RoughDrive>>& seq,
                                                    std::shared_ptr<const RoughDrive> ref, const Model& model,
                                                    const std::vector<double>& xs,
                                                    const RoughBsdeOptions& opts = {});

}  // namespace roughbsde
