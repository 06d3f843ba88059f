#pragma once
#include <cstddef>
#include <memory>
#include <vector>

#include "roughbsde/bsde.hpp"
#include "roughbsde/controlled.hpp"
#include "roughbsde/models.hpp"
#include "roughbsde/rough_path.hpp"

namespace roughbsde {

// Terminal value, Lipschitz generator, and rough drift data (G Y + H) d X for the
// linear rough backward equation. xi is flat (n_samples × n); G maps R^n to n×e
// matrices, H is an R^{n×e}-valued controlled forcing. Both must ride the same drive.
struct LinearRoughBsdeProblem {
  std::vector<double> xi;
  Driver driver;
  EssBoundedControlledPath G;
  StochasticControlledPath H;
  std::shared_ptr<const RoughDrive> drive;
  int n = 1, e = 1;
};

// Convenience builders for problem data.
StochasticControlledPath zero_forcing(const Model& model, int n, int e, std::shared_ptr<const RoughDrive> drive);
EssBoundedControlledPath constant_coefficient(const Model& model, int n, int e, const std::vector<double>& mat,
                                              std::shared_ptr<const RoughDrive> drive);

enum class WindowMode { automatic, whole, fixed_cells };

struct RoughBsdeOptions {
  double C_knob = 2.0;   // generic constant in the window rule K = 4(1+C)(1+|G|)
  double tol = 1e-12;    // Picard stop on the successive K-weighted distance
  int max_iter = 100;
  WindowMode window_mode = WindowMode::automatic;
  std::size_t fixed_cells = 1;    // window length for WindowMode::fixed_cells
  double bisect_ratio = 0.9;      // observed ratio above which a window is split
  bool start_terminal_extension = false;  // Picard start: zero, or xi - (G xi + H) deltaX
  std::size_t norm_cap = 64;      // breakpoint cap for window norms and metrics
};

struct WindowInfo {
  std::size_t i0 = 0, i1 = 0;
  double K = 1.0, eps = 0.0;
  double rough_norm = 0.0;  // drive variation over the window
  std::vector<double> ratios;
  int iterations = 0;
  bool converged = true;
};

struct RoughBsdeSolution {
  EnsField Y;  // n per point
  EnsField Z;  // n*d per point, left cells, zero at the last point
  StochasticControlledPath controlled;  // (Y, GY+H) with exponents (p, p)
  std::vector<WindowInfo> windows;
  double residual = 0.0;  // max over times of the L2 defect of the backward identity
  bool converged = true;
  double K = 1.0, eps = 0.0;
};

struct ProblemAudit {
  double xi_l2 = 0.0;
  double f00_l2 = 0.0;          // max over times of the L2 norm of f(t, 0, 0)
  double lipschitz_spot = 0.0;  // max observed difference quotient on random probes
  double g_norm = 0.0;
  double h_norm = 0.0;
  bool ok = true;  // all pieces finite
};
ProblemAudit audit_problem(const LinearRoughBsdeProblem& prob, const Model& model);

struct PicardState {
  EnsField Y;  // n per point
  EnsField Z;  // n*d per point
};

// One application of the fixed-point map on [t_{i0}, t_{i1}] with terminal data xi_w:
// substitute the current state into f and into the rough drift, condition the total,
// and read the next state off the martingale. Rows outside the window are flat.
PicardState picard_step_phi(const LinearRoughBsdeProblem& prob, const Model& model, const PicardState& cur,
                            std::size_t i0, std::size_t i1, const std::vector<double>& xi_w);
PicardState picard_step_phi(const LinearRoughBsdeProblem& prob, const Model& model, const PicardState& cur);

RoughBsdeSolution solve_linear_rough_bsde(const LinearRoughBsdeProblem& prob, const Model& model,
                                          const RoughBsdeOptions& opts = {});

// Closed form for scalar constant-coefficient problems on a shared deterministic
// drive with zero forcing and zero generator: Y_t = exp(g (X_T - X_t)) E_t xi.
EnsField duality_oracle(double g, const std::vector<double>& xi, const RoughPath& X, const Model& model);

struct BoundednessRow {
  double controlled_norm_total = 0.0;  // weight-1 norm of (Y, GY+H)
  double z_l2 = 0.0;
  double combined = 0.0;
};
std::vector<BoundednessRow> boundedness_audit(const std::vector<LinearRoughBsdeProblem>& family, const Model& model,
                                              const RoughBsdeOptions& opts = {});

struct SolutionContinuityRow {
  double input_distance = 0.0;     // terminal L2 + H distance + G distance + drive distance
  double solution_distance = 0.0;  // K-weighted controlled distance + K L2 gap of Z
};
std::vector<SolutionContinuityRow> rough_bsde_continuity_audit(const std::vector<LinearRoughBsdeProblem>& seq,
                                                               const LinearRoughBsdeProblem& ref, const Model& model,
                                                               double K, const RoughBsdeOptions& opts = {});

}  // namespace roughbsde
