#pragma once
#include <cstddef>
#include <vector>

#include "roughbsde/controlled.hpp"
#include "roughbsde/models.hpp"
#include "roughbsde/rough_path.hpp"
#include "roughbsde/sewing.hpp"

namespace roughbsde {

struct RsiOptions {
  // Window and schedule knobs for the two sewing passes; refinement always runs to
  // the grid floor so the returned values are the finest compensated sums.
  SewingOptions sew;
  bool audit = false;            // per-window local error bound ratios
  std::size_t audit_cap = 16;    // coarsening cap for the audited window endpoints
};

struct WindowAudit {
  std::size_t i0 = 0, i1 = 0;
  double lhs = 0.0;    // ‖∫ − Y_s δX − Y′_s X²‖_m over the window
  double rhs = 0.0;    // (mart q-var + remainder)·|δX|_p-var + |δY′|_q'-var·|X²|_{p/2}-var
  double ratio = 0.0;  // observed constant; 0 when rhs degenerates to 0
};

struct RoughStochasticIntegral {
  EnsField values;  // n_samples × n_points × n, vanishing at the window start
  // The pair (integral, integrand) with the integrand as its derivative.
  StochasticControlledPath as_controlled;
  SewingReport mart_report;
  SewingReport drift_report;
  std::vector<WindowAudit> local_bound_audit;  // filled when opts.audit
  double measured_C = 0.0;                     // max observed window ratio
  int n = 1, e = 1;
};

// Integral of an R^{n×e}-valued controlled integrand (layout [i*e+j], derivative
// [(i*e+j)*e+l]) against its own drive. The martingale part of the integrand is sewn
// per sample with the adapted-germ engine, the remainder deterministically, and the
// two limits are summed. Requires 1/p + 1/q + 1/q' > 1.
RoughStochasticIntegral rough_stochastic_integrate(const StochasticControlledPath& V, int n, const Model& model,
                                                   const RsiOptions& opts = {});

struct StabilityRow {
  double theta = 0.0;           // interpolation weight toward the perturbed input
  double rho = 0.0;             // rough-path distance between the drives
  double input_distance = 0.0;  // controlled distance of the integrands
  double terminal_gap = 0.0;    // L^m gap of the integrand terminal values
  double lhs = 0.0;             // controlled distance of the output pairs
  double ratio = 0.0;           // (lhs − terminal_gap)+ / (K·rho + (1/K + K·rho)·input_distance)
};

struct StabilityReport {
  std::vector<StabilityRow> rows;
  double fitted_C = 0.0;   // max observed row ratio
  double norm_ball = 0.0;  // max input controlled norm, the ball both inputs live in
};

// Integrates Ya, then re-integrates inputs interpolated toward (Yb, its drive) at
// weights 1/4, 1/2, 3/4, 1 and reports output distances against the audited estimate.
StabilityReport stability_audit(const StochasticControlledPath& Ya, const StochasticControlledPath& Yb, int n,
                                const Model& model, double K);

}  // namespace roughbsde
