#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "roughbsde/field.hpp"
#include "roughbsde/grid.hpp"
#include "roughbsde/models.hpp"

namespace roughbsde {

// Two-parameter integrand A_{s,t}; eval fills out[nv] for grid indices i <= j.
// A_{t,t} = 0 is part of the contract and is spot-audited.
struct Germ {
  int nv = 1;
  bool adapted = false;
  std::function<void(std::size_t sample, std::size_t i, std::size_t j, double* out)> eval;
};

struct SewingOptions {
  double rel_tol = 1e-3;          // relative Cauchy tolerance between refinement levels
  std::size_t schedule_base = 2;  // partition stride shrinks by this factor per level
  bool always_floor = false;      // ignore early convergence, always refine to the grid
  std::size_t max_levels = 64;
  std::size_t centering_full_limit = 24;  // full triple audit up to this many window points
  std::size_t i0 = 0;                     // window start index
  std::size_t i1 = static_cast<std::size_t>(-1);  // window end index (npoints-1 when unset)
};

struct SewingReport {
  EnsField values;                        // compensated-sum limit; zero outside the window
  std::vector<double> refinement_errors;  // sup_t L^m gap between successive levels
  bool converged = false;
  double m = 2.0;
  double final_scale = 0.0;               // sup_t L^m magnitude of the finest level
  double centering_audit = 0.0;           // stochastic variant only
  bool centering_ok = true;
  std::size_t centering_triples = 0;
  bool nonincreasing_after_burnin = true;
};

// Compensated partition sums A -> 𝒜 with 𝒜_{t_{i0}} = 0, refined until the Cauchy
// criterion or the grid floor. Sample-independent germs still run per sample.
SewingReport sew_deterministic(const Germ& germ, const TimeGrid& grid, std::size_t n_samples, double m,
                               const SewingOptions& opts = {});

// Same sums per sample; additionally audits the conditional centering
// E_s[A_{s,t} - A_{s,u} - A_{u,t}] over grid triples through the model's backend.
SewingReport sew_stochastic(const Germ& germ, const TimeGrid& grid, const Model& model, double m,
                            const SewingOptions& opts = {});

}  // namespace roughbsde
