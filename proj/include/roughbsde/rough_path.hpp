#pragma once
#include <cstddef>
#include <memory>
#include <vector>

#include "roughbsde/grid.hpp"

namespace roughbsde {

struct BrownianEnsemble;

// Two-step rough path: level-1 samples (X_0 = 0 enforced at construction) plus one
// e×e level-2 matrix per consecutive grid cell. Level 2 over arbitrary grid pairs is
// reconstructed through Chen's relation from a prefix table, so the relation holds by
// construction for stored cells.
//
// Level-2 index convention: entry [a*e + b] of a cell pairs the increment component a
// (the running-increment factor) with the integrator component b.
class RoughPath {
public:
  RoughPath() = default;
  // cells: (n_cells × e*e), row-major per cell. p must lie in [2,3).
  RoughPath(SampledPath path, double p, std::vector<double> cells);

  const SampledPath& path() const { return path_; }
  const TimeGrid& grid() const { return path_.grid; }
  int e() const { return path_.e; }
  double p() const { return p_; }
  std::size_t n_cells() const { return path_.grid.n_cells(); }
  const std::vector<double>& cells() const { return cells_; }
  const double* cell(std::size_t i) const { return cells_.data() + i * ee(); }

  // δX_{t_i,t_j} into out[e]; i <= j.
  void delta(std::size_t i, std::size_t j, double* out) const;
  // Level 2 over [t_i, t_j] into out[e*e]; i <= j.
  void level2(std::size_t i, std::size_t j, double* out) const;
  // Same, addressed by grid times. Throws "time not on grid" / errors on s > t.
  std::vector<double> reconstruct_level2(double s, double t) const;

private:
  std::size_t ee() const { return static_cast<std::size_t>(path_.e) * path_.e; }
  SampledPath path_;
  double p_ = 2.0;
  std::vector<double> cells_;
  std::vector<double> prefix_;  // (n_points × e*e): level 2 over [0, t_i]
};

struct RoughPathMetrics {
  double p_var_level1 = 0.0;
  double p2_var_level2 = 0.0;
  double total = 0.0;
};

// Exact per-cell lift of the piecewise-linear interpolant: cell level 2 = ½ δX ⊗ δX.
RoughPath canonical_lift(const SampledPath& x, double p);

// Per-sample lift of a Brownian ensemble by left-point sums on the simulation grid;
// target grid points must be simulation grid points.
std::vector<RoughPath> ito_brownian_lift(const BrownianEnsemble& ens, double p, const TimeGrid& target);

// Variation metrics over the index window [i0, i1]; cap coarsens the breakpoint set
// (0 = exact grid resolution).
RoughPathMetrics rough_metrics(const RoughPath& rp, std::size_t i0, std::size_t i1, std::size_t cap = 0);
RoughPathMetrics rough_metrics(const RoughPath& rp);

// p-variation distance of two rough paths on the same grid with the same p.
double rough_distance(const RoughPath& a, const RoughPath& b);

struct ChenReport {
  double max_rel_violation = 0.0;
  std::size_t triples = 0;
  bool ok = true;
};
// Additive-consistency check over grid triples s <= u <= t.
ChenReport chen_check(const RoughPath& rp, double rel_tol = 1e-12);

// Rough bracket over [0, t_i]: δX_{0,t}⊗δX_{0,t} − 2·Sym(level2_{0,t}); out has e*e entries.
std::vector<double> rough_bracket(const RoughPath& rp, std::size_t i);

// Shared (deterministic) or per-sample driving rough path.
struct RoughDrive {
  std::vector<RoughPath> paths;
  bool shared() const { return paths.size() == 1; }
  const RoughPath& at(std::size_t sample) const { return shared() ? paths[0] : paths[sample]; }
};
std::shared_ptr<const RoughDrive> make_drive(RoughPath rp);
std::shared_ptr<const RoughDrive> make_drive(std::vector<RoughPath> rps);

// Sub-path on [t_{i0}, T] reindexed to start at time 0; increments and cells preserved.
RoughPath restrict_shifted(const RoughPath& rp, std::size_t i0);

}  // namespace roughbsde
