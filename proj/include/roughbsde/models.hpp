#pragma once

#include <cstdint>
#include <vector>

#include "roughbsde/field.hpp"
#include "roughbsde/grid.hpp"

namespace roughbsde {

std::uint64_t splitmix64(std::uint64_t x);
// Counter-based standard normal: the same (seed, sample, step, comp) always yields
// the same draw, independent of evaluation order.
double counter_normal(std::uint64_t seed, std::uint64_t sample, std::uint64_t step, std::uint64_t comp);

// d-dimensional scaled random walk with N steps on [0,T]; every leaf is one sample,
// enumerated so that the step-0 bit is most significant. Samples sharing their first
// i steps therefore form contiguous blocks of size 2^{d(N-i)}, which makes time-t_i
// conditional expectations exact block averages.
struct BinomialTree {
  int N = 0;
  int d = 1;
  double T = 1.0;
  double dt = 0.0;
  TimeGrid grid;
  std::size_t n_samples = 0;

  BinomialTree(int N_steps, double horizon, int dims);
  double inc(std::size_t sample, std::size_t step, int comp) const;
  double w(std::size_t sample, std::size_t point, int comp) const;
};

// Monte Carlo Brownian increments; W is cumulative with W(·,0,·) = 0.
struct BrownianEnsemble {
  TimeGrid grid;
  std::size_t n_samples = 0;
  int d = 1;
  std::uint64_t seed = 0;
  EnsField W;

  double w(std::size_t sample, std::size_t point, int comp) const { return W.v(sample, point, comp); }
  double inc(std::size_t sample, std::size_t cell, int comp) const {
    return W.v(sample, cell + 1, comp) - W.v(sample, cell, comp);
  }
};

BrownianEnsemble simulate_brownian(const TimeGrid& grid, std::size_t n_samples, int d, std::uint64_t seed);

// Least-squares conditional expectation settings for the ensemble backend.
struct RegressionSpec {
  int degree = 3;
  double ridge = 1e-10;
};

enum class ModelKind { tree, ensemble };

// Filtration backend. Conditional expectations are exact block averages on the tree
// and polynomial least-squares projections of degree <= spec.degree on the ensemble
// (regressors: Brownian state at the conditioning time plus any extra state set via
// set_regression_state). Projections are genuine projections, so conditioning twice
// at the same time is idempotent up to roundoff.
class Model {
public:
  static Model tree(int N_steps, double horizon, int dims);
  static Model ensemble(BrownianEnsemble ens, RegressionSpec spec = {});

  ModelKind kind() const { return kind_; }
  std::size_t n_samples() const { return n_samples_; }
  const TimeGrid& grid() const { return grid_; }
  int d() const { return d_; }
  double increment(std::size_t sample, std::size_t cell, int comp) const;
  double brownian(std::size_t sample, std::size_t point, int comp) const;

  // vals: flat (n_samples × nv); out: conditional expectations given time t_i, same
  // layout. Rank-deficient regressions fall back to a ridge solve and set *warn.
  void condexp(const double* vals, int nv, std::size_t ti, double* out, bool* warn = nullptr) const;
  std::vector<double> condexp_v(const std::vector<double>& vals, int nv, std::size_t ti, bool* warn = nullptr) const;

  // Extra regressors for ensemble conditioning (full field; column c at time t_i is
  // state.v(s, ti, c)). Empty field clears.
  void set_regression_state(EnsField state);
  const RegressionSpec& regression() const { return reg_; }

private:
  Model() = default;
  ModelKind kind_ = ModelKind::tree;
  TimeGrid grid_;
  std::size_t n_samples_ = 0;
  int d_ = 1;
  // tree backend
  int tree_N_ = 0;
  double tree_dt_ = 0.0;
  // ensemble backend
  EnsField W_;
  RegressionSpec reg_;
  EnsField state_;
};

struct MartingaleDecomposition {
  EnsField YM;  // martingale part, zero at time 0
  EnsField YJ;  // remainder with conditionally deterministic increments
  double centering_audit = 0.0;  // max_i L2 norm of E_i[δYM_i]; ~0 by construction
  bool regression_warning = false;
};

// Splits Y into YM + YJ with δYM_i = δY_i − E_i[δY_i].
MartingaleDecomposition martingale_decomposition(const EnsField& Y, const Model& model);

// Predictable density Z (nv·d components per point, stored at the left cell index,
// zeros at the last point) with Z_c ≈ E_i[δM · δW_c]/dt_i. Exact pathwise on the
// one-dimensional tree. Errors with "representation requires martingale" when
// E_i[M_{i+1}] != M_i beyond tolerance.
EnsField martingale_representation(const EnsField& M, const Model& model, bool* warn = nullptr);

}  // namespace roughbsde
