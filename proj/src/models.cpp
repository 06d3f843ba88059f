#include "roughbsde/models.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "roughbsde/errors.hpp"

namespace roughbsde {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double counter_normal(std::uint64_t seed, std::uint64_t sample, std::uint64_t step, std::uint64_t comp) {
  std::uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ sample);
  k = splitmix64(k ^ step);
  k = splitmix64(k ^ comp);
  const std::uint64_t r1 = splitmix64(k);
  const std::uint64_t r2 = splitmix64(r1 ^ 0xd1342543de82ef95ULL);
  // Uniforms in (0,1); the +0.5 offset keeps u1 away from 0 for the log.
  const double u1 = (static_cast<double>(r1 >> 11) + 0.5) * 0x1p-53;
  const double u2 = (static_cast<double>(r2 >> 11) + 0.5) * 0x1p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

BinomialTree::BinomialTree(int N_steps, double horizon, int dims)
    : N(N_steps), d(dims), T(horizon), grid() {
  if (N < 1 || d < 1) fail(ErrCode::invalid_argument, "tree needs at least one step and one dimension");
  if (!(T > 0.0)) fail(ErrCode::invalid_argument, "tree horizon must be positive");
  if (static_cast<long long>(N) * d > 20) fail(ErrCode::invalid_argument, "tree size cap exceeded");
  dt = T / N;
  grid = TimeGrid::uniform(T, static_cast<std::size_t>(N));
  n_samples = std::size_t{1} << (static_cast<std::size_t>(d) * N);
}

double BinomialTree::inc(std::size_t sample, std::size_t step, int comp) const {
  const std::size_t bit = static_cast<std::size_t>(d) * N - 1 - (step * d + static_cast<std::size_t>(comp));
  return ((sample >> bit) & 1u) ? std::sqrt(dt) : -std::sqrt(dt);
}

double BinomialTree::w(std::size_t sample, std::size_t point, int comp) const {
  double acc = 0.0;
  for (std::size_t s = 0; s < point; ++s) acc += inc(sample, s, comp);
  return acc;
}

BrownianEnsemble simulate_brownian(const TimeGrid& grid, std::size_t n_samples, int d, std::uint64_t seed) {
  if (n_samples < 1 || d < 1) fail(ErrCode::invalid_argument, "ensemble needs samples and dimensions");
  BrownianEnsemble ens;
  ens.grid = grid;
  ens.n_samples = n_samples;
  ens.d = d;
  ens.seed = seed;
  ens.W = EnsField(n_samples, grid.n_points(), d);
  for (std::size_t s = 0; s < n_samples; ++s)
    for (std::size_t i = 0; i < grid.n_cells(); ++i) {
      const double sq = std::sqrt(grid.dt(i));
      for (int c = 0; c < d; ++c)
        ens.W.v(s, i + 1, c) = ens.W.v(s, i, c) + sq * counter_normal(seed, s, i, static_cast<std::uint64_t>(c));
    }
  return ens;
}

Model Model::tree(int N_steps, double horizon, int dims) {
  BinomialTree t(N_steps, horizon, dims);
  Model m;
  m.kind_ = ModelKind::tree;
  m.grid_ = t.grid;
  m.n_samples_ = t.n_samples;
  m.d_ = t.d;
  m.tree_N_ = t.N;
  m.tree_dt_ = t.dt;
  return m;
}

Model Model::ensemble(BrownianEnsemble ens, RegressionSpec spec) {
  if (spec.degree < 1) fail(ErrCode::invalid_argument, "regression degree must be at least 1");
  Model m;
  m.kind_ = ModelKind::ensemble;
  m.grid_ = ens.grid;
  m.n_samples_ = ens.n_samples;
  m.d_ = ens.d;
  m.W_ = std::move(ens.W);
  m.reg_ = spec;
  return m;
}

double Model::increment(std::size_t sample, std::size_t cell, int comp) const {
  if (kind_ == ModelKind::tree) {
    const std::size_t bit =
        static_cast<std::size_t>(d_) * tree_N_ - 1 - (cell * d_ + static_cast<std::size_t>(comp));
    return ((sample >> bit) & 1u) ? std::sqrt(tree_dt_) : -std::sqrt(tree_dt_);
  }
  return W_.v(sample, cell + 1, comp) - W_.v(sample, cell, comp);
}

double Model::brownian(std::size_t sample, std::size_t point, int comp) const {
  if (kind_ == ModelKind::tree) {
    double acc = 0.0;
    for (std::size_t s = 0; s < point; ++s) acc += increment(sample, s, comp);
    return acc;
  }
  return W_.v(sample, point, comp);
}

void Model::set_regression_state(EnsField state) {
  if (!state.empty() && (state.n_samples != n_samples_ || state.n_points != grid_.n_points()))
    fail(ErrCode::invalid_argument, "regression state shape must match the model");
  state_ = std::move(state);
}

namespace {

// All monomial exponent tuples over n_vars variables with total degree <= degree.
void enumerate_monomials(int n_vars, int degree, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == n_vars) {
    out.push_back(cur);
    return;
  }
  int used = 0;
  for (int v : cur) used += v;
  for (int k = 0; k + used <= degree; ++k) {
    cur.push_back(k);
    enumerate_monomials(n_vars, degree, cur, out);
    cur.pop_back();
  }
}

}  // namespace

void Model::condexp(const double* vals, int nv, std::size_t ti, double* out, bool* warn) const {
  if (nv < 1) fail(ErrCode::invalid_argument, "conditional expectation needs at least one component");
  if (ti >= grid_.n_points()) fail(ErrCode::invalid_argument, "conditioning time out of range");
  const std::size_t ns = n_samples_;
  if (kind_ == ModelKind::tree) {
    const std::size_t shift = static_cast<std::size_t>(d_) * (tree_N_ - static_cast<int>(ti));
    const std::size_t B = (static_cast<int>(ti) >= tree_N_) ? 1 : (std::size_t{1} << shift);
    for (std::size_t b0 = 0; b0 < ns; b0 += B) {
      for (int c = 0; c < nv; ++c) {
        double acc = 0.0;
        for (std::size_t s = b0; s < b0 + B; ++s) acc += vals[s * nv + c];
        const double mean = acc / static_cast<double>(B);
        for (std::size_t s = b0; s < b0 + B; ++s) out[s * nv + c] = mean;
      }
    }
    return;
  }
  if (ti == 0) {
    for (int c = 0; c < nv; ++c) {
      double acc = 0.0;
      for (std::size_t s = 0; s < ns; ++s) acc += vals[s * nv + c];
      const double mean = acc / static_cast<double>(ns);
      for (std::size_t s = 0; s < ns; ++s) out[s * nv + c] = mean;
    }
    return;
  }
  const int n_state = state_.empty() ? 0 : state_.nv;
  const int n_vars = d_ + n_state;
  std::vector<std::vector<int>> monos;
  {
    std::vector<int> cur;
    enumerate_monomials(n_vars, reg_.degree, cur, monos);
  }
  const std::size_t nf = monos.size();
  Eigen::MatrixXd phi(ns, nf);
  std::vector<double> x(n_vars);
  for (std::size_t s = 0; s < ns; ++s) {
    for (int c = 0; c < d_; ++c) x[c] = W_.v(s, ti, c);
    for (int c = 0; c < n_state; ++c) x[d_ + c] = state_.v(s, ti, c);
    for (std::size_t f = 0; f < nf; ++f) {
      double prod = 1.0;
      for (int v = 0; v < n_vars; ++v)
        for (int k = 0; k < monos[f][v]; ++k) prod *= x[v];
      phi(s, f) = prod;
    }
  }
  Eigen::MatrixXd rhs(ns, nv);
  for (std::size_t s = 0; s < ns; ++s)
    for (int c = 0; c < nv; ++c) rhs(s, c) = vals[s * nv + c];
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(phi);
  Eigen::MatrixXd beta;
  if (qr.rank() < static_cast<Eigen::Index>(nf)) {
    if (warn) *warn = true;
    Eigen::MatrixXd gram = phi.transpose() * phi;
    gram.diagonal().array() += reg_.ridge;
    beta = gram.ldlt().solve(phi.transpose() * rhs);
  } else {
    beta = qr.solve(rhs);
  }
  Eigen::MatrixXd fit = phi * beta;
  for (std::size_t s = 0; s < ns; ++s)
    for (int c = 0; c < nv; ++c) out[s * nv + c] = fit(s, c);
}

std::vector<double> Model::condexp_v(const std::vector<double>& vals, int nv, std::size_t ti, bool* warn) const {
  if (vals.size() != n_samples_ * static_cast<std::size_t>(nv))
    fail(ErrCode::invalid_argument, "conditional expectation input size mismatch");
  std::vector<double> out(vals.size());
  condexp(vals.data(), nv, ti, out.data(), warn);
  return out;
}

MartingaleDecomposition martingale_decomposition(const EnsField& Y, const Model& model) {
  if (Y.n_samples != model.n_samples() || Y.n_points != model.grid().n_points())
    fail(ErrCode::invalid_argument, "field shape must match the model");
  const std::size_t ns = Y.n_samples, np = Y.n_points;
  const int nv = Y.nv;
  MartingaleDecomposition dec;
  dec.YM = EnsField(ns, np, nv);
  dec.YJ = EnsField(ns, np, nv);
  std::vector<double> dY(ns * static_cast<std::size_t>(nv)), pred(ns * static_cast<std::size_t>(nv));
  std::vector<double> recentered(ns * static_cast<std::size_t>(nv));
  for (std::size_t s = 0; s < ns; ++s)
    for (int c = 0; c < nv; ++c) dec.YJ.v(s, 0, c) = Y.v(s, 0, c);
  for (std::size_t i = 0; i + 1 < np; ++i) {
    for (std::size_t s = 0; s < ns; ++s)
      for (int c = 0; c < nv; ++c) dY[s * nv + c] = Y.v(s, i + 1, c) - Y.v(s, i, c);
    model.condexp(dY.data(), nv, i, pred.data(), &dec.regression_warning);
    for (std::size_t s = 0; s < ns; ++s)
      for (int c = 0; c < nv; ++c) {
        const double dm = dY[s * nv + c] - pred[s * nv + c];
        dec.YM.v(s, i + 1, c) = dec.YM.v(s, i, c) + dm;
        dec.YJ.v(s, i + 1, c) = dec.YJ.v(s, i, c) + pred[s * nv + c];
        recentered[s * nv + c] = dm;
      }
    // Projection residuals must be conditionally centered; audit re-projects them.
    model.condexp(recentered.data(), nv, i, dY.data(), nullptr);
    double acc = 0.0;
    for (std::size_t s = 0; s < ns; ++s) {
      const double m = vec_norm(dY.data() + s * nv, nv);
      acc += m * m;
    }
    dec.centering_audit = std::max(dec.centering_audit, std::sqrt(acc / static_cast<double>(ns)));
  }
  return dec;
}

EnsField martingale_representation(const EnsField& M, const Model& model, bool* warn) {
  if (M.n_samples != model.n_samples() || M.n_points != model.grid().n_points())
    fail(ErrCode::invalid_argument, "field shape must match the model");
  const std::size_t ns = M.n_samples, np = M.n_points;
  const int nv = M.nv, d = model.d();
  double scale = 1.0;
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t i = 0; i < np; ++i) scale = std::max(scale, vec_norm(M.at(s, i), nv));
  // Exact backends admit a tight audit; regression projections at successive times
  // do not nest exactly, so the ensemble audit is statistical.
  const double audit_tol =
      scale * (model.kind() == ModelKind::tree ? 1e-8
                                               : std::max(1e-8, 8.0 / std::sqrt(static_cast<double>(ns))));
  EnsField Z(ns, np, nv * d);
  std::vector<double> dM(ns * static_cast<std::size_t>(nv)), pred(ns * static_cast<std::size_t>(nv));
  std::vector<double> prod(ns * static_cast<std::size_t>(nv) * d), zc(ns * static_cast<std::size_t>(nv) * d);
  for (std::size_t i = 0; i + 1 < np; ++i) {
    const double dt = model.grid().dt(i);
    for (std::size_t s = 0; s < ns; ++s)
      for (int c = 0; c < nv; ++c) dM[s * nv + c] = M.v(s, i + 1, c) - M.v(s, i, c);
    model.condexp(dM.data(), nv, i, pred.data(), warn);
    double audit = 0.0;
    for (double v : pred) audit = std::max(audit, std::abs(v));
    if (audit > audit_tol) fail(ErrCode::invalid_argument, "representation requires martingale");
    for (std::size_t s = 0; s < ns; ++s)
      for (int c = 0; c < nv; ++c)
        for (int k = 0; k < d; ++k)
          prod[(s * nv + c) * d + k] = dM[s * nv + c] * model.increment(s, i, k) / dt;
    model.condexp(prod.data(), nv * d, i, zc.data(), warn);
    for (std::size_t s = 0; s < ns; ++s)
      for (int c = 0; c < nv * d; ++c) Z.v(s, i, c) = zc[s * static_cast<std::size_t>(nv) * d + c];
  }
  return Z;
}

}  // namespace roughbsde
