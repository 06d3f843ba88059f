#include "roughbsde/rough_path.hpp"

#include <algorithm>
#include <cmath>

#include "roughbsde/errors.hpp"
#include "roughbsde/field.hpp"
#include "roughbsde/models.hpp"
#include "roughbsde/pvar.hpp"

namespace roughbsde {

RoughPath::RoughPath(SampledPath path, double p, std::vector<double> cells)
    : path_(std::move(path)), p_(p), cells_(std::move(cells)) {
  if (!(p_ >= 2.0 && p_ < 3.0)) fail(ErrCode::invalid_argument, "variation exponent must be in [2,3)");
  const std::size_t nc = path_.grid.n_cells();
  if (cells_.size() != nc * ee()) fail(ErrCode::invalid_argument, "level-2 cell count must match grid cells");
  for (double v : cells_)
    if (!std::isfinite(v)) fail(ErrCode::numeric, "level-2 cells must be finite");
  // X_0 := 0 normalization; level-2 data is translation invariant.
  const int e = path_.e;
  std::vector<double> x0(path_.at(0), path_.at(0) + e);
  for (std::size_t i = 0; i < path_.grid.n_points(); ++i)
    for (int c = 0; c < e; ++c) path_.at(i)[c] -= x0[c];
  // Prefix table over [0, t_i] assembled cell by cell through Chen's relation.
  prefix_.assign(path_.grid.n_points() * ee(), 0.0);
  for (std::size_t j = 0; j < nc; ++j) {
    const double* prev = prefix_.data() + j * ee();
    double* next = prefix_.data() + (j + 1) * ee();
    const double* c = cell(j);
    const double* x_j = path_.at(j);      // equals δX_{0,t_j} after normalization
    const double* x_j1 = path_.at(j + 1);
    for (int a = 0; a < e; ++a)
      for (int b = 0; b < e; ++b)
        next[a * e + b] = prev[a * e + b] + c[a * e + b] + x_j[a] * (x_j1[b] - x_j[b]);
  }
}

void RoughPath::delta(std::size_t i, std::size_t j, double* out) const {
  const int e = path_.e;
  for (int c = 0; c < e; ++c) out[c] = path_.value(j, c) - path_.value(i, c);
}

void RoughPath::level2(std::size_t i, std::size_t j, double* out) const {
  if (j < i) fail(ErrCode::invalid_argument, "window end precedes window start");
  const int e = path_.e;
  const double* pi = prefix_.data() + i * ee();
  const double* pj = prefix_.data() + j * ee();
  const double* x_i = path_.at(i);
  for (int a = 0; a < e; ++a)
    for (int b = 0; b < e; ++b)
      out[a * e + b] = pj[a * e + b] - pi[a * e + b] - x_i[a] * (path_.value(j, b) - path_.value(i, b));
}

std::vector<double> RoughPath::reconstruct_level2(double s, double t) const {
  const std::size_t i = grid().index_of(s);
  const std::size_t j = grid().index_of(t);
  if (j < i) fail(ErrCode::invalid_argument, "window end precedes window start");
  std::vector<double> out(ee(), 0.0);
  level2(i, j, out.data());
  return out;
}

RoughPath canonical_lift(const SampledPath& x, double p) {
  if (x.grid.n_points() < 2) fail(ErrCode::invalid_argument, "grid needs at least 2 points");
  const int e = x.e;
  const std::size_t nc = x.grid.n_cells();
  std::vector<double> cells(nc * static_cast<std::size_t>(e) * e, 0.0);
  for (std::size_t i = 0; i < nc; ++i) {
    double* c = cells.data() + i * static_cast<std::size_t>(e) * e;
    for (int a = 0; a < e; ++a) {
      const double da = x.value(i + 1, a) - x.value(i, a);
      for (int b = 0; b < e; ++b) c[a * e + b] = 0.5 * da * (x.value(i + 1, b) - x.value(i, b));
    }
  }
  return RoughPath(x, p, std::move(cells));
}

std::vector<RoughPath> ito_brownian_lift(const BrownianEnsemble& ens, double p, const TimeGrid& target) {
  const int e = ens.d;
  const TimeGrid& sim = ens.grid;
  // Target points must exist on the simulation grid.
  std::vector<std::size_t> tidx(target.n_points());
  for (std::size_t i = 0; i < target.n_points(); ++i) tidx[i] = sim.index_of(target.t(i));
  std::vector<RoughPath> out;
  out.reserve(ens.n_samples);
  const std::size_t ee = static_cast<std::size_t>(e) * e;
  for (std::size_t s = 0; s < ens.n_samples; ++s) {
    std::vector<double> vals(target.n_points() * static_cast<std::size_t>(e));
    for (std::size_t i = 0; i < target.n_points(); ++i)
      for (int c = 0; c < e; ++c) vals[i * e + c] = ens.w(s, tidx[i], c);
    std::vector<double> cells(target.n_cells() * ee, 0.0);
    for (std::size_t i = 0; i < target.n_cells(); ++i) {
      double* cl = cells.data() + i * ee;
      // Left-point second-order sums over the simulation cells inside the target cell.
      for (std::size_t k = tidx[i]; k < tidx[i + 1]; ++k) {
        for (int a = 0; a < e; ++a) {
          const double run = ens.w(s, k, a) - ens.w(s, tidx[i], a);
          for (int b = 0; b < e; ++b) cl[a * e + b] += run * (ens.w(s, k + 1, b) - ens.w(s, k, b));
        }
      }
    }
    out.emplace_back(SampledPath(target, e, std::move(vals)), p, std::move(cells));
  }
  return out;
}

RoughPathMetrics rough_metrics(const RoughPath& rp, std::size_t i0, std::size_t i1, std::size_t cap) {
  const std::vector<std::size_t> idx = coarsen_indices(i0, i1, cap);
  const int e = rp.e();
  std::vector<double> buf(static_cast<std::size_t>(e) * e);
  RoughPathMetrics m;
  m.p_var_level1 = p_variation(
      [&](std::size_t a, std::size_t b) {
        std::vector<double> d(e);
        rp.delta(idx[a], idx[b], d.data());
        return vec_norm(d.data(), e);
      },
      idx.size(), rp.p());
  m.p2_var_level2 = p_variation(
      [&](std::size_t a, std::size_t b) {
        rp.level2(idx[a], idx[b], buf.data());
        return vec_norm(buf.data(), e * e);
      },
      idx.size(), rp.p() / 2.0);
  m.total = m.p_var_level1 + m.p2_var_level2;
  return m;
}

RoughPathMetrics rough_metrics(const RoughPath& rp) { return rough_metrics(rp, 0, rp.grid().n_points() - 1, 0); }

double rough_distance(const RoughPath& a, const RoughPath& b) {
  if (!a.grid().same_as(b.grid()) || a.e() != b.e() || a.p() != b.p())
    fail(ErrCode::invalid_argument, "grid mismatch");
  const int e = a.e();
  const std::size_t n = a.grid().n_points();
  std::vector<double> da(e), db(e), la(static_cast<std::size_t>(e) * e), lb(static_cast<std::size_t>(e) * e);
  const double lvl1 = p_variation(
      [&](std::size_t i, std::size_t j) {
        a.delta(i, j, da.data());
        b.delta(i, j, db.data());
        double s = 0.0;
        for (int c = 0; c < e; ++c) s += (da[c] - db[c]) * (da[c] - db[c]);
        return std::sqrt(s);
      },
      n, a.p());
  const double lvl2 = p_variation(
      [&](std::size_t i, std::size_t j) {
        a.level2(i, j, la.data());
        b.level2(i, j, lb.data());
        double s = 0.0;
        for (std::size_t c = 0; c < la.size(); ++c) s += (la[c] - lb[c]) * (la[c] - lb[c]);
        return std::sqrt(s);
      },
      n, a.p() / 2.0);
  return lvl1 + lvl2;
}

ChenReport chen_check(const RoughPath& rp, double rel_tol) {
  const std::size_t n = rp.grid().n_points();
  const int e = rp.e();
  const std::size_t ee = static_cast<std::size_t>(e) * e;
  std::vector<double> st(ee), su(ee), ut(ee), dsu(e), dut(e);
  ChenReport rep;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t u = s; u < n; ++u)
      for (std::size_t t = u; t < n; ++t) {
        rp.level2(s, t, st.data());
        rp.level2(s, u, su.data());
        rp.level2(u, t, ut.data());
        rp.delta(s, u, dsu.data());
        rp.delta(u, t, dut.data());
        double err2 = 0.0, mag2 = 0.0;
        for (int a = 0; a < e; ++a)
          for (int b = 0; b < e; ++b) {
            const double v = st[a * e + b] - su[a * e + b] - ut[a * e + b] - dsu[a] * dut[b];
            err2 += v * v;
            mag2 += st[a * e + b] * st[a * e + b];
          }
        const double rel = std::sqrt(err2) / std::max(1.0, std::sqrt(mag2));
        if (rel > rep.max_rel_violation) rep.max_rel_violation = rel;
        ++rep.triples;
      }
  rep.ok = rep.max_rel_violation <= rel_tol;
  return rep;
}

std::vector<double> rough_bracket(const RoughPath& rp, std::size_t i) {
  const int e = rp.e();
  std::vector<double> l2(static_cast<std::size_t>(e) * e), d(e);
  rp.level2(0, i, l2.data());
  rp.delta(0, i, d.data());
  std::vector<double> out(static_cast<std::size_t>(e) * e);
  for (int a = 0; a < e; ++a)
    for (int b = 0; b < e; ++b) out[a * e + b] = d[a] * d[b] - (l2[a * e + b] + l2[b * e + a]);
  return out;
}

std::shared_ptr<const RoughDrive> make_drive(RoughPath rp) {
  auto d = std::make_shared<RoughDrive>();
  d->paths.push_back(std::move(rp));
  return d;
}

std::shared_ptr<const RoughDrive> make_drive(std::vector<RoughPath> rps) {
  if (rps.empty()) fail(ErrCode::invalid_argument, "drive needs at least one path");
  auto d = std::make_shared<RoughDrive>();
  d->paths = std::move(rps);
  return d;
}

RoughPath restrict_shifted(const RoughPath& rp, std::size_t i0) {
  const std::size_t n = rp.grid().n_points();
  if (i0 + 2 > n) fail(ErrCode::invalid_argument, "restriction needs at least one cell");
  const int e = rp.e();
  std::vector<double> pts(n - i0), vals((n - i0) * static_cast<std::size_t>(e));
  for (std::size_t i = i0; i < n; ++i) {
    pts[i - i0] = rp.grid().t(i) - rp.grid().t(i0);
    for (int c = 0; c < e; ++c) vals[(i - i0) * e + c] = rp.path().value(i, c);
  }
  pts[0] = 0.0;
  const std::size_t ee = static_cast<std::size_t>(e) * e;
  std::vector<double> cells(rp.cells().begin() + i0 * ee, rp.cells().end());
  return RoughPath(SampledPath(TimeGrid(std::move(pts)), e, std::move(vals)), rp.p(), std::move(cells));
}

}  // namespace roughbsde
