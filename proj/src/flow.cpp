#include "roughbsde/flow.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "roughbsde/errors.hpp"
#include "roughbsde/pvar.hpp"

namespace roughbsde {

namespace {

using EvalFn = std::function<void(const double*, double*)>;

// Central finite difference of fn, appending one innermost input index:
// out[o*n + k] = d fn_o / d y_k.
EvalFn fd_wrap(EvalFn fn, int n, int out_len) {
  return [fn, n, out_len](const double* y, double* out) {
    std::vector<double> yb(y, y + n), fp(out_len), fm(out_len);
    const double h = 1e-5;
    for (int k = 0; k < n; ++k) {
      yb[k] = y[k] + h;
      fn(yb.data(), fp.data());
      yb[k] = y[k] - h;
      fn(yb.data(), fm.data());
      yb[k] = y[k];
      for (int o = 0; o < out_len; ++o) out[o * n + k] = (fp[o] - fm[o]) / (2.0 * h);
    }
  };
}

struct FieldFns {
  EvalFn g, Dg, D2g, D3g;
};

FieldFns resolve_field(const VectorField& field) {
  if (!field.g) fail(ErrCode::invalid_argument, "vector field function must be set");
  const int n = field.n, e = field.e;
  FieldFns fns;
  fns.g = field.g;
  fns.Dg = field.Dg ? field.Dg : fd_wrap(fns.g, n, n * e);
  fns.D2g = field.D2g ? field.D2g : fd_wrap(fns.Dg, n, n * e * n);
  fns.D3g = field.D3g ? field.D3g : fd_wrap(fns.D2g, n, n * e * n * n);
  return fns;
}

double uniform_pm1(std::uint64_t& seed) {
  seed = splitmix64(seed);
  return 2.0 * (static_cast<double>(seed >> 11) * 0x1.0p-53) - 1.0;
}

// Flow state and its τ-derivative for one probe: value, Jacobian, second and third
// spatial derivatives, flattened back to back.
struct FlowRhs {
  const FieldFns& fns;
  int n, e;
  const double* xdot;
  // scratch
  std::vector<double> gv, dgv, d2gv, d3gv, M, T2, T3;

  FlowRhs(const FieldFns& f, int n_, int e_) : fns(f), n(n_), e(e_), xdot(nullptr) {
    gv.resize(static_cast<std::size_t>(n) * e);
    dgv.resize(gv.size() * n);
    d2gv.resize(dgv.size() * n);
    d3gv.resize(d2gv.size() * n);
    M.resize(static_cast<std::size_t>(n) * n);
    T2.resize(M.size() * n);
    T3.resize(T2.size() * n);
  }

  static std::size_t state_len(int n) {
    const std::size_t sn = n;
    return sn + sn * sn + sn * sn * sn + sn * sn * sn * sn;
  }

  void operator()(const double* st, double* dst) {
    const std::size_t sn = n;
    const double* u = st;
    const double* J = st + sn;
    const double* K2 = J + sn * sn;
    const double* K3 = K2 + sn * sn * sn;
    double* du = dst;
    double* dJ = dst + sn;
    double* dK2 = dJ + sn * sn;
    double* dK3 = dK2 + sn * sn * sn;

    fns.g(u, gv.data());
    fns.Dg(u, dgv.data());
    fns.D2g(u, d2gv.data());
    fns.D3g(u, d3gv.data());
    // Contract the drive slope into the field derivatives once per evaluation.
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int j = 0; j < e; ++j) acc += gv[i * e + j] * xdot[j];
      du[i] = acc;
      for (int a = 0; a < n; ++a) {
        double m = 0.0;
        for (int j = 0; j < e; ++j) m += dgv[(i * e + j) * n + a] * xdot[j];
        M[i * n + a] = m;
        for (int b = 0; b < n; ++b) {
          double t2 = 0.0;
          for (int j = 0; j < e; ++j) t2 += d2gv[((i * e + j) * n + a) * n + b] * xdot[j];
          T2[(i * n + a) * n + b] = t2;
          for (int c = 0; c < n; ++c) {
            double t3 = 0.0;
            for (int j = 0; j < e; ++j) t3 += d3gv[(((i * e + j) * n + a) * n + b) * n + c] * xdot[j];
            T3[((i * n + a) * n + b) * n + c] = t3;
          }
        }
      }
    }
    for (int i = 0; i < n; ++i)
      for (int m = 0; m < n; ++m) {
        double acc = 0.0;
        for (int a = 0; a < n; ++a) acc += M[i * n + a] * J[a * n + m];
        dJ[i * n + m] = acc;
      }
    for (int i = 0; i < n; ++i)
      for (int m = 0; m < n; ++m)
        for (int k = 0; k < n; ++k) {
          double acc = 0.0;
          for (int a = 0; a < n; ++a) acc += M[i * n + a] * K2[(a * n + m) * n + k];
          for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) acc += T2[(i * n + a) * n + b] * J[a * n + m] * J[b * n + k];
          dK2[(i * n + m) * n + k] = acc;
        }
    for (int i = 0; i < n; ++i)
      for (int m = 0; m < n; ++m)
        for (int k = 0; k < n; ++k)
          for (int l = 0; l < n; ++l) {
            double acc = 0.0;
            for (int a = 0; a < n; ++a) acc += M[i * n + a] * K3[((a * n + m) * n + k) * n + l];
            for (int a = 0; a < n; ++a)
              for (int b = 0; b < n; ++b) {
                const double t2 = T2[(i * n + a) * n + b];
                acc += t2 * (J[a * n + m] * K2[(b * n + k) * n + l] + J[a * n + k] * K2[(b * n + m) * n + l] +
                             J[a * n + l] * K2[(b * n + m) * n + k]);
                for (int c = 0; c < n; ++c)
                  acc += T3[((i * n + a) * n + b) * n + c] * J[a * n + m] * J[b * n + k] * J[c * n + l];
              }
            dK3[((i * n + m) * n + k) * n + l] = acc;
          }
  }
};

void rk4_step(FlowRhs& rhs, std::vector<double>& st, double h, std::vector<double>& k1, std::vector<double>& k2,
              std::vector<double>& k3, std::vector<double>& k4, std::vector<double>& tmp) {
  const std::size_t len = st.size();
  rhs(st.data(), k1.data());
  for (std::size_t i = 0; i < len; ++i) tmp[i] = st[i] + 0.5 * h * k1[i];
  rhs(tmp.data(), k2.data());
  for (std::size_t i = 0; i < len; ++i) tmp[i] = st[i] + 0.5 * h * k2[i];
  rhs(tmp.data(), k3.data());
  for (std::size_t i = 0; i < len; ++i) tmp[i] = st[i] + h * k3[i];
  rhs(tmp.data(), k4.data());
  for (std::size_t i = 0; i < len; ++i) st[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

}  // namespace

VectorField vf_zero(int n, int e) {
  VectorField f;
  f.n = n;
  f.e = e;
  const int ne = n * e;
  f.g = [ne](const double*, double* out) { std::fill(out, out + ne, 0.0); };
  f.Dg = [ne, n](const double*, double* out) { std::fill(out, out + ne * n, 0.0); };
  f.D2g = [ne, n](const double*, double* out) { std::fill(out, out + ne * n * n, 0.0); };
  f.D3g = [ne, n](const double*, double* out) { std::fill(out, out + ne * n * n * n, 0.0); };
  f.gamma_norm = 0.0;
  return f;
}

VectorField vf_constant(int n, int e, std::vector<double> c) {
  if (c.size() != static_cast<std::size_t>(n) * e) fail(ErrCode::invalid_argument, "constant field needs n*e values");
  VectorField f = vf_zero(n, e);
  double scale = 0.0;
  for (double v : c) scale = std::max(scale, std::abs(v));
  f.g = [c = std::move(c)](const double*, double* out) { std::copy(c.begin(), c.end(), out); };
  f.gamma_norm = scale;
  return f;
}

VectorField vf_linear(int n, int e, std::vector<double> A) {
  if (A.size() != static_cast<std::size_t>(n) * e * n)
    fail(ErrCode::invalid_argument, "linear field needs n*e*n values");
  VectorField f = vf_zero(n, e);
  const int ne = n * e;
  double scale = 0.0;
  for (double v : A) scale = std::max(scale, std::abs(v));
  auto mat = std::make_shared<std::vector<double>>(std::move(A));
  f.g = [mat, ne, n](const double* y, double* out) {
    for (int o = 0; o < ne; ++o) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += (*mat)[o * n + k] * y[k];
      out[o] = acc;
    }
  };
  f.Dg = [mat, ne, n](const double*, double* out) { std::copy(mat->begin(), mat->end(), out); };
  f.gamma_norm = scale;
  return f;
}

VectorField vf_scalar_sin(double amp, double freq) {
  VectorField f;
  f.n = 1;
  f.e = 1;
  f.g = [amp, freq](const double* y, double* out) { out[0] = amp * std::sin(freq * y[0]); };
  f.Dg = [amp, freq](const double* y, double* out) { out[0] = amp * freq * std::cos(freq * y[0]); };
  f.D2g = [amp, freq](const double* y, double* out) { out[0] = -amp * freq * freq * std::sin(freq * y[0]); };
  f.D3g = [amp, freq](const double* y, double* out) { out[0] = -amp * freq * freq * freq * std::cos(freq * y[0]); };
  f.gamma_norm = std::abs(amp) * std::pow(1.0 + std::abs(freq), 3);
  return f;
}

FdConsistencyReport vf_fd_consistency(const VectorField& field, std::uint64_t seed, int probes) {
  FdConsistencyReport rep;
  const int n = field.n, e = field.e;
  FieldFns fns = resolve_field(field);
  auto layer_gap = [&](const EvalFn& supplied, const EvalFn& base, int base_len) {
    EvalFn fd = fd_wrap(base, n, base_len);
    std::vector<double> y(n), a(static_cast<std::size_t>(base_len) * n), b(a.size());
    double gap = 0.0;
    std::uint64_t s = seed;
    for (int pb = 0; pb < probes; ++pb) {
      for (int i = 0; i < n; ++i) y[i] = uniform_pm1(s);
      supplied(y.data(), a.data());
      fd(y.data(), b.data());
      for (std::size_t k = 0; k < a.size(); ++k)
        gap = std::max(gap, std::abs(a[k] - b[k]) / std::max({1.0, std::abs(a[k]), std::abs(b[k])}));
    }
    return gap;
  };
  if (field.Dg) rep.d1_gap = layer_gap(field.Dg, fns.g, n * e);
  if (field.D2g) rep.d2_gap = layer_gap(field.D2g, fns.Dg, n * e * n);
  if (field.D3g) rep.d3_gap = layer_gap(field.D3g, fns.D2g, n * e * n * n);
  rep.ok = rep.d1_gap <= 1e-6 && rep.d2_gap <= 1e-6 && rep.d3_gap <= 1e-6;
  return rep;
}

SolutionFlow solve_backward_flow(const VectorField& field, const SampledPath& drive, std::vector<double> probes,
                                 const FlowOptions& opts) {
  const int n = field.n, e = field.e;
  if (drive.e != e) fail(ErrCode::invalid_argument, "field shape must match the drive");
  if (probes.empty() || probes.size() % static_cast<std::size_t>(n) != 0)
    fail(ErrCode::invalid_argument, "flow needs probes in multiples of the state dimension");
  if (opts.substeps < 1) fail(ErrCode::invalid_argument, "flow substeps must be positive");
  FieldFns fns = resolve_field(field);

  SolutionFlow flow;
  flow.grid = drive.grid;
  flow.n = n;
  flow.e = e;
  flow.probes = std::move(probes);
  flow.nq = flow.probes.size() / n;
  const std::size_t np = drive.grid.n_points(), nq = flow.nq;
  const std::size_t sn = n;
  flow.phi.resize(np * nq * sn);
  flow.Dphi.resize(np * nq * sn * sn);
  flow.D2phi.resize(np * nq * sn * sn * sn);
  flow.D3phi.resize(np * nq * sn * sn * sn * sn);
  flow.hull_lo.assign(sn, std::numeric_limits<double>::infinity());
  flow.hull_hi.assign(sn, -std::numeric_limits<double>::infinity());
  for (std::size_t q = 0; q < nq; ++q)
    for (int i = 0; i < n; ++i) {
      flow.hull_lo[i] = std::min(flow.hull_lo[i], flow.probes[q * sn + i]);
      flow.hull_hi[i] = std::max(flow.hull_hi[i], flow.probes[q * sn + i]);
    }
  flow.drive_pvar = p_variation(
      [&drive, e](std::size_t i, std::size_t j) {
        double sq = 0.0;
        for (int c = 0; c < e; ++c) sq += std::pow(drive.value(j, c) - drive.value(i, c), 2);
        return std::sqrt(sq);
      },
      np, opts.pvar_q);

  const std::size_t len = FlowRhs::state_len(n);
  FlowRhs rhs(fns, n, e);
  std::vector<double> k1(len), k2(len), k3(len), k4(len), tmp(len);
  std::vector<double> xdot(e);
  for (std::size_t q = 0; q < nq; ++q) {
    std::vector<double> st(len, 0.0);
    for (int i = 0; i < n; ++i) st[i] = flow.probes[q * sn + i];
    for (int i = 0; i < n; ++i) st[sn + i * sn + i] = 1.0;
    auto record = [&](std::size_t ti) {
      std::copy_n(st.data(), sn, flow.phi.data() + (ti * nq + q) * sn);
      std::copy_n(st.data() + sn, sn * sn, flow.Dphi.data() + (ti * nq + q) * sn * sn);
      std::copy_n(st.data() + sn + sn * sn, sn * sn * sn, flow.D2phi.data() + (ti * nq + q) * sn * sn * sn);
      std::copy_n(st.data() + sn + sn * sn + sn * sn * sn, sn * sn * sn * sn,
                  flow.D3phi.data() + (ti * nq + q) * sn * sn * sn * sn);
    };
    record(np - 1);
    for (std::size_t cell = np - 1; cell-- > 0;) {
      const double dt = drive.grid.dt(cell);
      for (int c = 0; c < e; ++c) xdot[c] = (drive.value(cell + 1, c) - drive.value(cell, c)) / dt;
      rhs.xdot = xdot.data();
      const double h = dt / opts.substeps;
      for (int s = 0; s < opts.substeps; ++s) rk4_step(rhs, st, h, k1, k2, k3, k4, tmp);
      record(cell);
    }
  }
  return flow;
}

bool SolutionFlow::eval(std::size_t ti, const double* y, double* phi_out, double* dphi_out, double* d2phi_out) const {
  const std::size_t sn = n;
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t q = 0; q < nq; ++q) {
    double sq = 0.0;
    for (std::size_t i = 0; i < sn; ++i) sq += std::pow(y[i] - probes[q * sn + i], 2);
    if (sq < best_d) {
      best_d = sq;
      best = q;
    }
  }
  std::vector<double> dy(sn);
  for (std::size_t i = 0; i < sn; ++i) dy[i] = y[i] - probes[best * sn + i];
  const double* p0 = phi_at(ti, best);
  const double* J = dphi_at(ti, best);
  const double* K2 = d2phi_at(ti, best);
  const double* K3 = d3phi_at(ti, best);
  if (phi_out)
    for (std::size_t i = 0; i < sn; ++i) {
      double acc = p0[i];
      for (std::size_t m = 0; m < sn; ++m) {
        acc += J[i * sn + m] * dy[m];
        for (std::size_t k = 0; k < sn; ++k) {
          acc += 0.5 * K2[(i * sn + m) * sn + k] * dy[m] * dy[k];
          for (std::size_t l = 0; l < sn; ++l)
            acc += (1.0 / 6.0) * K3[((i * sn + m) * sn + k) * sn + l] * dy[m] * dy[k] * dy[l];
        }
      }
      phi_out[i] = acc;
    }
  if (dphi_out)
    for (std::size_t i = 0; i < sn; ++i)
      for (std::size_t m = 0; m < sn; ++m) {
        double acc = J[i * sn + m];
        for (std::size_t k = 0; k < sn; ++k) {
          acc += K2[(i * sn + m) * sn + k] * dy[k];
          for (std::size_t l = 0; l < sn; ++l) acc += 0.5 * K3[((i * sn + m) * sn + k) * sn + l] * dy[k] * dy[l];
        }
        dphi_out[i * sn + m] = acc;
      }
  if (d2phi_out)
    for (std::size_t i = 0; i < sn; ++i)
      for (std::size_t m = 0; m < sn; ++m)
        for (std::size_t k = 0; k < sn; ++k) {
          double acc = K2[(i * sn + m) * sn + k];
          for (std::size_t l = 0; l < sn; ++l) acc += K3[((i * sn + m) * sn + k) * sn + l] * dy[l];
          d2phi_out[(i * sn + m) * sn + k] = acc;
        }
  for (std::size_t i = 0; i < sn; ++i)
    if (y[i] < hull_lo[i] || y[i] > hull_hi[i]) return false;
  return true;
}

void SolutionFlow::inverse(std::size_t ti, const double* x, double* y_out) const {
  const std::size_t sn = n;
  std::vector<double> y(x, x + sn), pv(sn), dv(sn * sn);
  double x_scale = 1.0;
  for (std::size_t i = 0; i < sn; ++i) x_scale = std::max(x_scale, std::abs(x[i]));
  for (int it = 0; it < 50; ++it) {
    eval(ti, y.data(), pv.data(), dv.data(), nullptr);
    double r_inf = 0.0;
    for (std::size_t i = 0; i < sn; ++i) r_inf = std::max(r_inf, std::abs(pv[i] - x[i]));
    if (r_inf <= 1e-12 * x_scale) {
      std::copy(y.begin(), y.end(), y_out);
      return;
    }
    if (sn == 1) {
      if (dv[0] == 0.0) break;
      y[0] -= (pv[0] - x[0]) / dv[0];
    } else {
      Eigen::Map<const Eigen::MatrixXd> Jm(dv.data(), sn, sn);
      Eigen::VectorXd r(sn);
      for (std::size_t i = 0; i < sn; ++i) r(i) = pv[i] - x[i];
      // Row-major storage: solve with the transpose of the column-major map.
      Eigen::VectorXd step = Jm.transpose().partialPivLu().solve(r);
      for (std::size_t i = 0; i < sn; ++i) y[i] -= step(i);
    }
  }
  char msg[128];
  std::snprintf(msg, sizeof(msg), "flow inversion failed at index %zu near x[0]=%g", ti, x[0]);
  fail(ErrCode::numeric, msg);
}

TransformedDriver transformed_driver(std::shared_ptr<const SolutionFlow> flow, const Driver& f) {
  if (!flow) fail(ErrCode::invalid_argument, "transform needs a solution flow");
  if (f.n != flow->n) fail(ErrCode::invalid_argument, "driver shape must match the field");
  const int n = f.n, d = f.d;
  const double pvar = flow->drive_pvar;
  TransformedDriver out;
  out.extrapolation_queries = std::make_shared<long>(0);
  out.driver.n = n;
  out.driver.d = d;
  out.driver.lipschitz_L = f.lipschitz_L;
  out.driver.has_bounds = f.has_bounds;
  if (f.has_bounds) {
    auto lam = f.lambda;
    auto mu = f.mu;
    out.driver.lambda = [lam, mu, pvar](double t) { return lam(t) + mu(t) * mu(t) + pvar; };
    out.driver.mu = [mu, pvar](double t) { return mu(t) + pvar; };
  }
  auto base = f.f;
  auto counter = out.extrapolation_queries;
  out.driver.f = [flow, base, counter, n, d](double t, const double* y, const double* z, std::size_t sample,
                                             double* fout) {
    const std::size_t ti = flow->grid.index_of(t);
    std::vector<double> pv(n), dv(static_cast<std::size_t>(n) * n), d2v(static_cast<std::size_t>(n) * n * n);
    if (!flow->eval(ti, y, pv.data(), dv.data(), d2v.data())) ++*counter;
    std::vector<double> Z(static_cast<std::size_t>(n) * d), fv(n);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < d; ++c) {
        double acc = 0.0;
        for (int m = 0; m < n; ++m) acc += dv[i * n + m] * z[m * d + c];
        Z[i * d + c] = acc;
      }
    base(t, pv.data(), Z.data(), sample, fv.data());
    for (int i = 0; i < n; ++i) {
      double q = 0.0;
      for (int c = 0; c < d; ++c)
        for (int m = 0; m < n; ++m)
          for (int k = 0; k < n; ++k) q += d2v[(i * n + m) * n + k] * z[m * d + c] * z[k * d + c];
      fv[i] += 0.5 * q;
    }
    if (n == 1) {
      if (dv[0] == 0.0) fail(ErrCode::numeric, "flow inversion failed at a driver query");
      fout[0] = fv[0] / dv[0];
    } else {
      Eigen::Map<const Eigen::MatrixXd> Jm(dv.data(), n, n);
      Eigen::Map<const Eigen::VectorXd> rv(fv.data(), n);
      Eigen::VectorXd sol = Jm.transpose().partialPivLu().solve(rv);
      for (int i = 0; i < n; ++i) fout[i] = sol(i);
    }
  };

  // Growth-envelope audit on random in-hull probes; the counter is restored so the
  // caller only sees its own extrapolations.
  const std::size_t np = flow->grid.n_points();
  const int nd = n * d;
  std::uint64_t seed = 7;
  std::vector<double> y(n), z(nd), f0(n), fp(n), fm(n), gy(static_cast<std::size_t>(n) * n),
      gz(static_cast<std::size_t>(nd) * n);
  for (int pb = 0; pb < 64; ++pb) {
    seed = splitmix64(seed);
    const std::size_t ti = seed % np;
    const double t = flow->grid.t(ti);
    for (int i = 0; i < n; ++i) {
      const double u = 0.5 * (uniform_pm1(seed) + 1.0);
      y[i] = flow->hull_lo[i] + u * (flow->hull_hi[i] - flow->hull_lo[i]);
    }
    for (int i = 0; i < nd; ++i) z[i] = uniform_pm1(seed);
    out.driver.f(t, y.data(), z.data(), 0, f0.data());
    const double h = 1e-5;
    for (int k = 0; k < n; ++k) {
      const double keep = y[k];
      y[k] = keep + h;
      out.driver.f(t, y.data(), z.data(), 0, fp.data());
      y[k] = keep - h;
      out.driver.f(t, y.data(), z.data(), 0, fm.data());
      y[k] = keep;
      for (int i = 0; i < n; ++i) gy[i * n + k] = (fp[i] - fm[i]) / (2.0 * h);
    }
    for (int k = 0; k < nd; ++k) {
      const double keep = z[k];
      z[k] = keep + h;
      out.driver.f(t, y.data(), z.data(), 0, fp.data());
      z[k] = keep - h;
      out.driver.f(t, y.data(), z.data(), 0, fm.data());
      z[k] = keep;
      for (int i = 0; i < n; ++i) gz[k * n + i] = (fp[i] - fm[i]) / (2.0 * h);
    }
    const double lam = f.has_bounds ? f.lambda(t) : 0.0;
    const double mu = f.has_bounds ? f.mu(t) : 0.0;
    const double ny = vec_norm(y.data(), n), nz = vec_norm(z.data(), nd);
    double gy_norm = 0.0, gz_norm = 0.0;
    for (double v : gy) gy_norm += v * v;
    for (double v : gz) gz_norm += v * v;
    const double val = vec_norm(f0.data(), n) + std::sqrt(gy_norm);
    const double den_v = lam + mu * mu + pvar + ny * ny + nz * nz;
    const double den_z = mu + pvar + ny + nz;
    if (den_v > 1e-12) out.measured_c_value = std::max(out.measured_c_value, val / den_v);
    if (den_z > 1e-12) out.measured_c_zslope = std::max(out.measured_c_zslope, std::sqrt(gz_norm) / den_z);
  }
  *counter = 0;
  return out;
}

NonlinearSolution solve_nonlinear_rough_bsde(const std::vector<double>& xi, const Driver& f, const VectorField& field,
                                             const RoughPath& X, const Model& model, const NonlinearOptions& opts) {
  const std::size_t ns = model.n_samples(), np = model.grid().n_points();
  const int n = field.n, e = field.e, d = model.d();
  if (f.n != n) fail(ErrCode::invalid_argument, "driver shape must match the field");
  if (f.d != d) fail(ErrCode::invalid_argument, "driver dimensions must match the model");
  if (X.e() != e) fail(ErrCode::invalid_argument, "field shape must match the drive");
  if (!X.grid().same_as(model.grid())) fail(ErrCode::config, "grid mismatch");
  if (xi.size() != ns * static_cast<std::size_t>(n))
    fail(ErrCode::invalid_argument, "terminal condition shape must match the model");
  if (opts.levels < 1) fail(ErrCode::invalid_argument, "at least one approximation level is required");

  double xi_inf = 0.0;
  for (double v : xi) xi_inf = std::max(xi_inf, std::abs(v));
  double env = 0.0;
  if (f.has_bounds) {
    for (std::size_t i = 0; i + 1 < np; ++i) {
      const double lam = f.lambda(model.grid().t(i)), mu = f.mu(model.grid().t(i));
      env += (lam + mu * mu) * model.grid().dt(i);
    }
  }
  const double base_total = rough_metrics(X).total;
  if (xi_inf > opts.eps_small || env > opts.eps_small || base_total > opts.eps_small)
    fail(ErrCode::config, "outside small-data regime");

  const std::size_t N = model.grid().n_cells();
  const std::size_t coarsest = std::size_t{1} << (opts.levels - 1);
  if (N % coarsest != 0) fail(ErrCode::invalid_argument, "approximation levels need a dyadic grid refinement");

  // Tensor probe grid sized to the data: quadratic solutions stay in a ball whose
  // radius is controlled by the gated quantities.
  const double w = std::max(opts.probe_margin * (xi_inf + env + base_total), 2.0 * opts.probe_spacing);
  const int per_dim = 2 * static_cast<int>(std::ceil(w / opts.probe_spacing)) + 1;
  std::size_t count = 1;
  for (int i = 0; i < n; ++i) {
    count *= static_cast<std::size_t>(per_dim);
    if (count > 20000) fail(ErrCode::config, "probe set too large");
  }
  std::vector<double> probes(count * n);
  for (std::size_t q = 0; q < count; ++q) {
    std::size_t rem = q;
    for (int i = 0; i < n; ++i) {
      probes[q * n + i] = -w + (rem % per_dim) * (2.0 * w / (per_dim - 1));
      rem /= per_dim;
    }
  }

  NonlinearSolution sol;
  BsdeSolution prev;
  bool have_prev = false;
  for (int k = 1; k <= opts.levels; ++k) {
    const std::size_t seg = N >> (opts.levels - k);
    const std::size_t stride = N / seg;
    SampledPath xk;
    xk.grid = model.grid();
    xk.e = e;
    xk.values.resize(np * e);
    for (std::size_t idx = 0; idx < np; ++idx) {
      const std::size_t a = std::min((idx / stride) * stride, np - 1 - stride);
      const std::size_t b = a + stride;
      const double th = (model.grid().t(idx) - model.grid().t(a)) / (model.grid().t(b) - model.grid().t(a));
      for (int c = 0; c < e; ++c)
        xk.values[idx * e + c] = (1.0 - th) * X.path().value(a, c) + th * X.path().value(b, c);
    }
    RoughPath lift = canonical_lift(xk, X.p());
    NonlinearLevel level;
    level.cells = static_cast<int>(seg);
    level.lift_total = rough_metrics(lift).total;
    if (base_total > 1e-15) sol.lift_bound_ratio = std::max(sol.lift_bound_ratio, level.lift_total / base_total);

    FlowOptions fo;
    fo.substeps = opts.substeps;
    fo.pvar_q = X.p();
    auto flow = std::make_shared<const SolutionFlow>(solve_backward_flow(field, xk, probes, fo));
    for (std::size_t ti = 0; ti < np; ++ti)
      for (std::size_t q = 0; q < count; ++q) {
        double sq = 0.0;
        for (int i = 0; i < n; ++i) sq += std::pow(flow->phi_at(ti, q)[i] - probes[q * n + i], 2);
        level.flow_sup = std::max(level.flow_sup, std::sqrt(sq));
      }
    level.flow_C = level.lift_total > 1e-15 ? level.flow_sup / level.lift_total : 0.0;

    TransformedDriver tf = transformed_driver(flow, f);
    BsdeSolution tilde = solve_quadratic_bsde_small(xi, tf.driver, model, opts.quad);
    level.quad_converged = tilde.converged;

    EnsField Y(ns, np, n), Z(ns, np, n * d);
    std::vector<double> pv(n), dv(static_cast<std::size_t>(n) * n);
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t i = 0; i < np; ++i) {
        flow->eval(i, tilde.Y.at(s, i), pv.data(), dv.data(), nullptr);
        for (int j = 0; j < n; ++j) {
          Y.v(s, i, j) = pv[j];
          level.y_sup = std::max(level.y_sup, std::abs(pv[j]));
        }
        if (i + 1 < np)
          for (int j = 0; j < n; ++j)
            for (int c = 0; c < d; ++c) {
              double acc = 0.0;
              for (int m = 0; m < n; ++m) acc += dv[j * n + m] * tilde.Z.v(s, i, m * d + c);
              Z.v(s, i, j * d + c) = acc;
            }
      }

    // Defect of the original one-step identity under the level's smooth drive.
    std::vector<double> nxt(ns * n), cond(ns * n), fv(n), gv(static_cast<std::size_t>(n) * e), mags(ns);
    for (std::size_t i = 0; i + 1 < np; ++i) {
      for (std::size_t s = 0; s < ns; ++s)
        for (int j = 0; j < n; ++j) nxt[s * n + j] = Y.v(s, i + 1, j);
      model.condexp(nxt.data(), n, i, cond.data());
      const double dt = model.grid().dt(i);
      for (std::size_t s = 0; s < ns; ++s) {
        f.f(model.grid().t(i), Y.at(s, i), Z.at(s, i), s, fv.data());
        field.g(Y.at(s, i), gv.data());
        double sq = 0.0;
        for (int j = 0; j < n; ++j) {
          double r = Y.v(s, i, j) - cond[s * n + j] - fv[j] * dt;
          for (int c = 0; c < e; ++c) r -= gv[j * e + c] * (xk.value(i + 1, c) - xk.value(i, c));
          sq += r * r;
        }
        mags[s] = std::sqrt(sq);
      }
      level.residual = std::max(level.residual, lm_reduce(mags, 2.0));
    }

    BsdeSolution wrap;
    wrap.Y = Y;
    wrap.Z = Z;
    if (have_prev) level.cauchy = bsde_pair_distance(wrap, prev, model);
    prev = std::move(wrap);
    have_prev = true;
    sol.levels.push_back(level);
    if (k == opts.levels) {
      sol.Y = std::move(Y);
      sol.Z = std::move(Z);
      sol.tilde = std::move(tilde);
    }
  }

  sol.converged = sol.lift_bound_ratio <= 2.0 + 1e-9;
  for (const NonlinearLevel& level : sol.levels) sol.converged = sol.converged && level.quad_converged;
  for (std::size_t k = 2; k < sol.levels.size(); ++k)
    sol.converged = sol.converged && sol.levels[k].cauchy <= sol.levels[k - 1].cauchy + 1e-14;
  return sol;
}

}  // namespace roughbsde
