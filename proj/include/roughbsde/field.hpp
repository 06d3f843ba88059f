#pragma once
#include <cmath>
#include <cstddef>
#include <vector>

namespace roughbsde {

// Per-sample, per-grid-point array of nv doubles; row-major (sample, point, component).
struct EnsField {
  std::size_t n_samples = 0, n_points = 0;
  int nv = 0;
  std::vector<double> a;

  EnsField() = default;
  EnsField(std::size_t s, std::size_t p, int v)
      : n_samples(s), n_points(p), nv(v), a(s * p * static_cast<std::size_t>(v), 0.0) {}

  double* at(std::size_t s, std::size_t t) { return a.data() + (s * n_points + t) * static_cast<std::size_t>(nv); }
  const double* at(std::size_t s, std::size_t t) const {
    return a.data() + (s * n_points + t) * static_cast<std::size_t>(nv);
  }
  double& v(std::size_t s, std::size_t t, int c) { return at(s, t)[c]; }
  double v(std::size_t s, std::size_t t, int c) const { return at(s, t)[c]; }
  bool empty() const { return a.empty(); }
};

inline double vec_norm(const double* x, int nv) {
  double s = 0.0;
  for (int c = 0; c < nv; ++c) s += x[c] * x[c];
  return std::sqrt(s);
}

// Empirical L^m norm: (mean over samples of mag^m)^{1/m}; summation in sample order.
inline double lm_reduce(const std::vector<double>& mags, double m) {
  if (mags.empty()) return 0.0;
  double acc = 0.0;
  for (double v : mags) acc += std::pow(v, m);
  return std::pow(acc / static_cast<double>(mags.size()), 1.0 / m);
}

// Empirical L^m norm of the per-sample Euclidean magnitude of field values at point t.
inline double lm_at(const EnsField& f, std::size_t t, double m) {
  double acc = 0.0;
  for (std::size_t s = 0; s < f.n_samples; ++s) acc += std::pow(vec_norm(f.at(s, t), f.nv), m);
  return std::pow(acc / static_cast<double>(f.n_samples), 1.0 / m);
}

}  // namespace roughbsde
