#include "roughbsde/pvar.hpp"

#include <cmath>

#include "roughbsde/errors.hpp"

namespace roughbsde {

double p_variation(const std::function<double(std::size_t, std::size_t)>& mag, std::size_t n_points, double q) {
  if (q < 1.0) fail(ErrCode::invalid_argument, "variation exponent must be at least 1");
  if (n_points < 2) return 0.0;
  std::vector<double> V(n_points, 0.0);
  for (std::size_t j = 1; j < n_points; ++j) {
    double best = -1.0;
    for (std::size_t i = 0; i < j; ++i) {
      const double cand = V[i] + std::pow(mag(i, j), q);
      if (cand > best) best = cand;
    }
    V[j] = best;
  }
  return std::pow(V[n_points - 1], 1.0 / q);
}

double p_variation_brute(const std::function<double(std::size_t, std::size_t)>& mag, std::size_t n_points, double q) {
  if (q < 1.0) fail(ErrCode::invalid_argument, "variation exponent must be at least 1");
  if (n_points < 2) return 0.0;
  if (n_points > 20) fail(ErrCode::invalid_argument, "brute-force enumeration capped at 20 points");
  const std::size_t interior = n_points - 2;
  double best = 0.0;
  for (std::size_t mask = 0; mask < (static_cast<std::size_t>(1) << interior); ++mask) {
    double sum = 0.0;
    std::size_t prev = 0;
    for (std::size_t b = 0; b < interior; ++b) {
      if (mask & (static_cast<std::size_t>(1) << b)) {
        const std::size_t idx = b + 1;
        sum += std::pow(mag(prev, idx), q);
        prev = idx;
      }
    }
    sum += std::pow(mag(prev, n_points - 1), q);
    if (sum > best) best = sum;
  }
  return std::pow(best, 1.0 / q);
}

std::vector<std::size_t> coarsen_indices(std::size_t i0, std::size_t i1, std::size_t cap) {
  if (i1 < i0) fail(ErrCode::invalid_argument, "window end precedes window start");
  std::vector<std::size_t> idx;
  const std::size_t len = i1 - i0;
  if (cap == 0 || len + 1 <= cap || cap < 2) {
    idx.reserve(len + 1);
    for (std::size_t i = i0; i <= i1; ++i) idx.push_back(i);
    return idx;
  }
  // ceil stride so that the index count stays within cap; endpoints always kept.
  const std::size_t stride = (len + cap - 2) / (cap - 1);
  for (std::size_t i = i0; i < i1; i += stride) idx.push_back(i);
  idx.push_back(i1);
  return idx;
}

}  // namespace roughbsde
