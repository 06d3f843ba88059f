#pragma once
#include <cstddef>
#include <functional>
#include <vector>

namespace roughbsde {

// sup over partitions with breakpoints in {0..n_points-1} of (Σ mag(i,j)^q)^{1/q},
// computed by dynamic programming V[j] = max_{i<j}(V[i] + mag(i,j)^q).
// mag(i,j) is the magnitude of the two-parameter increment between breakpoints i < j.
// Requires q >= 1; returns 0 for fewer than 2 points.
double p_variation(const std::function<double(std::size_t, std::size_t)>& mag, std::size_t n_points, double q);

// Brute-force enumeration over all partitions; test oracle, n_points <= 20.
double p_variation_brute(const std::function<double(std::size_t, std::size_t)>& mag, std::size_t n_points, double q);

// Endpoint-preserving coarsening of the index range [i0, i1]: at most cap indices
// (cap >= 2), evenly strided, always containing i0 and i1. cap == 0 disables coarsening.
std::vector<std::size_t> coarsen_indices(std::size_t i0, std::size_t i1, std::size_t cap);

}  // namespace roughbsde
