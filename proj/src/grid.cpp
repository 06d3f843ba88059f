#include "roughbsde/grid.hpp"

#include <algorithm>
#include <cmath>

#include "roughbsde/errors.hpp"

namespace roughbsde {

TimeGrid::TimeGrid(std::vector<double> points) : points_(std::move(points)) {
  if (points_.size() < 2) fail(ErrCode::invalid_argument, "grid needs at least 2 points");
  if (std::abs(points_.front()) > 1e-12)
    fail(ErrCode::invalid_argument, "grid must start at 0");
  points_.front() = 0.0;
  for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
    if (!(points_[i] < points_[i + 1]))
      fail(ErrCode::invalid_argument, "grid points must be strictly increasing");
    if (!std::isfinite(points_[i + 1])) fail(ErrCode::invalid_argument, "grid points must be finite");
  }
}

TimeGrid TimeGrid::uniform(double T, std::size_t n_cells) {
  if (!(T > 0.0) || n_cells == 0) fail(ErrCode::invalid_argument, "uniform grid needs T > 0 and at least 1 cell");
  std::vector<double> pts(n_cells + 1);
  for (std::size_t i = 0; i <= n_cells; ++i) pts[i] = T * static_cast<double>(i) / static_cast<double>(n_cells);
  pts.back() = T;
  return TimeGrid(std::move(pts));
}

std::size_t TimeGrid::index_of(double time) const {
  const double tol = 1e-12 * std::max(1.0, std::abs(T()));
  auto it = std::lower_bound(points_.begin(), points_.end(), time - tol);
  if (it == points_.end() || std::abs(*it - time) > tol) fail(ErrCode::invalid_argument, "time not on grid");
  return static_cast<std::size_t>(it - points_.begin());
}

bool TimeGrid::same_as(const TimeGrid& other, double tol) const {
  if (points_.size() != other.points_.size()) return false;
  for (std::size_t i = 0; i < points_.size(); ++i)
    if (std::abs(points_[i] - other.points_[i]) > tol) return false;
  return true;
}

SampledPath::SampledPath(TimeGrid g, int e_dim, std::vector<double> vals)
    : grid(std::move(g)), e(e_dim), values(std::move(vals)) {
  if (e < 1) fail(ErrCode::invalid_argument, "path dimension must be positive");
  if (values.size() != grid.n_points() * static_cast<std::size_t>(e))
    fail(ErrCode::invalid_argument, "path values length must match grid points");
}

}  // namespace roughbsde
