#pragma once
#include <cstddef>
#include <vector>

namespace roughbsde {

// Strictly increasing partition of [0,T] with points[0] = 0 and at least 2 points.
class TimeGrid {
public:
  TimeGrid() = default;
  explicit TimeGrid(std::vector<double> points);
  static TimeGrid uniform(double T, std::size_t n_cells);

  const std::vector<double>& points() const { return points_; }
  std::size_t n_points() const { return points_.size(); }
  std::size_t n_cells() const { return points_.empty() ? 0 : points_.size() - 1; }
  double T() const { return points_.back(); }
  double t(std::size_t i) const { return points_[i]; }
  double dt(std::size_t cell) const { return points_[cell + 1] - points_[cell]; }

  // Index of a grid time; throws "time not on grid" for anything else.
  std::size_t index_of(double time) const;
  bool same_as(const TimeGrid& other, double tol = 1e-12) const;

private:
  std::vector<double> points_;
};

// Vector-valued path sampled on a grid; values row-major (point, component).
struct SampledPath {
  TimeGrid grid;
  int e = 1;
  std::vector<double> values;

  SampledPath() = default;
  SampledPath(TimeGrid g, int e_dim, std::vector<double> vals);

  double* at(std::size_t i) { return values.data() + static_cast<std::size_t>(e) * i; }
  const double* at(std::size_t i) const { return values.data() + static_cast<std::size_t>(e) * i; }
  double value(std::size_t i, int c) const { return values[static_cast<std::size_t>(e) * i + c]; }
};

}  // namespace roughbsde
