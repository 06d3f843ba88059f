#include "roughbsde/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "roughbsde/errors.hpp"

namespace roughbsde {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) fail(ErrCode::config, "cannot open file for writing: " + path);
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out << ',';
    out << header[i];
  }
  out << '\n';
  for (const auto& row : rows) {
    if (row.size() != header.size()) fail(ErrCode::invalid_argument, "csv row width must match header");
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << fmt_double(row[i]);
    }
    out << '\n';
  }
  if (!out) fail(ErrCode::config, "write failed: " + path);
}

std::vector<std::vector<double>> read_csv(const std::string& path, std::vector<std::string>* header) {
  std::ifstream in(path);
  if (!in) fail(ErrCode::config, "cannot open file for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) fail(ErrCode::config, "csv missing header row: " + path);
  std::size_t width = 0;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (header) header->push_back(cell);
      ++width;
    }
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(width);
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) fail(ErrCode::config, "csv cell is not numeric: " + path);
      row.push_back(v);
    }
    if (row.size() != width) fail(ErrCode::config, "csv row width differs from header: " + path);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_sampled_path(const std::string& path, const SampledPath& sp) {
  std::vector<std::string> header{"t"};
  for (int c = 0; c < sp.e; ++c) header.push_back("x_" + std::to_string(c + 1));
  std::vector<std::vector<double>> rows(sp.grid.n_points());
  for (std::size_t i = 0; i < sp.grid.n_points(); ++i) {
    rows[i].push_back(sp.grid.t(i));
    for (int c = 0; c < sp.e; ++c) rows[i].push_back(sp.value(i, c));
  }
  write_csv(path, header, rows);
}

SampledPath read_sampled_path(const std::string& path) {
  std::vector<std::string> header;
  const auto rows = read_csv(path, &header);
  if (header.size() < 2 || header[0] != "t") fail(ErrCode::config, "sampled path csv needs t,x_1.. columns");
  if (rows.size() < 2) fail(ErrCode::config, "sampled path csv needs at least 2 rows");
  const int e = static_cast<int>(header.size()) - 1;
  std::vector<double> pts(rows.size()), vals(rows.size() * static_cast<std::size_t>(e));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    pts[i] = rows[i][0];
    for (int c = 0; c < e; ++c) vals[i * e + c] = rows[i][1 + c];
  }
  return SampledPath(TimeGrid(std::move(pts)), e, std::move(vals));
}

void write_rough_cells(const std::string& path, const TimeGrid& grid, int e, const std::vector<double>& cells) {
  const std::size_t ee = static_cast<std::size_t>(e) * e;
  if (cells.size() != grid.n_cells() * ee) fail(ErrCode::invalid_argument, "level-2 cell count must match grid cells");
  std::vector<std::string> header{"t_i", "t_ip1"};
  for (int a = 0; a < e; ++a)
    for (int b = 0; b < e; ++b) header.push_back("xx_" + std::to_string(a + 1) + "_" + std::to_string(b + 1));
  std::vector<std::vector<double>> rows(grid.n_cells());
  for (std::size_t i = 0; i < grid.n_cells(); ++i) {
    rows[i].push_back(grid.t(i));
    rows[i].push_back(grid.t(i + 1));
    for (std::size_t c = 0; c < ee; ++c) rows[i].push_back(cells[i * ee + c]);
  }
  write_csv(path, header, rows);
}

std::vector<double> read_rough_cells(const std::string& path, const TimeGrid& grid, int e) {
  const auto rows = read_csv(path);
  const std::size_t ee = static_cast<std::size_t>(e) * e;
  if (rows.size() != grid.n_cells()) fail(ErrCode::config, "level-2 csv row count must match grid cells");
  std::vector<double> cells(grid.n_cells() * ee);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != 2 + ee) fail(ErrCode::config, "level-2 csv row width mismatch");
    for (std::size_t c = 0; c < ee; ++c) cells[i * ee + c] = rows[i][2 + c];
  }
  return cells;
}

void write_ensemble(const std::string& path, const TimeGrid& grid, const EnsField& f,
                    const std::vector<std::string>& comp_names) {
  if (f.n_points != grid.n_points()) fail(ErrCode::invalid_argument, "field points must match grid");
  if (comp_names.size() != static_cast<std::size_t>(f.nv)) fail(ErrCode::invalid_argument, "component name count mismatch");
  std::vector<std::string> header{"sample", "t"};
  header.insert(header.end(), comp_names.begin(), comp_names.end());
  std::vector<std::vector<double>> rows;
  rows.reserve(f.n_samples * f.n_points);
  for (std::size_t s = 0; s < f.n_samples; ++s)
    for (std::size_t i = 0; i < f.n_points; ++i) {
      std::vector<double> row{static_cast<double>(s), grid.t(i)};
      for (int c = 0; c < f.nv; ++c) row.push_back(f.v(s, i, c));
      rows.push_back(std::move(row));
    }
  write_csv(path, header, rows);
}

void write_solution(const std::string& path, const TimeGrid& grid, const EnsField& Y, const EnsField& Z) {
  if (Y.n_samples != Z.n_samples || Y.n_points != Z.n_points || Y.n_points != grid.n_points())
    fail(ErrCode::invalid_argument, "solution fields must share the grid");
  std::vector<std::string> header{"sample", "t"};
  for (int c = 0; c < Y.nv; ++c) header.push_back("Y_" + std::to_string(c + 1));
  for (int c = 0; c < Z.nv; ++c) header.push_back("Z_" + std::to_string(c + 1));
  std::vector<std::vector<double>> rows;
  rows.reserve(Y.n_samples * Y.n_points);
  for (std::size_t s = 0; s < Y.n_samples; ++s)
    for (std::size_t i = 0; i < Y.n_points; ++i) {
      std::vector<double> row{static_cast<double>(s), grid.t(i)};
      for (int c = 0; c < Y.nv; ++c) row.push_back(Y.v(s, i, c));
      for (int c = 0; c < Z.nv; ++c) row.push_back(Z.v(s, i, c));
      rows.push_back(std::move(row));
    }
  write_csv(path, header, rows);
}

void write_sewing_report(const std::string& path, const std::vector<double>& refinement_errors) {
  std::vector<std::vector<double>> rows(refinement_errors.size());
  for (std::size_t i = 0; i < refinement_errors.size(); ++i)
    rows[i] = {static_cast<double>(i + 1), refinement_errors[i]};
  write_csv(path, {"level", "error"}, rows);
}

}  // namespace roughbsde
