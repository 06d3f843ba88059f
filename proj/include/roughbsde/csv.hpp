#pragma once

#include <string>
#include <vector>

#include "roughbsde/field.hpp"
#include "roughbsde/grid.hpp"

namespace roughbsde {

// Shortest round-trip decimal form; CSV cells are locale independent.
std::string fmt_double(double v);

// Generic table: header row then fmt_double cells; rows must share header width.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);
// Reads a numeric CSV with one header row. Header goes to *header when non-null.
std::vector<std::vector<double>> read_csv(const std::string& path, std::vector<std::string>* header = nullptr);

// Columns: t,x_1..x_e.
void write_sampled_path(const std::string& path, const SampledPath& sp);
SampledPath read_sampled_path(const std::string& path);

// Columns: t_i,t_ip1 then the e*e level-2 cell in row-major order.
void write_rough_cells(const std::string& path, const TimeGrid& grid, int e, const std::vector<double>& cells);
std::vector<double> read_rough_cells(const std::string& path, const TimeGrid& grid, int e);

// Columns: sample,t then one column per component.
void write_ensemble(const std::string& path, const TimeGrid& grid, const EnsField& f,
                    const std::vector<std::string>& comp_names);
// Columns: sample,t,Y_1..,Z_1.. for paired fields on the same grid.
void write_solution(const std::string& path, const TimeGrid& grid, const EnsField& Y, const EnsField& Z);

// Columns: level,error (one refinement residual per level).
void write_sewing_report(const std::string& path, const std::vector<double>& refinement_errors);

}  // namespace roughbsde
