// Acceptance gate: ten pinned checks, one pass/fail line each, nonzero exit on
// any failure. Each check runs a pinned experiment config and re-verifies the
// claimed numbers straight from the CSV artifacts.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "roughbsde/csv.hpp"
#include "roughbsde/errors.hpp"
#include "roughbsde/experiment.hpp"

using namespace roughbsde;

namespace {

const char* kRoot = "acceptance_artifacts";

struct Check {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& why) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + why;
    }
  }
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  double at(std::size_t r, const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return rows[r][c];
    fail(ErrCode::invalid_argument, "missing column: " + name);
  }
};

Table load(const RunResult& rr, const std::string& name) {
  Table t;
  t.rows = read_csv(rr.out_dir + "/" + name, &t.header);
  return t;
}

RunResult run(const std::string& text) { return run_experiment(Config::parse_text(text), kRoot); }

std::string g3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

Check chen_identity() {
  Check c;
  RunResult rr = run("id = chen-check\npaths = 100\nmax_points = 64\nmax_dim = 3\ntol = 1e-12\n");
  c.require(rr.exit_code == 0, rr.detail);
  Table t = load(rr, "chen.csv");
  c.require(t.rows.size() == 100, "expected 100 lifts");
  double worst = 0.0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    worst = std::max(worst, t.at(r, "max_rel_violation"));
    c.require(t.at(r, "ok") == 1.0, "lift failed the triple check");
    c.require(t.at(r, "dim") <= 3.0 && t.at(r, "cells") <= 63.0, "path outside the pinned family");
  }
  c.require(worst <= 1e-12, "relative violation above 1e-12");
  c.detail = "100 random lifts, worst relative triple violation " + g3(worst);
  return c;
}

Check pvar_agreement() {
  Check c;
  RunResult rr = run("id = pvar-check\npaths = 200\nmax_points = 14\nqs = 1,1.5,2,2.5\n");
  c.require(rr.exit_code == 0, rr.detail);
  Table t = load(rr, "pvar.csv");
  c.require(t.rows.size() == 800, "expected 200 paths x 4 exponents");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    c.require(t.at(r, "gap") == 0.0, "dynamic programming differs from brute force");
    c.require(t.at(r, "points") <= 14.0, "path outside the pinned family");
  }
  c.detail = "800 exact matches between the dynamic program and brute force";
  return c;
}

Check integral_exactness() {
  Check c;
  RunResult rr = run("id = ito-consistency\nlevels = 4\nsamples = 10000\nbase_cells = 8\np = 2.5\n");
  c.require(rr.exit_code == 0, rr.detail);
  Table t = load(rr, "rates.csv");
  const double det_gap = t.at(0, "det_gap"), slope = t.at(0, "slope");
  c.require(det_gap <= 1e-12, "square integral not exact");
  c.require(slope >= 0.4 && slope <= 0.6, "mesh rate outside [0.4, 0.6]");
  c.require(load(rr, "ito.csv").rows.size() == 4, "expected 4 dyadic levels");
  c.detail = "square-integral gap " + g3(det_gap) + ", Brownian L2 mesh rate " + g3(slope);
  return c;
}

Check martingale_inequalities() {
  Check c;
  RunResult rr = run("id = mtg-bounds\ntrials = 50\ntree_sizes = 6,9,12\nmoment = 2\n");
  c.require(rr.exit_code == 0, rr.detail);
  Table t = load(rr, "mtg.csv");
  std::map<long, std::pair<double, double>> spread;
  double worst_sup = 0.0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    double ratio = t.at(r, "variation_over_terminal"), sup = t.at(r, "sup_over_terminal_plus_var");
    c.require(std::isfinite(ratio) && std::isfinite(sup), "constant not finite");
    c.require(sup <= 1.0 + 1e-12, "running sup exceeds terminal plus variation");
    worst_sup = std::max(worst_sup, sup);
    long trial = static_cast<long>(t.at(r, "trial"));
    auto it = spread.find(trial);
    if (it == spread.end())
      spread[trial] = {ratio, ratio};
    else {
      it->second.first = std::min(it->second.first, ratio);
      it->second.second = std::max(it->second.second, ratio);
    }
  }
  c.require(spread.size() == 50, "expected 50 trials");
  double worst_spread = 0.0;
  for (const auto& [trial, mm] : spread) worst_spread = std::max(worst_spread, mm.second / mm.first);
  c.require(worst_spread < 2.0, "constants drift by 2x or more across refinements");
  c.detail = "50 trials, constant spread " + g3(worst_spread) + "x, running-sup ratio " + g3(worst_sup);
  return c;
}

Check picard_contraction() {
  Check c;
  RunResult rr = run("id = contraction\nproblems = 50\ntree_n = 8\ntol_ratio = 0.55\ntol_residual = 1e-10\n");
  c.require(rr.exit_code == 0, rr.detail);
  Table t = load(rr, "contraction.csv");
  c.require(t.rows.size() == 50, "expected 50 problems");
  double worst_ratio = 0.0, worst_residual = 0.0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    worst_ratio = std::max(worst_ratio, t.at(r, "max_ratio"));
    worst_residual = std::max(worst_residual, t.at(r, "residual"));
  }
  c.require(worst_ratio <= 0.55, "window ratio above 0.55");
  c.require(worst_residual <= 1e-10, "fixed-point residual above 1e-10");
  c.detail = "50 random problems, worst window ratio " + g3(worst_ratio) + ", worst residual " + g3(worst_residual);
  return c;
}

Check duality_oracle_check() {
  Check c;
  RunResult rr = run("id = duality\ntree_n = 10\namp = 0.004\nfreq = 2\nxi_amp = 0.4\ntol = 1e-6\ngs = -0.5,-0.25,0.25,0.5\n");
  c.require(rr.exit_code == 0, rr.detail);
  Table t = load(rr, "duality.csv");
  double worst = 0.0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    c.require(std::abs(t.at(r, "g")) <= 0.5, "coefficient outside the pinned family");
    worst = std::max(worst, t.at(r, "max_gap"));
  }
  c.require(worst <= 1e-6, "solution differs from the tilt oracle beyond 1e-6");
  c.detail = "worst gap to the exponential-tilt oracle " + g3(worst);
  return c;
}

Check log_transform_oracle() {
  Check c;
  RunResult rr = run("id = cole-hopf\ntrials = 20\ntree_n = 10\ngrowth = 0.25\nxi_inf = 0.05\ntol = 1e-6\n");
  c.require(rr.exit_code == 0, rr.detail);
  Table t = load(rr, "cole_hopf.csv");
  double worst_gap = 0.0, worst_ratio = 0.0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    worst_gap = std::max(worst_gap, t.at(r, "max_gap"));
    worst_ratio = std::max(worst_ratio, t.at(r, "max_picard_ratio"));
  }
  c.require(worst_gap <= 1e-6, "solution differs from the log-transform oracle beyond 1e-6");
  c.require(worst_ratio <= 0.55, "Picard ratio above 0.55");
  c.detail = "worst oracle gap " + g3(worst_gap) + ", worst Picard ratio " + g3(worst_ratio);
  return c;
}

Check nonlinear_flow_solver() {
  Check c;
  RunResult rr = run(
      "id = nonlinear-flow\ntree_n = 8\nlevels = 4\namp = 0.04\ng_lin = 0.15\ng_amp = 0.5\ng_freq = 1\n"
      "growth = 0.1\ntol_cross = 1e-4\n");
  c.require(rr.exit_code == 0, rr.detail);
  Table cross = load(rr, "cross.csv");
  const double combined = cross.at(0, "y_gap") + cross.at(0, "z_gap");
  c.require(combined <= 1e-4, "linear cross-check beyond 1e-4 combined");
  Table lv = load(rr, "levels.csv");
  c.require(lv.rows.size() == 4, "expected 4 approximation levels");
  for (std::size_t r = 2; r < lv.rows.size(); ++r)
    c.require(lv.at(r, "cauchy") <= lv.at(r - 1, "cauchy") + 1e-14, "Cauchy distances not decreasing");
  c.require(lv.at(3, "cauchy") < lv.at(1, "cauchy"), "Cauchy distances did not shrink");
  c.detail = "combined linear cross-check gap " + g3(combined) + ", Cauchy falls " + g3(lv.at(1, "cauchy")) +
             " to " + g3(lv.at(3, "cauchy"));
  return c;
}

Check value_surface_oracle() {
  Check c;
  RunResult fk = run("id = fk-vs-fd\ntree_n = 10\namp = 0.04\ng = 0.3\ntol = 2e-2\nx_lo = -1\nx_hi = 1\nx_count = 5\n");
  c.require(fk.exit_code == 0, fk.detail);
  Table t = load(fk, "surface_gap.csv");
  double worst0 = 0.0;
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    if (t.at(r, "t") == 0.0) worst0 = std::max(worst0, t.at(r, "gap"));
  c.require(worst0 <= 2e-2, "time-zero surface gap above 2e-2");
  RunResult cx = run("id = continuity-in-x\ntree_n = 8\namp = 0.1\ng = 0.3\n");
  c.require(cx.exit_code == 0, cx.detail);
  Table ct = load(cx, "continuity.csv");
  c.require(ct.rows.size() == 4, "expected 4 dyadic lift levels");
  for (std::size_t r = 1; r < ct.rows.size(); ++r)
    c.require(ct.at(r, "sup_distance") < ct.at(r - 1, "sup_distance"), "surface distances not strictly decreasing");
  c.detail = "time-zero oracle gap " + g3(worst0) + ", surface distance falls " + g3(ct.at(0, "sup_distance")) +
             " to " + g3(ct.at(3, "sup_distance"));
  return c;
}

Check perturbation_audits() {
  Check c;
  struct Leg {
    const char* cfg;
    const char* csv;
    const char* col;
  };
  const std::vector<Leg> legs = {
      {"id = stability-rsi\ntree_n = 8\nbumps = 4\nscale = 0.05\n", "stability.csv", "output_distance"},
      {"id = continuity-solumc\ntree_n = 8\namp = 0.04\ng = 0.3\nbumps = 4\nscale = 0.05\n", "continuity.csv",
       "solution_distance"},
      {"id = continuity-bsde\ntree_n = 8\nbumps = 4\nscale = 0.04\ngrowth = 0.25\n", "continuity.csv",
       "solution_gap"},
      {"id = boundedness\ntree_n = 8\namp = 0.04\ng = 0.3\nscales = 4\n", "boundedness.csv", "combined"},
  };
  std::string falls;
  for (const Leg& leg : legs) {
    RunResult rr = run(leg.cfg);
    c.require(rr.exit_code == 0, rr.detail);
    if (rr.exit_code != 0) continue;
    Table t = load(rr, leg.csv);
    const double first = t.at(0, leg.col), last = t.at(t.rows.size() - 1, leg.col);
    c.require(last <= 0.2 * first, std::string(leg.csv) + " last row above 0.2x first row");
    falls += (falls.empty() ? "" : ", ") + g3(last / first);
  }
  c.detail = "last/first output ratios " + falls + " across the four perturbation families";
  return c;
}

}  // namespace

int main() {
  std::filesystem::remove_all(kRoot);
  struct Criterion {
    const char* name;
    double budget_s;
    std::function<Check()> fn;
  };
  const std::vector<Criterion> criteria = {
      {"two-level consistency of canonical lifts", 5.0, chen_identity},
      {"p-variation dynamic program vs brute force", 10.0, pvar_agreement},
      {"rough integral exactness and Brownian mesh rate", 60.0, integral_exactness},
      {"martingale variation and running-sup inequalities", 30.0, martingale_inequalities},
      {"windowed Picard contraction on random problems", 60.0, picard_contraction},
      {"constant-coefficient exponential-tilt oracle", 10.0, duality_oracle_check},
      {"quadratic solver log-transform oracle", 10.0, log_transform_oracle},
      {"nonlinear flow transform cross-checks", 120.0, nonlinear_flow_solver},
      {"value surface vs finite difference oracle", 120.0, value_surface_oracle},
      {"perturbation audits trend to zero", 120.0, perturbation_audits},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Check c;
    try {
      c = criteria[i].fn();
    } catch (const std::exception& e) {
      c.pass = false;
      c.detail = e.what();
    }
    const double secs =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count() / 1e3;
    if (secs > criteria[i].budget_s) {
      c.pass = false;
      c.detail += (c.detail.empty() ? "" : "; ") + std::string("over the ") +
                  std::to_string(static_cast<int>(criteria[i].budget_s)) + "s budget";
    }
    failures += c.pass ? 0 : 1;
    std::printf("[%2zu/10] %s  %-50s  %6.2fs  %s\n", i + 1, c.pass ? "PASS" : "FAIL", criteria[i].name, secs,
                c.detail.c_str());
  }
  std::printf("%d/10 criteria passed\n", 10 - failures);
  return failures;
}
