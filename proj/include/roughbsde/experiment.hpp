#pragma once
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace roughbsde {

// Library version reported in run manifests and by the C API.
const char* version_string();

// Plain-text key=value configuration. '#' starts a comment, blank lines are
// skipped, duplicate keys are rejected. Serialization is canonical: sorted keys,
// one "key = value" line each, so the hash is stable under reordering.
struct Config {
  std::map<std::string, std::string> kv;

  static Config parse_text(const std::string& text);
  static Config load(const std::string& path);
  std::string serialize() const;
  std::uint64_t hash() const;  // FNV-1a over the canonical serialization

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback = "") const;
  double num(const std::string& key, double fallback) const;
  long integer(const std::string& key, long fallback) const;
  // Comma-separated doubles; returns fallback when the key is absent.
  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const;
};

struct ExperimentInfo {
  std::string id;
  std::string summary;
  std::vector<std::string> keys;  // accepted beyond id/out_dir/seed
};
const std::vector<ExperimentInfo>& list_experiments();

// Rejects unknown ids, unknown keys, and non-numeric values for numeric keys.
void validate_config(const Config& cfg);

// Least squares slope of log(y) on log(x). band95 is 1.96 standard errors of the
// slope (normal approximation). Needs at least three strictly positive rows.
struct RateFit {
  double slope = 0.0;
  double band95 = 0.0;
};
RateFit fit_rate(const std::vector<double>& x, const std::vector<double>& y);

struct RunResult {
  int exit_code = 0;  // 0 pass, 1 audit failure, 2 config error
  std::string out_dir;
  std::vector<std::string> artifacts;  // file names relative to out_dir
  std::string detail;                  // one-line outcome summary
};

// Runs the experiment named by cfg["id"]. The output root is resolved as: the
// out_root argument, then cfg["out_dir"], then the ROUGHBSDE_OUTPUT_ROOT
// environment variable, then the working directory. Artifacts land in
// "<root>/<id>-<hash8>/": CSV tables, manifest.json, and errors.jsonl on failure.
// CSV artifacts are byte-identical across runs with the same config and seed; the
// manifest additionally records wall time. Config errors return exit code 2
// without writing anything.
RunResult run_experiment(const Config& cfg, const std::string& out_root = "");

}  // namespace roughbsde
