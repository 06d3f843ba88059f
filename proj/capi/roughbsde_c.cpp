#include "roughbsde_c.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>

#include "roughbsde/errors.hpp"
#include "roughbsde/experiment.hpp"
#include "roughbsde/pvar.hpp"

struct rb_config {
  roughbsde::Config cfg;
};

namespace {

thread_local std::string t_last_error;

rb_status from_code(roughbsde::ErrCode c) {
  switch (c) {
    case roughbsde::ErrCode::audit: return RB_AUDIT;
    case roughbsde::ErrCode::config: return RB_CONFIG;
    case roughbsde::ErrCode::invalid_argument: return RB_INVALID_ARGUMENT;
    case roughbsde::ErrCode::numeric: return RB_NUMERIC;
  }
  return RB_UNKNOWN;
}

rb_status set_error(rb_status s, const char* msg) {
  t_last_error = msg ? msg : "";
  return s;
}

/* Uniform exception barrier: no exception crosses the C boundary. */
template <typename Fn>
rb_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const roughbsde::RbError& e) {
    return set_error(from_code(e.code()), e.what());
  } catch (const std::exception& e) {
    return set_error(RB_UNKNOWN, e.what());
  } catch (...) {
    return set_error(RB_UNKNOWN, "unknown failure");
  }
}

rb_status copy_out(const std::string& s, char* buf, size_t buf_len) {
  if (!buf || buf_len < s.size() + 1) return set_error(RB_INVALID_ARGUMENT, "buffer too small");
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return RB_OK;
}

}  // namespace

extern "C" {

const char* rb_version(void) { return roughbsde::version_string(); }

const char* rb_last_error(void) { return t_last_error.c_str(); }

rb_status rb_config_load(const char* path, rb_config** out) {
  if (!path || !out) return set_error(RB_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    auto* h = new rb_config{roughbsde::Config::load(path)};
    *out = h;
    return RB_OK;
  });
}

rb_status rb_config_parse(const char* text, rb_config** out) {
  if (!text || !out) return set_error(RB_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    auto* h = new rb_config{roughbsde::Config::parse_text(text)};
    *out = h;
    return RB_OK;
  });
}

void rb_config_free(rb_config* cfg) { delete cfg; }

rb_status rb_config_set(rb_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return set_error(RB_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    // Reuse the parser so key syntax rules stay in one place.
    roughbsde::Config line = roughbsde::Config::parse_text(std::string(key) + " = " + value + "\n");
    for (const auto& [k, v] : line.kv) cfg->cfg.kv[k] = v;
    return RB_OK;
  });
}

rb_status rb_config_get(const rb_config* cfg, const char* key, char* buf, size_t buf_len) {
  if (!cfg || !key) return set_error(RB_INVALID_ARGUMENT, "null argument");
  if (!cfg->cfg.has(key)) return set_error(RB_INVALID_ARGUMENT, std::string("missing config key: ").append(key).c_str());
  return copy_out(cfg->cfg.get(key), buf, buf_len);
}

rb_status rb_config_validate(const rb_config* cfg) {
  if (!cfg) return set_error(RB_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    roughbsde::validate_config(cfg->cfg);
    return RB_OK;
  });
}

uint64_t rb_config_hash(const rb_config* cfg) { return cfg ? cfg->cfg.hash() : 0; }

rb_status rb_run(const rb_config* cfg, const char* out_root, rb_run_result* result) {
  if (!cfg || !result) return set_error(RB_INVALID_ARGUMENT, "null argument");
  std::memset(result, 0, sizeof(*result));
  return guarded([&] {
    roughbsde::RunResult rr = roughbsde::run_experiment(cfg->cfg, out_root ? out_root : "");
    result->exit_code = rr.exit_code;
    std::snprintf(result->out_dir, sizeof(result->out_dir), "%s", rr.out_dir.c_str());
    std::snprintf(result->detail, sizeof(result->detail), "%s", rr.detail.c_str());
    return RB_OK;
  });
}

rb_status rb_list_experiments(char* buf, size_t buf_len, size_t* needed) {
  std::string all;
  for (const auto& e : roughbsde::list_experiments()) all += e.id + "\t" + e.summary + "\n";
  if (needed) *needed = all.size() + 1;
  return copy_out(all, buf, buf_len);
}

rb_status rb_pvariation(const double* values, size_t n_points, int dim, double q, double* out) {
  if (!values || !out || n_points < 2 || dim < 1 || !(q >= 1.0))
    return set_error(RB_INVALID_ARGUMENT, "p-variation needs a path with at least two points and q >= 1");
  return guarded([&] {
    auto mag = [values, dim](std::size_t i, std::size_t j) {
      double acc = 0.0;
      for (int c = 0; c < dim; ++c) {
        double d = values[j * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)] -
                   values[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)];
        acc += d * d;
      }
      return std::sqrt(acc);
    };
    *out = roughbsde::p_variation(mag, n_points, q);
    return RB_OK;
  });
}

}  // extern "C"
