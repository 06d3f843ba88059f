#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "roughbsde_c.h"

namespace {

// Config errors exit 2 to match the run contract.
int load_or_fail(const std::string& path, rb_config** cfg) {
  if (rb_config_load(path.c_str(), cfg) != RB_OK) {
    std::fprintf(stderr, "error: %s\n", rb_last_error());
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"experiment runner for rough-drive backward equations"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_root;
  CLI::App* run = app.add_subcommand("run", "run an experiment config and write its artifacts");
  run->add_option("config", config_path, "plain-text key=value config file")->required();
  run->add_option("--out", out_root, "output root (overrides the config and ROUGHBSDE_OUTPUT_ROOT)");

  std::string validate_path;
  CLI::App* validate = app.add_subcommand("validate", "check a config without running it");
  validate->add_option("config", validate_path, "plain-text key=value config file")->required();

  app.add_subcommand("list-experiments", "print one id and summary per line");

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand("list-experiments")) {
    char buf[8192];
    if (rb_list_experiments(buf, sizeof(buf), nullptr) != RB_OK) {
      std::fprintf(stderr, "error: %s\n", rb_last_error());
      return 1;
    }
    std::fputs(buf, stdout);
    return 0;
  }

  if (app.got_subcommand("validate")) {
    rb_config* cfg = nullptr;
    if (int rc = load_or_fail(validate_path, &cfg)) return rc;
    rb_status st = rb_config_validate(cfg);
    if (st != RB_OK) {
      std::fprintf(stderr, "error: %s\n", rb_last_error());
      rb_config_free(cfg);
      return 2;
    }
    char id[256];
    rb_config_get(cfg, "id", id, sizeof(id));
    std::printf("ok: %s (config hash %016llx)\n", id, static_cast<unsigned long long>(rb_config_hash(cfg)));
    rb_config_free(cfg);
    return 0;
  }

  rb_config* cfg = nullptr;
  if (int rc = load_or_fail(config_path, &cfg)) return rc;
  rb_run_result result;
  rb_status st = rb_run(cfg, out_root.empty() ? nullptr : out_root.c_str(), &result);
  rb_config_free(cfg);
  if (st != RB_OK) {
    std::fprintf(stderr, "error: %s\n", rb_last_error());
    return 1;
  }
  if (result.exit_code == 2) {
    std::fprintf(stderr, "error: %s\n", result.detail);
    return 2;
  }
  std::printf("%s: %s\n", result.exit_code == 0 ? "pass" : "fail", result.detail);
  std::printf("artifacts: %s\n", result.out_dir);
  return result.exit_code;
}
