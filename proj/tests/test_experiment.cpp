#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "roughbsde/errors.hpp"
#include "roughbsde/experiment.hpp"

using namespace roughbsde;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Fresh scratch root per test, wiped on entry so reruns start clean.
std::string scratch(const std::string& tag) {
  std::string dir = "tmp_experiment_" + tag;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("config parses, round-trips, and hashes canonically") {
  Config cfg = Config::parse_text("# header comment\nid = chen-check\n\npaths=10   # trailing\n  seed = 3\n");
  CHECK(cfg.kv.size() == 3);
  CHECK(cfg.get("id") == "chen-check");
  CHECK(cfg.integer("paths", 0) == 10);
  CHECK(cfg.integer("seed", 0) == 3);
  CHECK(cfg.num("missing", 2.5) == 2.5);

  Config again = Config::parse_text(cfg.serialize());
  CHECK(again.kv == cfg.kv);
  Config reordered = Config::parse_text("seed=3\npaths = 10\nid=chen-check\n");
  CHECK(reordered.hash() == cfg.hash());
  CHECK(reordered.serialize() == cfg.serialize());

  CHECK_THROWS_WITH_AS(Config::parse_text("id = a\nid = b\n"), "duplicate config key: id", RbError);
  CHECK_THROWS_WITH_AS(Config::parse_text("just words\n"), "malformed config line: just words", RbError);
  CHECK_THROWS_WITH_AS(Config::parse_text("bad key! = 1\n"), "malformed config line: bad key! = 1", RbError);
  CHECK_THROWS_WITH_AS(Config::load("no_such_file.cfg"), "cannot read config file: no_such_file.cfg", RbError);
  CHECK_THROWS_WITH_AS(Config::parse_text("id = x\npaths = ten\n").num("paths", 0.0),
                       "config key needs a number: paths", RbError);
}

TEST_CASE("validation rejects unknown ids and keys") {
  CHECK_THROWS_WITH_AS(validate_config(Config::parse_text("")), "config needs an id", RbError);
  CHECK_THROWS_WITH_AS(validate_config(Config::parse_text("id = nope\n")), "unknown experiment id: nope", RbError);
  CHECK_THROWS_WITH_AS(validate_config(Config::parse_text("id = chen-check\nbogus = 1\n")),
                       "unknown config key: bogus", RbError);
  CHECK_THROWS_WITH_AS(validate_config(Config::parse_text("id = chen-check\npaths = ten\n")),
                       "config key needs a number: paths", RbError);
  CHECK_THROWS_WITH_AS(validate_config(Config::parse_text("id = pvar-check\nqs = 1,,2\n")),
                       "config key needs a number: qs", RbError);
  validate_config(Config::parse_text("id = pvar-check\nqs = 1, 1.5 ,2\nseed = 4\nout_dir = anywhere\n"));
}

TEST_CASE("experiment registry lists distinct documented ids") {
  const auto& table = list_experiments();
  CHECK(table.size() == 15);
  std::set<std::string> ids;
  for (const auto& e : table) {
    CHECK(!e.summary.empty());
    ids.insert(e.id);
    for (const auto& k : e.keys) CHECK(k != "id");
  }
  CHECK(ids.size() == table.size());
  CHECK(ids.count("duality") == 1);
  CHECK(ids.count("fk-vs-fd") == 1);
}

TEST_CASE("rate fit recovers exact dyadic slopes") {
  std::vector<double> x = {1.0, 0.5, 0.25, 0.125};
  std::vector<double> halving(4), quartering(4), root(4);
  for (int i = 0; i < 4; ++i) {
    halving[i] = 3.0 * x[i];
    quartering[i] = 0.7 * x[i] * x[i];
    root[i] = std::sqrt(x[i]);
  }
  CHECK(fit_rate(x, halving).slope == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit_rate(x, quartering).slope == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(fit_rate(x, root).slope == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(fit_rate(x, halving).band95 <= 1e-10);

  CHECK_THROWS_WITH_AS(fit_rate({1.0, 0.5}, {1.0, 0.5}), "rate fit needs at least three rows", RbError);
  CHECK_THROWS_WITH_AS(fit_rate({1.0, 0.5, 0.25}, {1.0, 0.0, 0.25}), "rate fit needs positive entries", RbError);
  CHECK_THROWS_WITH_AS(fit_rate({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}), "rate fit needs varying inputs", RbError);
}

TEST_CASE("runs write byte-identical tables across repeats") {
  std::string root = scratch("repeat");
  Config cfg = Config::parse_text("id = pvar-check\npaths = 25\nmax_points = 9\nseed = 7\n");
  RunResult a = run_experiment(cfg, root + "/a");
  RunResult b = run_experiment(cfg, root + "/b");
  CHECK(a.exit_code == 0);
  CHECK(b.exit_code == 0);
  CHECK(a.artifacts == b.artifacts);
  CHECK(!a.artifacts.empty());
  for (const auto& name : a.artifacts) CHECK(slurp(a.out_dir + "/" + name) == slurp(b.out_dir + "/" + name));

  nlohmann::json ma = nlohmann::json::parse(slurp(a.out_dir + "/manifest.json"));
  nlohmann::json mb = nlohmann::json::parse(slurp(b.out_dir + "/manifest.json"));
  CHECK(ma["status"] == "pass");
  CHECK(ma["id"] == "pvar-check");
  CHECK(ma["config_hash"].get<std::string>().size() == 16);
  CHECK(ma["versions"]["library"] == version_string());
  CHECK(ma["wall_ms"].is_number());
  ma.erase("wall_ms");
  mb.erase("wall_ms");
  CHECK(ma == mb);
  fs::remove_all(root);
}

TEST_CASE("output root resolution prefers argument, config, then environment") {
  std::string root = scratch("roots");
  Config cfg = Config::parse_text("id = pvar-check\npaths = 4\nmax_points = 6\nout_dir = " + root + "/from_cfg\n");
  RunResult arg = run_experiment(cfg, root + "/from_arg");
  CHECK(arg.out_dir.rfind(root + "/from_arg/", 0) == 0);
  RunResult viacfg = run_experiment(cfg);
  CHECK(viacfg.out_dir.rfind(root + "/from_cfg/", 0) == 0);
  Config bare = Config::parse_text("id = pvar-check\npaths = 4\nmax_points = 6\n");
  setenv("ROUGHBSDE_OUTPUT_ROOT", (root + "/from_env").c_str(), 1);
  RunResult viaenv = run_experiment(bare);
  unsetenv("ROUGHBSDE_OUTPUT_ROOT");
  CHECK(viaenv.out_dir.rfind(root + "/from_env/", 0) == 0);
  CHECK(fs::exists(viaenv.out_dir + "/manifest.json"));
  // The directory name carries the id and the leading config hash bytes.
  CHECK(fs::path(arg.out_dir).filename().string().rfind("pvar-check-", 0) == 0);
  fs::remove_all(root);
}

TEST_CASE("audit failures exit one and leave a machine-readable error log") {
  std::string root = scratch("audit");
  // The discrete tilt oracle differs from the solver by a positive per-cell
  // defect, so a zero-width tolerance cannot be met.
  Config cfg = Config::parse_text("id = duality\ntree_n = 5\ngs = 0.5\ntol = 1e-18\n");
  RunResult rr = run_experiment(cfg, root);
  CHECK(rr.exit_code == 1);
  nlohmann::json manifest = nlohmann::json::parse(slurp(rr.out_dir + "/manifest.json"));
  CHECK(manifest["status"] == "audit_failure");
  std::istringstream lines(slurp(rr.out_dir + "/errors.jsonl"));
  std::string line;
  REQUIRE(std::getline(lines, line));
  nlohmann::json err = nlohmann::json::parse(line);
  CHECK(err["kind"] == "audit");
  CHECK(err["id"] == "duality");
  CHECK(!err["message"].get<std::string>().empty());
  fs::remove_all(root);
}

TEST_CASE("config errors exit two and write nothing") {
  std::string root = scratch("cfgerr");
  Config cfg = Config::parse_text("id = pvar-check\nbogus = 1\n");
  RunResult rr = run_experiment(cfg, root + "/sub");
  CHECK(rr.exit_code == 2);
  CHECK(rr.out_dir.empty());
  CHECK(rr.detail == "unknown config key: bogus");
  CHECK(!fs::exists(root + "/sub"));
  RunResult noid = run_experiment(Config::parse_text(""), root + "/sub2");
  CHECK(noid.exit_code == 2);
  CHECK(noid.detail == "config needs an id");
  fs::remove_all(root);
}

TEST_CASE("small end-to-end runs pass their own audits") {
  std::string root = scratch("e2e");
  RunResult duality =
      run_experiment(Config::parse_text("id = duality\ntree_n = 6\ngs = -0.5,0.5\n"), root);
  CHECK(duality.exit_code == 0);
  CHECK(fs::exists(duality.out_dir + "/duality.csv"));
  RunResult mtg =
      run_experiment(Config::parse_text("id = mtg-bounds\ntrials = 4\ntree_sizes = 4,6,8\n"), root);
  CHECK(mtg.exit_code == 0);
  RunResult sew = run_experiment(Config::parse_text("id = sewing-uniqueness\ncells = 16\n"), root);
  CHECK(sew.exit_code == 0);
  fs::remove_all(root);
}
