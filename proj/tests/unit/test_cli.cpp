#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "smm/data.hpp"
#include "smm/serialize.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(SMM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("smm_cli_" + std::to_string(std::rand()) + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("gen, fit, eval, attack and select") {
  TempDir dir;
  const std::string d = dir.path.string();
  REQUIRE(run("--seed 3 --out " + d + "/train gen --scenario simple_iv -n 300") == 0);
  REQUIRE(run("--seed 4 --out " + d + "/valid gen --scenario simple_iv -n 300") == 0);
  CHECK(fs::exists(dir.path / "train" / "manifest.json"));
  const smm::Dataset ds = smm::load_csv(dir.path / "train" / "data.csv");
  CHECK(ds.size() == 300);

  // same seed, same bytes
  REQUIRE(run("--seed 3 --out " + d + "/again gen --scenario simple_iv -n 300") == 0);
  CHECK(slurp(dir.path / "again" / "data.csv") == slurp(dir.path / "train" / "data.csv"));

  REQUIRE(run("--out " + d + "/fit fit --data " + d + "/train/data.csv --method smm") == 0);
  const smm::Json fit = smm::read_json_file(dir.path / "fit" / "fit.json");
  CHECK(fit["method"] == "smm");
  CHECK(fit["theta"].size() == 3);
  CHECK(fit["stage_objectives"].size() == 2);
  CHECK(fit["config"]["gamma_z"] == "inf");

  REQUIRE(run("--out " + d + "/fit eval --fit " + d + "/fit/fit.json --params " + d + "/train/params.json --n-eval 1000") == 0);
  CHECK(smm::read_json_file(dir.path / "fit" / "eval.json")["mse"].get<double>() > 0.0);

  REQUIRE(run("--out " + d + "/fit attack --fit " + d + "/fit/fit.json --params " + d + "/train/params.json --n-test 200") == 0);
  CHECK(slurp(dir.path / "fit" / "attack.csv").rfind("eps,mse,stderr,method\n", 0) == 0);

  REQUIRE(run("--out " + d + "/sel select --train " + d + "/train/data.csv --valid " + d + "/valid/data.csv --method vmm") == 0);
  CHECK(slurp(dir.path / "sel" / "scores.csv").rfind("eps,lambda_over_eps,lambda,valid_mmr,train_objective\n", 0) == 0);
}

TEST_CASE("experiment and verify subcommands write their reports") {
  TempDir dir;
  const std::string d = dir.path.string();
  std::ofstream(dir.path / "cfg.json") << R"({"n_train": 100, "n_replicates": 1, "n_eval": 200,
    "corruption_fractions": [0.0, 0.5], "methods": ["lsq", "smm"]})";
  REQUIRE(run("--config " + d + "/cfg.json --out " + d + "/exp experiment corruption_sweep") == 0);
  CHECK(fs::exists(dir.path / "exp" / "records.csv"));
  CHECK(fs::exists(dir.path / "exp" / "aggregates.csv"));
  const smm::Json manifest = smm::read_json_file(dir.path / "exp" / "manifest.json");
  CHECK(manifest["config"]["n_train"] == 100);
  CHECK(manifest.contains("versions"));

  std::ofstream(dir.path / "v.json") << R"({"n_mc": 1000})";
  REQUIRE(run("--config " + d + "/v.json --out " + d + "/ver verify -n 8") == 0);
  const smm::Json v = smm::read_json_file(dir.path / "ver" / "verify.json");
  for (const char* key : {"eps", "mc_value", "expansion_value", "mc_stderr", "slope"}) CHECK(v.contains(key));
}

TEST_CASE("exit codes") {
  TempDir dir;
  const std::string d = dir.path.string();
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("experiment no_such_experiment") == 2);
  std::ofstream(dir.path / "bad.json") << R"({"n_replicates": 0})";
  CHECK(run("--config " + d + "/bad.json experiment rate_test") == 2);
  std::ofstream(dir.path / "broken.json") << "{ not json";
  CHECK(run("--config " + d + "/broken.json experiment rate_test") == 2);
  CHECK(run("fit --data " + d + "/missing.csv") == 2);

  // every instrument equal: the bandwidth heuristic has nothing to work with
  std::ofstream(dir.path / "flat.csv") << "t0,y0,z0\n1,2,0\n2,3,0\n3,1,0\n";
  CHECK(run("--out " + d + " fit --data " + d + "/flat.csv --method smm") == 3);
}
