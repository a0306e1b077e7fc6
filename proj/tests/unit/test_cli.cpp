#include "mfmh/chain_io.hpp"
#include "mfmh/commands.hpp"
#include "mfmh/errors.hpp"
#include "mfmh/map_io.hpp"
#include "mfmh/toml_subset.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mfmh;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mfmh_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void put(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mfmh");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

const char* kBanana = R"(schema_version = 1
[problem]
kind = "banana"
sigma = [1.0, 1.0]
kappa = 1.0

[problem.lofi]
sigma = [1.1, 1.1]
kappa = 0.9

[map]
n_samples = 200
stages = [[1, 1], [2, 2]]
tolerance = 1e-3
seed = 4

[sampler]
algorithm = "mfmh"
kernel = "independence"
map_file = "map/map.json"
samples = 400
burn = 100
stride = 2
seed = 8
)";

std::string with_algorithm(const std::string& base, const std::string& algo) {
  std::string s = base;
  const std::string key = "algorithm = \"mfmh\"";
  s.replace(s.find(key), key.size(), "algorithm = \"" + algo + "\"");
  return s;
}

}  // namespace

TEST_CASE("toml subset") {
  auto j = parse_toml(R"(# comment
title = "run" # trailing
n = 3
x = -1.5e-3
flag = true
grid = [[1, 2],
        [3, 4]]
[a.b]
s = 'literal\path'
inline = { p = 1, q = "two" }
[[stages]]
k = 1
[[stages]]
k = 2
)");
  CHECK(j["title"] == "run");
  CHECK(j["n"] == 3);
  CHECK(j["x"].get<double>() == -1.5e-3);
  CHECK(j["flag"] == true);
  CHECK(j["grid"][1][0] == 3);
  CHECK(j["a"]["b"]["s"] == "literal\\path");
  CHECK(j["a"]["b"]["inline"]["q"] == "two");
  CHECK(j["stages"].size() == 2);
  CHECK(j["stages"][1]["k"] == 2);

  try {
    parse_toml("a = 1\nb = [1, 2\nc = 3 = 4\n");
    FAIL("expected a parse error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_toml("a = 1\na = 2\n"), ConfigError);
}

TEST_CASE("chain csv round trip") {
  auto dir = scratch("csv");
  Chain c;
  c.samples = Matrix{{0.1, 0.1, 1.0 / 3.0}, {-2.0, -2.0, 1e-300}};
  c.log_posts = Vector{{-1.0, -1.0, -0.5}};
  c.log_alpha = Vector::Zero(3);
  c.accepted = {1, 0, 1};
  write_chain_csv(c, dir / "c.csv");
  CHECK(slurp(dir / "c.csv").rfind("step,accepted,logpost,theta_1,theta_2\n", 0) == 0);
  Chain back = read_chain_csv(dir / "c.csv");
  CHECK(back.samples == c.samples);
  CHECK(back.log_posts == c.log_posts);
  CHECK(back.accepted == c.accepted);
  CHECK_THROWS_AS(read_chain_csv(dir / "none.csv"), IoError);
}

TEST_CASE("build, sample and compare") {
  auto dir = scratch("pipeline");
  put(dir / "mfmh.toml", kBanana);
  put(dir / "mh.toml", with_algorithm(kBanana, "mh"));
  std::string dram = with_algorithm(kBanana, "dram") + "init_cov_diag = [1.0, 1.0]\nburn_adapt = 50\n";
  put(dir / "dram.toml", dram);

  REQUIRE(cli({"build-map", "--config", (dir / "mfmh.toml").string(), "--out", (dir / "map").string()}) == 0);
  auto map = load_map(dir / "map" / "map.json");
  CHECK(map.stages().size() == 2);
  auto report = read_json_file(dir / "map" / "build_report.json");
  CHECK(report["stages"].size() == 2);
  CHECK(report.contains("timing"));

  REQUIRE(cli({"sample", "--config", (dir / "mfmh.toml").string(), "--out", (dir / "run_mfmh").string()}) == 0);
  Chain c = read_chain_csv(dir / "run_mfmh" / "chain.csv");
  CHECK(c.size() == 100 + 2 * 400);
  auto side = read_json_file(dir / "run_mfmh" / "chain.json");
  CHECK(side["truncated"] == false);
  CHECK(side["n_target_evals"] == 901);
  auto summary = read_json_file(dir / "run_mfmh" / "summary.json");
  CHECK(summary["m"] == 400);
  CHECK(summary["thinned"]["headline_ess"].is_number());

  // Same seed, same output.
  REQUIRE(cli({"sample", "--config", (dir / "mfmh.toml").string(), "--out", (dir / "again").string()}) == 0);
  CHECK(slurp(dir / "again" / "chain.csv") == slurp(dir / "run_mfmh" / "chain.csv"));

  // The identity map turns mfmh into plain MH.
  REQUIRE(cli({"sample", "--config", (dir / "mfmh.toml").string(), "--map", "identity", "--out",
               (dir / "identity").string()}) == 0);
  REQUIRE(cli({"sample", "--config", (dir / "mh.toml").string(), "--out", (dir / "run_mh").string()}) == 0);
  CHECK(slurp(dir / "identity" / "chain.csv") == slurp(dir / "run_mh" / "chain.csv"));

  REQUIRE(cli({"sample", "--config", (dir / "dram.toml").string(), "--out", (dir / "run_dram").string()}) == 0);

  REQUIRE(cli({"sample", "--config", (dir / "mfmh.toml").string(), "--chains", "2", "--out",
               (dir / "multi").string()}) == 0);
  CHECK(fs::exists(dir / "multi" / "chain_0" / "chain.csv"));
  CHECK(fs::exists(dir / "multi" / "chain_1" / "chain.csv"));
  CHECK(slurp(dir / "multi" / "chain_0" / "chain.csv") != slurp(dir / "multi" / "chain_1" / "chain.csv"));

  std::string table = cmd_compare({dir / "run_mfmh", dir / "run_dram"}, dir / "cmp" / "compare.csv");
  CHECK(table.rfind("run,algorithm,m,n_target_evals,wall_seconds,headline_ess,ess_1,ess_2\n", 0) == 0);
  CHECK(table.find("run_mfmh,mfmh,400,901,") != std::string::npos);
  CHECK(table.find("run_dram,dram,400,") != std::string::npos);
  CHECK(slurp(dir / "cmp" / "compare.csv") == table);

  CHECK(cli({"compare", (dir / "run_mfmh").string(), "--out", (dir / "cmp1").string()}) == 2);
  CHECK(read_json_file(dir / "cmp1" / "error.json")["error"]["kind"] == "config");
  CHECK_THROWS_AS(cmd_compare({dir / "run_mfmh", dir / "nowhere"}, {}), IoError);
}

TEST_CASE("configuration errors name the field") {
  auto dir = scratch("errors");
  put(dir / "algo.toml", with_algorithm(kBanana, "gibbs"));
  CHECK(cli({"sample", "--config", (dir / "algo.toml").string(), "--out", (dir / "o1").string()}) == 2);
  auto err = read_json_file(dir / "o1" / "error.json");
  CHECK(err["error"]["kind"] == "config");
  CHECK(err["error"]["field"] == "sampler.algorithm");

  std::string nomap = kBanana;
  nomap.insert(nomap.find("map_file"), "# ");
  put(dir / "nomap.toml", nomap);
  CHECK(cli({"sample", "--config", (dir / "nomap.toml").string(), "--out", (dir / "o2").string()}) == 2);
  CHECK(read_json_file(dir / "o2" / "error.json")["error"]["field"] == "sampler.map_file");

  std::string schema = kBanana;
  schema.replace(0, schema.find('\n'), "schema_version = 9");
  put(dir / "schema.toml", schema);
  CHECK(cli({"build-map", "--config", (dir / "schema.toml").string(), "--out", (dir / "o3").string()}) == 2);
  CHECK(read_json_file(dir / "o3" / "error.json")["error"]["field"] == "schema_version");

  CHECK(cli({"sample", "--config", (dir / "missing.toml").string()}) != 0);
  CHECK(cli({}) != 0);
}

TEST_CASE("synthetic data for the beam") {
  auto dir = scratch("synth");
  put(dir / "beam.json", R"({"schema_version": 1,
    "problem": {"kind": "beam", "truth": [1.5, 0.9, 2.5], "noise_variance": 1e-4, "data_seed": 3}})");
  REQUIRE(cli({"synth-data", "--config", (dir / "beam.json").string(), "--out", (dir / "a").string()}) == 0);
  REQUIRE(cli({"synth-data", "--config", (dir / "beam.json").string(), "--out", (dir / "b").string()}) == 0);
  REQUIRE(cli({"synth-data", "--config", (dir / "beam.json").string(), "--seed", "4", "--out",
               (dir / "c").string()}) == 0);
  auto a = read_json_file(dir / "a" / "data.json");
  CHECK(a["problem"] == "beam");
  CHECK(slurp(dir / "a" / "data.json") == slurp(dir / "b" / "data.json"));
  CHECK(slurp(dir / "a" / "data.json") != slurp(dir / "c" / "data.json"));
}
