#include "mfmh/commands.hpp"

#include "mfmh/chain_io.hpp"
#include "mfmh/diagnostics.hpp"
#include "mfmh/errors.hpp"
#include "mfmh/experiment.hpp"
#include "mfmh/map_io.hpp"
#include "mfmh/toml_subset.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

namespace mfmh {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr int kSchemaVersion = 1;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json to_array(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

void check_schema(const json& config) {
  if (config.contains("schema_version")) {
    if (!config["schema_version"].is_number_integer() || config["schema_version"].get<int>() != kSchemaVersion)
      throw ConfigError("schema_version", "unsupported schema version (expected 1)");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

struct RunResult {
  Chain chain;
  double seconds = 0.0;
};

RunResult run_chain(const ProblemSetup& problem, const SamplerSpec& spec, const DeepMapd* map,
                    const ReferenceDensity& reference, std::uint64_t seed, const fs::path& dir,
                    const std::string& map_label) {
  Vector start = problem.default_start;
  if (spec.start)
    start = *spec.start;
  else if (spec.algorithm == "mfmh" && map)
    start = mfmh_default_start(problem.hifi, *map, reference, problem.default_start);
  std::optional<ProposalKernel> kernel;
  if (spec.algorithm != "dram")
    kernel = spec.kernel == "independence" ? ProposalKernel::independence(reference)
                                           : ProposalKernel::random_walk(spec.step_variance);

  json sidecar{{"schema_version", kSchemaVersion},
               {"algorithm", spec.algorithm},
               {"problem", problem.kind},
               {"dim", problem.dim},
               {"seed", seed},
               {"iterations", spec.iterations},
               {"burn", spec.burn},
               {"stride", spec.stride},
               {"start", to_array(start)},
               {"map_file", map_label}};
  if (kernel) {
    sidecar["kernel"] = kernel->to_json();
  } else {
    sidecar["kernel"] = json{{"kind", "dram"},
                             {"init_cov_diag", to_array(spec.dram.init_cov_diag)},
                             {"burn_adapt", spec.dram.burn_adapt},
                             {"delayed_rejection", spec.dram.delayed_rejection},
                             {"dr_scale", spec.dram.dr_scale}};
    if (spec.dram.max_target_evals) sidecar["kernel"]["max_target_evals"] = *spec.dram.max_target_evals;
  }

  ChainCsvWriter writer(dir / "chain.csv", problem.dim);
  const auto t0 = std::chrono::steady_clock::now();
  RunResult res;
  try {
    if (spec.algorithm == "mh") {
      res.chain = metropolis_hastings(problem.hifi, *kernel, start, spec.iterations, seed, writer.observer());
    } else if (spec.algorithm == "mfmh") {
      res.chain = mfmh(problem.hifi, *map, *kernel, start, spec.iterations, seed, writer.observer());
    } else {
      DramOptions o = spec.dram;
      o.seed = seed;
      res.chain = adaptive_metropolis_dram(problem.hifi, start, o, writer.observer());
    }
  } catch (...) {
    writer.flush();
    sidecar["truncated"] = true;
    sidecar["rows_written"] = writer.rows();
    write_text_file(dir / "chain.json", sidecar.dump(2) + "\n");
    throw;
  }
  writer.flush();
  res.seconds = seconds_since(t0);

  const Chain& c = res.chain;
  sidecar["truncated"] = false;
  sidecar["budget_exhausted"] = c.truncated;
  sidecar["rows_written"] = writer.rows();
  sidecar["n_target_evals"] = c.n_target_evals;
  sidecar["acceptance_rate"] = c.acceptance_rate();
  sidecar["timing"] = json{{"sampling_seconds", res.seconds}};
  write_text_file(dir / "chain.json", sidecar.dump(2) + "\n");

  // ESS on the thinned chain is the headline; the unthinned one is kept alongside.
  json summary{{"schema_version", kSchemaVersion},
               {"algorithm", spec.algorithm},
               {"problem", problem.kind},
               {"dim", problem.dim},
               {"n_target_evals", c.n_target_evals}};
  const std::size_t m = static_cast<std::size_t>(c.size());
  if (spec.burn + spec.stride <= m) {
    const Chain thinned = thin_and_burn(c, spec.burn, spec.stride);
    summary["m"] = thinned.size();
    summary["thinned"] = summarize(thinned).to_json();
  } else {
    summary["m"] = 0;
    summary["thinned"] = nullptr;
  }
  summary["unthinned"] = summarize(c).to_json();
  write_text_file(dir / "summary.json", summary.dump(2) + "\n");
  return res;
}

}  // namespace

json error_json(const std::exception& e) {
  json err{{"message", e.what()}};
  if (const auto* me = dynamic_cast<const Error*>(&e)) {
    err["kind"] = me->kind();
    if (const auto* ce = dynamic_cast<const ConfigError*>(&e); ce && !ce->field().empty())
      err["field"] = ce->field();
    if (const auto* se = dynamic_cast<const SolverError*>(&e)) err["last_residual"] = se->last_residual();
  } else {
    err["kind"] = "internal";
  }
  return json{{"error", err}};
}

void cmd_build_map(const CommandOptions& opt) {
  check_schema(opt.config);
  const ProblemSetup problem = make_problem(opt.config, opt.base_dir);
  BuildConfig build = parse_build_config(opt.config);
  if (opt.seed) build.seed = *opt.seed;
  const ReferenceDensity reference = parse_reference(opt.config, problem);

  const auto t0 = std::chrono::steady_clock::now();
  const LogDensity lofi = problem.make_lofi();
  const double setup_seconds = seconds_since(t0);
  const auto t1 = std::chrono::steady_clock::now();
  const BuildResult result = build_map(lofi, reference, build);
  const double build_seconds = seconds_since(t1);

  save_map(result.map, opt.out_dir / "map.json");
  json report = result.report.to_json();
  report["schema_version"] = kSchemaVersion;
  report["problem"] = problem.kind;
  report["seed"] = build.seed;
  report["reference"] = json{{"mean", to_array(reference.mean())}, {"stddev", to_array(reference.stddev())}};
  report["timing"] = json{{"lofi_setup_seconds", setup_seconds}, {"build_seconds", build_seconds}};
  write_text_file(opt.out_dir / "build_report.json", report.dump(2) + "\n");
}

void cmd_sample(const CommandOptions& opt) {
  check_schema(opt.config);
  if (opt.chains < 1) throw ConfigError("chains", "must be >= 1");
  const ProblemSetup problem = make_problem(opt.config, opt.base_dir);
  SamplerSpec spec = parse_sampler(opt.config, problem);
  if (opt.seed) spec.seed = *opt.seed;
  const ReferenceDensity reference = parse_reference(opt.config, problem);

  std::optional<DeepMapd> map;
  std::string map_label;
  if (spec.algorithm == "mfmh") {
    const std::string file = !opt.map_file.empty() ? opt.map_file : spec.map_file;
    if (file.empty()) throw ConfigError("sampler.map_file", "is required for mfmh (or pass --map)");
    if (file == "identity") {
      map = DeepMapd(identity_map<double>(problem.dim, 1, 1));
      map_label = "identity";
    } else {
      const fs::path path = opt.map_file.empty() ? resolve(opt.base_dir, file) : fs::path(file);
      map = load_map(path);
      map_label = path.string();
    }
    if (map->dim() != problem.dim) throw DimensionError("map dimension does not match the problem");
  }

  const int k = opt.chains;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(k));
  auto job = [&](int c) {
    try {
      const std::uint64_t seed = k == 1 ? spec.seed : derive_seed(spec.seed, static_cast<std::uint64_t>(c));
      const fs::path dir = k == 1 ? opt.out_dir : opt.out_dir / ("chain_" + std::to_string(c));
      run_chain(problem, spec, map ? &*map : nullptr, reference, seed, dir, map_label);
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };
  if (k > 1 && problem.concurrent_safe) {
    std::vector<std::thread> threads;
    for (int c = 0; c < k; ++c) threads.emplace_back(job, c);
    for (auto& t : threads) t.join();
  } else {
    for (int c = 0; c < k; ++c) job(c);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void cmd_synth_data(const CommandOptions& opt) {
  check_schema(opt.config);
  json config = opt.config;
  if (opt.seed && config.contains("problem")) config["problem"]["data_seed"] = *opt.seed;
  if (config.contains("problem") && config["problem"].contains("data_file"))
    config["problem"].erase("data_file");
  const ProblemSetup problem = make_problem(config, opt.base_dir);
  if (!problem.hifi_problem)
    throw ConfigError("problem.kind", "synth-data needs a forward-model problem (dr or beam)");
  json out = problem.provenance;
  out["schema_version"] = kSchemaVersion;
  out["problem"] = problem.kind;
  write_text_file(opt.out_dir / "data.json", out.dump(2) + "\n");
}

std::string cmd_compare(const std::vector<fs::path>& runs, const fs::path& out_csv) {
  if (runs.size() < 2) throw ConfigError("runs", "compare needs at least two run directories");
  std::string problem;
  int dim = -1;
  std::string csv;
  for (const auto& dir : runs) {
    if (!fs::is_directory(dir)) throw IoError("run directory does not exist: " + dir.string());
    if (!fs::exists(dir / "chain.json") || !fs::exists(dir / "summary.json"))
      throw IoError("run directory holds no completed run: " + dir.string());
    const json side = read_json_file(dir / "chain.json");
    const json summary = read_json_file(dir / "summary.json");
    if (side.value("truncated", false)) throw IoError("run is truncated: " + dir.string());
    const std::string p = side.at("problem").get<std::string>();
    const int d = side.at("dim").get<int>();
    if (dim < 0) {
      problem = p;
      dim = d;
      csv = "run,algorithm,m,n_target_evals,wall_seconds,headline_ess";
      for (int j = 1; j <= d; ++j) csv += ",ess_" + std::to_string(j);
      csv += '\n';
    } else if (p != problem || d != dim) {
      throw ConfigError("runs", "runs belong to different problems (" + problem + " vs " + p + ")");
    }
    const json& rep = summary.at("thinned").is_null() ? summary.at("unthinned") : summary.at("thinned");
    auto num = [](const json& v) { return v.is_null() ? std::string("nan") : format_real(v.get<double>()); };
    csv += dir.filename().string() + "," + side.at("algorithm").get<std::string>() + "," +
           std::to_string(summary.at("m").get<std::size_t>()) + "," +
           std::to_string(side.at("n_target_evals").get<std::uint64_t>()) + "," +
           format_real(side.at("timing").value("sampling_seconds", 0.0)) + "," + num(rep.at("headline_ess"));
    for (const auto& e : rep.at("ess")) csv += "," + num(e);
    csv += '\n';
  }
  if (!out_csv.empty()) write_text_file(out_csv, csv);
  return csv;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Transport-map preconditioned multifidelity MCMC"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  int chains = 1;
  std::string map_file;
  std::vector<std::string> runs;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (TOML or JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "overrides the config seed");
  };
  auto* build = app.add_subcommand("build-map", "construct a transport map from the low-fidelity posterior");
  add_common(build);
  auto* sample = app.add_subcommand("sample", "run MH, MFMH or DRAM on the high-fidelity posterior");
  add_common(sample);
  sample->add_option("--chains", chains, "independent chains with derived seeds")->check(CLI::PositiveNumber);
  sample->add_option("--map", map_file, "map file for mfmh ('identity' for the identity map)");
  auto* synth = app.add_subcommand("synth-data", "synthesize observations from the truth parameter");
  add_common(synth);
  auto* compare = app.add_subcommand("compare", "tabulate ESS against cost for completed runs");
  compare->add_option("runs", runs, "run directories")->required();
  compare->add_option("--out", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const fs::path out(out_dir);
  try {
    if (compare->parsed()) {
      std::vector<fs::path> dirs(runs.begin(), runs.end());
      std::cout << cmd_compare(dirs, out / "compare.csv");
      return 0;
    }
    CommandOptions opt;
    const fs::path cfg(config_path);
    opt.config = load_config_file(cfg);
    opt.base_dir = cfg.parent_path();
    opt.out_dir = out;
    opt.chains = chains;
    opt.map_file = map_file;
    auto* active = build->parsed() ? build : sample->parsed() ? sample : synth;
    if (active->count("--seed")) opt.seed = seed;
    if (build->parsed()) cmd_build_map(opt);
    else if (sample->parsed()) cmd_sample(opt);
    else cmd_synth_data(opt);
    return 0;
  } catch (const std::exception& e) {
    const json err = error_json(e);
    std::cerr << "error: " << e.what() << "\n";
    try {
      write_text_file(out / "error.json", err.dump(2) + "\n");
    } catch (const std::exception&) {
    }
    return dynamic_cast<const Error*>(&e) ? 2 : 3;
  }
}

}  // namespace mfmh
