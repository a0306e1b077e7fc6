#pragma once

#include <json.hpp>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mfmh {

struct CommandOptions {
  nlohmann::json config;
  /// Directory relative paths in the config resolve against.
  std::filesystem::path base_dir;
  std::filesystem::path out_dir = "out";
  std::optional<std::uint64_t> seed;
  int chains = 1;
  /// Overrides sampler.map_file; "identity" selects the identity map.
  std::string map_file;
};

/// Writes map.json and build_report.json into out_dir.
void cmd_build_map(const CommandOptions& opt);
/// Writes chain.csv, chain.json (sidecar) and summary.json into out_dir, or
/// into out_dir/chain_<k> for several chains.
void cmd_sample(const CommandOptions& opt);
/// Writes data.json into out_dir.
void cmd_synth_data(const CommandOptions& opt);
/// One CSV row per run directory: algorithm, m, n_target_evals, wall seconds,
/// headline ESS and per-coordinate ESS.
std::string cmd_compare(const std::vector<std::filesystem::path>& runs,
                        const std::filesystem::path& out_csv);

/// {"error": {"kind", "message", "field"?}}
nlohmann::json error_json(const std::exception& e);

/// Full command-line front end; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace mfmh
