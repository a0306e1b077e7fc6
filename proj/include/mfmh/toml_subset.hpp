#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>

namespace mfmh {

/// Parses the TOML subset used by experiment configs into JSON: tables,
/// dotted table headers, arrays of tables, bare and quoted keys, basic and
/// literal strings, integers, floats (including inf/nan), booleans, arrays
/// spanning lines and inline tables. Throws ConfigError with a line number.
nlohmann::json parse_toml(const std::string& text);

/// .json files are parsed as JSON, everything else as TOML.
nlohmann::json load_config_file(const std::filesystem::path& path);

}  // namespace mfmh
