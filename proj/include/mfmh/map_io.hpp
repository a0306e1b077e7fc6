#pragma once

#include "mfmh/core.hpp"
#include "mfmh/transport.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace mfmh {

/// Formats a double with 17 significant digits (round-trip exact).
std::string format_real(double v);

/// {"d": .., "stages": [{"components": [{"i", "ell_L", "ell_R", "coeffs_L",
/// "coeffs_R", "q"}]}]}. Index sets are regenerated from (d, i, ell) on load.
std::string map_to_json(const DeepMapd& map);
DeepMapd map_from_json(const nlohmann::json& doc);

void save_map(const DeepMapd& map, const std::filesystem::path& path);
DeepMapd load_map(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace mfmh
