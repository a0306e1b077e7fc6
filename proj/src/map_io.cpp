#include "mfmh/map_io.hpp"

#include "mfmh/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mfmh {

std::string format_real(double v) {
  if (std::isnan(v)) return "null";
  if (std::isinf(v)) return v > 0 ? "1e999" : "-1e999";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string real_array(const Vector& v) {
  std::string out = "[";
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (k) out += ", ";
    out += format_real(v[k]);
  }
  return out + "]";
}

Vector vector_from_json(const nlohmann::json& a, const std::string& field) {
  if (!a.is_array()) throw IoError("map file: '" + field + "' must be an array");
  Vector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!a[k].is_number()) throw IoError("map file: '" + field + "' must hold numbers");
    v[static_cast<Eigen::Index>(k)] = a[k].get<double>();
  }
  return v;
}

}  // namespace

std::string map_to_json(const DeepMapd& map) {
  std::ostringstream os;
  os << "{\n  \"d\": " << map.dim() << ",\n  \"stages\": [\n";
  for (std::size_t s = 0; s < map.stages().size(); ++s) {
    os << "    {\"components\": [\n";
    const auto& comps = map.stages()[s].components();
    for (std::size_t c = 0; c < comps.size(); ++c) {
      const auto& comp = comps[c];
      os << "      {\"i\": " << comp.index() << ", \"ell_L\": " << comp.degree_L()
         << ", \"ell_R\": " << comp.degree_R() << ", \"q\": " << comp.quadrature_order()
         << ",\n       \"coeffs_L\": " << real_array(comp.coeffs_L())
         << ",\n       \"coeffs_R\": " << real_array(comp.coeffs_R()) << "}"
         << (c + 1 < comps.size() ? ",\n" : "\n");
    }
    os << "    ]}" << (s + 1 < map.stages().size() ? ",\n" : "\n");
  }
  os << "  ]\n}\n";
  return os.str();
}

DeepMapd map_from_json(const nlohmann::json& doc) {
  try {
    const int d = doc.at("d").get<int>();
    std::vector<TriangularMapd> stages;
    for (const auto& stage : doc.at("stages")) {
      std::vector<MapComponentd> comps;
      for (const auto& c : stage.at("components"))
        comps.emplace_back(d, c.at("i").get<int>(), c.at("ell_L").get<int>(),
                           c.at("ell_R").get<int>(), vector_from_json(c.at("coeffs_L"), "coeffs_L"),
                           vector_from_json(c.at("coeffs_R"), "coeffs_R"),
                           c.value("q", kDefaultQuadratureOrder));
      stages.emplace_back(std::move(comps));
    }
    return DeepMapd(std::move(stages));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed map file: ") + e.what());
  }
}

void save_map(const DeepMapd& map, const std::filesystem::path& path) {
  write_text_file(path, map_to_json(map));
}

DeepMapd load_map(const std::filesystem::path& path) { return map_from_json(read_json_file(path)); }

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot parse " + path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace mfmh
