#pragma once

#include "mfmh/core.hpp"
#include "mfmh/mapbuild.hpp"
#include "mfmh/problems.hpp"
#include "mfmh/samplers.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace mfmh {

/// -theta1^2 / (2 s1^2) - (theta2 - kappa theta1^2)^2 / (2 s2^2)
LogDensity banana_log_density(double s1, double s2, double kappa);
/// Unnormalized N(mean, cov) log-density.
LogDensity gaussian_log_density(const Vector& mean, const Matrix& cov);

/// Extends a log-density defined on the box [lo, hi]^d to all of R^d: the
/// query is projected onto the box and penalized by -|theta - P theta|^2 / (2 w^2).
LogDensity box_extended_log_density(LogDensity inner, double lo, double hi, double width);

/// Assembled inference problem: the high-fidelity posterior is the sampling
/// target, the low-fidelity posterior feeds map construction and is built on
/// demand (it can be expensive, e.g. a ROM from snapshots).
struct ProblemSetup {
  std::string kind;
  int dim = 0;
  LogDensity hifi;
  std::function<LogDensity()> make_lofi;
  Vector default_start;
  ReferenceDensity default_reference = ReferenceDensity::standard(1);
  bool concurrent_safe = true;
  /// Bayesian form of the high-fidelity problem where one exists.
  std::shared_ptr<const BayesianProblem> hifi_problem;
  /// Truth and data used when the problem synthesizes its own data.
  nlohmann::json provenance = nlohmann::json::object();
};

/// Reads the [problem] table. Relative paths resolve against `base_dir`.
ProblemSetup make_problem(const nlohmann::json& config, const std::filesystem::path& base_dir = {});

BuildConfig parse_build_config(const nlohmann::json& config);
ReferenceDensity parse_reference(const nlohmann::json& config, const ProblemSetup& problem);

struct SamplerSpec {
  std::string algorithm = "mfmh";  // mh | mfmh | dram
  std::string kernel = "independence";
  Vector step_variance;
  std::size_t iterations = 0;
  std::size_t burn = 0;
  std::size_t stride = 1;
  std::uint64_t seed = 0;
  std::optional<Vector> start;
  std::string map_file;
  DramOptions dram;
};

SamplerSpec parse_sampler(const nlohmann::json& config, const ProblemSetup& problem);

/// Reads a vector field, raising ConfigError naming `field` when missing or malformed.
Vector json_vector(const nlohmann::json& table, const std::string& field, const std::string& prefix);
std::optional<Vector> json_vector_opt(const nlohmann::json& table, const std::string& field,
                                      const std::string& prefix);

}  // namespace mfmh
