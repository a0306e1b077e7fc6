#include "mfmh/errors.hpp"

namespace mfmh {

SolverError::SolverError(const std::string& what, double last_residual)
    : ModelEvaluationError(what + " (last residual " + std::to_string(last_residual) + ")"),
      last_residual_(last_residual) {}

ConfigError::ConfigError(const std::string& field, const std::string& what)
    : Error("config field '" + field + "': " + what), field_(field) {}

}  // namespace mfmh
