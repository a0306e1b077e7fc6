#pragma once

#include "mfmh/samplers.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mfmh {

enum class IactMethod { Geyer, Sokal };

/// Integrated autocorrelation time 1 + 2 sum rho(k), truncated by Geyer's
/// initial monotone positive sequence (default) or Sokal's adaptive window
/// (c = 5). Clamped below at 1.
double iact(std::span<const double> series, IactMethod method = IactMethod::Geyer);

/// Biased autocorrelation rho(0..max_lag) via FFT.
std::vector<double> autocorrelation(std::span<const double> series, std::size_t max_lag);

struct EssEntry {
  double tau = 1.0;
  double ess = 0.0;
};

EssEntry ess(const Chain& chain, const std::function<double(const Vector&)>& f,
             IactMethod method = IactMethod::Geyer);

struct EssReport {
  std::size_t n = 0;
  double acceptance_rate = 0.0;
  Vector means;
  Vector variances;
  /// Per-coordinate values; NaN where the coordinate series is degenerate.
  Vector tau;
  Vector ess;
  /// min over coordinates; empty when any coordinate is degenerate.
  std::optional<double> headline_ess;
  std::string note;

  nlohmann::json to_json() const;
};

EssReport summarize(const Chain& chain, IactMethod method = IactMethod::Geyer);

}  // namespace mfmh
