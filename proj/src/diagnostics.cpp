#include "mfmh/diagnostics.hpp"

#include "mfmh/errors.hpp"
#include "mfmh/map_io.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

namespace mfmh {

namespace {

void check_series(std::span<const double> x) {
  if (x.size() < 10) throw DegenerateSeriesError("series too short for an IACT estimate (< 10)");
  for (double v : x)
    if (!std::isfinite(v)) throw NonFiniteError("series contains non-finite values");
}

}  // namespace

std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag) {
  const std::size_t n = x.size();
  double mean = pairwise_sum(x) / static_cast<double>(n);
  std::size_t nfft = 1;
  while (nfft < 2 * n) nfft <<= 1;
  std::vector<double> padded(nfft, 0.0);
  for (std::size_t t = 0; t < n; ++t) padded[t] = x[t] - mean;

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, padded);
  for (auto& c : spec) c = std::complex<double>(std::norm(c), 0.0);
  std::vector<double> acov;
  fft.inv(acov, spec);

  const double c0 = acov[0];
  if (!(c0 > 0.0)) throw DegenerateSeriesError("series has zero variance");
  // Reject series whose spread is at rounding level of the mean.
  const double scale = std::max(std::abs(mean), 1.0);
  if (std::sqrt(c0 / static_cast<double>(n)) <= 1e3 * std::numeric_limits<double>::epsilon() * scale)
    throw DegenerateSeriesError("series has zero variance");
  max_lag = std::min(max_lag, n - 1);
  std::vector<double> rho(max_lag + 1);
  for (std::size_t k = 0; k <= max_lag; ++k) rho[k] = acov[k] / c0;
  return rho;
}

double iact(std::span<const double> x, IactMethod method) {
  check_series(x);
  const std::size_t n = x.size();
  const auto rho = autocorrelation(x, n - 1);
  double tau = 1.0;
  if (method == IactMethod::Geyer) {
    // Paired sums Gamma_k = rho(2k) + rho(2k+1), kept while positive and
    // forced non-increasing.
    double sum = 0.0;
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
      double g = rho[2 * k] + rho[2 * k + 1];
      if (!(g > 0.0)) break;
      g = std::min(g, prev);
      sum += g;
      prev = g;
    }
    tau = 2.0 * sum - 1.0;
  } else {
    double acc = 1.0;
    for (std::size_t w = 1; w < n; ++w) {
      acc += 2.0 * rho[w];
      if (static_cast<double>(w) >= 5.0 * acc) break;
    }
    tau = acc;
  }
  return std::max(tau, 1.0);
}

EssEntry ess(const Chain& chain, const std::function<double(const Vector&)>& f, IactMethod method) {
  if (chain.size() == 0) throw SamplerError("empty chain");
  std::vector<double> series(static_cast<std::size_t>(chain.size()));
  for (Eigen::Index k = 0; k < chain.size(); ++k)
    series[static_cast<std::size_t>(k)] = f(chain.samples.col(k));
  EssEntry e;
  e.tau = iact(series, method);
  e.ess = static_cast<double>(series.size()) / e.tau;
  return e;
}

EssReport summarize(const Chain& chain, IactMethod method) {
  if (chain.size() == 0) throw SamplerError("empty chain");
  EssReport r;
  const int d = chain.dim();
  r.n = static_cast<std::size_t>(chain.size());
  r.acceptance_rate = chain.acceptance_rate();
  r.means.resize(d);
  r.variances.resize(d);
  r.tau.resize(d);
  r.ess.resize(d);
  std::vector<double> series(r.n);
  std::vector<double> sq(r.n);
  bool degenerate = false;
  for (int j = 0; j < d; ++j) {
    for (std::size_t k = 0; k < r.n; ++k) series[k] = chain.samples(j, static_cast<Eigen::Index>(k));
    const double mean = pairwise_sum(series) / static_cast<double>(r.n);
    for (std::size_t k = 0; k < r.n; ++k) sq[k] = (series[k] - mean) * (series[k] - mean);
    r.means[j] = mean;
    r.variances[j] = r.n > 1 ? pairwise_sum(sq) / static_cast<double>(r.n - 1) : 0.0;
    try {
      r.tau[j] = iact(series, method);
      r.ess[j] = static_cast<double>(r.n) / r.tau[j];
    } catch (const DegenerateSeriesError& e) {
      r.tau[j] = std::numeric_limits<double>::quiet_NaN();
      r.ess[j] = std::numeric_limits<double>::quiet_NaN();
      degenerate = true;
      r.note = "coordinate " + std::to_string(j + 1) + ": " + e.what();
    }
  }
  if (!degenerate) r.headline_ess = r.ess.minCoeff();
  return r;
}

nlohmann::json EssReport::to_json() const {
  auto vec = [](const Vector& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      if (std::isfinite(v[k]))
        a.push_back(v[k]);
      else
        a.push_back(nullptr);
    }
    return a;
  };
  nlohmann::json j{{"n", n},
                   {"acceptance_rate", acceptance_rate},
                   {"means", vec(means)},
                   {"variances", vec(variances)},
                   {"tau", vec(tau)},
                   {"ess", vec(ess)}};
  j["headline_ess"] = headline_ess ? nlohmann::json(*headline_ess) : nlohmann::json(nullptr);
  if (!note.empty()) j["note"] = note;
  return j;
}

}  // namespace mfmh
