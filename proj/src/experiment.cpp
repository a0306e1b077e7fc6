#include "mfmh/experiment.hpp"

#include "mfmh/errors.hpp"
#include "mfmh/map_io.hpp"
#include "mfmh/models_beam.hpp"
#include "mfmh/models_dr.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <numbers>

namespace mfmh {

namespace {

using json = nlohmann::json;

const json& table_or_empty(const json& parent, const std::string& key) {
  static const json empty = json::object();
  if (!parent.is_object() || !parent.contains(key)) return empty;
  return parent.at(key);
}

template <class T>
T value_or(const json& table, const std::string& key, const std::string& prefix, T fallback) {
  if (!table.is_object() || !table.contains(key)) return fallback;
  try {
    return table.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(prefix + key, "has the wrong type");
  }
}

template <class T>
T required(const json& table, const std::string& key, const std::string& prefix) {
  if (!table.is_object() || !table.contains(key)) throw ConfigError(prefix + key, "is required");
  return value_or<T>(table, key, prefix, T{});
}

Matrix json_matrix(const json& table, const std::string& key, const std::string& prefix) {
  if (!table.contains(key)) throw ConfigError(prefix + key, "is required");
  const json& a = table.at(key);
  if (!a.is_array() || a.empty()) throw ConfigError(prefix + key, "must be a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(a.size());
  Matrix m;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = a[static_cast<std::size_t>(r)];
    if (!row.is_array()) throw ConfigError(prefix + key, "must be an array of rows");
    if (r == 0) m.resize(rows, static_cast<Eigen::Index>(row.size()));
    if (static_cast<Eigen::Index>(row.size()) != m.cols())
      throw ConfigError(prefix + key, "rows must have equal length");
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!row[static_cast<std::size_t>(c)].is_number()) throw ConfigError(prefix + key, "must hold numbers");
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

Vector load_data_file(const std::filesystem::path& path) {
  const json doc = read_json_file(path);
  return json_vector(doc, "data", path.string() + ": ");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

Vector vec_or(const json& t, const std::string& key, const std::string& prefix, Vector fallback) {
  auto v = json_vector_opt(t, key, prefix);
  return v ? *v : fallback;
}

Vector observation_data(const json& p, const std::filesystem::path& base, const ForwardModel& data_model,
                        const Vector& truth, const NoiseModel& noise, ProblemSetup& setup) {
  Vector data;
  if (p.contains("data_file")) {
    const auto path = resolve(base, required<std::string>(p, "data_file", "problem."));
    data = load_data_file(path);
    setup.provenance["data_file"] = path.string();
  } else {
    const auto seed = value_or<std::uint64_t>(p, "data_seed", "problem.", 0);
    data = synthesize_data(data_model, truth, noise, seed);
    setup.provenance["data_seed"] = seed;
  }
  if (data.size() != data_model.output_dim())
    throw ConfigError("problem.data_file", "data length does not match the model output");
  setup.provenance["truth"] = std::vector<double>(truth.data(), truth.data() + truth.size());
  setup.provenance["data"] = std::vector<double>(data.data(), data.data() + data.size());
  return data;
}

void make_banana(const json& p, ProblemSetup& s) {
  const Vector sigma = vec_or(p, "sigma", "problem.", Vector::Ones(2));
  const double kappa = value_or<double>(p, "kappa", "problem.", 1.0);
  const json& lo = table_or_empty(p, "lofi");
  const Vector lsigma = vec_or(lo, "sigma", "problem.lofi.", sigma);
  const double lkappa = value_or<double>(lo, "kappa", "problem.lofi.", kappa);
  if (sigma.size() != 2 || lsigma.size() != 2) throw ConfigError("problem.sigma", "must have length 2");
  s.dim = 2;
  s.hifi = banana_log_density(sigma[0], sigma[1], kappa);
  s.make_lofi = [=] { return banana_log_density(lsigma[0], lsigma[1], lkappa); };
  s.default_start = Vector::Zero(2);
  s.default_reference = ReferenceDensity::standard(2);
}

void make_gaussian(const json& p, ProblemSetup& s) {
  const Vector mean = json_vector(p, "mean", "problem.");
  const Matrix cov = json_matrix(p, "covariance", "problem.");
  if (cov.rows() != mean.size() || cov.cols() != mean.size())
    throw ConfigError("problem.covariance", "must be square with the dimension of the mean");
  const json& lo = table_or_empty(p, "lofi");
  const Vector lmean = vec_or(lo, "mean", "problem.lofi.", mean);
  const Matrix lcov = lo.contains("covariance") ? json_matrix(lo, "covariance", "problem.lofi.") : cov;
  s.dim = static_cast<int>(mean.size());
  s.hifi = gaussian_log_density(mean, cov);
  s.make_lofi = [=] { return gaussian_log_density(lmean, lcov); };
  s.default_start = mean;
  s.default_reference = ReferenceDensity::standard(s.dim);
}

void make_dr(const json& p, const std::filesystem::path& base, ProblemSetup& s) {
  const std::string pre = "problem.";
  const Vector truth = vec_or(p, "truth", pre, Vector{{0.5, 2.0}});
  const double noise_var = value_or<double>(p, "noise_variance", pre, 0.0026);
  const int data_n = value_or<int>(p, "data_grid_n", pre, 64);
  const int grid_n = value_or<int>(p, "grid_n", pre, 32);
  const Vector prior_mean = vec_or(p, "prior_mean", pre, Vector{{std::numbers::pi / 4.0, 1.2}});
  const Vector prior_cov = vec_or(p, "prior_cov_diag", pre, Vector{{1.0, 0.01}});
  if (truth.size() != 2) throw ConfigError("problem.truth", "must have length 2");

  const NoiseModel noise = NoiseModel::isotropic(12, noise_var);
  const DrModel data_model(DrGrid::with_inverse_width(data_n));
  const Vector data = observation_data(p, base, data_model, truth, noise, s);
  const Prior prior = Prior::gaussian(prior_mean, prior_cov);
  auto hifi = std::make_shared<const BayesianProblem>(
      std::make_shared<DrModel>(DrGrid::with_inverse_width(grid_n)), data, noise, prior);

  const json& rom = table_or_empty(p, "rom");
  const std::string rpre = "problem.rom.";
  SnapshotBox box;
  const Vector r1 = vec_or(rom, "theta1_range", rpre, Vector{{box.lo1, box.hi1}});
  const Vector r2 = vec_or(rom, "theta2_range", rpre, Vector{{box.lo2, box.hi2}});
  box.lo1 = r1[0];
  box.hi1 = r1[1];
  box.lo2 = r2[0];
  box.hi2 = r2[1];
  box.n1 = value_or<int>(rom, "snapshots_theta1", rpre, 20);
  box.n2 = value_or<int>(rom, "snapshots_theta2", rpre, 20);
  const int basis = value_or<int>(rom, "basis_size", rpre, 20);
  const std::string cache = value_or<std::string>(rom, "cache_dir", rpre, "");
  const std::filesystem::path cache_dir = cache.empty() ? std::filesystem::path{} : resolve(base, cache);

  s.dim = 2;
  s.hifi = hifi->log_posterior_fn(FailurePolicy::NegInf);
  s.hifi_problem = hifi;
  s.make_lofi = [=] {
    std::shared_ptr<DrRom> model;
    if (!cache_dir.empty() && std::filesystem::exists(cache_dir / "rom.json")) {
      model = std::make_shared<DrRom>(DrRom::load(cache_dir));
    } else {
      model = std::make_shared<DrRom>(DrRom::build(DrGrid::with_inverse_width(grid_n), box, basis));
      if (!cache_dir.empty()) model->save(cache_dir);
    }
    BayesianProblem lofi(model, data, noise, prior);
    return lofi.log_posterior_fn(FailurePolicy::NegInf);
  };
  s.default_start = prior_mean;
  s.default_reference = ReferenceDensity(Vector::Zero(2), Vector::Constant(2, 0.1));
  s.provenance["grid_n"] = grid_n;
  s.provenance["data_grid_n"] = data_n;
}

void make_beam(const json& p, const std::filesystem::path& base, ProblemSetup& s) {
  const std::string pre = "problem.";
  const Vector truth = vec_or(p, "truth", pre, Vector{{1.5, 0.9, 2.5}});
  const int k = static_cast<int>(truth.size());
  const double noise_var = value_or<double>(p, "noise_variance", pre, 1e-4);
  BeamGrid grid;
  grid.points = value_or<int>(p, "points", pre, 601);
  if (p.contains("load")) {
    grid.load = Vector::Constant(grid.points, required<double>(p, "load", pre));
  }
  const std::string prior_kind = value_or<std::string>(p, "prior", pre, "lognormal-median");
  std::optional<Prior> prior;
  if (prior_kind == "lognormal-median") {
    prior = Prior::lognormal(vec_or(p, "prior_log_mean", pre, Vector::Zero(k)),
                             vec_or(p, "prior_log_var", pre, Vector::Constant(k, 0.05)));
  } else if (prior_kind == "lognormal-moments") {
    prior = Prior::lognormal_from_moments(vec_or(p, "prior_mean", pre, Vector::Ones(k)),
                                          vec_or(p, "prior_var", pre, Vector::Constant(k, 0.05)));
  } else {
    throw ConfigError("problem.prior", "must be 'lognormal-median' or 'lognormal-moments'");
  }
  const NoiseModel noise = NoiseModel::isotropic(41, noise_var);
  auto model = std::make_shared<BeamModel>(grid, k);
  const Vector data = observation_data(p, base, *model, truth, noise, s);
  auto hifi = std::make_shared<const BayesianProblem>(model, data, noise, *prior);

  const json& sur = table_or_empty(p, "surrogate");
  const std::string spre = "problem.surrogate.";
  const int nodes = value_or<int>(sur, "nodes_per_axis", spre, 10);
  const double lo = value_or<double>(sur, "lo", spre, 0.5);
  const double hi = value_or<double>(sur, "hi", spre, 4.0);
  const std::string interp = value_or<std::string>(sur, "interpolation", spre, "catmull_rom");
  if (interp != "catmull_rom" && interp != "linear")
    throw ConfigError("problem.surrogate.interpolation", "must be 'catmull_rom' or 'linear'");
  const std::string domain = value_or<std::string>(sur, "domain", spre, "extend");
  if (domain != "extend" && domain != "reject")
    throw ConfigError("problem.surrogate.domain", "must be 'extend' or 'reject'");
  const double width = value_or<double>(sur, "extend_width", spre, 0.1);
  const std::string cache = value_or<std::string>(sur, "cache_dir", spre, "");
  const std::filesystem::path cache_dir = cache.empty() ? std::filesystem::path{} : resolve(base, cache);
  const Prior prior_copy = *prior;

  s.dim = k;
  s.hifi = hifi->log_posterior_fn(FailurePolicy::NegInf);
  s.hifi_problem = hifi;
  s.make_lofi = [=] {
    std::shared_ptr<BeamSurrogate> surrogate;
    if (!cache_dir.empty() && std::filesystem::exists(cache_dir / "surrogate.json")) {
      surrogate = std::make_shared<BeamSurrogate>(BeamSurrogate::load(cache_dir));
    } else {
      surrogate = std::make_shared<BeamSurrogate>(BeamSurrogate::build(
          *model, nodes, lo, hi,
          interp == "linear" ? InterpolationKind::Linear : InterpolationKind::CatmullRom));
      if (!cache_dir.empty()) surrogate->save(cache_dir);
    }
    BayesianProblem lofi(surrogate, data, noise, prior_copy);
    LogDensity f = lofi.log_posterior_fn(FailurePolicy::NegInf);
    if (domain == "extend") return box_extended_log_density(std::move(f), lo, hi, width);
    return f;
  };
  s.default_start = Vector::Ones(k);
  s.default_reference = ReferenceDensity(Vector::Ones(k), Vector::Constant(k, std::sqrt(0.1)));
  s.provenance["points"] = grid.points;
  s.provenance["prior"] = prior_kind;
}

}  // namespace

LogDensity banana_log_density(double s1, double s2, double kappa) {
  if (!(s1 > 0.0) || !(s2 > 0.0)) throw ConfigError("sigma", "entries must be positive");
  return [=](const Vector& t) {
    if (t.size() != 2) throw DimensionError("banana density is two-dimensional");
    const double a = t[0] / s1;
    const double b = (t[1] - kappa * t[0] * t[0]) / s2;
    return -0.5 * a * a - 0.5 * b * b;
  };
}

LogDensity gaussian_log_density(const Vector& mean, const Matrix& cov) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw ConfigError("covariance", "must be positive definite");
  Matrix L = llt.matrixL();
  return [mean, L](const Vector& t) {
    if (t.size() != mean.size()) throw DimensionError("Gaussian density: dimension mismatch");
    return -0.5 * L.triangularView<Eigen::Lower>().solve(t - mean).squaredNorm();
  };
}

LogDensity box_extended_log_density(LogDensity inner, double lo, double hi, double width) {
  if (!(width > 0.0) || !(hi > lo)) throw ConfigError("extend_width", "must be positive");
  return [inner = std::move(inner), lo, hi, width](const Vector& t) {
    const Vector p = t.cwiseMax(lo).cwiseMin(hi);
    const double penalty = (t - p).squaredNorm() / (2.0 * width * width);
    return inner(p) - penalty;
  };
}

Vector json_vector(const json& table, const std::string& field, const std::string& prefix) {
  auto v = json_vector_opt(table, field, prefix);
  if (!v) throw ConfigError(prefix + field, "is required");
  return *v;
}

std::optional<Vector> json_vector_opt(const json& table, const std::string& field,
                                      const std::string& prefix) {
  if (!table.is_object() || !table.contains(field)) return std::nullopt;
  const json& a = table.at(field);
  if (a.is_number()) return Vector::Constant(1, a.get<double>());
  if (!a.is_array() || a.empty()) throw ConfigError(prefix + field, "must be a non-empty array of numbers");
  Vector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!a[k].is_number()) throw ConfigError(prefix + field, "must hold numbers");
    v[static_cast<Eigen::Index>(k)] = a[k].get<double>();
  }
  return v;
}

ProblemSetup make_problem(const json& config, const std::filesystem::path& base_dir) {
  if (!config.is_object() || !config.contains("problem")) throw ConfigError("problem", "table is required");
  const json& p = config.at("problem");
  ProblemSetup s;
  s.kind = required<std::string>(p, "kind", "problem.");
  if (s.kind == "banana") make_banana(p, s);
  else if (s.kind == "synthetic-gaussian") make_gaussian(p, s);
  else if (s.kind == "dr") make_dr(p, base_dir, s);
  else if (s.kind == "beam") make_beam(p, base_dir, s);
  else throw ConfigError("problem.kind", "must be one of dr, beam, synthetic-gaussian, banana");
  return s;
}

BuildConfig parse_build_config(const json& config) {
  const json& m = table_or_empty(config, "map");
  const std::string pre = "map.";
  BuildConfig b;
  b.n_samples = value_or<int>(m, "n_samples", pre, b.n_samples);
  b.tolerance = value_or<double>(m, "tolerance", pre, b.tolerance);
  b.max_iterations = value_or<int>(m, "max_iterations", pre, b.max_iterations);
  b.seed = value_or<std::uint64_t>(m, "seed", pre, b.seed);
  b.fd_step = value_or<double>(m, "fd_step", pre, b.fd_step);
  b.quadrature_order = value_or<int>(m, "quadrature_order", pre, b.quadrature_order);
  if (m.contains("stages")) {
    const json& st = m.at("stages");
    if (!st.is_array()) throw ConfigError("map.stages", "must be an array of [ell_L, ell_R] pairs");
    b.stages.clear();
    for (const auto& s : st) {
      if (!s.is_array() || s.size() != 2 || !s[0].is_number_integer() || !s[1].is_number_integer())
        throw ConfigError("map.stages", "must be an array of [ell_L, ell_R] integer pairs");
      b.stages.push_back(StageDegrees{s[0].get<int>(), s[1].get<int>()});
    }
  }
  b.validate();
  return b;
}

ReferenceDensity parse_reference(const json& config, const ProblemSetup& problem) {
  const json& r = table_or_empty(config, "reference");
  const Vector mean = vec_or(r, "mean", "reference.", problem.default_reference.mean());
  const Vector sd = vec_or(r, "stddev", "reference.", problem.default_reference.stddev());
  auto fit = [&](const Vector& v, const char* name) {
    if (v.size() == 1 && problem.dim > 1) return Vector(Vector::Constant(problem.dim, v[0]));
    if (v.size() != problem.dim)
      throw ConfigError(std::string("reference.") + name, "must match the problem dimension");
    return v;
  };
  try {
    return ReferenceDensity(fit(mean, "mean"), fit(sd, "stddev"));
  } catch (const DimensionError& e) {
    throw ConfigError("reference.stddev", e.what());
  }
}

SamplerSpec parse_sampler(const json& config, const ProblemSetup& problem) {
  if (!config.contains("sampler")) throw ConfigError("sampler", "table is required");
  const json& t = config.at("sampler");
  const std::string pre = "sampler.";
  SamplerSpec s;
  s.algorithm = required<std::string>(t, "algorithm", pre);
  if (s.algorithm != "mh" && s.algorithm != "mfmh" && s.algorithm != "dram")
    throw ConfigError("sampler.algorithm", "must be one of mh, mfmh, dram");
  s.kernel = value_or<std::string>(t, "kernel", pre, s.algorithm == "mh" ? "random_walk" : "independence");
  if (s.kernel != "independence" && s.kernel != "random_walk")
    throw ConfigError("sampler.kernel", "must be 'independence' or 'random_walk'");
  s.burn = value_or<std::size_t>(t, "burn", pre, 0);
  s.stride = value_or<std::size_t>(t, "stride", pre, 1);
  if (s.stride == 0) throw ConfigError("sampler.stride", "must be >= 1");
  if (t.contains("samples")) {
    s.iterations = s.burn + s.stride * required<std::size_t>(t, "samples", pre);
  } else {
    s.iterations = required<std::size_t>(t, "iterations", pre);
  }
  if (s.iterations == 0 || s.burn + s.stride > s.iterations)
    throw ConfigError("sampler.iterations", "must exceed burn + stride");
  s.seed = required<std::uint64_t>(t, "seed", pre);
  s.start = json_vector_opt(t, "start", pre);
  if (s.start && s.start->size() != problem.dim)
    throw ConfigError("sampler.start", "must match the problem dimension");
  s.map_file = value_or<std::string>(t, "map_file", pre, "");
  if (auto v = json_vector_opt(t, "step_variance", pre)) {
    s.step_variance = v->size() == 1 ? Vector(Vector::Constant(problem.dim, (*v)[0])) : *v;
    if (s.step_variance.size() != problem.dim)
      throw ConfigError("sampler.step_variance", "must match the problem dimension");
  } else if (s.kernel == "random_walk" && s.algorithm != "dram") {
    throw ConfigError("sampler.step_variance", "is required for the random-walk kernel");
  }
  if (s.algorithm == "dram") {
    auto cov = json_vector_opt(t, "init_cov_diag", pre);
    if (!cov) throw ConfigError("sampler.init_cov_diag", "is required for dram");
    s.dram.init_cov_diag = cov->size() == 1 ? Vector(Vector::Constant(problem.dim, (*cov)[0])) : *cov;
    if (s.dram.init_cov_diag.size() != problem.dim)
      throw ConfigError("sampler.init_cov_diag", "must match the problem dimension");
    s.dram.iterations = s.iterations;
    s.dram.burn_adapt = value_or<std::size_t>(t, "burn_adapt", pre, 1000);
    s.dram.delayed_rejection = value_or<bool>(t, "delayed_rejection", pre, true);
    s.dram.dr_scale = value_or<double>(t, "dr_scale", pre, s.dram.dr_scale);
    s.dram.regularization = value_or<double>(t, "regularization", pre, s.dram.regularization);
    if (t.contains("max_target_evals"))
      s.dram.max_target_evals = required<std::uint64_t>(t, "max_target_evals", pre);
    s.dram.seed = s.seed;
  }
  return s;
}

}  // namespace mfmh
