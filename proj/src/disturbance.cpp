#include "drmpc/disturbance.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "drmpc/num_format.hpp"
#include "drmpc/rng.hpp"

namespace drmpc {

namespace {

void validate_profile_box(const KnownDisturbanceProfile& p) {
  for (int k = 0; k < p.declared_horizon(); ++k) {
    if (!p.output_box().contains(p.output_at(k))) {
      throw ValueError("profile output leaves its declared box at step " +
                       std::to_string(k));
    }
  }
}

std::string sidecar_path(const std::string& path) {
  const std::string ext = ".csv";
  if (path.size() > ext.size() &&
      path.compare(path.size() - ext.size(), ext.size(), ext) == 0) {
    return path.substr(0, path.size() - ext.size()) + ".meta.json";
  }
  return path + ".meta.json";
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

}  // namespace

KnownDisturbanceProfile KnownDisturbanceProfile::sinusoidal(
    double amplitude, double phase, double rate, double offset,
    Eigen::MatrixXd injection, Box output_box, int declared_horizon) {
  if (rate == 0) throw ValueError("sinusoidal rate must be nonzero");
  if (injection.cols() != 1) {
    throw DimensionError("sinusoidal profile is scalar; injection needs 1 column");
  }
  if (output_box.dim() != 1) {
    throw DimensionError("sinusoidal profile needs a 1-d output box");
  }
  if (declared_horizon < 0) throw ValueError("declared_horizon must be >= 0");
  KnownDisturbanceProfile p;
  p.kind_ = Kind::Sinusoidal;
  p.amplitude_ = amplitude;
  p.phase_ = phase;
  p.rate_ = rate;
  p.offset_ = offset;
  p.injection_ = std::move(injection);
  p.output_box_ = std::move(output_box);
  p.declared_horizon_ = declared_horizon;
  validate_profile_box(p);
  return p;
}

KnownDisturbanceProfile KnownDisturbanceProfile::constant(
    double value, Eigen::MatrixXd injection, Box output_box,
    int declared_horizon) {
  if (injection.cols() != 1) {
    throw DimensionError("constant profile is scalar; injection needs 1 column");
  }
  if (output_box.dim() != 1) {
    throw DimensionError("constant profile needs a 1-d output box");
  }
  if (declared_horizon < 0) throw ValueError("declared_horizon must be >= 0");
  KnownDisturbanceProfile p;
  p.kind_ = Kind::Constant;
  p.value_ = value;
  p.injection_ = std::move(injection);
  p.output_box_ = std::move(output_box);
  p.declared_horizon_ = declared_horizon;
  validate_profile_box(p);
  return p;
}

KnownDisturbanceProfile KnownDisturbanceProfile::tabulated(
    Eigen::MatrixXd values, Eigen::MatrixXd injection, Box output_box) {
  if (values.cols() != injection.cols()) {
    throw DimensionError("table width must match injection columns");
  }
  if (output_box.dim() != values.cols()) {
    throw DimensionError("output box dimension must match table width");
  }
  KnownDisturbanceProfile p;
  p.kind_ = Kind::Tabulated;
  p.table_ = std::move(values);
  p.injection_ = std::move(injection);
  p.output_box_ = std::move(output_box);
  p.declared_horizon_ = static_cast<int>(p.table_.rows());
  validate_profile_box(p);
  return p;
}

Eigen::VectorXd KnownDisturbanceProfile::output_at(int k) const {
  if (k < 0) throw WindowError("profile step must be >= 0");
  switch (kind_) {
    case Kind::Sinusoidal: {
      Eigen::VectorXd out(1);
      out(0) = amplitude_ * std::sin((k + phase_) / rate_) + offset_;
      return out;
    }
    case Kind::Constant: {
      Eigen::VectorXd out(1);
      out(0) = value_;
      return out;
    }
    case Kind::Tabulated:
      if (k >= table_.rows()) {
        throw WindowError("profile table has no row for step " +
                          std::to_string(k));
      }
      return table_.row(k).transpose();
  }
  throw ValueError("unreachable profile kind");
}

Eigen::MatrixXd gaussian_kernel_covariance(const GpKernelParams& params,
                                           int length) {
  if (length <= 0) throw ValueError("covariance length must be >= 1");
  Eigen::MatrixXd cov(length, length);
  for (int i = 0; i < length; ++i) {
    for (int j = 0; j < length; ++j) {
      const double lag = static_cast<double>(i - j);
      cov(i, j) = params.nugget +
                  params.scale * std::exp(-(lag * lag) / params.length_sq);
    }
  }
  return cov;
}

Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols()) throw DimensionError("covariance not square");
  if ((cov.array() == 0.0).all()) {
    return Eigen::MatrixXd::Zero(cov.rows(), cov.cols());
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  // Smooth kernels over long horizons are PD only up to roundoff; retry
  // with a tiny diagonal bump before declaring the matrix indefinite.
  const double pivot = cov.diagonal().maxCoeff();
  if (pivot > 0) {
    for (double rel = 1e-14; rel <= 1e-8; rel *= 10.0) {
      Eigen::MatrixXd bumped = cov;
      bumped.diagonal().array() += rel * pivot;
      llt.compute(bumped);
      if (llt.info() == Eigen::Success) return llt.matrixL();
    }
  }
  throw CholeskyError("covariance is not numerically positive definite");
}

DisturbanceDataset sample_trajectories(const Eigen::MatrixXd& cov, int n_dims,
                                       int count, std::uint64_t seed) {
  if (n_dims <= 0) throw ValueError("n_dims must be >= 1");
  if (count <= 0) throw ValueError("trajectory count must be >= 1");
  const Eigen::MatrixXd L = cholesky_lower(cov);
  const int horizon = static_cast<int>(cov.rows());

  DisturbanceDataset ds;
  ds.n_dims = n_dims;
  ds.n_traj = count;
  ds.horizon = horizon;
  ds.seed = seed;
  ds.data.reserve(count);

  NormalSampler normal(seed);
  Eigen::VectorXd xi(horizon);
  for (int traj = 0; traj < count; ++traj) {
    Eigen::MatrixXd m(horizon, n_dims);
    for (int d = 0; d < n_dims; ++d) {
      for (int t = 0; t < horizon; ++t) xi(t) = normal();
      m.col(d) = L * xi;
    }
    ds.data.push_back(std::move(m));
  }
  return ds;
}

DisturbanceDataset sample_trajectories(const GpKernelParams& params,
                                       int horizon, int n_dims, int count,
                                       std::uint64_t seed) {
  DisturbanceDataset ds = sample_trajectories(
      gaussian_kernel_covariance(params, horizon), n_dims, count, seed);
  ds.kernel = params;
  return ds;
}

Eigen::VectorXd known_disturbance_at(const KnownDisturbanceProfile& profile,
                                     int k) {
  return profile.injection() * profile.output_at(k);
}

ScenarioDisturbances extract_scenarios(const DisturbanceDataset& ds, int k,
                                       int length, int n_samples,
                                       const ScenarioSelector& selector) {
  if (k < 0 || length <= 0) throw ValueError("window start/length invalid");
  if (k + length > ds.horizon) {
    throw WindowError("window [" + std::to_string(k) + ", " +
                      std::to_string(k + length) + ") exceeds horizon " +
                      std::to_string(ds.horizon));
  }
  if (n_samples <= 0) throw ValueError("n_samples must be >= 1");
  if (n_samples > ds.n_traj) {
    throw WindowError("insufficient trajectories: requested " +
                      std::to_string(n_samples) + " of " +
                      std::to_string(ds.n_traj));
  }

  std::vector<int> picks(n_samples);
  if (selector.kind == ScenarioSelector::Kind::First) {
    std::iota(picks.begin(), picks.end(), 0);
  } else {
    // Fisher-Yates prefix: n_samples distinct indices, order preserved.
    std::vector<int> pool(ds.n_traj);
    std::iota(pool.begin(), pool.end(), 0);
    std::mt19937_64 engine(selector.seed);
    for (int i = 0; i < n_samples; ++i) {
      const std::uint64_t span = static_cast<std::uint64_t>(ds.n_traj - i);
      const int j = i + static_cast<int>(engine() % span);
      std::swap(pool[i], pool[j]);
      picks[i] = pool[i];
    }
  }

  ScenarioDisturbances out;
  out.n_samples = n_samples;
  out.length = length;
  out.base_time = k;
  out.values.reserve(n_samples);
  for (int idx : picks) {
    out.values.push_back(ds.data[idx].middleRows(k, length));
  }
  return out;
}

void save_dataset(const DisturbanceDataset& ds, const std::string& path) {
  std::ofstream csv(path);
  if (!csv) throw IoError("cannot open for writing: " + path);
  csv << "traj,step";
  for (int d = 0; d < ds.n_dims; ++d) csv << ",w" << d;
  csv << "\n";
  for (int traj = 0; traj < ds.n_traj; ++traj) {
    for (int t = 0; t < ds.horizon; ++t) {
      csv << traj << ',' << t;
      for (int d = 0; d < ds.n_dims; ++d) {
        csv << ',' << format_double(ds.data[traj](t, d));
      }
      csv << "\n";
    }
  }
  if (!csv.good()) throw IoError("write failed: " + path);
  csv.close();

  nlohmann::json meta;
  meta["n_dims"] = ds.n_dims;
  meta["n_traj"] = ds.n_traj;
  meta["horizon"] = ds.horizon;
  meta["seed"] = ds.seed;
  if (ds.kernel) {
    meta["kernel"] = {{"nugget", ds.kernel->nugget},
                      {"scale", ds.kernel->scale},
                      {"length_sq", ds.kernel->length_sq}};
  } else {
    meta["kernel"] = nullptr;
  }
  std::ofstream side(sidecar_path(path));
  if (!side) throw IoError("cannot open for writing: " + sidecar_path(path));
  side << meta.dump(2) << "\n";
  if (!side.good()) throw IoError("write failed: " + sidecar_path(path));
}

DisturbanceDataset load_dataset(const std::string& path) {
  std::ifstream side(sidecar_path(path));
  if (!side) throw IoError("cannot open: " + sidecar_path(path));
  nlohmann::json meta;
  try {
    side >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad sidecar json: ") + e.what());
  }

  DisturbanceDataset ds;
  try {
    ds.n_dims = meta.at("n_dims").get<int>();
    ds.n_traj = meta.at("n_traj").get<int>();
    ds.horizon = meta.at("horizon").get<int>();
    ds.seed = meta.at("seed").get<std::uint64_t>();
    if (!meta.at("kernel").is_null()) {
      const auto& k = meta.at("kernel");
      ds.kernel = GpKernelParams(k.at("nugget").get<double>(),
                                 k.at("scale").get<double>(),
                                 k.at("length_sq").get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("sidecar missing field: ") + e.what());
  }
  if (ds.n_dims <= 0 || ds.n_traj <= 0 || ds.horizon <= 0) {
    throw SchemaError("sidecar dimensions must be positive");
  }

  std::ifstream csv(path);
  if (!csv) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(csv, line)) throw SchemaError("empty csv: " + path);
  {
    std::string expect = "traj,step";
    for (int d = 0; d < ds.n_dims; ++d) expect += ",w" + std::to_string(d);
    if (line != expect) {
      throw SchemaError("csv header '" + line + "' != '" + expect + "'");
    }
  }

  ds.data.assign(ds.n_traj, Eigen::MatrixXd(ds.horizon, ds.n_dims));
  for (int traj = 0; traj < ds.n_traj; ++traj) {
    for (int t = 0; t < ds.horizon; ++t) {
      if (!std::getline(csv, line)) {
        throw SchemaError("csv truncated at traj " + std::to_string(traj) +
                          " step " + std::to_string(t));
      }
      const auto fields = split_csv_line(line);
      if (static_cast<int>(fields.size()) != 2 + ds.n_dims) {
        throw SchemaError("csv row has " + std::to_string(fields.size()) +
                          " fields, expected " + std::to_string(2 + ds.n_dims));
      }
      if (parse_int(fields[0]) != traj || parse_int(fields[1]) != t) {
        throw SchemaError("csv rows out of canonical (traj, step) order");
      }
      for (int d = 0; d < ds.n_dims; ++d) {
        const double v = parse_double(fields[2 + d]);
        if (!std::isfinite(v)) throw SchemaError("non-finite value in csv");
        ds.data[traj](t, d) = v;
      }
    }
  }
  if (std::getline(csv, line) && !line.empty()) {
    throw SchemaError("trailing data beyond declared n_traj * horizon rows");
  }
  return ds;
}

}  // namespace drmpc
