#pragma once

// Runs an ExperimentConfig and turns the results into report rows.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "ruinbound/bounds.hpp"
#include "ruinbound/config.hpp"
#include "ruinbound/estimators.hpp"
#include "ruinbound/processes.hpp"

namespace ruinbound {

/// CSV summary columns; field names are shared with the JSONL records.
inline const std::vector<std::string> kReportColumns = {
    "fingerprint", "name",     "family",   "u",         "status",     "lower",      "lower_error",
    "middle",      "middle_ci", "middle_extrapolated", "upper", "K", "penalty", "epsilon",
    "ratio",       "direct",   "direct_ci", "resolution", "paths",    "wall_time_s"};

inline const std::vector<std::string> kSweepColumns = {"parameter", "value",  "u",     "lower", "middle", "middle_ci",
                                                       "upper",     "ratio",  "K",     "epsilon", "status"};

namespace detail {

inline Json bound_json(const BoundConstant& k) {
  Json j;
  j["value"] = k.vacuous ? Json(nullptr) : Json(k.value);
  j["log_value"] = k.log_value;
  j["argmin_t"] = k.argmin_t;
  j["method"] = std::string(to_string(k.method));
  j["vacuous"] = k.vacuous;
  Json comps = Json::object();
  for (const auto& [name, v] : k.components) comps[name] = std::isfinite(v) ? Json(v) : Json(nullptr);
  j["components"] = comps;
  j["notes"] = k.notes;
  return j;
}

inline Json trace_json(const std::vector<std::pair<std::size_t, double>>& trace) {
  Json t = Json::array();
  for (const auto& [m, v] : trace) t.push_back({m, v});
  return t;
}

inline double component_or_nan(const BoundConstant& k, const std::string& name) {
  const auto it = k.components.find(name);
  return it == k.components.end() ? std::nan("") : it->second;
}

inline Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline void middle_fields(Json& row, const SupProbEstimate& m, const std::vector<std::size_t>& resolutions) {
  row["middle"] = m.value;
  row["middle_ci"] = m.ci_halfwidth;
  row["middle_ci_lower"] = m.ci_lower;
  row["middle_ci_upper"] = m.ci_upper;
  row["middle_hits"] = m.hits;
  row["middle_extrapolated"] = m.extrapolated ? Json(m.extrapolated->value) : Json(nullptr);
  row["middle_extrapolated_ci"] = m.extrapolated ? Json(m.extrapolated->halfwidth()) : Json(nullptr);
  row["middle_terminal"] = m.terminal.value;
  row["inclusion_violations"] = m.inclusion_violations;
  row["resolution"] = m.resolution;
  row["paths"] = m.n_paths;
  row["trace"] = trace_json(resolutions.empty() ? m.trace : select_trace(m, resolutions));
  row["discretization"] = "lower-biased";
}

inline Json sandwich_row(const ExperimentConfig& c, const SandwichVerdict& v) {
  Json row;
  row["fingerprint"] = c.fingerprint;
  row["name"] = c.name;
  row["family"] = std::string(to_string(c.family));
  row["seed"] = c.seed;
  row["u"] = v.u;
  row["status"] = std::string(to_string(v.status));
  row["lower"] = v.lower.value;
  row["lower_error"] = v.lower.abs_error;
  row["lower_method"] = std::string(to_string(v.lower.method));
  middle_fields(row, v.middle, c.resolutions);
  row["K"] = finite_or_null(v.bound.value);
  row["bound"] = bound_json(v.bound);
  row["penalty"] = finite_or_null(component_or_nan(v.bound, "penalty"));
  const double eps = component_or_nan(v.bound, "epsilon");
  row["epsilon"] = finite_or_null(std::isnan(eps) ? component_or_nan(v.bound, "epsilon_bar") : eps);
  row["upper"] = finite_or_null(v.upper);
  row["ratio"] = finite_or_null(v.ratio);
  row["margin_lower"] = v.margin_lower;
  row["margin_upper"] = finite_or_null(v.margin_upper);
  row["direct"] = nullptr;
  row["direct_ci"] = nullptr;
  return row;
}

inline Json chain_row(const ExperimentConfig& c, const ChainReport& r) {
  Json row;
  row["fingerprint"] = c.fingerprint;
  row["name"] = c.name;
  row["family"] = std::string(to_string(c.family));
  row["seed"] = c.seed;
  row["u"] = r.u;
  row["status"] = r.status;
  row["chain"] = r.kind;
  row["lower"] = r.anchor.value;
  row["lower_error"] = r.anchor.abs_error;
  row["lower_method"] = std::string(to_string(r.anchor.method));
  middle_fields(row, r.time_changed, c.resolutions);
  row["direct"] = r.direct.value;
  row["direct_ci"] = r.direct.ci_halfwidth;
  row["direct_trace"] = trace_json(c.resolutions.empty() ? r.direct.trace : select_trace(r.direct, c.resolutions));
  row["direct_inclusion_violations"] = r.direct.inclusion_violations;
  row["K"] = finite_or_null(r.bound.value);
  row["bound"] = bound_json(r.bound);
  row["penalty"] = finite_or_null(component_or_nan(r.bound, "penalty"));
  const double eps = component_or_nan(r.bound, "epsilon");
  row["epsilon"] = finite_or_null(std::isnan(eps) ? component_or_nan(r.bound, "epsilon_bar") : eps);
  row["upper"] = finite_or_null(r.bound.vacuous ? kInf : r.bound.value * r.anchor.value);
  row["ratio"] = finite_or_null(r.anchor.value > 0.0 ? r.time_changed.value / r.anchor.value : kInf);
  Json orderings = Json::array();
  for (const auto& o : r.orderings) {
    orderings.push_back({{"smaller", o.smaller}, {"larger", o.larger}, {"pointwise", o.pointwise}, {"within_ci", o.within_ci}});
  }
  row["orderings"] = orderings;
  row["outside_hypotheses"] = r.outside_hypotheses;
  if (!r.delta_limits.empty()) {
    row["delta_limits"] = r.delta_limits;
    row["delta_expected"] = r.delta_expected;
    row["delta_ok"] = r.delta_ok;
  }
  row["notes"] = r.notes;
  return row;
}

}  // namespace detail

inline SimulationSettings settings_of(const ExperimentConfig& c, unsigned jobs) {
  SimulationSettings s;
  s.resolution = c.resolution;
  s.n_paths = c.paths;
  s.seed = c.seed;
  s.jobs = jobs;
  return s;
}

/// Bound constant implied by the config's process family.
inline BoundConstant config_bound(const ExperimentConfig& c) {
  switch (c.family) {
    case ProcessFamily::bm: return ruin_bound_constant(c.horizon, c.set, c.trend, c.model);
    case ProcessFamily::convolution:
      return convolution_bound_constant(c.horizons, c.set, c.axis_trends,
                                        std::vector<CovarianceModel>(c.horizons.size(), c.model));
    case ProcessFamily::transform: return clock_bound_constant(c.horizon, c.set, c.trend, *c.clocks, c.model);
    case ProcessFamily::fbm: {
      const CovarianceModel unit = build_covariance(Matrix::Identity(1, 1));
      std::vector<double> horizons;
      std::vector<TrendFunction> rescaled;
      for (std::size_t k = 0; k < c.hurst.size(); ++k) {
        const double H = c.hurst[k];
        const double drift = c.axis_trends[k].is_zero() ? 0.0 : c.axis_trends[k].coefficients()[0];
        if (c.hurst.size() == 1) {
          horizons.push_back(1.0);
          rescaled.push_back(TrendFunction::power(Vector::Constant(1, drift * std::pow(c.horizons[k], 1.0 - H)),
                                                  Vector::Constant(1, 1.0 / (2.0 * H))));
        } else {
          horizons.push_back(std::pow(c.horizons[k], 2.0 * H));
          rescaled.push_back(TrendFunction::power(Vector::Constant(1, drift), Vector::Constant(1, 1.0 / (2.0 * H))));
        }
      }
      return convolution_bound_constant(horizons, RuinSet::half_line(1.0), rescaled,
                                        std::vector<CovarianceModel>(horizons.size(), unit));
    }
    case ProcessFamily::gordon: {
      const int d = c.dim;
      Vector e(d);
      for (int i = 0; i < d; ++i) e[i] = 2.0 * c.hurst[i];
      return clock_bound_constant(c.horizon, RuinSet::k_of_d(d, Vector::Ones(d)), c.trend, TimeTransform::power(e),
                                  build_covariance(Matrix::Identity(d, d)));
    }
  }
  throw InvalidArgument("unknown process family");
}

/// Runs every u of the config. Report rows carry wall_time_s, the only
/// non-deterministic field.
inline std::vector<Json> run_experiment(const ExperimentConfig& c, unsigned jobs = 1) {
  const auto start = std::chrono::steady_clock::now();
  const SimulationSettings s = settings_of(c, jobs);
  std::vector<Json> rows;
  const auto linear_drifts = [&](const std::vector<TrendFunction>& ts) {
    std::vector<double> out;
    for (const auto& t : ts) out.push_back(t.is_zero() ? 0.0 : t.coefficients()[0]);
    return out;
  };
  switch (c.family) {
    case ProcessFamily::bm: {
      for (const auto& v : verify_sandwich({c.model, c.set, c.trend, c.horizon}, c.us, s)) {
        rows.push_back(detail::sandwich_row(c, v));
      }
      break;
    }
    case ProcessFamily::convolution: {
      const ConvolutionProblem p{std::vector<CovarianceModel>(c.horizons.size(), c.model), c.set, c.axis_trends,
                                 c.horizons};
      for (const auto& v : verify_convolution_sandwich(p, c.us, s)) rows.push_back(detail::sandwich_row(c, v));
      break;
    }
    case ProcessFamily::transform: {
      for (const auto& v : verify_clock_sandwich({c.model, c.set, c.trend, *c.clocks, c.horizon}, c.us, s)) {
        rows.push_back(detail::sandwich_row(c, v));
      }
      break;
    }
    case ProcessFamily::fbm: {
      for (const auto& r : fbm_convolution_experiment(c.hurst, linear_drifts(c.axis_trends), c.horizons, c.us, s)) {
        rows.push_back(detail::chain_row(c, r));
      }
      break;
    }
    case ProcessFamily::gordon: {
      const Vector hurst = Eigen::Map<const Vector>(c.hurst.data(), static_cast<Eigen::Index>(c.hurst.size()));
      const Vector drift = c.trend.is_zero() ? Vector::Zero(c.dim) : c.trend.coefficients();
      for (const auto& r : gordon_experiment(hurst, drift, c.horizon, c.us, s)) rows.push_back(detail::chain_row(c, r));
      break;
    }
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (auto& row : rows) row["wall_time_s"] = elapsed / static_cast<double>(rows.size());
  return rows;
}

inline Json error_row(const std::string& name, const std::string& fingerprint, const std::string& message) {
  Json row;
  row["fingerprint"] = fingerprint;
  row["name"] = name;
  row["status"] = "error";
  row["error"] = message;
  return row;
}

/// Copy of a row without the timing field, for reproducibility comparisons.
inline Json without_timing(Json row) {
  row.erase("wall_time_s");
  return row;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline std::string csv_value(const Json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return csv_escape(v.get<std::string>());
  if (v.is_number_float()) {
    std::ostringstream os;
    os << std::setprecision(10) << v.get<double>();
    return os.str();
  }
  return csv_escape(v.dump());
}

inline std::string csv_header(const std::vector<std::string>& columns) {
  std::string line;
  for (std::size_t i = 0; i < columns.size(); ++i) line += (i ? "," : "") + columns[i];
  return line;
}

inline std::string csv_line(const Json& row, const std::vector<std::string>& columns) {
  std::string line;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) line += ",";
    if (row.contains(columns[i])) line += csv_value(row[columns[i]]);
  }
  return line;
}

/// Appends rows to PREFIX.jsonl and PREFIX.csv (header written for a new file).
class ReportWriter {
 public:
  explicit ReportWriter(const std::string& prefix, std::vector<std::string> columns = kReportColumns)
      : columns_(std::move(columns)) {
    const std::filesystem::path base(prefix);
    if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
    const std::string csv_path = prefix + ".csv";
    const bool fresh = !std::filesystem::exists(csv_path) || std::filesystem::file_size(csv_path) == 0;
    jsonl_.open(prefix + ".jsonl", std::ios::app);
    csv_.open(csv_path, std::ios::app);
    if (!jsonl_ || !csv_) throw ConfigError("cannot open report files with prefix " + prefix);
    if (fresh) csv_ << csv_header(columns_) << "\n";
  }

  void write(const Json& row) {
    jsonl_ << row.dump() << "\n";
    csv_ << csv_line(row, columns_) << "\n";
    jsonl_.flush();
    csv_.flush();
  }

 private:
  std::vector<std::string> columns_;
  std::ofstream jsonl_;
  std::ofstream csv_;
};

}  // namespace ruinbound
