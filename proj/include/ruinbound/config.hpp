#pragma once

// Experiment configuration: one JSON document per experiment.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ruinbound/errors.hpp"
#include "ruinbound/gaussian.hpp"
#include "ruinbound/ruin_set.hpp"
#include "ruinbound/transform.hpp"
#include "ruinbound/trend.hpp"

namespace ruinbound {

using Json = nlohmann::json;

enum class ProcessFamily { bm, convolution, transform, fbm, gordon };

inline std::string_view to_string(ProcessFamily f) {
  switch (f) {
    case ProcessFamily::bm: return "bm";
    case ProcessFamily::convolution: return "convolution";
    case ProcessFamily::transform: return "transform";
    case ProcessFamily::fbm: return "fbm";
    case ProcessFamily::gordon: return "gordon";
  }
  return "unknown";
}

struct ExperimentConfig {
  std::string name;
  ProcessFamily family = ProcessFamily::bm;
  int dim = 1;
  CovarianceModel model;
  int k = 1;
  Vector thresholds;
  RuinSet set;
  TrendFunction trend;
  std::vector<TrendFunction> axis_trends;  // convolution only
  double horizon = 1.0;
  std::vector<double> horizons;            // convolution and fbm
  std::vector<double> us;
  std::size_t resolution = 4096;
  std::vector<std::size_t> resolutions;
  std::size_t paths = 200000;
  std::uint64_t seed = 1;
  std::vector<double> hurst;
  std::optional<TimeTransform> clocks;
  std::string output;
  Json document;                           // normalized document the run is reproducible from
  std::string fingerprint;
};

/// Field-level overrides applied on top of the file (command-line flags).
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths;
  std::optional<std::size_t> resolution;
};

namespace detail {

inline std::string line_col(const std::string& text, std::size_t offset) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(offset, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return std::to_string(line) + ":" + std::to_string(col);
}

/// Line of the first occurrence of "key" in the source text, for schema diagnostics.
inline std::string key_location(const std::string& text, const std::string& key) {
  const auto pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return "";
  const std::string lc = line_col(text, pos);
  return "line " + lc.substr(0, lc.find(':')) + ": ";
}

class SchemaReader {
 public:
  SchemaReader(const std::string& source, const std::string& text) : source_(source), text_(text) {}

  [[noreturn]] void fail(const std::string& key, const std::string& message) const {
    throw ConfigError(source_ + ": " + key_location(text_, key) + message);
  }

  void only_keys(const Json& obj, const std::string& where, std::initializer_list<const char*> allowed) const {
    if (!obj.is_object()) fail(where, "'" + where + "' must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : obj.items()) {
      if (!ok.count(key)) fail(key, "unknown field '" + key + "' in " + where);
    }
  }

  double number(const Json& v, const std::string& key) const {
    if (!v.is_number()) fail(key, "'" + key + "' must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(key, "'" + key + "' must be finite");
    return x;
  }

  std::vector<double> numbers(const Json& v, const std::string& key) const {
    if (!v.is_array()) fail(key, "'" + key + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) out.push_back(number(x, key));
    return out;
  }

  Vector vector(const Json& v, const std::string& key) const {
    const auto xs = numbers(v, key);
    return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
  }

  Matrix matrix(const Json& v, const std::string& key) const {
    if (!v.is_array() || v.empty()) fail(key, "'" + key + "' must be a non-empty array of rows");
    const auto rows = static_cast<Eigen::Index>(v.size());
    Matrix m(rows, rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const auto row = numbers(v[i], key);
      if (static_cast<Eigen::Index>(row.size()) != rows) fail(key, "'" + key + "' must be square");
      for (Eigen::Index j = 0; j < rows; ++j) m(i, j) = row[j];
    }
    return m;
  }

  std::size_t count(const Json& v, const std::string& key) const {
    if (!v.is_number_integer() || v.get<long long>() < 1) fail(key, "'" + key + "' must be a positive integer");
    return static_cast<std::size_t>(v.get<long long>());
  }

  TrendFunction trend(const Json& t, int dim, const std::string& key) const {
    only_keys(t, key, {"kind", "c", "exponent", "times", "values"});
    const std::string kind = t.value("kind", "zero");
    const auto need_dim = [&](const Vector& v, const char* field) {
      if (v.size() != dim) fail(field, "'" + std::string(field) + "' must have " + std::to_string(dim) + " entries");
    };
    if (kind == "zero") return TrendFunction::zero(dim);
    if (kind == "linear") {
      if (!t.contains("c")) fail(key, "linear trend needs 'c'");
      const Vector c = vector(t["c"], "c");
      need_dim(c, "c");
      return TrendFunction::linear(c);
    }
    if (kind == "power") {
      if (!t.contains("c") || !t.contains("exponent")) fail(key, "power trend needs 'c' and 'exponent'");
      const Vector c = vector(t["c"], "c");
      const Vector e = vector(t["exponent"], "exponent");
      need_dim(c, "c");
      need_dim(e, "exponent");
      try {
        return TrendFunction::power(c, e);
      } catch (const Error& err) {
        fail("exponent", err.what());
      }
    }
    if (kind == "tabulated") {
      if (!t.contains("times") || !t.contains("values")) fail(key, "tabulated trend needs 'times' and 'values'");
      const auto times = numbers(t["times"], "times");
      std::vector<Vector> values;
      if (!t["values"].is_array()) fail("values", "'values' must be an array of rows");
      for (const auto& row : t["values"]) {
        values.push_back(vector(row, "values"));
        need_dim(values.back(), "values");
      }
      try {
        return TrendFunction::tabulated(times, values);
      } catch (const Error& err) {
        fail("times", err.what());
      }
    }
    fail("kind", "unknown trend kind '" + kind + "'");
  }

 private:
  const std::string& source_;
  const std::string& text_;
};

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

inline std::string fingerprint_of(const Json& document) {
  Json copy = document;
  copy.erase("output");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(detail::fnv1a(copy.dump())));
  return buf;
}

/// Validates the document and builds the typed configuration. `text` is the source
/// used for line diagnostics (may be empty).
inline ExperimentConfig parse_config(Json doc, const ConfigOverrides& overrides = {}, const std::string& source = "<config>",
                                     const std::string& text = "") {
  const detail::SchemaReader r(source, text);
  r.only_keys(doc, "config", {"name", "family", "dim", "model", "set", "trend", "axis_trends", "horizon", "horizons",
                              "axes", "u", "resolution", "resolutions", "paths", "seed", "hurst", "clock", "output"});
  if (overrides.seed) doc["seed"] = *overrides.seed;
  if (overrides.paths) doc["paths"] = *overrides.paths;
  if (overrides.resolution) {
    doc["resolution"] = *overrides.resolution;
    doc.erase("resolutions");
  }

  ExperimentConfig c;
  c.name = doc.value("name", source);
  const std::string family = doc.value("family", "bm");
  if (family == "bm") c.family = ProcessFamily::bm;
  else if (family == "convolution") c.family = ProcessFamily::convolution;
  else if (family == "transform") c.family = ProcessFamily::transform;
  else if (family == "fbm") c.family = ProcessFamily::fbm;
  else if (family == "gordon") c.family = ProcessFamily::gordon;
  else r.fail("family", "unknown family '" + family + "' (bm | convolution | transform | fbm | gordon)");

  if (doc.contains("hurst")) {
    c.hurst = r.numbers(doc["hurst"], "hurst");
    if (c.hurst.empty()) r.fail("hurst", "'hurst' must not be empty");
    for (double h : c.hurst) {
      if (!(h > 0.0 && h <= 1.0)) r.fail("hurst", "Hurst indices must lie in (0, 1]");
    }
  } else if (c.family == ProcessFamily::fbm || c.family == ProcessFamily::gordon) {
    r.fail("family", "family '" + family + "' needs 'hurst'");
  }

  // dimension
  if (c.family == ProcessFamily::fbm) {
    c.dim = 1;
  } else if (c.family == ProcessFamily::gordon) {
    c.dim = static_cast<int>(c.hurst.size());
  } else if (doc.contains("dim")) {
    c.dim = static_cast<int>(r.count(doc["dim"], "dim"));
  } else if (doc.contains("set") && doc["set"].contains("a")) {
    c.dim = static_cast<int>(doc["set"]["a"].size());
  }
  if (c.dim > kMaxIntegrationDim) r.fail("dim", "'dim' exceeds " + std::to_string(kMaxIntegrationDim));
  const int d = c.dim;

  // model
  try {
    if (!doc.contains("model") || c.family == ProcessFamily::fbm || c.family == ProcessFamily::gordon) {
      if (doc.contains("model") && c.family != ProcessFamily::bm) {
        r.fail("model", "family '" + family + "' uses independent coordinates; remove 'model'");
      }
      c.model = build_covariance(Matrix::Identity(d, d));
    } else {
      const Json& m = doc["model"];
      r.only_keys(m, "model", {"rho", "A", "sigma"});
      if (m.size() != 1) r.fail("model", "'model' needs exactly one of 'rho', 'A', 'sigma'");
      if (m.contains("rho")) {
        const double rho = r.number(m["rho"], "rho");
        if (!(rho > -1.0 && rho < 1.0)) r.fail("rho", "'rho' must lie in (-1, 1)");
        c.model = equicorrelated_model(d, rho);
      } else if (m.contains("A")) {
        const Matrix A = r.matrix(m["A"], "A");
        if (A.rows() != d) r.fail("A", "'A' must be " + std::to_string(d) + "x" + std::to_string(d));
        c.model = build_covariance(A);
      } else {
        const Matrix S = r.matrix(m["sigma"], "sigma");
        if (S.rows() != d) r.fail("sigma", "'sigma' must be " + std::to_string(d) + "x" + std::to_string(d));
        c.model = covariance_from_sigma(S);
      }
    }
  } catch (const SingularMatrix& e) {
    r.fail("model", std::string("model is not positive definite: ") + e.what());
  }

  // ruin set
  c.k = d;
  c.thresholds = Vector::Ones(d);
  if (doc.contains("set")) {
    if (c.family == ProcessFamily::fbm || c.family == ProcessFamily::gordon) {
      r.fail("set", "family '" + family + "' fixes the ruin set; remove 'set'");
    }
    const Json& s = doc["set"];
    r.only_keys(s, "set", {"k", "a"});
    if (s.contains("a")) {
      c.thresholds = r.vector(s["a"], "a");
      if (c.thresholds.size() != d) r.fail("a", "'a' must have " + std::to_string(d) + " entries");
    }
    if (s.contains("k")) {
      if (!s["k"].is_number_integer()) r.fail("k", "'k' must be an integer");
      c.k = s["k"].get<int>();
    }
    if (c.k < 1 || c.k > d) r.fail("k", "'k' must satisfy 1 <= k <= dim (" + std::to_string(d) + ")");
  }
  try {
    c.set = RuinSet::k_of_d(c.k, c.thresholds);
  } catch (const OriginInSet& e) {
    r.fail("a", e.what());
  }

  // trend
  c.trend = doc.contains("trend") ? r.trend(doc["trend"], d, "trend") : TrendFunction::zero(d);
  if ((c.family == ProcessFamily::fbm || c.family == ProcessFamily::gordon) &&
      c.trend.kind() != TrendFunction::Kind::linear && c.trend.kind() != TrendFunction::Kind::zero) {
    r.fail("trend", "family '" + family + "' needs a linear or zero trend");
  }

  // horizons
  if (doc.contains("horizon")) {
    c.horizon = r.number(doc["horizon"], "horizon");
    if (!(c.horizon > 0.0)) r.fail("horizon", "'horizon' must be positive");
  }
  std::size_t axes = 1;
  if (c.family == ProcessFamily::convolution) {
    axes = doc.contains("axes") ? r.count(doc["axes"], "axes") : 2;
    if (axes > 4) r.fail("axes", "'axes' must be at most 4");
  } else if (c.family == ProcessFamily::fbm) {
    axes = c.hurst.size();
  } else if (doc.contains("axes")) {
    r.fail("axes", "'axes' only applies to the convolution family");
  }
  if (doc.contains("horizons")) {
    if (c.family != ProcessFamily::convolution && c.family != ProcessFamily::fbm) {
      r.fail("horizons", "'horizons' only applies to convolution and fbm families");
    }
    c.horizons = r.numbers(doc["horizons"], "horizons");
    if (c.horizons.size() != axes) r.fail("horizons", "'horizons' must have one entry per axis");
    for (double h : c.horizons) {
      if (!(h > 0.0)) r.fail("horizons", "horizons must be positive");
    }
  } else {
    c.horizons.assign(axes, c.horizon);
  }
  if (doc.contains("axis_trends")) {
    if (c.family != ProcessFamily::convolution && c.family != ProcessFamily::fbm) {
      r.fail("axis_trends", "'axis_trends' only applies to convolution and fbm families");
    }
    if (!doc["axis_trends"].is_array() || doc["axis_trends"].size() != axes) {
      r.fail("axis_trends", "'axis_trends' must have one trend per axis");
    }
    for (const auto& t : doc["axis_trends"]) c.axis_trends.push_back(r.trend(t, d, "axis_trends"));
  } else if (c.family == ProcessFamily::convolution || c.family == ProcessFamily::fbm) {
    c.axis_trends.assign(axes, c.trend);
  }
  if (c.family == ProcessFamily::fbm) {
    for (const auto& t : c.axis_trends) {
      if (t.kind() != TrendFunction::Kind::linear && t.kind() != TrendFunction::Kind::zero) {
        r.fail("axis_trends", "fbm drifts must be linear or zero");
      }
    }
  }

  // clock
  if (doc.contains("clock")) {
    if (c.family != ProcessFamily::transform) r.fail("clock", "'clock' only applies to the transform family");
    const Json& f = doc["clock"];
    r.only_keys(f, "clock", {"kind", "exponent", "scale", "times", "values"});
    const std::string kind = f.value("kind", "power");
    try {
      if (kind == "power") {
        if (!f.contains("exponent")) r.fail("clock", "power clock needs 'exponent'");
        c.clocks = TimeTransform::power(r.vector(f["exponent"], "exponent"));
      } else if (kind == "linear") {
        if (!f.contains("scale")) r.fail("clock", "linear clock needs 'scale'");
        c.clocks = TimeTransform::linear(r.vector(f["scale"], "scale"));
      } else if (kind == "tabulated") {
        if (!f.contains("times") || !f.contains("values")) r.fail("clock", "tabulated clock needs 'times' and 'values'");
        std::vector<Vector> values;
        for (const auto& row : f["values"]) values.push_back(r.vector(row, "values"));
        c.clocks = TimeTransform::tabulated(r.numbers(f["times"], "times"), values);
      } else {
        r.fail("kind", "unknown clock kind '" + kind + "'");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      r.fail("clock", e.what());
    }
    if (c.clocks->dim() != d) r.fail("clock", "'clock' must have " + std::to_string(d) + " coordinates");
  } else if (c.family == ProcessFamily::transform) {
    if (c.hurst.empty()) r.fail("family", "transform family needs 'clock' or 'hurst'");
    if (static_cast<int>(c.hurst.size()) != d) r.fail("hurst", "'hurst' must have one entry per coordinate");
    Vector e(d);
    for (int i = 0; i < d; ++i) e[i] = 2.0 * c.hurst[i];
    c.clocks = TimeTransform::power(e);
  }

  // sampling
  if (!doc.contains("u")) r.fail("config", "missing 'u' (list of scale levels)");
  c.us = doc["u"].is_number() ? std::vector<double>{r.number(doc["u"], "u")} : r.numbers(doc["u"], "u");
  for (double u : c.us) {
    if (!(u > 0.0)) r.fail("u", "every u must be positive");
  }
  if (doc.contains("resolutions")) {
    const auto rs = r.numbers(doc["resolutions"], "resolutions");
    for (double m : rs) {
      if (!(m >= 1.0) || m != std::floor(m)) r.fail("resolutions", "resolutions must be positive integers");
      c.resolutions.push_back(static_cast<std::size_t>(m));
    }
    std::sort(c.resolutions.begin(), c.resolutions.end());
    c.resolutions.erase(std::unique(c.resolutions.begin(), c.resolutions.end()), c.resolutions.end());
    if (c.resolutions.empty()) r.fail("resolutions", "'resolutions' must not be empty");
    const std::size_t finest = c.resolutions.back();
    for (std::size_t m : c.resolutions) {
      if (finest % m != 0 || !std::has_single_bit(finest / m)) {
        r.fail("resolutions", "resolutions must be nested by factors of two");
      }
    }
    c.resolution = finest;
    if (doc.contains("resolution") && r.count(doc["resolution"], "resolution") != finest) {
      r.fail("resolution", "'resolution' must equal the finest entry of 'resolutions'");
    }
  } else if (doc.contains("resolution")) {
    c.resolution = r.count(doc["resolution"], "resolution");
  }
  if (doc.contains("paths")) c.paths = r.count(doc["paths"], "paths");
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_integer() && !doc["seed"].is_number_unsigned()) r.fail("seed", "'seed' must be an integer");
    c.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("output")) {
    if (!doc["output"].is_string()) r.fail("output", "'output' must be a path prefix string");
    c.output = doc["output"].get<std::string>();
  }
  doc["dim"] = c.dim;
  doc["family"] = family;
  c.document = doc;
  c.fingerprint = fingerprint_of(doc);
  return c;
}

inline Json read_json_text(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const Json::parse_error& e) {
    throw ConfigError(source + ": " + detail::line_col(text, e.byte > 0 ? e.byte - 1 : 0) + ": invalid JSON (" +
                      e.what() + ")");
  }
}

inline ExperimentConfig load_config(const std::string& path, const ConfigOverrides& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  return parse_config(read_json_text(text, path), overrides, path, text);
}

}  // namespace ruinbound
