#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ruinbound/ruinbound.hpp"

namespace fs = std::filesystem;
using namespace ruinbound;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitViolated = 1;
constexpr int kExitUsage = 2;

struct CommonOptions {
  std::vector<std::string> configs;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths;
  std::optional<std::size_t> resolution;
  unsigned jobs = default_jobs();
  std::string format = "jsonl";
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.configs, "Experiment config file or directory of *.json files")->required();
  cmd->add_option("--seed", o.seed, "Override the master seed");
  cmd->add_option("--paths", o.paths, "Override the number of simulated paths");
  cmd->add_option("--resolution", o.resolution, "Override the grid resolution (intervals)");
  cmd->add_option("--jobs", o.jobs, "Worker threads (default: $RUINBOUND_JOBS or all cores)")->check(CLI::PositiveNumber);
  cmd->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"csv", "jsonl"}));
  cmd->add_option("--out", o.out, "Output path (prefix for verify, file for sweep and simulate)");
}

ConfigOverrides overrides_of(const CommonOptions& o) { return {o.seed, o.paths, o.resolution}; }

std::vector<std::string> expand_configs(const std::vector<std::string>& inputs) {
  std::vector<std::string> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& entry : fs::directory_iterator(in)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") found.push_back(entry.path().string());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(in);
    }
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void print_rows(const std::vector<Json>& rows, const std::string& format, const std::vector<std::string>& columns,
                bool& header_done) {
  for (const auto& row : rows) {
    if (format == "csv") {
      if (!header_done) std::cout << csv_header(columns) << "\n";
      header_done = true;
      std::cout << csv_line(row, columns) << "\n";
    } else {
      std::cout << row.dump() << "\n";
    }
  }
  std::cout.flush();
}

int cmd_verify(const CommonOptions& o) {
  bool violated = false, failed = false, header_done = false;
  std::unique_ptr<ReportWriter> writer;
  if (!o.out.empty()) writer = std::make_unique<ReportWriter>(o.out);
  for (const auto& path : expand_configs(o.configs)) {
    std::vector<Json> rows;
    try {
      const ExperimentConfig c = load_config(path, overrides_of(o));
      if (!writer && !c.output.empty()) writer = std::make_unique<ReportWriter>(c.output);
      rows = run_experiment(c, o.jobs);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      rows = {error_row(path, "", e.what())};
    }
    for (const auto& row : rows) {
      violated = violated || row["status"] == "violated";
      failed = failed || row["status"] == "error";
      if (writer) writer->write(row);
    }
    print_rows(rows, o.format, kReportColumns, header_done);
  }
  if (violated) return kExitViolated;
  return failed ? kExitUsage : kExitOk;
}

int cmd_bound(const CommonOptions& o) {
  static const std::vector<std::string> columns = {"name",    "family",  "fingerprint", "K",     "log_K", "penalty",
                                                   "argmin_t", "epsilon", "prefactor",   "method", "vacuous"};
  int status = kExitOk;
  if (o.format == "csv") std::cout << csv_header(columns) << "\n";
  for (const auto& path : expand_configs(o.configs)) {
    try {
      const ExperimentConfig c = load_config(path, overrides_of(o));
      const BoundConstant k = config_bound(c);
      Json j = detail::bound_json(k);
      j["name"] = c.name;
      j["family"] = std::string(to_string(c.family));
      j["fingerprint"] = c.fingerprint;
      if (o.format == "csv") {
        const double eps = detail::component_or_nan(k, "epsilon");
        Json row = {{"name", c.name},
                    {"family", j["family"]},
                    {"fingerprint", c.fingerprint},
                    {"K", j["value"]},
                    {"log_K", k.log_value},
                    {"penalty", detail::finite_or_null(detail::component_or_nan(k, "penalty"))},
                    {"argmin_t", k.argmin_t},
                    {"epsilon", detail::finite_or_null(std::isnan(eps) ? detail::component_or_nan(k, "epsilon_bar") : eps)},
                    {"prefactor", detail::finite_or_null(detail::component_or_nan(k, "prefactor"))},
                    {"method", j["method"]},
                    {"vacuous", k.vacuous}};
        std::cout << csv_line(row, columns) << "\n";
      } else {
        std::cout << j.dump() << "\n";
      }
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      status = kExitUsage;
    }
  }
  return status;
}

int cmd_bound_text(const CommonOptions& o) {
  int status = kExitOk;
  for (const auto& path : expand_configs(o.configs)) {
    try {
      const ExperimentConfig c = load_config(path, overrides_of(o));
      const BoundConstant k = config_bound(c);
      std::printf("%s (%s, d = %d)\n", c.name.c_str(), std::string(to_string(c.family)).c_str(), c.dim);
      if (k.vacuous) {
        std::printf("  K              = inf (bound vacuous, log K = %.6g)\n", k.log_value);
      } else {
        std::printf("  K              = %.10g\n", k.value);
      }
      std::printf("  method         = %s\n", std::string(to_string(k.method)).c_str());
      std::printf("  argmin t       = %.10g\n", k.argmin_t);
      for (const auto& [name, v] : k.components) std::printf("  %-14s = %.10g\n", name.c_str(), v + 0.0);
      for (const auto& note : k.notes) std::printf("  note: %s\n", note.c_str());
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      status = kExitUsage;
    }
  }
  return status;
}

int cmd_sweep(const CommonOptions& o, const std::string& parameter, const std::vector<std::string>& value_items) {
  static const std::vector<std::string> allowed = {"u", "T", "H", "rho", "k"};
  if (std::find(allowed.begin(), allowed.end(), parameter) == allowed.end()) {
    std::cerr << "error: unknown sweep parameter '" << parameter << "' (u | T | H | rho | k)\n";
    return kExitUsage;
  }
  std::vector<double> values;
  for (const auto& item : value_items) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      std::cerr << "error: sweep value '" << item << "' is not a number\n";
      return kExitUsage;
    }
  }
  std::ofstream file;
  if (!o.out.empty()) {
    const fs::path p(o.out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    file.open(o.out);
    if (!file) {
      std::cerr << "error: cannot write " << o.out << "\n";
      return kExitUsage;
    }
  }
  std::ostream& out = o.out.empty() ? std::cout : file;
  if (o.format == "csv") out << csv_header(kSweepColumns) << "\n";
  bool violated = false, failed = false;
  for (const auto& path : expand_configs(o.configs)) {
    std::string text;
    Json base;
    try {
      text = read_file(path);
      base = read_json_text(text, path);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitUsage;
    }
    for (double v : values) {
      Json doc = base;
      std::vector<Json> rows;
      try {
        if (parameter == "u") {
          doc["u"] = Json::array({v});
        } else if (parameter == "T") {
          doc["horizon"] = v;
          if (doc.contains("horizons")) {
            for (auto& h : doc["horizons"]) h = v;
          }
        } else if (parameter == "H") {
          if (!doc.contains("hurst")) throw ConfigError(path + ": sweep over H needs a 'hurst' field");
          for (auto& h : doc["hurst"]) h = v;
        } else if (parameter == "rho") {
          doc["model"] = {{"rho", v}};
        } else {
          doc["set"]["k"] = static_cast<int>(std::lround(v));
        }
        rows = run_experiment(parse_config(doc, overrides_of(o), path, text), o.jobs);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        rows = {error_row(path, "", e.what())};
      }
      for (auto& row : rows) {
        row["parameter"] = parameter;
        row["value"] = v;
        violated = violated || row["status"] == "violated";
        failed = failed || row["status"] == "error";
        out << (o.format == "csv" ? csv_line(row, kSweepColumns) : row.dump()) << "\n";
      }
      out.flush();
    }
  }
  if (violated) return kExitViolated;
  return failed ? kExitUsage : kExitOk;
}

int cmd_simulate(const CommonOptions& o) {
  if (o.out.empty()) {
    std::cerr << "error: simulate needs --out FILE\n";
    return kExitUsage;
  }
  const auto configs = expand_configs(o.configs);
  if (configs.size() != 1) {
    std::cerr << "error: simulate takes exactly one config\n";
    return kExitUsage;
  }
  try {
    const ExperimentConfig c = load_config(configs.front(), overrides_of(o));
    const TimeGrid grid = TimeGrid::uniform(c.horizon, c.resolution);
    PathEnsemble e;
    switch (c.family) {
      case ProcessFamily::bm: e = simulate_bm(c.model, grid, c.paths, c.seed, o.jobs); break;
      case ProcessFamily::transform:
        e = simulate_time_transformed(c.model, *c.clocks, grid, c.paths, c.seed, o.jobs);
        break;
      case ProcessFamily::gordon: {
        const Vector h = Eigen::Map<const Vector>(c.hurst.data(), static_cast<Eigen::Index>(c.hurst.size()));
        e = simulate(FbmSource(h, grid, c.seed), c.paths, o.jobs);
        break;
      }
      case ProcessFamily::fbm: {
        if (c.hurst.size() != 1) throw ConfigError("simulate: multi-axis fbm configs are not supported");
        e = simulate_fbm(c.hurst.front(), TimeGrid::uniform(c.horizons.front(), c.resolution), c.paths, c.seed,
                         FbmMethod::automatic, o.jobs);
        break;
      }
      case ProcessFamily::convolution: {
        std::vector<TimeGrid> grids;
        for (double T : c.horizons) grids.push_back(TimeGrid::uniform(T, c.resolution));
        e = simulate_convolution_field(std::vector<CovarianceModel>(c.horizons.size(), c.model), grids, c.axis_trends,
                                       c.paths, c.seed, o.jobs);
        break;
      }
    }
    const fs::path p(o.out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream file(o.out, std::ios::binary);
    if (!file) throw ConfigError("cannot write " + o.out);
    write_ensemble(file, e);
    std::cout << "wrote " << e.n_paths << " paths x " << e.points() << " points x " << e.dim << " coordinates to "
              << o.out << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uniform bounds for simultaneous ruin probabilities: constants and Monte Carlo verification"};
  app.require_subcommand(1);

  CommonOptions bound_opts, verify_opts, sweep_opts, simulate_opts;
  auto* bound = app.add_subcommand("bound", "Print the bound constant and its components");
  add_common(bound, bound_opts);
  bound_opts.format = "text";
  bound->get_option("--format")->check(CLI::IsMember({"csv", "jsonl", "text"}));

  auto* verify = app.add_subcommand("verify", "Estimate the sandwich over the u-grid and report verdicts");
  add_common(verify, verify_opts);

  std::string parameter;
  std::vector<std::string> values;
  auto* sweep = app.add_subcommand("sweep", "Run a config over a list of parameter values");
  add_common(sweep, sweep_opts);
  sweep_opts.format = "csv";
  sweep->add_option("--param", parameter, "Parameter to sweep: u | T | H | rho | k")->required();
  sweep->add_option("--values", values, "Comma-separated values (may be empty)")
      ->required()
      ->delimiter(',')
      ->expected(0, CLI::detail::expected_max_vector_size);

  auto* simulate = app.add_subcommand("simulate", "Dump a simulated path ensemble to a binary file");
  add_common(simulate, simulate_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*bound) return bound_opts.format == "text" ? cmd_bound_text(bound_opts) : cmd_bound(bound_opts);
  if (*verify) return cmd_verify(verify_opts);
  if (*sweep) return cmd_sweep(sweep_opts, parameter, values);
  if (*simulate) return cmd_simulate(simulate_opts);
  return kExitUsage;
}
