#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ruinbound/ruinbound.hpp"

using namespace ruinbound;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... xs) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, xs...);
  return buf;
}

const unsigned kJobs = default_jobs();

std::string config_path(const std::string& rel) { return std::string(RUINBOUND_CONFIG_DIR) + "/" + rel; }

// terminal-in-sup inclusion and monotone refinement over every estimate produced here
struct Invariants {
  std::size_t estimates = 0;
  std::size_t paths = 0;
  std::size_t inclusion_violations = 0;
  std::size_t nonmonotone_traces = 0;

  void observe(const SupProbEstimate& e) {
    ++estimates;
    paths += e.n_paths;
    inclusion_violations += e.inclusion_violations;
    for (std::size_t i = 1; i < e.trace.size(); ++i) nonmonotone_traces += e.trace[i].second < e.trace[i - 1].second;
  }

  void observe_row(const Json& row) {
    ++estimates;
    paths += row.value("paths", std::size_t{0});
    inclusion_violations += row.value("inclusion_violations", std::size_t{0});
    inclusion_violations += row.value("direct_inclusion_violations", std::size_t{0});
    for (const char* key : {"trace", "direct_trace"}) {
      if (!row.contains(key)) continue;
      const Json& t = row[key];
      for (std::size_t i = 1; i < t.size(); ++i) nonmonotone_traces += t[i][1].get<double>() < t[i - 1][1].get<double>();
    }
  }
};

Invariants invariants;

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(RUINBOUND_CLI) + " " + args;
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[8192];
  while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::vector<Json> jsonl_rows(const std::string& text) {
  std::vector<Json> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(Json::parse(line));
  }
  return rows;
}

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Outcome sandwich_matrix() {
  const CliResult r = run_cli("verify --format jsonl --jobs " + std::to_string(kJobs) + " --config " + config_path("matrix"));
  const auto rows = jsonl_rows(r.out);
  std::size_t bad = 0, holds = 0;
  std::set<std::string> names;
  for (const Json& row : rows) {
    invariants.observe_row(row);
    names.insert(row["name"].get<std::string>());
    if (row["status"] == "holds") ++holds;
    if (row["status"] == "error" || row["K"].is_null()) {
      ++bad;
      continue;
    }
    const double lo = row["lower"].get<double>() - row["lower_error"].get<double>();
    const double hi = row["lower"].get<double>() + row["lower_error"].get<double>();
    const bool left = lo <= row["middle_ci_upper"].get<double>();
    const bool right = row["middle_ci_lower"].get<double>() <= row["K"].get<double>() * hi;
    const bool scale = row["paths"] == 200000 && row["resolution"] == 4096;
    bad += !(left && right && scale);
  }
  const bool pass = r.code == 0 && names.size() == 12 && rows.size() == 36 && bad == 0;
  return {pass, fmt("verify exit %d, %zu configs, %zu rows, %zu holds, %zu failing the two-sided check", r.code,
                    names.size(), rows.size(), holds, bad)};
}

Outcome reflection() {
  const double exact = 2.0 * normal_sf(2.0);
  const CovarianceModel unit = build_covariance(Matrix::Identity(1, 1));
  const BrownianProblem problem{unit, RuinSet::half_line(1.0), TrendFunction::zero(1), 1.0};
  const auto rows = verify_sandwich(problem, {2.0}, {8192, 200000, 2002, kJobs});
  const SandwichVerdict& v = rows.front();
  invariants.observe(v.middle);
  if (!v.middle.extrapolated) return {false, "no extrapolated estimate"};
  const Interval& x = *v.middle.extrapolated;
  const double h = x.halfwidth();
  const bool near = std::abs(x.value - exact) <= 3.0 * h;
  const bool ratio_ok = v.ratio >= 1.8 && v.ratio <= 2.2 && v.ratio < v.bound.value;
  const bool K_ok = std::abs(v.bound.value - 2.0 * std::numbers::sqrt2) <= 1e-12;
  return {near && ratio_ok && K_ok,
          fmt("extrapolated %.6f +- %.6f vs %.7f (%.2f half-widths); grid %.6f; ratio %.4f; K %.6f", x.value, h, exact,
              std::abs(x.value - exact) / h, v.middle.value, v.ratio, v.bound.value)};
}

Outcome orthant_oracle() {
  bool pass = true;
  double worst = 0.0, worst_err = 0.0;
  for (double rho : {-0.9, -0.5, 0.0, 0.5, 0.9}) {
    const auto cert = epsilon_S(make_k_of_d(2, 2, vec({1.0, 1.0})), equicorrelated_model(2, rho));
    const double exact = 0.25 + std::asin(rho) / (2.0 * std::numbers::pi);
    const double diff = std::abs(cert.epsilon.value - exact);
    pass = pass && diff <= std::max(cert.epsilon.abs_error, 1e-12) && cert.epsilon.abs_error <= 1e-4;
    worst = std::max(worst, diff);
    worst_err = std::max(worst_err, cert.epsilon.abs_error);
  }
  return {pass, fmt("5 correlations, max |error| %.2e, max reported error %.2e", worst, worst_err)};
}

Outcome penalty_closed_form() {
  struct Case {
    Vector c;
    CovarianceModel model;
    double T;
  };
  Matrix A(3, 3);
  A << 1.0, 0.0, 0.0, 0.4, 0.9, 0.0, -0.3, 0.2, 0.7;
  const std::vector<Case> cases = {
      {vec({1.0}), build_covariance(Matrix::Identity(1, 1)), 1.0},
      {vec({0.7}), covariance_from_sigma(Matrix::Constant(1, 1, 2.5)), 3.0},
      {vec({0.5, 0.25}), equicorrelated_model(2, 0.5), 1.0},
      {vec({0.3, -0.2}), equicorrelated_model(2, -0.5), 2.0},
      {vec({0.2, 0.4, 0.1}), equicorrelated_model(3, 0.3), 0.5},
      {vec({0.25, 0.5, 0.75}), build_covariance(A), 1.7},
  };
  PenaltyOptions grid;
  grid.closed_form = false;
  double worst = 0.0;
  for (const auto& k : cases) {
    const BoundConstant g = drift_penalty(k.T, TrendFunction::linear(k.c), k.model, grid);
    // exp(-T^2 c' S^{-1} c) with S = Cov Z(T) = T Sigma
    const Matrix cov_T = k.T * k.model.sigma;
    const double exact = std::exp(-k.T * k.T * k.c.dot(cov_T.llt().solve(k.c)));
    worst = std::max(worst, std::abs(g.value / exact - 1.0));
  }
  return {worst <= 1e-6, fmt("6 (c, Sigma, T) combinations, max relative error %.2e", worst)};
}

Outcome terminal_oracle() {
  RandomStream rng(5005, 0);
  bool pass = true;
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const int d = 2 + trial % 3;
    const int k = 1 + static_cast<int>(rng.uniform() * d);
    Matrix A(d, d);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) A(i, j) = (i == j ? 1.0 : 0.0) + 0.4 * rng.normal();
    }
    Vector a(d), mean(d);
    for (int i = 0; i < d; ++i) {
      a[i] = 0.3 + rng.uniform();
      mean[i] = -0.3 * rng.uniform();
    }
    const Matrix cov = A * A.transpose();
    const RuinSet s = make_k_of_d(d, k, a);
    const ProbEstimate ie = terminal_prob(s, 1.0, mean, cov);
    const ProbEstimate mc = terminal_prob_mc(s, 1.0, mean, cov, 1000000, derive_seed(55, trial), kJobs);
    const double z = std::abs(ie.value - mc.value) / (ie.abs_error + mc.abs_error);
    pass = pass && z <= 1.0;
    worst = std::max(worst, z);
  }
  const ProbEstimate prod =
      terminal_prob(make_k_of_d(2, 2, vec({1.0, 1.0})), 1.0, Vector::Zero(2), Matrix::Identity(2, 2));
  const bool prod_ok = std::abs(prod.value - 0.0251715) <= 5e-8 + prod.abs_error;
  return {pass && prod_ok, fmt("5 random configs, max |IE - MC| / combined error %.3f; product %.7f", worst, prod.value)};
}

Outcome convolution() {
  const CovarianceModel unit = build_covariance(Matrix::Identity(1, 1));
  const RuinSet half = RuinSet::half_line(1.0);
  bool pass = true;
  std::size_t rows = 0;
  double K_err = 0.0;
  const std::vector<std::vector<TrendFunction>> trend_sets = {
      {TrendFunction::zero(1), TrendFunction::zero(1)},
      {TrendFunction::linear(vec({1.0})), TrendFunction::linear(vec({0.5}))}};
  for (std::size_t t = 0; t < trend_sets.size(); ++t) {
    const ConvolutionProblem p{{unit, unit}, half, trend_sets[t], {1.0, 1.5}};
    const auto out = verify_convolution_sandwich(p, {1.0, 1.5, 2.0}, {1024, 100000, 606 + t, kJobs});
    const double product = ruin_bound_constant(1.0, half, trend_sets[t][0], unit).value *
                           ruin_bound_constant(1.5, half, trend_sets[t][1], unit).value;
    for (const auto& v : out) {
      invariants.observe(v.middle);
      pass = pass && (v.status == SandwichStatus::holds || v.status == SandwichStatus::holds_within_ci);
      K_err = std::max(K_err, std::abs(v.bound.value / product - 1.0));
      ++rows;
    }
  }
  bool exact = true;
  for (const auto& [c, rho] : std::vector<std::pair<double, double>>{{0.0, 0.0}, {0.4, 0.5}, {0.8, -0.5}}) {
    const CovarianceModel m = equicorrelated_model(2, rho);
    const RuinSet s = make_k_of_d(2, 1, vec({1.0, 1.5}));
    const TrendFunction trend = TrendFunction::linear(Vector::Constant(2, c));
    const BoundConstant one = convolution_bound_constant({1.3}, s, {trend}, {m});
    const BoundConstant ref = ruin_bound_constant(1.3, s, trend, m);
    exact = exact && one.value == ref.value && one.log_value == ref.log_value;
  }
  return {pass && exact && K_err <= 1e-12,
          fmt("n = 2: %zu rows within CI, K / product - 1 = %.1e; n = 1 identical to single-axis K: %s", rows, K_err,
              exact ? "yes" : "no")};
}

// chi-square quantile by the Wilson-Hilferty transform
double chi2_quantile(double p, double n) {
  const double z = normal_quantile(p);
  const double a = 2.0 / (9.0 * n);
  return n * std::pow(1.0 - a + z * std::sqrt(a), 3);
}

Outcome fbm_law() {
  const std::size_t n = 200000, m = 1024;
  bool pass = true;
  std::string detail;
  for (double H : {0.6, 0.75, 0.9}) {
    const FbmSource src(vec({H}), TimeGrid::uniform(1.0, m), derive_seed(707, static_cast<std::uint64_t>(H * 100)));
    std::vector<double> x(src.values_per_path());
    double ss = 0.0, sp = 0.0, sp2 = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      src.fill(p, x);
      const double half = x[m / 2], end = x[m];
      ss += end * end;
      sp += half * end;
      sp2 += half * end * half * end;
    }
    const double nn = static_cast<double>(n);
    const double var_lo = ss / chi2_quantile(0.995, nn), var_hi = ss / chi2_quantile(0.005, nn);
    const double cov = sp / nn;
    const double cov_h = kZ99 * std::sqrt((sp2 / nn - cov * cov) / nn);
    const double target = 0.5 * (std::pow(0.5, 2 * H) + 1.0 - std::pow(0.5, 2 * H));
    const bool ok = var_lo <= 1.0 && 1.0 <= var_hi && std::abs(cov - target) <= cov_h;
    pass = pass && ok;
    detail += fmt("%sH=%.2f var %.4f [%.4f, %.4f] cov %.4f+-%.4f", detail.empty() ? "" : "; ", H, ss / nn, var_lo,
                  var_hi, cov, cov_h);
  }
  return {pass, detail};
}

std::string chain_detail(const ChainReport& r) {
  return fmt("direct %.5f [%.5f, %.5f] <= time-changed %.5f [%.5f, %.5f] <= bound %.5f (C = %.4f), status %s",
             r.links[0].value, r.links[0].lower, r.links[0].upper, r.links[1].value, r.links[1].lower,
             r.links[1].upper, r.links[2].value, r.bound.value, r.status.c_str());
}

bool ordered(const ChainReport& r) {
  bool ok = true;
  for (const auto& o : r.orderings) ok = ok && o.within_ci;
  return ok && r.status != "violated";
}

Outcome fbm_chain() {
  const auto rows = fbm_chain_experiment(0.75, 1.0, 1.0, {1.0}, {4096, 200000, 808, kJobs});
  const ChainReport& r = rows.front();
  invariants.observe(r.direct);
  invariants.observe(r.time_changed);
  return {ordered(r), chain_detail(r)};
}

Outcome clock_chain() {
  const auto rows = gordon_experiment(vec({0.6, 0.9}), vec({0.5, 0.5}), 1.0, {1.0}, {4096, 200000, 909, kJobs});
  const ChainReport& r = rows.front();
  invariants.observe(r.direct);
  invariants.observe(r.time_changed);
  const double delta = r.delta_limits.at(1);
  const bool delta_ok = std::abs(delta - 1.5) <= 0.015;
  const bool K_ok = std::isfinite(r.bound.value) && r.bound.value >= 2.0;
  return {delta_ok && K_ok && ordered(r),
          fmt("delta_2 limit %.5f (target 1.5); K* %.4f; ", delta, r.bound.value) + chain_detail(r)};
}

Outcome structural() {
  std::vector<std::string> failures;

  // extra ensembles: stored paths, non-orthant family, correlated BM with drift
  {
    const CovarianceModel m = equicorrelated_model(3, -0.3);
    const PathEnsemble e = simulate_bm(m, TimeGrid::uniform(2.0, 512), 20000, 1010, kJobs);
    const RuinSet sets[] = {make_k_of_d(3, 2, vec({1.0, 0.5, 1.5})),
                            RuinSet::from_family(3, {{{0, 2}, {1.0, -0.5}}, {{1}, {2.0}}})};
    for (const RuinSet& s : sets) {
      for (double u : {0.5, 1.0, 2.0}) invariants.observe(mc_sup_prob(e, s, u, TrendFunction::linear(vec({0.2, 0.1, 0.3}))));
    }
    const TimeTransformSource clocks(equicorrelated_model(2, 0.5), TimeTransform::power(vec({0.8, 1.6})),
                                     TimeGrid::uniform(1.0, 384), 1011);
    for (const auto& est : sup_prob_scan(clocks, make_k_of_d(2, 2, vec({1.0, 1.0})), TrendFunction::zero(2),
                                         {0.5, 1.0}, 20000, kJobs)) {
      invariants.observe(est);
    }
  }
  if (invariants.inclusion_violations) failures.push_back(fmt("%zu inclusion violations", invariants.inclusion_violations));
  if (invariants.nonmonotone_traces) failures.push_back(fmt("%zu trace decreases", invariants.nonmonotone_traces));

  // K >= 2^{d/2} over every shipped config and a random family
  std::size_t bounds = 0;
  for (const char* dir : {"matrix", "examples"}) {
    for (const auto& entry : std::filesystem::directory_iterator(config_path(dir))) {
      if (entry.path().extension() != ".json") continue;
      const ExperimentConfig c = load_config(entry.path().string());
      const BoundConstant K = config_bound(c);
      ++bounds;
      if (!(K.value >= std::pow(2.0, 0.5 * c.dim))) failures.push_back("K below 2^{d/2} for " + c.name);
    }
  }
  RandomStream rng(1012, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + trial % 4;
    const int k = 1 + static_cast<int>(rng.uniform() * d);
    Vector a(d), c(d);
    for (int i = 0; i < d; ++i) {
      a[i] = 0.2 + rng.uniform();
      c[i] = rng.normal();
    }
    const BoundConstant K = ruin_bound_constant(0.5 + 2.0 * rng.uniform(), make_k_of_d(d, k, a),
                                                TrendFunction::linear(c), equicorrelated_model(d, -0.2 + 0.7 * rng.uniform()));
    ++bounds;
    if (!(K.value >= std::pow(2.0, 0.5 * d))) failures.push_back(fmt("K below 2^{d/2} in random trial %d", trial));
  }

  // scaling identity of the cone probability
  std::size_t scaling = 0;
  const std::vector<std::pair<RuinSet, CovarianceModel>> scaled = {
      {make_k_of_d(2, 1, vec({1.0, 2.0})), equicorrelated_model(2, -0.5)},
      {make_k_of_d(2, 2, vec({1.0, 1.0})), equicorrelated_model(2, 0.5)},
      {make_k_of_d(3, 2, vec({1.0, 0.5, 1.5})), equicorrelated_model(3, 0.3)}};
  for (const auto& [s, m] : scaled) {
    for (double u : {1.5, 2.0, 10.0}) {
      ++scaling;
      if (!epsilon_scaling_check(s, m, u)) failures.push_back(fmt("scaling check failed at u = %g", u));
    }
  }

  // identical seeds reproduce identical reports, through the library and the CLI
  const ExperimentConfig small = load_config(config_path("matrix/12_d3_k3_rhopos_linear.json"), {std::nullopt, 20000, std::nullopt});
  const auto a = run_experiment(small, 1);
  const auto b = run_experiment(small, kJobs + 1);
  bool same = a.size() == b.size();
  for (std::size_t i = 0; same && i < a.size(); ++i) same = without_timing(a[i]).dump() == without_timing(b[i]).dump();
  const std::string args = "verify --format jsonl --paths 20000 --config " + config_path("matrix/05_d2_k1_rhoneg_linear.json");
  const auto x = jsonl_rows(run_cli(args + " --jobs 1").out), y = jsonl_rows(run_cli(args + " --jobs 2").out);
  same = same && !x.empty() && x.size() == y.size();
  for (std::size_t i = 0; same && i < x.size(); ++i) same = without_timing(x[i]).dump() == without_timing(y[i]).dump();
  if (!same) failures.push_back("reports differ between identical runs");

  std::string detail = fmt("%zu estimates over %zu paths: %zu inclusion violations, %zu trace decreases; %zu constants; "
                           "%zu scaling checks; reports identical: %s",
                           invariants.estimates, invariants.paths, invariants.inclusion_violations,
                           invariants.nonmonotone_traces, bounds, scaling, same ? "yes" : "no");
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"sandwich verification matrix", sandwich_matrix},
      {"reflection oracle", reflection},
      {"orthant probability oracle", orthant_oracle},
      {"drift penalty closed form", penalty_closed_form},
      {"terminal probability oracle", terminal_oracle},
      {"convolution sandwich", convolution},
      {"fBm law", fbm_law},
      {"fBm comparison chain", fbm_chain},
      {"time-transform comparison chain", clock_chain},
      {"structural invariants", structural},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %2zu %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
