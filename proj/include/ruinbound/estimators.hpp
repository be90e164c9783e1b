#pragma once

// Monte Carlo first-passage estimates on discrete grids and the verdict logic
// comparing them with the terminal probability and the bound constants.
//
// Paths are streamed, never stored: each path is scanned level by level, so the
// first level at which it enters uS gives the whole refinement trace at once.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ruinbound/bounds.hpp"
#include "ruinbound/errors.hpp"
#include "ruinbound/gaussian.hpp"
#include "ruinbound/grid.hpp"
#include "ruinbound/parallel.hpp"
#include "ruinbound/processes.hpp"
#include "ruinbound/ruin_set.hpp"
#include "ruinbound/stats.hpp"
#include "ruinbound/transform.hpp"
#include "ruinbound/trend.hpp"

namespace ruinbound {

struct SupProbEstimate {
  double value = 0.0;
  double ci_halfwidth = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  std::size_t hits = 0;
  std::size_t n_paths = 0;
  std::size_t resolution = 0;
  std::vector<std::pair<std::size_t, double>> trace;  // (intervals, estimate), coarse to fine
  std::optional<Interval> extrapolated;               // sqrt(dt) extrapolation of the two finest levels
  ProbEstimate terminal;                              // fraction of paths with X(T) in uS
  std::size_t inclusion_violations = 0;               // paths with X(T) in uS but no grid hit
  bool lower_biased = true;                           // discrete sup underestimates the continuous one
};

/// Per-u counts of the first refinement level at which a path hits uS.
struct HitCounts {
  std::vector<std::size_t> first_hit;  // index = level
  std::size_t terminal_hits = 0;
  std::size_t inclusion_violations = 0;
};

namespace detail {

inline constexpr std::size_t kScanBlock = 512;

/// Grid points ordered by refinement level (stable within a level).
inline std::vector<std::size_t> level_order(const TimeGrid& grid) {
  std::vector<std::size_t> order(grid.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return grid.level(a) < grid.level(b); });
  return order;
}

inline void merge_counts(std::vector<HitCounts>& total, const std::vector<HitCounts>& part) {
  for (std::size_t s = 0; s < total.size(); ++s) {
    for (std::size_t l = 0; l < total[s].first_hit.size(); ++l) total[s].first_hit[l] += part[s].first_hit[l];
    total[s].terminal_hits += part[s].terminal_hits;
    total[s].inclusion_violations += part[s].inclusion_violations;
  }
}

inline std::vector<HitCounts> empty_counts(std::size_t us, int levels) {
  return std::vector<HitCounts>(us, HitCounts{std::vector<std::size_t>(levels + 1, 0), 0, 0});
}

inline std::vector<ScaledRuinSet> scaled_sets(const RuinSet& set, const std::vector<double>& us) {
  std::vector<ScaledRuinSet> out;
  for (double u : us) out.emplace_back(set, u);
  return out;
}

/// For sets whose thresholds are all positive, x in uS iff reach(x) > u with
/// reach(x) = max over members of min_{i in I} x_i / a_i, so one pass serves every u.
class ReachFunction {
 public:
  explicit ReachFunction(const RuinSet& set) {
    positive_ = true;
    for (const auto& m : set.family()) {
      Member r;
      r.indices = m.indices;
      for (double a : m.thresholds) {
        positive_ = positive_ && a > 0.0;
        r.inverse.push_back(1.0 / a);
      }
      members_.push_back(std::move(r));
    }
  }

  bool applicable() const noexcept { return positive_; }

  double operator()(const double* x) const noexcept {
    double best = -kInf;
    for (const auto& m : members_) {
      double low = kInf;
      for (std::size_t j = 0; j < m.indices.size(); ++j) low = std::min(low, x[m.indices[j]] * m.inverse[j]);
      best = std::max(best, low);
    }
    return best;
  }

 private:
  struct Member {
    std::vector<int> indices;
    std::vector<double> inverse;
  };
  std::vector<Member> members_;
  bool positive_ = true;
};

/// Per-level maxima of reach along one path, then first hit level for every u.
inline void scan_path_reach(const double* x, int d, const std::vector<int>& levels, const ReachFunction& reach,
                            const std::vector<double>& us, std::vector<double>& level_max,
                            std::vector<HitCounts>& counts) {
  std::fill(level_max.begin(), level_max.end(), -kInf);
  const std::size_t points = levels.size();
  for (std::size_t j = 0; j < points; ++j) {
    const double g = reach(x + j * d);
    if (g > level_max[levels[j]]) level_max[levels[j]] = g;
  }
  const double terminal = reach(x + (points - 1) * d);
  for (std::size_t l = 1; l < level_max.size(); ++l) level_max[l] = std::max(level_max[l], level_max[l - 1]);
  for (std::size_t s = 0; s < us.size(); ++s) {
    const auto it = std::upper_bound(level_max.begin(), level_max.end(), us[s]);
    const bool term = terminal > us[s];
    if (it != level_max.end()) ++counts[s].first_hit[it - level_max.begin()];
    counts[s].terminal_hits += term;
    counts[s].inclusion_violations += (term && it == level_max.end());
  }
}

inline std::vector<int> point_levels(const TimeGrid& grid) {
  std::vector<int> levels(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) levels[j] = grid.level(j);
  return levels;
}

/// Scans one drifted path stored as (point, coordinate).
inline void scan_path(const double* x, int d, const TimeGrid& grid, const std::vector<std::size_t>& order,
                      const std::vector<ScaledRuinSet>& sets, std::vector<HitCounts>& counts) {
  const std::size_t last = grid.size() - 1;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    const bool terminal = sets[s].contains(x + last * d);
    int hit = -1;
    for (std::size_t j : order) {
      if (sets[s].contains(x + j * d)) {
        hit = grid.level(j);
        break;
      }
    }
    if (hit >= 0) ++counts[s].first_hit[hit];
    counts[s].terminal_hits += terminal;
    counts[s].inclusion_violations += (terminal && hit < 0);
  }
}

}  // namespace detail

/// Turns per-level counts into an estimate with trace, CI and extrapolation.
inline SupProbEstimate summarize_hits(const HitCounts& counts, std::size_t n_paths, const TimeGrid& grid) {
  SupProbEstimate e;
  e.n_paths = n_paths;
  e.resolution = grid.intervals();
  const int L = static_cast<int>(counts.first_hit.size()) - 1;
  std::size_t cumulative = 0, previous = 0;
  for (int l = 0; l <= L; ++l) {
    previous = cumulative;
    cumulative += counts.first_hit[l];
    e.trace.emplace_back(grid.resolution_at(std::min(l, grid.max_level())),
                         static_cast<double>(cumulative) / static_cast<double>(n_paths));
  }
  e.hits = cumulative;
  const Interval ci = proportion_interval(cumulative, n_paths);
  e.value = ci.value;
  e.ci_lower = ci.lower;
  e.ci_upper = ci.upper;
  e.ci_halfwidth = ci.halfwidth();
  if (L >= 1) e.extrapolated = extrapolated_interval(previous, cumulative, n_paths);
  const Interval term = proportion_interval(counts.terminal_hits, n_paths);
  e.terminal = {term.value, term.halfwidth(), ProbMethod::monte_carlo};
  e.inclusion_violations = counts.inclusion_violations;
  return e;
}

/// Streams n_paths paths of `source`, subtracts the trend and estimates
/// P(exists t_j: X(t_j) in uS) for every u.
inline std::vector<SupProbEstimate> sup_prob_scan(const PathSource& source, const RuinSet& set,
                                                  const TrendFunction& trend, const std::vector<double>& us,
                                                  std::size_t n_paths, unsigned jobs = 1) {
  const int d = source.dim();
  if (set.dim() != d || trend.dim() != d) throw DimensionMismatch("sup_prob_scan: dimension mismatch");
  if (n_paths < 1) throw InvalidArgument("sup_prob_scan: n_paths must be positive");
  const TimeGrid& grid = source.grid();
  const auto order = detail::level_order(grid);
  const auto drift = trend.sample(grid);
  const auto sets = detail::scaled_sets(set, us);
  const detail::ReachFunction reach(set);
  const auto levels = detail::point_levels(grid);
  const std::size_t blocks = (n_paths + detail::kScanBlock - 1) / detail::kScanBlock;
  std::vector<std::vector<HitCounts>> partial(blocks);
  parallel_blocks(n_paths, detail::kScanBlock, jobs, [&](std::size_t b, std::size_t begin, std::size_t end) {
    auto counts = detail::empty_counts(us.size(), grid.max_level());
    std::vector<double> x(source.values_per_path());
    std::vector<double> level_max(grid.max_level() + 1);
    for (std::size_t p = begin; p < end; ++p) {
      source.fill(p, x);
      for (std::size_t v = 0; v < x.size(); ++v) x[v] -= drift[v];
      if (reach.applicable()) {
        detail::scan_path_reach(x.data(), d, levels, reach, us, level_max, counts);
      } else {
        detail::scan_path(x.data(), d, grid, order, sets, counts);
      }
    }
    partial[b] = std::move(counts);
  });
  auto total = detail::empty_counts(us.size(), grid.max_level());
  for (const auto& part : partial) detail::merge_counts(total, part);
  std::vector<SupProbEstimate> out;
  for (const auto& c : total) out.push_back(summarize_hits(c, n_paths, grid));
  return out;
}

/// Estimate from a stored ensemble of undrifted paths.
inline SupProbEstimate mc_sup_prob(const PathEnsemble& ensemble, const RuinSet& set, double u,
                                   const TrendFunction& trend) {
  if (ensemble.grids.size() != 1) throw InvalidArgument("mc_sup_prob: expected a single-axis ensemble");
  if (set.dim() != ensemble.dim || trend.dim() != ensemble.dim) throw DimensionMismatch("mc_sup_prob: dimension mismatch");
  const TimeGrid& grid = ensemble.grids.front();
  const auto order = detail::level_order(grid);
  const auto drift = trend.sample(grid);
  const auto sets = detail::scaled_sets(set, {u});
  auto counts = detail::empty_counts(1, grid.max_level());
  std::vector<double> x(ensemble.values_per_path());
  for (std::size_t p = 0; p < ensemble.n_paths; ++p) {
    const auto path = ensemble.path(p);
    for (std::size_t v = 0; v < x.size(); ++v) x[v] = path[v] - drift[v];
    detail::scan_path(x.data(), ensemble.dim, grid, order, sets, counts);
  }
  return summarize_hits(counts.front(), ensemble.n_paths, grid);
}

namespace detail {

/// Level of a product-grid point: the finest level among its axis coordinates.
inline int product_level(const std::vector<TimeGrid>& grids, const std::vector<std::size_t>& idx) {
  int l = 0;
  for (std::size_t k = 0; k < grids.size(); ++k) l = std::max(l, grids[k].level(idx[k]));
  return l;
}

inline int common_levels(const std::vector<TimeGrid>& grids) {
  int L = 0;
  for (const auto& g : grids) L = std::max(L, g.max_level());
  return L;
}

}  // namespace detail

/// Estimate over a stored convolution field (trends already subtracted), by brute force
/// over the product grid.
inline SupProbEstimate mc_sup_prob_convolution(const PathEnsemble& field, const RuinSet& set, double u) {
  if (set.dim() != field.dim) throw DimensionMismatch("mc_sup_prob_convolution: dimension mismatch");
  const auto& grids = field.grids;
  const int L = detail::common_levels(grids);
  const ScaledRuinSet scaled(set, u);
  const std::size_t points = field.points();
  std::vector<int> level(points);
  std::vector<std::size_t> idx(grids.size());
  for (std::size_t flat = 0; flat < points; ++flat) {
    std::size_t rem = flat;
    for (std::size_t k = grids.size(); k-- > 0;) {
      idx[k] = rem % grids[k].size();
      rem /= grids[k].size();
    }
    level[flat] = detail::product_level(grids, idx);
  }
  auto counts = detail::empty_counts(1, L);
  for (std::size_t p = 0; p < field.n_paths; ++p) {
    const double* x = field.path(p).data();
    int hit = -1;
    for (std::size_t flat = 0; flat < points; ++flat) {
      if ((hit < 0 || level[flat] < hit) && scaled.contains(x + flat * field.dim)) hit = level[flat];
    }
    const bool terminal = scaled.contains(x + (points - 1) * field.dim);
    if (hit >= 0) ++counts[0].first_hit[hit];
    counts[0].terminal_hits += terminal;
    counts[0].inclusion_violations += (terminal && hit < 0);
  }
  const auto& finest = *std::max_element(grids.begin(), grids.end(), [](const TimeGrid& a, const TimeGrid& b) {
    return a.max_level() < b.max_level();
  });
  return summarize_hits(counts.front(), field.n_paths, finest);
}

inline constexpr std::size_t kMaxProductPoints = std::size_t{1} << 22;

/// Streams convolution fields sum_k X_k(t_k), X_k = source_k - trend_k. In one dimension
/// the supremum over the product grid is the sum of per-axis maxima, taken per level;
/// otherwise every product point is visited.
inline std::vector<SupProbEstimate> convolution_sup_scan(const std::vector<const PathSource*>& axes,
                                                         const std::vector<TrendFunction>& trends,
                                                         const RuinSet& set, const std::vector<double>& us,
                                                         std::size_t n_paths, unsigned jobs = 1) {
  const std::size_t n = axes.size();
  if (n < 1 || trends.size() != n) throw InvalidArgument("convolution_sup_scan: need one trend per axis");
  const int d = set.dim();
  std::vector<TimeGrid> grids;
  for (std::size_t k = 0; k < n; ++k) {
    if (axes[k]->dim() != d || trends[k].dim() != d) throw DimensionMismatch("convolution_sup_scan: dimension mismatch");
    grids.push_back(axes[k]->grid());
  }
  const int L = detail::common_levels(grids);
  std::size_t product = 1;
  for (const auto& g : grids) product *= g.size();
  const bool additive = d == 1;
  if (!additive && product > kMaxProductPoints) {
    throw BudgetExceeded("convolution_sup_scan: product grid has " + std::to_string(product) + " points, limit " +
                         std::to_string(kMaxProductPoints));
  }
  std::vector<std::vector<double>> drift;
  for (std::size_t k = 0; k < n; ++k) drift.push_back(trends[k].sample(grids[k]));
  const auto sets = detail::scaled_sets(set, us);
  std::vector<double> level_threshold;
  if (additive) {
    for (double u : us) {
      double a = kInf;
      for (const auto& m : set.family()) a = std::min(a, m.thresholds.front());
      level_threshold.push_back(u * a);
    }
  }
  std::vector<int> product_level;
  if (!additive) {
    product_level.resize(product);
    std::vector<std::size_t> idx(n);
    for (std::size_t flat = 0; flat < product; ++flat) {
      std::size_t rem = flat;
      for (std::size_t k = n; k-- > 0;) {
        idx[k] = rem % grids[k].size();
        rem /= grids[k].size();
      }
      product_level[flat] = detail::product_level(grids, idx);
    }
  }
  const std::size_t blocks = (n_paths + detail::kScanBlock - 1) / detail::kScanBlock;
  std::vector<std::vector<HitCounts>> partial(blocks);
  parallel_blocks(n_paths, detail::kScanBlock, jobs, [&](std::size_t b, std::size_t begin, std::size_t end) {
    auto counts = detail::empty_counts(us.size(), L);
    std::vector<std::vector<double>> x(n);
    std::vector<std::vector<double>> level_max(n, std::vector<double>(L + 1));
    std::vector<double> field, point(d);
    std::vector<std::size_t> idx(n);
    for (std::size_t p = begin; p < end; ++p) {
      for (std::size_t k = 0; k < n; ++k) {
        x[k].resize(axes[k]->values_per_path());
        axes[k]->fill(p, x[k]);
        for (std::size_t v = 0; v < x[k].size(); ++v) x[k][v] -= drift[k][v];
      }
      if (additive) {
        double terminal = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          auto& mx = level_max[k];
          std::fill(mx.begin(), mx.end(), -kInf);
          for (std::size_t j = 0; j < grids[k].size(); ++j) {
            const int l = grids[k].level(j);
            mx[l] = std::max(mx[l], x[k][j]);
          }
          for (int l = 1; l <= L; ++l) mx[l] = std::max(mx[l], mx[l - 1]);
          terminal += x[k].back();
        }
        for (std::size_t s = 0; s < us.size(); ++s) {
          int hit = -1;
          for (int l = 0; l <= L && hit < 0; ++l) {
            double sum = 0.0;
            for (std::size_t k = 0; k < n; ++k) sum += level_max[k][l];
            if (sum > level_threshold[s]) hit = l;
          }
          const bool term = terminal > level_threshold[s];
          if (hit >= 0) ++counts[s].first_hit[hit];
          counts[s].terminal_hits += term;
          counts[s].inclusion_violations += (term && hit < 0);
        }
      } else {
        field.resize(product * d);
        for (std::size_t flat = 0; flat < product; ++flat) {
          std::size_t rem = flat;
          for (std::size_t k = n; k-- > 0;) {
            idx[k] = rem % grids[k].size();
            rem /= grids[k].size();
          }
          for (int i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += x[k][idx[k] * d + i];
            field[flat * d + i] = s;
          }
        }
        for (std::size_t s = 0; s < us.size(); ++s) {
          int hit = -1;
          for (std::size_t flat = 0; flat < product; ++flat) {
            if ((hit < 0 || product_level[flat] < hit) && sets[s].contains(field.data() + flat * d)) {
              hit = product_level[flat];
            }
          }
          const bool term = sets[s].contains(field.data() + (product - 1) * d);
          if (hit >= 0) ++counts[s].first_hit[hit];
          counts[s].terminal_hits += term;
          counts[s].inclusion_violations += (term && hit < 0);
        }
      }
    }
    partial[b] = std::move(counts);
  });
  auto total = detail::empty_counts(us.size(), L);
  for (const auto& part : partial) detail::merge_counts(total, part);
  const auto& finest = *std::max_element(grids.begin(), grids.end(), [](const TimeGrid& a, const TimeGrid& b) {
    return a.max_level() < b.max_level();
  });
  std::vector<SupProbEstimate> out;
  for (const auto& c : total) out.push_back(summarize_hits(c, n_paths, finest));
  return out;
}

/// Restricts a trace to the requested resolutions, which must be nested sub-grids of
/// the simulated grid.
inline std::vector<std::pair<std::size_t, double>> select_trace(const SupProbEstimate& e,
                                                                const std::vector<std::size_t>& resolutions) {
  std::vector<std::pair<std::size_t, double>> out;
  for (std::size_t m : resolutions) {
    const auto it = std::find_if(e.trace.begin(), e.trace.end(), [&](const auto& p) { return p.first == m; });
    if (it == e.trace.end()) {
      throw InvalidArgument("resolution " + std::to_string(m) + " is not a nested sub-grid of " +
                            std::to_string(e.resolution));
    }
    out.push_back(*it);
  }
  return out;
}

/// Finest grid that carries every requested resolution as a level.
inline std::size_t nested_resolution(std::vector<std::size_t> resolutions) {
  if (resolutions.empty()) throw InvalidArgument("no resolutions given");
  std::sort(resolutions.begin(), resolutions.end());
  const std::size_t finest = resolutions.back();
  for (std::size_t m : resolutions) {
    if (m == 0 || finest % m != 0 || !std::has_single_bit(finest / m)) {
      throw InvalidArgument("resolutions must be nested by factors of two");
    }
  }
  return finest;
}

// ---------------------------------------------------------------------------
// Verdicts

enum class SandwichStatus { holds, holds_within_ci, violated, vacuous };

inline std::string_view to_string(SandwichStatus s) {
  switch (s) {
    case SandwichStatus::holds: return "holds";
    case SandwichStatus::holds_within_ci: return "holds-within-ci";
    case SandwichStatus::violated: return "violated";
    case SandwichStatus::vacuous: return "vacuous";
  }
  return "unknown";
}

struct SandwichVerdict {
  double u = 0.0;
  ProbEstimate lower;
  SupProbEstimate middle;
  BoundConstant bound;
  double upper = 0.0;
  double upper_ci_lower = 0.0;
  double upper_ci_upper = 0.0;
  SandwichStatus status = SandwichStatus::holds;
  double ratio = 0.0;         // middle / lower
  double margin_lower = 0.0;  // middle - lower
  double margin_upper = 0.0;  // upper - middle
};

/// Violated only when the intervals are disjoint in the violating direction.
inline SandwichVerdict judge_sandwich(double u, const ProbEstimate& lower, const SupProbEstimate& middle,
                                      const BoundConstant& bound) {
  SandwichVerdict v;
  v.u = u;
  v.lower = lower;
  v.middle = middle;
  v.bound = bound;
  v.upper = bound.vacuous ? kInf : bound.value * lower.value;
  v.upper_ci_lower = bound.vacuous ? kInf : bound.value * lower.lower();
  v.upper_ci_upper = bound.vacuous ? kInf : bound.value * lower.upper();
  v.ratio = lower.value > 0.0 ? middle.value / lower.value : kInf;
  v.margin_lower = middle.value - lower.value;
  v.margin_upper = v.upper - middle.value;
  const bool low_point = lower.value <= middle.value;
  const bool high_point = middle.value <= v.upper;
  const bool low_ci = lower.lower() <= middle.ci_upper;
  const bool high_ci = middle.ci_lower <= v.upper_ci_upper;
  if (!low_ci) {
    v.status = SandwichStatus::violated;
  } else if (bound.vacuous) {
    v.status = SandwichStatus::vacuous;
  } else if (!high_ci) {
    v.status = SandwichStatus::violated;
  } else {
    v.status = (low_point && high_point) ? SandwichStatus::holds : SandwichStatus::holds_within_ci;
  }
  return v;
}

struct SimulationSettings {
  std::size_t resolution = 4096;
  std::size_t n_paths = 200000;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
};

struct BrownianProblem {
  CovarianceModel model;
  RuinSet set;
  TrendFunction trend;
  double horizon = 1.0;
};

/// Sandwich for X(t) = Z(t) - c(t): terminal probability, grid supremum, K times terminal.
inline std::vector<SandwichVerdict> verify_sandwich(const BrownianProblem& problem, const std::vector<double>& us,
                                                    const SimulationSettings& settings,
                                                    const PenaltyOptions& options = {}) {
  const double T = problem.horizon;
  const BoundConstant K = ruin_bound_constant(T, problem.set, problem.trend, problem.model, options);
  const BrownianSource source(problem.model, TimeGrid::uniform(T, settings.resolution), settings.seed);
  const auto middle = sup_prob_scan(source, problem.set, problem.trend, us, settings.n_paths, settings.jobs);
  const Vector mean = -problem.trend(T);
  const Matrix cov = T * problem.model.sigma;
  std::vector<SandwichVerdict> out;
  for (std::size_t s = 0; s < us.size(); ++s) {
    const ProbEstimate lower =
        terminal_prob_auto(problem.set, us[s], mean, cov, derive_seed(settings.seed, 0x7E57 + s), 1000000, settings.jobs);
    out.push_back(judge_sandwich(us[s], lower, middle[s], K));
  }
  return out;
}

struct ConvolutionProblem {
  std::vector<CovarianceModel> models;
  RuinSet set;
  std::vector<TrendFunction> trends;
  std::vector<double> horizons;
};

/// Sandwich for the field sum_k (Z_k(t_k) - c_k(t_k)) over prod_k [0, T_k].
inline std::vector<SandwichVerdict> verify_convolution_sandwich(const ConvolutionProblem& problem,
                                                                const std::vector<double>& us,
                                                                const SimulationSettings& settings,
                                                                const PenaltyOptions& options = {}) {
  const std::size_t n = problem.horizons.size();
  if (problem.models.size() != n || problem.trends.size() != n) {
    throw InvalidArgument("verify_convolution_sandwich: need one model and trend per axis");
  }
  const BoundConstant K = convolution_bound_constant(problem.horizons, problem.set, problem.trends, problem.models, options);
  std::vector<std::unique_ptr<BrownianSource>> sources;
  std::vector<const PathSource*> axes;
  const int d = problem.set.dim();
  Vector mean = Vector::Zero(d);
  Matrix cov = Matrix::Zero(d, d);
  for (std::size_t k = 0; k < n; ++k) {
    sources.push_back(std::make_unique<BrownianSource>(
        problem.models[k], TimeGrid::uniform(problem.horizons[k], settings.resolution), axis_seed(settings.seed, k)));
    axes.push_back(sources.back().get());
    mean -= problem.trends[k](problem.horizons[k]);
    cov += problem.horizons[k] * problem.models[k].sigma;
  }
  const auto middle = convolution_sup_scan(axes, problem.trends, problem.set, us, settings.n_paths, settings.jobs);
  std::vector<SandwichVerdict> out;
  for (std::size_t s = 0; s < us.size(); ++s) {
    const ProbEstimate lower =
        terminal_prob_auto(problem.set, us[s], mean, cov, derive_seed(settings.seed, 0x7E57 + s), 1000000, settings.jobs);
    out.push_back(judge_sandwich(us[s], lower, middle[s], K));
  }
  return out;
}

struct ClockProblem {
  CovarianceModel model;
  RuinSet set;
  TrendFunction trend;
  TimeTransform clocks;
  double horizon = 1.0;
};

/// Sandwich for X(t) = Z(f(t)) - c(t) with the time-transform constant.
inline std::vector<SandwichVerdict> verify_clock_sandwich(const ClockProblem& problem, const std::vector<double>& us,
                                                          const SimulationSettings& settings,
                                                          const PenaltyOptions& options = {}) {
  const double T = problem.horizon;
  const BoundConstant K = clock_bound_constant(T, problem.set, problem.trend, problem.clocks, problem.model, options);
  const TimeTransformSource source(problem.model, problem.clocks, TimeGrid::uniform(T, settings.resolution), settings.seed);
  const auto middle = sup_prob_scan(source, problem.set, problem.trend, us, settings.n_paths, settings.jobs);
  const int d = problem.model.dim();
  Vector clock_end(d);
  for (int i = 0; i < d; ++i) clock_end[i] = problem.clocks(i, T);
  const Matrix cov = delta_covariance(problem.model.sigma, clock_end);
  const Vector mean = -problem.trend(T);
  std::vector<SandwichVerdict> out;
  for (std::size_t s = 0; s < us.size(); ++s) {
    const ProbEstimate lower =
        terminal_prob_auto(problem.set, us[s], mean, cov, derive_seed(settings.seed, 0x7E57 + s), 1000000, settings.jobs);
    out.push_back(judge_sandwich(us[s], lower, middle[s], K));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Comparison chains: fBm ruin <= time-changed BM ruin <= C * terminal probability

struct ChainLink {
  std::string label;
  double value = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct OrderingCheck {
  std::string smaller;
  std::string larger;
  bool pointwise = true;
  bool within_ci = true;
};

struct ChainReport {
  std::string kind;
  double u = 0.0;
  std::vector<ChainLink> links;
  std::vector<OrderingCheck> orderings;
  SupProbEstimate direct;
  SupProbEstimate time_changed;
  ProbEstimate anchor;
  BoundConstant bound;
  std::string status;
  bool outside_hypotheses = false;
  std::vector<double> delta_limits;
  std::vector<double> delta_expected;
  bool delta_ok = true;
  std::vector<std::string> notes;
};

namespace detail {

inline ChainLink link_from(std::string label, const SupProbEstimate& e) {
  return {std::move(label), e.value, e.ci_lower, e.ci_upper};
}

inline OrderingCheck compare(const ChainLink& a, const ChainLink& b) {
  return {a.label, b.label, a.value <= b.value, a.lower <= b.upper};
}

inline void finish_chain(ChainReport& r) {
  const ChainLink bound_link{"bound", r.bound.vacuous ? kInf : r.bound.value * r.anchor.value,
                             r.bound.vacuous ? kInf : r.bound.value * r.anchor.lower(),
                             r.bound.vacuous ? kInf : r.bound.value * r.anchor.upper()};
  r.links = {link_from("direct", r.direct), link_from("time_changed", r.time_changed), bound_link};
  r.orderings = {compare(r.links[0], r.links[1]), compare(r.links[1], r.links[2])};
  bool pointwise = true, within = true;
  for (const auto& o : r.orderings) {
    pointwise = pointwise && o.pointwise;
    within = within && o.within_ci;
  }
  if (!within || !r.delta_ok) {
    r.status = "violated";
  } else if (r.direct.hits == 0 && r.time_changed.hits == 0) {
    r.status = "vacuous-at-resolution";
  } else if (r.bound.vacuous) {
    r.status = "vacuous";
  } else {
    r.status = pointwise ? "holds" : "holds-within-ci";
  }
  if (r.outside_hypotheses) r.notes.push_back("outside comparison hypotheses: Hurst index <= 1/2");
}

}  // namespace detail

/// One-dimensional fBm: P(exists t: B_H(t) - ct > u) <= P(exists t: W(t^{2H}) - ct > u)
/// <= C P(W(1) - c T^{1-H} > u / T^H) with C from the rescaled drift c T^{1-H} t^{1/(2H)} on [0, 1].
inline std::vector<ChainReport> fbm_chain_experiment(double hurst, double c, double T, const std::vector<double>& us,
                                                     const SimulationSettings& settings,
                                                     const PenaltyOptions& options = {}) {
  if (!(hurst > 0.0 && hurst <= 1.0)) throw InvalidArgument("fbm_chain_experiment: Hurst index must lie in (0, 1]");
  const TimeGrid grid = TimeGrid::uniform(T, settings.resolution);
  const RuinSet set = RuinSet::half_line(1.0);
  const TrendFunction trend = TrendFunction::linear(Vector::Constant(1, c));
  const CovarianceModel unit = build_covariance(Matrix::Identity(1, 1));
  const FbmSource direct(Vector::Constant(1, hurst), grid, derive_seed(settings.seed, 1));
  const TimeTransformSource changed(unit, TimeTransform::power(Vector::Constant(1, 2.0 * hurst)), grid,
                                    derive_seed(settings.seed, 2));
  const auto direct_est = sup_prob_scan(direct, set, trend, us, settings.n_paths, settings.jobs);
  const auto changed_est = sup_prob_scan(changed, set, trend, us, settings.n_paths, settings.jobs);
  const TrendFunction rescaled = TrendFunction::power(Vector::Constant(1, c * std::pow(T, 1.0 - hurst)),
                                                      Vector::Constant(1, 1.0 / (2.0 * hurst)));
  const BoundConstant K = ruin_bound_constant(1.0, set, rescaled, unit, options);
  std::vector<ChainReport> out;
  for (std::size_t s = 0; s < us.size(); ++s) {
    ChainReport r;
    r.kind = "fbm";
    r.u = us[s];
    r.direct = direct_est[s];
    r.time_changed = changed_est[s];
    r.anchor = {normal_sf((us[s] + c * T) / std::pow(T, hurst)), 4e-16, ProbMethod::analytic};
    r.bound = K;
    r.outside_hypotheses = hurst <= 0.5;
    detail::finish_chain(r);
    out.push_back(std::move(r));
  }
  return out;
}

/// Convolution of n independent fBms on prod [0, T_i]; the bound uses the product
/// constant on axes [0, T_i^{2H_i}] with drifts c_i t^{1/(2H_i)}.
inline std::vector<ChainReport> fbm_convolution_experiment(const std::vector<double>& hurst, const std::vector<double>& c,
                                                           const std::vector<double>& T, const std::vector<double>& us,
                                                           const SimulationSettings& settings,
                                                           const PenaltyOptions& options = {}) {
  const std::size_t n = hurst.size();
  if (n < 1 || c.size() != n || T.size() != n) throw InvalidArgument("fbm_convolution_experiment: length mismatch");
  if (n == 1) return fbm_chain_experiment(hurst[0], c[0], T[0], us, settings, options);
  const RuinSet set = RuinSet::half_line(1.0);
  const CovarianceModel unit = build_covariance(Matrix::Identity(1, 1));
  std::vector<std::unique_ptr<PathSource>> owned;
  std::vector<const PathSource*> direct_axes, changed_axes;
  std::vector<TrendFunction> trends, rescaled;
  std::vector<double> clock_horizons;
  std::vector<CovarianceModel> models(n, unit);
  double drift_end = 0.0, variance_end = 0.0;
  bool outside = false;
  for (std::size_t k = 0; k < n; ++k) {
    const TimeGrid grid = TimeGrid::uniform(T[k], settings.resolution);
    owned.push_back(std::make_unique<FbmSource>(Vector::Constant(1, hurst[k]), grid, derive_seed(settings.seed, 10 + k)));
    direct_axes.push_back(owned.back().get());
    owned.push_back(std::make_unique<TimeTransformSource>(
        unit, TimeTransform::power(Vector::Constant(1, 2.0 * hurst[k])), grid, derive_seed(settings.seed, 20 + k)));
    changed_axes.push_back(owned.back().get());
    trends.push_back(TrendFunction::linear(Vector::Constant(1, c[k])));
    rescaled.push_back(TrendFunction::power(Vector::Constant(1, c[k]), Vector::Constant(1, 1.0 / (2.0 * hurst[k]))));
    clock_horizons.push_back(std::pow(T[k], 2.0 * hurst[k]));
    drift_end += c[k] * T[k];
    variance_end += std::pow(T[k], 2.0 * hurst[k]);
    outside = outside || hurst[k] <= 0.5;
  }
  const auto direct_est = convolution_sup_scan(direct_axes, trends, set, us, settings.n_paths, settings.jobs);
  const auto changed_est = convolution_sup_scan(changed_axes, trends, set, us, settings.n_paths, settings.jobs);
  const BoundConstant K = convolution_bound_constant(clock_horizons, set, rescaled, models, options);
  std::vector<ChainReport> out;
  for (std::size_t s = 0; s < us.size(); ++s) {
    ChainReport r;
    r.kind = "fbm-convolution";
    r.u = us[s];
    r.direct = direct_est[s];
    r.time_changed = changed_est[s];
    r.anchor = {normal_sf((us[s] + drift_end) / std::sqrt(variance_end)), 4e-16, ProbMethod::analytic};
    r.bound = K;
    r.outside_hypotheses = outside;
    detail::finish_chain(r);
    out.push_back(std::move(r));
  }
  return out;
}

/// All coordinates of d independent fBms ruined at a common time, against the
/// time-changed BM majorant and the time-transform constant with f_i(t) = t^{2H_i}.
inline std::vector<ChainReport> gordon_experiment(const Vector& hurst, const Vector& c, double T,
                                                  const std::vector<double>& us, const SimulationSettings& settings,
                                                  const PenaltyOptions& options = {}) {
  const int d = static_cast<int>(hurst.size());
  if (d < 1 || c.size() != d) throw InvalidArgument("gordon_experiment: length mismatch");
  const TimeGrid grid = TimeGrid::uniform(T, settings.resolution);
  const RuinSet set = RuinSet::k_of_d(d, Vector::Ones(d));
  const TrendFunction trend = TrendFunction::linear(c);
  const CovarianceModel unit = build_covariance(Matrix::Identity(d, d));
  const TimeTransform clocks = TimeTransform::power(2.0 * hurst);
  const FbmSource direct(hurst, grid, derive_seed(settings.seed, 1));
  const TimeTransformSource changed(unit, clocks, grid, derive_seed(settings.seed, 2));
  const auto direct_est = sup_prob_scan(direct, set, trend, us, settings.n_paths, settings.jobs);
  const auto changed_est = sup_prob_scan(changed, set, trend, us, settings.n_paths, settings.jobs);
  const BoundConstant K = clock_bound_constant(T, set, trend, clocks, unit, options);
  const Vector limits = clocks.delta_limit(TimeGrid::uniform(T, options.grid_points));
  std::vector<double> expected;
  bool delta_ok = true;
  for (int i = 0; i < d; ++i) {
    expected.push_back(hurst[i] / hurst[0] * std::pow(T, 2.0 * hurst[i] - 2.0 * hurst[0]));
    delta_ok = delta_ok && std::abs(limits[i] - expected.back()) <= 0.01 * expected.back();
  }
  Matrix cov = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i) cov(i, i) = std::pow(T, 2.0 * hurst[i]);
  std::vector<ChainReport> out;
  for (std::size_t s = 0; s < us.size(); ++s) {
    ChainReport r;
    r.kind = "gordon";
    r.u = us[s];
    r.direct = direct_est[s];
    r.time_changed = changed_est[s];
    r.anchor = terminal_prob(set, us[s], -c * T, cov);
    r.bound = K;
    r.delta_limits.assign(limits.begin(), limits.end());
    r.delta_expected = expected;
    r.delta_ok = delta_ok;
    r.outside_hypotheses = (hurst.array() <= 0.5).any();
    detail::finish_chain(r);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ruinbound
