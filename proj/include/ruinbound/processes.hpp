#pragma once

// Exact-law simulation of the Gaussian processes on discrete time grids.
//
// A PathSource writes one path at a time into a caller buffer laid out as
// (grid point, coordinate) row-major. Path p always draws from the Philox
// stream (seed, p), so any subset of paths can be regenerated independently.

#include <algorithm>
#include <bit>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "ruinbound/errors.hpp"
#include "ruinbound/gaussian.hpp"
#include "ruinbound/grid.hpp"
#include "ruinbound/parallel.hpp"
#include "ruinbound/rng.hpp"
#include "ruinbound/transform.hpp"
#include "ruinbound/trend.hpp"

namespace ruinbound {

enum class ProcessTag : std::uint32_t { bm = 0, fbm = 1, time_transformed = 2, convolution = 3 };

inline std::string_view to_string(ProcessTag tag) {
  switch (tag) {
    case ProcessTag::bm: return "bm";
    case ProcessTag::fbm: return "fbm";
    case ProcessTag::time_transformed: return "time_transformed";
    case ProcessTag::convolution: return "convolution";
  }
  return "unknown";
}

class PathSource {
 public:
  virtual ~PathSource() = default;

  const TimeGrid& grid() const noexcept { return grid_; }
  int dim() const noexcept { return dim_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t values_per_path() const noexcept { return grid_.size() * static_cast<std::size_t>(dim_); }

  virtual ProcessTag tag() const noexcept = 0;
  virtual std::vector<double> parameters() const { return {}; }

  /// Writes path number `path` into out (values_per_path() doubles). Thread-safe.
  virtual void fill(std::uint64_t path, std::span<double> out) const = 0;

 protected:
  PathSource(TimeGrid grid, int dim, std::uint64_t seed) : grid_(std::move(grid)), dim_(dim), seed_(seed) {}

  TimeGrid grid_;
  int dim_;
  std::uint64_t seed_;
};

/// Z = A B with exact Gaussian transitions. Base-grid nodes are drawn as
/// independent increments, finer levels by Brownian-bridge midpoints, level by
/// level. A path on a coarser uniform grid with the same base is therefore a
/// prefix of the same random stream and agrees exactly at the shared nodes.
class BrownianSource final : public PathSource {
 public:
  BrownianSource(CovarianceModel model, TimeGrid grid, std::uint64_t seed)
      : PathSource(std::move(grid), model.dim(), seed), model_(std::move(model)) {
    const std::size_t m = grid_.intervals();
    const int L = grid_.max_level();
    const std::size_t stride = std::size_t{1} << L;
    nodes_.reserve(m);
    for (std::size_t j = stride; j <= m; j += stride) {
      nodes_.push_back({j, j - stride, j, 1.0, 0.0, std::sqrt(grid_[j] - grid_[j - stride])});
    }
    for (int l = 1; l <= L; ++l) {
      const std::size_t half = std::size_t{1} << (L - l);
      for (std::size_t j = half; j < m; j += 2 * half) {
        const double tl = grid_[j - half], tm = grid_[j], tr = grid_[j + half];
        const double span = tr - tl;
        nodes_.push_back({j, j - half, j + half, (tr - tm) / span, (tm - tl) / span,
                          std::sqrt((tm - tl) * (tr - tm) / span)});
      }
    }
  }

  ProcessTag tag() const noexcept override { return ProcessTag::bm; }
  const CovarianceModel& model() const noexcept { return model_; }

  void fill(std::uint64_t path, std::span<double> out) const override {
    const int d = dim_;
    thread_local std::vector<double> xi;
    xi.resize(nodes_.size() * static_cast<std::size_t>(d));
    RandomStream rng(seed_, path);
    rng.fill_normal(xi.data(), xi.size());
    std::fill_n(out.begin(), d, 0.0);
    const double* L = model_.chol.data();  // column-major
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
      const Node& node = nodes_[n];
      const double* z = xi.data() + n * d;
      double* dst = out.data() + node.index * d;
      const double* left = out.data() + node.left * d;
      const double* right = out.data() + node.right * d;
      for (int i = 0; i < d; ++i) {
        double noise = 0.0;
        for (int k = 0; k <= i; ++k) noise += L[k * d + i] * z[k];
        dst[i] = node.w_left * left[i] + node.w_right * right[i] + node.sd * noise;
      }
    }
  }

 private:
  struct Node {
    std::size_t index, left, right;
    double w_left, w_right, sd;
  };
  CovarianceModel model_;
  std::vector<Node> nodes_;
};

enum class FbmMethod { automatic, circulant, cholesky };

/// Independent fractional Brownian motions (one Hurst index per coordinate) on a
/// uniform grid: circulant embedding of fractional Gaussian noise (Wood & Chan),
/// falling back to a Cholesky factor of the noise covariance.
class FbmSource final : public PathSource {
 public:
  static constexpr std::size_t kMaxCholeskySize = 4096;

  FbmSource(Vector hurst, TimeGrid grid, std::uint64_t seed, FbmMethod method = FbmMethod::automatic)
      : PathSource(std::move(grid), static_cast<int>(hurst.size()), seed), hurst_(std::move(hurst)) {
    if (hurst_.size() < 1) throw InvalidArgument("FbmSource: need at least one Hurst index");
    if (!grid_.is_uniform()) throw InvalidArgument("FbmSource: fBm simulation requires a uniform grid");
    for (double H : hurst_) {
      if (!(H > 0.0 && H <= 1.0)) throw InvalidArgument("FbmSource: Hurst index must lie in (0, 1]");
    }
    for (double H : hurst_) coords_.push_back(prepare(H, method));
  }

  ProcessTag tag() const noexcept override { return ProcessTag::fbm; }
  std::vector<double> parameters() const override { return {hurst_.begin(), hurst_.end()}; }
  const Vector& hurst() const noexcept { return hurst_; }
  bool uses_circulant(int i) const noexcept { return !coords_[i].sqrt_eigen.empty(); }

  /// Autocovariance of fractional Gaussian noise with spacing h at lag k.
  static double noise_autocov(double H, double h, std::size_t k) {
    const double two_h = 2.0 * H;
    const double kk = static_cast<double>(k);
    const double v = std::pow(kk + 1.0, two_h) - 2.0 * std::pow(kk, two_h) + std::pow(std::abs(kk - 1.0), two_h);
    return 0.5 * std::pow(h, two_h) * v;
  }

  void fill(std::uint64_t path, std::span<double> out) const override {
    const std::size_t m = grid_.intervals();
    const int d = dim_;
    RandomStream rng(seed_, path);
    thread_local std::vector<double> xi;
    thread_local std::vector<double> noise;
    thread_local std::vector<std::complex<double>> spectrum;
    thread_local std::vector<double> series;
    thread_local Eigen::FFT<double> fft = [] {
      Eigen::FFT<double> f;
      f.SetFlag(Eigen::FFT<double>::HalfSpectrum);
      f.SetFlag(Eigen::FFT<double>::Unscaled);
      return f;
    }();
    noise.resize(m);
    for (int i = 0; i < d; ++i) {
      const Coordinate& c = coords_[i];
      if (!c.sqrt_eigen.empty()) {
        const std::size_t n = 2 * m;
        xi.resize(n);
        rng.fill_normal(xi.data(), n);
        // half spectrum k = 0..m of a Hermitian sequence
        spectrum.resize(m + 1);
        spectrum[0] = {c.sqrt_eigen[0] * xi[0], 0.0};
        spectrum[m] = {c.sqrt_eigen[m] * xi[1], 0.0};
        for (std::size_t k = 1; k < m; ++k) {
          const double s = c.sqrt_eigen[k] * std::numbers::sqrt2 * 0.5;
          spectrum[k] = {s * xi[2 * k], s * xi[2 * k + 1]};
        }
        series.resize(n);
        fft.inv(series.data(), spectrum.data(), static_cast<Eigen::Index>(n));
        for (std::size_t k = 0; k < m; ++k) noise[k] = series[k];
      } else {
        xi.resize(m);
        rng.fill_normal(xi.data(), m);
        for (std::size_t r = 0; r < m; ++r) {
          double s = 0.0;
          const double* row = c.chol.data() + r * m;
          for (std::size_t k = 0; k <= r; ++k) s += row[k] * xi[k];
          noise[r] = s;
        }
      }
      double acc = 0.0;
      out[i] = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        acc += noise[k];
        out[(k + 1) * d + i] = acc;
      }
    }
  }

 private:
  struct Coordinate {
    std::vector<double> sqrt_eigen;  // sqrt(lambda_k / (2m)), empty when using Cholesky
    std::vector<double> chol;        // row-major lower factor, m x m
  };

  Coordinate prepare(double H, FbmMethod method) const {
    const std::size_t m = grid_.intervals();
    const double h = grid_[1];
    Coordinate c;
    if (method != FbmMethod::cholesky) {
      const std::size_t n = 2 * m;
      std::vector<std::complex<double>> row(n), eig(n);
      for (std::size_t k = 0; k <= m; ++k) row[k] = noise_autocov(H, h, k);
      for (std::size_t k = 1; k < m; ++k) row[n - k] = row[k];
      Eigen::FFT<double> fft;
      fft.fwd(eig, row);
      double max_eig = 0.0, min_eig = kInf;
      for (const auto& e : eig) {
        max_eig = std::max(max_eig, e.real());
        min_eig = std::min(min_eig, e.real());
      }
      if (min_eig >= -1e-10 * max_eig) {
        c.sqrt_eigen.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
          c.sqrt_eigen[k] = std::sqrt(std::max(0.0, eig[k].real()) / static_cast<double>(n));
        }
        return c;
      }
      if (method == FbmMethod::circulant) throw EmbeddingFailed("circulant embedding is not nonnegative definite");
    }
    if (m > kMaxCholeskySize) throw EmbeddingFailed("Cholesky fallback limited to 4096 grid intervals");
    Matrix cov(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t k = 0; k < m; ++k) cov(r, k) = noise_autocov(H, h, r > k ? r - k : k - r);
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) {
      // H = 1 gives a rank-one noise covariance; factor it directly
      if (std::abs(H - 1.0) < 1e-15) {
        c.chol.assign(m * m, 0.0);
        for (std::size_t r = 0; r < m; ++r) c.chol[r * m] = h;
        return c;
      }
      throw EmbeddingFailed("fBm noise covariance is not positive definite");
    }
    const Matrix L = llt.matrixL();
    c.chol.resize(m * m);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t k = 0; k < m; ++k) c.chol[r * m + k] = L(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
    return c;
  }

  Vector hurst_;
  std::vector<Coordinate> coords_;
};

/// Z(f(t)) = (Z_1(f_1(t)), ..., Z_d(f_d(t))) with Z = A B. The independent
/// coordinates B_j are simulated once on the merged clock times so that
/// Cov(Z_i(f_i(t)), Z_j(f_j(s))) = Sigma_ij min(f_i(t), f_j(s)).
class TimeTransformSource final : public PathSource {
 public:
  TimeTransformSource(CovarianceModel model, TimeTransform clocks, TimeGrid grid, std::uint64_t seed)
      : PathSource(std::move(grid), model.dim(), seed), model_(std::move(model)), clocks_(std::move(clocks)) {
    if (clocks_.dim() != dim_) throw DimensionMismatch("TimeTransformSource: transform and model dimensions differ");
    clocks_.check_monotone(grid_);
    std::vector<double> times;
    times.reserve(grid_.size() * dim_);
    for (int i = 0; i < dim_; ++i)
      for (double t : grid_.points()) times.push_back(clocks_(i, t));
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    merged_ = std::move(times);
    lookup_.resize(grid_.size() * dim_);
    for (int i = 0; i < dim_; ++i) {
      for (std::size_t k = 0; k < grid_.size(); ++k) {
        const double v = clocks_(i, grid_[k]);
        lookup_[k * dim_ + i] = static_cast<std::size_t>(std::lower_bound(merged_.begin(), merged_.end(), v) - merged_.begin());
      }
    }
    step_sd_.resize(merged_.size());
    step_sd_[0] = 0.0;
    for (std::size_t r = 1; r < merged_.size(); ++r) step_sd_[r] = std::sqrt(merged_[r] - merged_[r - 1]);
  }

  ProcessTag tag() const noexcept override { return ProcessTag::time_transformed; }
  const TimeTransform& clocks() const noexcept { return clocks_; }
  const CovarianceModel& model() const noexcept { return model_; }
  const std::vector<double>& merged_times() const noexcept { return merged_; }

  void fill(std::uint64_t path, std::span<double> out) const override {
    const int d = dim_;
    const std::size_t n = merged_.size();
    thread_local std::vector<double> b;
    b.resize(n * d);
    RandomStream rng(seed_, path);
    for (int j = 0; j < d; ++j) {
      double* bj = b.data() + j * n;
      rng.fill_normal(bj + 1, n - 1);
      bj[0] = 0.0;
      for (std::size_t r = 1; r < n; ++r) bj[r] = bj[r - 1] + step_sd_[r] * bj[r];
    }
    const Matrix& A = model_.mixing;
    for (std::size_t k = 0; k < grid_.size(); ++k) {
      for (int i = 0; i < d; ++i) {
        const std::size_t r = lookup_[k * d + i];
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += A(i, j) * b[j * n + r];
        out[k * d + i] = s;
      }
    }
  }

 private:
  CovarianceModel model_;
  TimeTransform clocks_;
  std::vector<double> merged_;
  std::vector<std::size_t> lookup_;
  std::vector<double> step_sd_;
};

/// Materialized paths. For single-axis processes `grids` has one element and a
/// path holds grid.size() x dim values; for convolution fields the point index
/// runs over the product grid in row-major order (last axis fastest).
struct PathEnsemble {
  ProcessTag tag = ProcessTag::bm;
  std::vector<double> parameters;
  std::vector<TimeGrid> grids;
  int dim = 0;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
  std::vector<double> values;

  std::size_t points() const {
    std::size_t p = 1;
    for (const auto& g : grids) p *= g.size();
    return p;
  }
  std::size_t values_per_path() const { return points() * static_cast<std::size_t>(dim); }
  std::span<const double> path(std::size_t p) const {
    return {values.data() + p * values_per_path(), values_per_path()};
  }
  double at(std::size_t p, std::size_t point, int coord) const {
    return values[(p * points() + point) * static_cast<std::size_t>(dim) + static_cast<std::size_t>(coord)];
  }
};

inline constexpr std::size_t kDefaultValueBudget = std::size_t{1} << 25;

inline PathEnsemble simulate(const PathSource& source, std::size_t n_paths, unsigned jobs = 1,
                             std::size_t budget = kDefaultValueBudget) {
  if (n_paths < 1) throw InvalidArgument("simulate: n_paths must be positive");
  const std::size_t per = source.values_per_path();
  if (per * n_paths > budget) {
    throw BudgetExceeded("ensemble needs " + std::to_string(per * n_paths) + " values, budget is " +
                         std::to_string(budget));
  }
  PathEnsemble e;
  e.tag = source.tag();
  e.parameters = source.parameters();
  e.grids = {source.grid()};
  e.dim = source.dim();
  e.n_paths = n_paths;
  e.seed = source.seed();
  e.values.resize(per * n_paths);
  parallel_blocks(n_paths, 256, jobs, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) source.fill(p, {e.values.data() + p * per, per});
  });
  return e;
}

inline PathEnsemble simulate_bm(const CovarianceModel& model, const TimeGrid& grid, std::size_t n_paths,
                                std::uint64_t seed, unsigned jobs = 1) {
  return simulate(BrownianSource(model, grid, seed), n_paths, jobs);
}

inline PathEnsemble simulate_fbm(double hurst, const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                                 FbmMethod method = FbmMethod::automatic, unsigned jobs = 1) {
  return simulate(FbmSource(Vector::Constant(1, hurst), grid, seed, method), n_paths, jobs);
}

inline PathEnsemble simulate_time_transformed(const CovarianceModel& model, const TimeTransform& clocks,
                                              const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                                              unsigned jobs = 1) {
  return simulate(TimeTransformSource(model, clocks, grid, seed), n_paths, jobs);
}

/// Axis k of a convolution field uses the sub-seed derive_seed(seed, k).
inline std::uint64_t axis_seed(std::uint64_t seed, std::size_t axis) { return derive_seed(seed, axis + 1); }

/// Sum_k (Z_k(t_k) - c_k(t_k)) over the product grid, Z_k independent Brownian models.
inline PathEnsemble simulate_convolution_field(const std::vector<CovarianceModel>& models,
                                               const std::vector<TimeGrid>& grids,
                                               const std::vector<TrendFunction>& trends, std::size_t n_paths,
                                               std::uint64_t seed, unsigned jobs = 1,
                                               std::size_t budget = kDefaultValueBudget) {
  const std::size_t n = models.size();
  if (n < 1 || grids.size() != n || trends.size() != n) {
    throw InvalidArgument("simulate_convolution_field: need matching models, grids and trends");
  }
  const int d = models.front().dim();
  for (std::size_t k = 0; k < n; ++k) {
    if (models[k].dim() != d || trends[k].dim() != d) throw DimensionMismatch("simulate_convolution_field: dimension mismatch");
  }
  if (n_paths < 1) throw InvalidArgument("simulate_convolution_field: n_paths must be positive");
  PathEnsemble e;
  e.tag = ProcessTag::convolution;
  e.parameters = {static_cast<double>(n)};
  e.grids = grids;
  e.dim = d;
  e.n_paths = n_paths;
  e.seed = seed;
  const std::size_t points = e.points();
  if (points * d * n_paths > budget) {
    throw BudgetExceeded("convolution field needs " + std::to_string(points * d * n_paths) +
                         " values, budget is " + std::to_string(budget));
  }
  std::vector<BrownianSource> sources;
  std::vector<std::vector<double>> drift;
  for (std::size_t k = 0; k < n; ++k) {
    sources.emplace_back(models[k], grids[k], axis_seed(seed, k));
    drift.push_back(trends[k].sample(grids[k]));
  }
  e.values.resize(points * d * n_paths);
  parallel_blocks(n_paths, 64, jobs, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<std::vector<double>> axis(n);
    std::vector<std::size_t> idx(n);
    for (std::size_t p = begin; p < end; ++p) {
      for (std::size_t k = 0; k < n; ++k) {
        axis[k].resize(sources[k].values_per_path());
        sources[k].fill(p, axis[k]);
        for (std::size_t v = 0; v < axis[k].size(); ++v) axis[k][v] -= drift[k][v];
      }
      double* dst = e.values.data() + p * points * d;
      for (std::size_t flat = 0; flat < points; ++flat) {
        std::size_t rem = flat;
        for (std::size_t k = n; k-- > 0;) {
          idx[k] = rem % grids[k].size();
          rem /= grids[k].size();
        }
        for (int i = 0; i < d; ++i) {
          double s = 0.0;
          for (std::size_t k = 0; k < n; ++k) s += axis[k][idx[k] * d + i];
          dst[flat * d + i] = s;
        }
      }
    }
  });
  return e;
}

// Ensemble files: "RUINENS1", then little-endian header
//   u32 version, u32 dim, u32 axes, u32 process tag, u64 paths, u64 seed,
//   u32 parameter count, f64 parameters[], per axis: u64 points, f64 times[],
// followed by the body in column order: for each coordinate, for each path,
// every grid point as f64.

namespace detail {

template <class T>
void write_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw InvalidArgument("ensemble file truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline constexpr char kEnsembleMagic[8] = {'R', 'U', 'I', 'N', 'E', 'N', 'S', '1'};

}  // namespace detail

inline void write_ensemble(std::ostream& os, const PathEnsemble& e) {
  os.write(detail::kEnsembleMagic, 8);
  detail::write_le<std::uint32_t>(os, 1);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.dim));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.grids.size()));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.tag));
  detail::write_le<std::uint64_t>(os, e.n_paths);
  detail::write_le<std::uint64_t>(os, e.seed);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.parameters.size()));
  for (double p : e.parameters) detail::write_le<double>(os, p);
  for (const auto& g : e.grids) {
    detail::write_le<std::uint64_t>(os, g.size());
    for (double t : g.points()) detail::write_le<double>(os, t);
  }
  const std::size_t points = e.points();
  for (int i = 0; i < e.dim; ++i)
    for (std::size_t p = 0; p < e.n_paths; ++p)
      for (std::size_t j = 0; j < points; ++j) detail::write_le<double>(os, e.at(p, j, i));
}

inline PathEnsemble read_ensemble(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, detail::kEnsembleMagic, 8) != 0) {
    throw InvalidArgument("not an ensemble file");
  }
  if (detail::read_le<std::uint32_t>(is) != 1) throw InvalidArgument("unsupported ensemble file version");
  PathEnsemble e;
  e.dim = static_cast<int>(detail::read_le<std::uint32_t>(is));
  const auto axes = detail::read_le<std::uint32_t>(is);
  e.tag = static_cast<ProcessTag>(detail::read_le<std::uint32_t>(is));
  e.n_paths = detail::read_le<std::uint64_t>(is);
  e.seed = detail::read_le<std::uint64_t>(is);
  const auto n_params = detail::read_le<std::uint32_t>(is);
  for (std::uint32_t k = 0; k < n_params; ++k) e.parameters.push_back(detail::read_le<double>(is));
  for (std::uint32_t a = 0; a < axes; ++a) {
    const auto n = detail::read_le<std::uint64_t>(is);
    std::vector<double> pts(n);
    for (auto& t : pts) t = detail::read_le<double>(is);
    e.grids.push_back(TimeGrid::from_points(std::move(pts)));
  }
  const std::size_t points = e.points();
  e.values.resize(points * e.dim * e.n_paths);
  for (int i = 0; i < e.dim; ++i)
    for (std::size_t p = 0; p < e.n_paths; ++p)
      for (std::size_t j = 0; j < points; ++j)
        e.values[(p * points + j) * e.dim + i] = detail::read_le<double>(is);
  return e;
}

}  // namespace ruinbound
