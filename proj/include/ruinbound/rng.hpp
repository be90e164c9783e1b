#pragma once

// Counter-based random numbers.
//
// Every random quantity in the library is addressed by (seed, stream, position):
// the stream is usually a path or draw index, so results do not depend on how
// work is split across threads.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>

namespace ruinbound {

/// Philox4x64-10 block function (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
class Philox4x64 {
 public:
  using Counter = std::array<std::uint64_t, 4>;
  using Key = std::array<std::uint64_t, 2>;

  static constexpr Counter apply(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const unsigned __int128 p0 = static_cast<unsigned __int128>(kMul0) * ctr[0];
      const unsigned __int128 p1 = static_cast<unsigned __int128>(kMul1) * ctr[2];
      ctr = {static_cast<std::uint64_t>(p1 >> 64) ^ ctr[1] ^ key[0], static_cast<std::uint64_t>(p1),
             static_cast<std::uint64_t>(p0 >> 64) ^ ctr[3] ^ key[1], static_cast<std::uint64_t>(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ull;
  static constexpr std::uint64_t kMul1 = 0xCA5A826395121157ull;
  static constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ull;
  static constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73Bull;
};

/// SplitMix64 finalizer; used to derive independent sub-seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
  return mix64(mix64(seed) ^ mix64(tag + 0x632BE59BD9B4E019ull));
}

namespace detail {

struct ZigguratTables {
  static constexpr int kLayers = 256;
  static constexpr double kR = 3.6541528853610088;
  std::array<double, kLayers + 1> x{};
  std::array<double, kLayers + 1> f{};

  ZigguratTables() {
    const auto pdf = [](double v) { return std::exp(-0.5 * v * v); };
    const double area = kR * pdf(kR) + std::sqrt(std::numbers::pi / 2.0) * std::erfc(kR / std::sqrt(2.0));
    x[0] = area / pdf(kR);
    x[1] = kR;
    for (int i = 2; i < kLayers; ++i) {
      x[i] = std::sqrt(-2.0 * std::log(area / x[i - 1] + pdf(x[i - 1])));
    }
    x[kLayers] = 0.0;
    for (int i = 0; i <= kLayers; ++i) f[i] = pdf(x[i]);
  }
};

inline const ZigguratTables& ziggurat_tables() {
  static const ZigguratTables tables;
  return tables;
}

}  // namespace detail

/// Sequential view of one Philox stream: (seed, stream id) -> endless u64 sequence.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_{seed, 0}, stream_(stream), zig_(&detail::ziggurat_tables()) {}

  std::uint64_t next_u64() noexcept {
    if (avail_ == 0) refill();
    return buffer_[--avail_];
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on the open interval (0, 1).
  double uniform_open() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal deviate (256-layer ziggurat; layer index and value use disjoint bits).
  double normal() noexcept {
    const auto& zt = *zig_;
    for (;;) {
      const std::uint64_t bits = next_u64();
      const int layer = static_cast<int>(bits & 0xFF);
      const double u = 2.0 * (static_cast<double>(bits >> 11) * 0x1.0p-53) - 1.0;
      const double x = u * zt.x[layer];
      if (std::abs(x) < zt.x[layer + 1]) return x;
      if (layer == 0) {
        // tail beyond R (Marsaglia 1964)
        for (;;) {
          const double xt = -std::log(uniform_open()) / detail::ZigguratTables::kR;
          const double yt = -std::log(uniform_open());
          if (2.0 * yt >= xt * xt) {
            return u < 0.0 ? -(detail::ZigguratTables::kR + xt) : detail::ZigguratTables::kR + xt;
          }
        }
      }
      const double y = zt.f[layer + 1] + (zt.f[layer] - zt.f[layer + 1]) * uniform();
      if (y < std::exp(-0.5 * x * x)) return x;
    }
  }

  /// Fills out with standard normal deviates; same sequence as repeated normal() calls.
  void fill_normal(double* out, std::size_t count) noexcept {
    const auto& zt = *zig_;
    std::size_t i = 0;
    while (i < count) {
      if (avail_ == 0) refill();
      const std::uint64_t bits = buffer_[--avail_];
      const int layer = static_cast<int>(bits & 0xFF);
      const double x = (2.0 * (static_cast<double>(bits >> 11) * 0x1.0p-53) - 1.0) * zt.x[layer];
      if (std::abs(x) < zt.x[layer + 1]) {
        out[i++] = x;
      } else {
        ++avail_;  // push back and take the slow path
        out[i++] = normal();
      }
    }
  }

 private:
  void refill() noexcept {
    buffer_ = Philox4x64::apply({block_, stream_, 0, 0}, key_);
    ++block_;
    avail_ = 4;
  }

  Philox4x64::Key key_;
  std::uint64_t stream_;
  const detail::ZigguratTables* zig_;
  std::uint64_t block_ = 0;
  Philox4x64::Counter buffer_{};
  int avail_ = 0;
};

}  // namespace ruinbound
