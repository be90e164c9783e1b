#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ruinbound/normal.hpp"
#include "ruinbound/parallel.hpp"
#include "ruinbound/rng.hpp"

using namespace ruinbound;

TEST(Philox, KnownAnswerZero) {
  const auto out = Philox4x64::apply({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x16554d9eca36314cull);
  EXPECT_EQ(out[1], 0xdb20fe9d672d0fdcull);
  EXPECT_EQ(out[2], 0xd7e772cee186176bull);
  EXPECT_EQ(out[3], 0x7e68b68aec7ba23bull);
}

TEST(Philox, KnownAnswerAllOnes) {
  constexpr std::uint64_t ones = ~std::uint64_t{0};
  const auto out = Philox4x64::apply({ones, ones, ones, ones}, {ones, ones});
  EXPECT_EQ(out[0], 0x87b092c3013fe90bull);
  EXPECT_EQ(out[1], 0x438c3c67be8d0224ull);
  EXPECT_EQ(out[2], 0x9cc7d7c69cd777b6ull);
  EXPECT_EQ(out[3], 0xa09caebf594f0ba0ull);
}

TEST(RandomStream, SameSeedSameStream) {
  RandomStream a(5, 17), b(5, 17), c(5, 18);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs = differs || x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(RandomStream, UniformRange) {
  RandomStream r(1, 0);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double v = r.uniform_open();
    ASSERT_GT(v, 0.0);
    ASSERT_LT(v, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 1e5, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / 1e5));
}

TEST(RandomStream, NormalMoments) {
  std::vector<double> x(1000);
  double s1 = 0.0, s2 = 0.0, s4 = 0.0;
  const double n = 2e6;
  for (std::uint64_t p = 0; p < 2000; ++p) {
    RandomStream r(23, p);
    r.fill_normal(x.data(), x.size());
    for (double v : x) {
      s1 += v;
      s2 += v * v;
      s4 += v * v * v * v;
    }
  }
  EXPECT_NEAR(s1 / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(s4 / n, 3.0, 4.0 * std::sqrt(96.0 / n));
}

TEST(RandomStream, NormalTailFrequency) {
  RandomStream r(3, 1);
  const std::size_t n = 4000000;
  std::size_t tail = 0;
  for (std::size_t i = 0; i < n; ++i) tail += std::abs(r.normal()) > 3.0;
  const double p = 2.0 * normal_sf(3.0);
  EXPECT_NEAR(static_cast<double>(tail) / n, p, 5.0 * std::sqrt(p / n));
}

TEST(RandomStream, FillMatchesRepeatedCalls) {
  RandomStream a(8, 2), b(8, 2);
  std::vector<double> x(5000);
  a.fill_normal(x.data(), x.size());
  for (double v : x) EXPECT_EQ(v, b.normal());
}

TEST(DeriveSeed, DistinctTags) {
  EXPECT_EQ(derive_seed(1, 2), derive_seed(1, 2));
  EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
}

TEST(ParallelBlocks, CoversRangeOnce) {
  for (unsigned jobs : {1u, 3u, 8u}) {
    std::vector<int> seen(1003, 0);
    parallel_blocks(seen.size(), 64, jobs, [&](std::size_t, std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) ++seen[i];
    });
    for (int s : seen) EXPECT_EQ(s, 1);
  }
}
