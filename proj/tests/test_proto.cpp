#include <gtest/gtest.h>

#include <algorithm>

#include "cobnet/error.hpp"
#include "cobnet/proto.hpp"
#include "test_support.hpp"

using namespace cobnet;
using namespace cobnet::testing;

TEST(MaskedAveragePool, AllOnesIsGlobalMean) {
  std::mt19937_64 rng(1);
  Tensor f = random_tensor({3, 4, 5}, rng);
  const auto p = proto::masked_average_pool(f, Mask::ones(4, 5));
  EXPECT_LT(max_abs_diff(p.values, pool_oracle(f, 1, 1)), 1e-14);
  EXPECT_EQ(p.values.shape(), (Shape{3, 1, 1}));
}

TEST(MaskedAveragePool, SinglePixelIsThatVector) {
  std::mt19937_64 rng(2);
  Tensor f = random_tensor({4, 3, 3}, rng);
  Mask m(3, 3);
  m.at(2, 1) = 1;
  const auto p = proto::masked_average_pool(f, m);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(p.values.data()[c], f.at(c, 2, 1));
}

TEST(MaskedAveragePool, LoopOracle) {
  for (int trial = 0; trial < kTrials; ++trial) {
    std::mt19937_64 rng(100 + trial);
    Tensor f = random_tensor({3, 2, 2}, rng);
    Mask m = random_nonempty_mask(2, 2, rng);
    ASSERT_LT(max_abs_diff(proto::masked_average_pool(f, m).values, map_oracle(f, m)), 1e-12);
  }
}

TEST(MaskedAveragePool, EmptyMaskThrows) {
  EXPECT_THROW(proto::masked_average_pool(Tensor({2, 4, 4}), Mask(4, 4)), EmptyMaskError);
  // One foreground pixel in 64×64 does not survive the resize to 16×16.
  Mask tiny(64, 64);
  tiny.at(10, 10) = 1;
  EXPECT_THROW(proto::masked_average_pool(Tensor({2, 16, 16}), tiny), EmptyMaskError);
}

TEST(KShotPrototype, SingleShotEqualsMap) {
  std::mt19937_64 rng(3);
  SupportShot s{random_tensor({3, 4, 4}, rng), random_nonempty_mask(4, 4, rng)};
  const auto p = proto::kshot_prototype(std::span<const SupportShot>(&s, 1));
  EXPECT_EQ(max_abs_diff(p.values.data(), proto::masked_average_pool(s.features, s.mask).values.data()), 0.0);
}

TEST(KShotPrototype, IdenticalShotsEqualSingle) {
  std::mt19937_64 rng(4);
  SupportShot s{random_tensor({3, 4, 4}, rng), random_nonempty_mask(4, 4, rng)};
  std::vector<SupportShot> five(5, s);
  EXPECT_LT(max_abs_diff(proto::kshot_prototype(five).values.data(),
                         proto::masked_average_pool(s.features, s.mask).values.data()),
            1e-15);
}

TEST(KShotPrototype, TwoHandBuiltShots) {
  // Shot 1: features 1..8 on a 2×2×2 map, mask selects (0,0) → P1 = (1, 5).
  // Shot 2: constant channels (2, −4), all-ones mask → P2 = (2, −4).
  std::vector<SupportShot> shots;
  Mask m1(2, 2);
  m1.at(0, 0) = 1;
  shots.push_back({Tensor({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8}), m1});
  shots.push_back({Tensor({2, 2, 2}, {2, 2, 2, 2, -4, -4, -4, -4}), Mask::ones(2, 2)});
  const auto p = proto::kshot_prototype(shots);
  EXPECT_DOUBLE_EQ(p.values.data()[0], 1.5);
  EXPECT_DOUBLE_EQ(p.values.data()[1], 0.5);
}

TEST(KShotPrototype, MeanOfPerShotPrototypesProperty) {
  for (int trial = 0; trial < kTrials; ++trial) {
    std::mt19937_64 rng(200 + trial);
    const std::size_t k = rand_int(rng, 1, 5);
    std::vector<SupportShot> shots;
    for (std::size_t i = 0; i < k; ++i) shots.push_back({random_tensor({3, 4, 4}, rng), random_nonempty_mask(4, 4, rng)});
    std::vector<double> mean(3, 0.0);
    for (const auto& s : shots) {
      const auto p = map_oracle(s.features, s.mask);
      for (std::size_t c = 0; c < 3; ++c) mean[c] += p[c] / static_cast<double>(k);
    }
    ASSERT_LT(max_abs_diff(proto::kshot_prototype(shots).values, mean), 1e-12);
  }
}

TEST(BackgroundGrid, OneIsGlobalMean) {
  std::mt19937_64 rng(5);
  Tensor f = random_tensor({3, 8, 8}, rng);
  const auto g = proto::background_grid(f, 1, 2);
  EXPECT_LT(max_abs_diff(g.values, pool_oracle(f, 1, 1)), 1e-14);
  EXPECT_EQ(g.grid, 1u);
}

TEST(BackgroundGrid, FullSizeIsIdentity) {
  std::mt19937_64 rng(6);
  Tensor f = random_tensor({2, 4, 4}, rng);
  EXPECT_EQ(max_abs_diff(proto::background_grid(f, 4, 4).values.data(), f.data()), 0.0);
}

TEST(BackgroundGrid, QuadrantMeans) {
  std::mt19937_64 rng(7);
  Tensor f = random_tensor({2, 4, 4}, rng);
  const auto g = proto::background_grid(f, 2, 2);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 2; ++b) {
        double s = 0;
        for (std::size_t y = 2 * a; y < 2 * a + 2; ++y)
          for (std::size_t x = 2 * b; x < 2 * b + 2; ++x) s += f.at(c, y, x);
        EXPECT_NEAR(g.values.at(c, a, b), s / 4, 1e-15);
      }
}

TEST(BackgroundGrid, OutOfRangeIsConfigError) {
  EXPECT_THROW(proto::background_grid(Tensor({2, 8, 8}), 0, 4), ConfigError);
  EXPECT_THROW(proto::background_grid(Tensor({2, 8, 8}), 5, 4), ConfigError);
}

TEST(WeakPrototype, ConstantMap) {
  Tensor f({2, 3, 3}, std::vector<double>{1, 1, 1, 1, 1, 1, 1, 1, 1, -2, -2, -2, -2, -2, -2, -2, -2, -2});
  const auto p = proto::weak_object_prototype(f);
  EXPECT_DOUBLE_EQ(p.values.data()[0], 1.0);
  EXPECT_DOUBLE_EQ(p.values.data()[1], -2.0);
}

TEST(WeakPrototype, LoopOracle) {
  std::mt19937_64 rng(8);
  Tensor f = random_tensor({5, 6, 7}, rng);
  EXPECT_LT(max_abs_diff(proto::weak_object_prototype(f).values, map_oracle(f, Mask::ones(6, 7))), 1e-12);
}

TEST(ProtoInvariants, AllOnesMapEqualsWeakExactly) {
  for (int trial = 0; trial < kTrials; ++trial) {
    std::mt19937_64 rng(300 + trial);
    const std::size_t h = rand_int(rng, 1, 8), w = rand_int(rng, 1, 8);
    Tensor f = random_tensor({rand_int(rng, 1, 5), h, w}, rng);
    const auto a = proto::masked_average_pool(f, Mask::ones(h, w));
    const auto b = proto::weak_object_prototype(f);
    ASSERT_EQ(max_abs_diff(a.values.data(), b.values.data()), 0.0);
  }
}

TEST(ProtoInvariants, KShotPermutationInvariant) {
  for (int trial = 0; trial < kTrials; ++trial) {
    std::mt19937_64 rng(400 + trial);
    std::vector<SupportShot> shots;
    const std::size_t k = rand_int(rng, 2, 5);
    for (std::size_t i = 0; i < k; ++i) shots.push_back({random_tensor({3, 4, 4}, rng), random_nonempty_mask(4, 4, rng)});
    const auto a = proto::kshot_prototype(shots);
    std::shuffle(shots.begin(), shots.end(), rng);
    const auto b = proto::kshot_prototype(shots);
    ASSERT_LT(max_abs_diff(a.values.data(), b.values.data()), 1e-14);
  }
}

TEST(ProtoInvariants, GridWithinChannelRange) {
  for (int trial = 0; trial < kTrials; ++trial) {
    std::mt19937_64 rng(500 + trial);
    const std::size_t c = rand_int(rng, 1, 4), h = rand_int(rng, 1, 8);
    Tensor f = random_tensor({c, h, h}, rng, -3, 3);
    const std::size_t j = rand_int(rng, 1, h);
    const auto g = proto::background_grid(f, j, h);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const auto slice = f.data().subspan(ch * h * h, h * h);
      const double lo = *std::min_element(slice.begin(), slice.end()), hi = *std::max_element(slice.begin(), slice.end());
      for (std::size_t i = 0; i < j * j; ++i) {
        const double v = g.values.data()[ch * j * j + i];
        ASSERT_GE(v, lo - 1e-12);
        ASSERT_LE(v, hi + 1e-12);
      }
    }
  }
}

TEST(ProtoInvariants, MapIsPositivelyHomogeneous) {
  for (int trial = 0; trial < kTrials; ++trial) {
    std::mt19937_64 rng(600 + trial);
    Tensor f = random_tensor({3, 5, 5}, rng);
    const Mask m = random_nonempty_mask(5, 5, rng);
    const double s = std::uniform_real_distribution<double>(0.01, 10.0)(rng);
    const auto scaled = proto::masked_average_pool(scale(f, s), m);
    const auto base = proto::masked_average_pool(f, m);
    for (std::size_t c = 0; c < 3; ++c) ASSERT_NEAR(scaled.values.data()[c], s * base.values.data()[c], 1e-12 * s);
  }
}

TEST(SupportMask, ResizeIsBilinearThenThreshold) {
  for (int trial = 0; trial < kTrials; ++trial) {
    std::mt19937_64 rng(700 + trial);
    const std::size_t h = rand_int(rng, 2, 32), w = rand_int(rng, 2, 32), oh = rand_int(rng, 1, 16), ow = rand_int(rng, 1, 16);
    const Mask m = random_mask(h, w, rng);
    Tensor t({1, h, w});
    for (std::size_t i = 0; i < m.size(); ++i) t.mutable_data()[i] = m.values[i];
    const auto ref = bilinear_oracle(t, oh, ow);
    const Mask r = proto::resize_mask(m, oh, ow);
    ASSERT_EQ(r.height, oh);
    ASSERT_EQ(r.width, ow);
    for (std::size_t i = 0; i < r.size(); ++i) {
      ASSERT_TRUE(r.values[i] == 0 || r.values[i] == 1);
      ASSERT_EQ(r.values[i], ref[i] >= 0.5 ? 1 : 0);
    }
  }
  std::mt19937_64 rng(9);
  const Mask m = random_mask(5, 5, rng);
  EXPECT_EQ(proto::resize_mask(m, 5, 5), m);
}

TEST(SupportBackgroundGrid, ComplementMaskedPoolWithFallback) {
  for (int trial = 0; trial < kTrials; ++trial) {
    std::mt19937_64 rng(800 + trial);
    const std::size_t c = 2, h = rand_int(rng, 2, 6), j = rand_int(rng, 1, h);
    std::vector<SupportShot> shots;
    const std::size_t k = rand_int(rng, 1, 3);
    for (std::size_t i = 0; i < k; ++i) {
      shots.push_back({random_tensor({c, h, h}, rng), random_nonempty_mask(h, h, rng, trial % 5 == 0 ? 0.97 : 0.5)});
    }
    std::vector<double> want(c * j * j, 0.0);
    for (const auto& s : shots) {
      Mask comp(h, h);
      for (std::size_t i = 0; i < comp.size(); ++i) comp.values[i] = s.mask.values[i] ? 0 : 1;
      std::vector<double> global(c, 0.0);
      if (comp.count() > 0) global = map_oracle(s.features, comp);
      else global = map_oracle(s.features, Mask::ones(h, h));
      for (std::size_t a = 0; a < j; ++a) {
        for (std::size_t b = 0; b < j; ++b) {
          const std::size_t y0 = a * h / j, y1 = ((a + 1) * h + j - 1) / j, x0 = b * h / j, x1 = ((b + 1) * h + j - 1) / j;
          for (std::size_t ch = 0; ch < c; ++ch) {
            double sum = 0, n = 0;
            for (std::size_t y = y0; y < y1; ++y)
              for (std::size_t x = x0; x < x1; ++x)
                if (comp.at(y, x)) {
                  sum += s.features.at(ch, y, x);
                  n += 1;
                }
            want[(ch * j + a) * j + b] += (n > 0 ? sum / n : global[ch]) / static_cast<double>(k);
          }
        }
      }
    }
    const auto g = proto::support_background_grid(shots, j, h);
    ASSERT_EQ(g.values.shape(), (Shape{c, j, j}));
    ASSERT_LT(max_abs_diff(g.values, want), 1e-12);
  }
}
