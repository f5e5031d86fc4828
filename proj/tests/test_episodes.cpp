#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "cobnet/error.hpp"
#include "cobnet/episodes.hpp"
#include "cobnet/model.hpp"
#include "cobnet/tensor_io.hpp"
#include "test_support.hpp"

using namespace cobnet;
using namespace cobnet::testing;
namespace fs = std::filesystem;

namespace {

bool same(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

bool same(const Episode& a, const Episode& b) {
  if (a.class_id != b.class_id || a.fold != b.fold || a.weak != b.weak || a.support.size() != b.support.size()) return false;
  if (!same(a.query_image, b.query_image) || !(a.query_mask == b.query_mask)) return false;
  for (std::size_t i = 0; i < a.support.size(); ++i) {
    if (!same(a.support[i].image, b.support[i].image) || !(a.support[i].mask == b.support[i].mask)) return false;
  }
  return true;
}

Mask asymmetric_mask(std::size_t n) {
  Mask m(n, n);
  for (std::size_t y = 0; y < n / 2; ++y)
    for (std::size_t x = 0; x <= y; ++x) m.at(y, x + n / 4) = 1;
  m.at(n - 2, n - 3) = 1;
  return m;
}

}  // namespace

TEST(FoldSplit, DisjointFoldsCoverEveryClass) {
  const FoldSplit split = FoldSplit::standard();
  std::set<std::size_t> seen;
  for (std::size_t f = 0; f < kNumFolds; ++f) {
    const auto test = split.test_classes(f), train = split.train_classes(f);
    EXPECT_EQ(test.size(), kClassesPerFold);
    EXPECT_EQ(train.size(), kNumClasses - kClassesPerFold);
    for (auto c : test) {
      EXPECT_TRUE(seen.insert(c).second);
      EXPECT_EQ(split.fold_of(c), f);
      EXPECT_EQ(std::count(train.begin(), train.end(), c), 0);
    }
  }
  EXPECT_EQ(seen.size(), kNumClasses);
  EXPECT_THROW(split.test_classes(4), ConfigError);
  EXPECT_THROW(split.fold_of(12), ValidationError);
}

TEST(RenderScene, DeterministicAndSelfConsistent) {
  const Scene a = render_scene(4, 2, 77), b = render_scene(4, 2, 77);
  EXPECT_TRUE(same(a.image, b.image));
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.image.shape(), (Shape{3, 64, 64}));
  EXPECT_FALSE(same(a.image, render_scene(4, 2, 78).image));
  EXPECT_THROW(render_scene(12, 0, 1), ValidationError);
  EXPECT_THROW(render_scene(0, 6, 1), ValidationError);
}

TEST(RenderScene, GeneratorBoundsProperty) {
  for (int trial = 0; trial < kTrials; ++trial) {
    std::mt19937_64 rng(100 + trial);
    const std::size_t cls = trial % kNumClasses, bg = rand_int(rng, 0, kNumBackgrounds - 1);
    const Scene s = render_scene(cls, bg, rng());
    const double fraction = static_cast<double>(s.mask.count()) / static_cast<double>(s.mask.size());
    ASSERT_GE(fraction, 0.02) << class_name(cls);
    ASSERT_LE(fraction, 0.6) << class_name(cls);
    ASSERT_EQ(s.shape_pixels, s.mask.count());
    for (double v : s.image.data()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(SampleEpisode, ShotCountsAndNonEmptySupport) {
  const FoldSplit split = FoldSplit::standard();
  const SamplerConfig cfg;
  Rng rng(5);
  EXPECT_EQ(sample_episode(split, 0, EpisodeRole::test, 1, rng, cfg).support.size(), 1u);
  const Episode five = sample_episode(split, 2, EpisodeRole::test, 5, rng, cfg);
  EXPECT_EQ(five.support.size(), 5u);
  EXPECT_EQ(five.fold, 2u);
  for (const auto& s : five.support) {
    EXPECT_GT(proto::resize_mask(s.mask, 16, 16).count(), 0u);
    EXPECT_EQ(s.image.shape(), (Shape{3, 64, 64}));
  }
  EXPECT_EQ(five.query_mask.height, 64u);
  EXPECT_THROW(sample_episode(split, 0, EpisodeRole::test, 0, rng, cfg), ConfigError);
}

TEST(SampleEpisode, ClassFrequencyWithinBinomialBound) {
  const FoldSplit split = FoldSplit::standard();
  for (std::size_t fold = 0; fold < kNumFolds; ++fold) {
    std::map<std::size_t, int> counts;
    Rng rng(1000 + fold);
    for (int i = 0; i < 1000; ++i) ++counts[sample_episode(split, fold, EpisodeRole::test, 1, rng, SamplerConfig{}).class_id];
    ASSERT_EQ(counts.size(), 3u);
    for (auto [cls, n] : counts) {
      EXPECT_EQ(split.fold_of(cls), fold);
      EXPECT_GE(n, 253);
      EXPECT_LE(n, 413);
    }
  }
}

TEST(SampleEpisode, BackgroundsDrawnIndependently) {
  const FoldSplit split = FoldSplit::standard();
  Rng rng(9);
  int differ = 0;
  for (int i = 0; i < 1000; ++i) {
    const Episode ep = sample_episode(split, 1, EpisodeRole::test, 1, rng, SamplerConfig{});
    differ += ep.support[0].spec.background != ep.query_spec.background;
  }
  // 5/6 minus about 3.4 binomial standard deviations.
  EXPECT_GE(differ / 1000.0, 5.0 / 6.0 - 0.04);

  SamplerConfig matched;
  matched.matched_backgrounds = true;
  for (int i = 0; i < 100; ++i) {
    const Episode ep = sample_episode(split, 1, EpisodeRole::test, 3, rng, matched);
    for (const auto& s : ep.support) ASSERT_EQ(s.spec.background, ep.query_spec.background);
  }
}

TEST(SampleEpisode, TestClassesNeverInTrainingEpisodesProperty) {
  const FoldSplit split = FoldSplit::standard();
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t fold = trial % kNumFolds;
    Rng rng(2000 + trial);
    SamplerConfig cfg;
    cfg.augment = trial % 2 == 0;
    for (int i = 0; i < 10; ++i) {
      const Episode ep = sample_episode(split, fold, EpisodeRole::train, 1 + trial % 3, rng, cfg);
      ASSERT_NE(split.fold_of(ep.class_id), fold);
      ASSERT_EQ(ep.fold, split.fold_of(ep.class_id));
    }
  }
}

TEST(SampleEpisode, ReproducibleFromSeedFoldAndShots) {
  const FoldSplit split = FoldSplit::standard();
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t fold = trial % 4, k = 1 + trial % 5;
    SamplerConfig cfg;
    cfg.augment = trial % 3 == 0;
    const Episode a = sample_indexed_episode(split, fold, EpisodeRole::test, k, 42, trial, cfg);
    const Episode b = sample_indexed_episode(split, fold, EpisodeRole::test, k, 42, trial, cfg);
    ASSERT_TRUE(same(a, b));
    Rng r1(trial), r2(trial);
    ASSERT_TRUE(same(sample_episode(split, fold, EpisodeRole::train, k, r1, cfg),
                     sample_episode(split, fold, EpisodeRole::train, k, r2, cfg)));
  }
  const Episode x = sample_indexed_episode(split, 0, EpisodeRole::test, 1, 42, 0, SamplerConfig{});
  const Episode y = sample_indexed_episode(split, 0, EpisodeRole::test, 1, 42, 1, SamplerConfig{});
  EXPECT_FALSE(same(x.query_image, y.query_image));
}

TEST(Augment, IdentityAndDoubleFlip) {
  const Scene s = render_scene(6, 3, 11);
  const Augmented id = apply_augmentation(s.image, s.mask, false, 0.0);
  EXPECT_TRUE(same(id.image, s.image));
  EXPECT_EQ(id.mask, s.mask);
  const Augmented once = apply_augmentation(s.image, s.mask, true, 0.0);
  EXPECT_FALSE(same(once.image, s.image));
  const Augmented twice = apply_augmentation(once.image, once.mask, true, 0.0);
  EXPECT_TRUE(same(twice.image, s.image));
  EXPECT_EQ(twice.mask, s.mask);
}

TEST(Augment, NinetyDegreeIndexOracle) {
  for (std::size_t n : {6u, 9u, 16u}) {
    const Mask m = asymmetric_mask(n);
    Tensor img({1, n, n});
    for (std::size_t i = 0; i < n * n; ++i) img.mutable_data()[i] = static_cast<double>(i);
    const Augmented r = apply_augmentation(img, m, false, 90.0);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        ASSERT_EQ(r.mask.at(y, x), m.at(n - 1 - x, y));
        ASSERT_EQ(r.image.at(0, y, x), img.at(0, n - 1 - x, y));
      }
    EXPECT_EQ(r.mask.count(), m.count());
  }
}

TEST(Augment, DrawsWithinRange) {
  const Scene s = render_scene(0, 0, 3);
  Rng rng(12);
  int flips = 0;
  for (int i = 0; i < 400; ++i) {
    const Augmented a = augment(s.image, s.mask, rng);
    ASSERT_GE(a.angle_degrees, -15.0);
    ASSERT_LE(a.angle_degrees, 15.0);
    flips += a.flipped;
  }
  EXPECT_GT(flips, 160);
  EXPECT_LT(flips, 240);
}

TEST(Augment, AlignmentAndForegroundBoundProperty) {
  for (int trial = 0; trial < kTrials; ++trial) {
    std::mt19937_64 rng(3000 + trial);
    const Scene s = render_scene(trial % kNumClasses, rand_int(rng, 0, 5), rng());
    // A one-channel image that equals the mask tracks the sampling map.
    Tensor probe = mask_to_tensor(s.mask);
    Rng arng(rng());
    const Augmented a = augment(probe, s.mask, arng);
    for (std::size_t y = 0; y < 64; ++y)
      for (std::size_t x = 0; x < 64; ++x) ASSERT_EQ(a.image.at(0, y, x), static_cast<double>(a.mask.at(y, x)));
    const double before = static_cast<double>(s.mask.count()), after = static_cast<double>(a.mask.count());
    ASSERT_LE(std::abs(after - before) / before, 0.15) << "trial " << trial;
  }
}

TEST(MakeWeak, OnesMasksUntouchedQueryAndGlobalPrototype) {
  const FoldSplit split = FoldSplit::standard();
  Rng rng(13);
  const Episode ep = sample_episode(split, 3, EpisodeRole::test, 2, rng, SamplerConfig{});
  const Episode weak = make_weak(ep);
  EXPECT_TRUE(weak.weak);
  EXPECT_EQ(weak.query_mask, ep.query_mask);
  EXPECT_TRUE(same(weak.query_image, ep.query_image));
  for (const auto& s : weak.support) EXPECT_EQ(s.mask, Mask::ones(64, 64));

  const Backbone bb(BackboneConfig{8, 4, 1, 3});
  const EpisodeInput in = prepare_input(bb, weak);
  EXPECT_TRUE(in.weak);
  const ObjectPrototype p = proto::kshot_prototype(in.shots);
  std::vector<double> want(8, 0.0);
  for (const auto& pair : ep.support) {
    const FeatureMap f = bb.extract(pair.image);
    for (std::size_t c = 0; c < 8; ++c) {
      double s = 0;
      for (std::size_t i = 0; i < 256; ++i) s += f.data()[c * 256 + i];
      want[c] += s / 256.0 / 2.0;
    }
  }
  EXPECT_LT(max_abs_diff(p.values, want), 1e-12);
  EXPECT_LT(max_abs_diff(proto::weak_kshot_prototype(in.shots).values, want), 1e-12);
}

TEST(Manifest, ReplayAndExport) {
  const FoldSplit split = FoldSplit::standard();
  SamplerConfig cfg;
  cfg.augment = true;
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(4000 + trial);
    Episode ep = sample_episode(split, trial % 4, EpisodeRole::train, 1 + trial % 3, rng, cfg);
    if (trial % 2) ep = make_weak(std::move(ep));
    ASSERT_TRUE(same(replay_episode(manifest_line(ep)), ep)) << manifest_line(ep);
  }
  EXPECT_THROW(replay_episode("class=1 fold=0"), FormatError);
  EXPECT_THROW(replay_episode("class=1 bogus=3 query=0,1,0,0 support=0,1,0,0"), FormatError);

  const fs::path dir = fs::temp_directory_path() / "cobnet_test_export";
  fs::remove_all(dir);
  Rng rng(5);
  const Episode ep = sample_episode(split, 0, EpisodeRole::test, 2, rng, SamplerConfig{});
  const std::string line = export_episode(dir, "ep0", ep);
  EXPECT_TRUE(same(load_tensor(dir / "ep0_query.cbt"), ep.query_image));
  EXPECT_TRUE(same(load_tensor(dir / "ep0_support1_mask.cbt"), mask_to_tensor(ep.support[1].mask)));
  EXPECT_TRUE(fs::exists(dir / "ep0_support0.cbt"));
  EXPECT_TRUE(fs::exists(dir / "ep0_query_mask.cbt"));
  EXPECT_EQ(line, manifest_line(ep));
}
