#include <gtest/gtest.h>

#include "restyle/lift.hpp"
#include "restyle/metrics.hpp"
#include "restyle/synth.hpp"
#include "test_util.hpp"

using namespace restyle;

namespace {

RefinerCondition condition_row(const std::vector<float>& values, const std::vector<bool>& covered) {
  RefinerCondition c(static_cast<int>(values.size()), 1);
  for (int x = 0; x < c.width; ++x) {
    for (int ch = 0; ch < 3; ++ch) c.at(x, 0, ch) = covered[x] ? values[x] : 0.0f;
    c.at(x, 0, RefinerCondition::kMaskChannel) = covered[x] ? 1.0f : 0.0f;
  }
  return c;
}

SceneManifest static_scene(int frames, std::uint64_t seed = 1) {
  return synth_scene(make_synth_config(frames, TrajectoryKind::Static, 32, 32), seed).scene;
}

}  // namespace

TEST(HarmonicFill, LinearAcrossOneDimensionalHole) {
  const auto cond = condition_row({0, 0, 0, 0, 1}, {true, false, false, false, true});
  Rng rng(0);
  const auto out = HarmonicFillRefiner().refine(cond, rng);
  EXPECT_EQ(out.at(0, 0), 0.0f);
  EXPECT_EQ(out.at(4, 0), 1.0f);
  EXPECT_NEAR(out.at(1, 0), 0.25, 1e-5);
  EXPECT_NEAR(out.at(2, 0), 0.5, 1e-5);
  EXPECT_NEAR(out.at(3, 0), 0.75, 1e-5);
}

TEST(HarmonicFill, NeumannEdgeCopiesNeighbour) {
  const auto cond = condition_row({0.3f, 0, 0}, {true, false, false});
  Rng rng(0);
  const auto out = HarmonicFillRefiner().refine(cond, rng);
  EXPECT_NEAR(out.at(2, 0, 1), 0.3, 1e-5);
}

TEST(HarmonicFill, CoveredPassThroughAndBounds) {
  Rng rng(1);
  RefinerCondition cond(12, 9);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 12; ++x) {
      const bool cov = rng.uniform() < 0.3;
      cond.at(x, y, RefinerCondition::kMaskChannel) = cov ? 1.0f : 0.0f;
      for (int c = 0; c < 3; ++c) cond.at(x, y, c) = cov ? static_cast<float>(rng.uniform()) : 0.0f;
    }
  const auto out = HarmonicFillRefiner().refine(cond, rng);
  float lo = 1, hi = 0;
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 12; ++x)
      if (cond.covered(x, y)) {
        for (int c = 0; c < 3; ++c) {
          EXPECT_EQ(out.at(x, y, c), cond.at(x, y, c));
          lo = std::min(lo, cond.at(x, y, c));
          hi = std::max(hi, cond.at(x, y, c));
        }
      }
  for (float v : out.data) {
    EXPECT_GE(v, lo - 1e-5f);  // maximum principle
    EXPECT_LE(v, hi + 1e-5f);
  }
}

TEST(HarmonicFill, AllMissing) {
  Rng rng(0);
  try {
    HarmonicFillRefiner().refine(RefinerCondition(4, 4), rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AllMissing);
  }
}

TEST(ToyRefiner, ReimposedPixelsEqualTheWarp) {
  const auto s = make_schedule(20, ScheduleKind::Cosine);
  GaussianMixtureModel g{{{0.5, {0.8, 0.2, 0.2}, 0.01}, {0.5, {0.2, 0.2, 0.8}, 0.01}}};
  const PixelMixtureDenoiser den(g, s);
  const ToyDiffusionRefiner refiner(den, s, 0.5);
  Rng rng(2);
  RefinerCondition cond(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const bool cov = x < 5;
      cond.at(x, y, RefinerCondition::kMaskChannel) = cov ? 1.0f : 0.0f;
      cond.at(x, y, 0) = cov ? 0.75f : 0.0f;
      cond.at(x, y, 1) = cov ? 0.25f : 0.0f;
      cond.at(x, y, 2) = cov ? 0.2f : 0.0f;
    }
  const auto out = refiner.refine(cond, rng);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      for (int c = 0; c < 3; ++c) {
        ASSERT_GE(out.at(x, y, c), 0.0f);
        ASSERT_LE(out.at(x, y, c), 1.0f);
      }
      if (x < 5) {
        EXPECT_EQ(out.at(x, y, 0), 0.75f);
      }
    }
  // Holes next to red evidence lean red.
  EXPECT_GT(out.at(5, 4, 0), out.at(5, 4, 2));
  EXPECT_THROW(ToyDiffusionRefiner(den, s, 1.5), Error);
}

TEST(ToyRefiner, SameSeedSameOutput) {
  const auto s = make_schedule(10, ScheduleKind::Cosine);
  GaussianMixtureModel g{{{1.0, {0.5, 0.5, 0.5}, 0.02}}};
  const PixelMixtureDenoiser den(g, s);
  const ToyDiffusionRefiner refiner(den, s, 0.6);
  const auto cond = condition_row({0.1f, 0, 0, 0.9f}, {true, false, false, true});
  Rng a(3), b(3);
  EXPECT_TRUE(bit_equal(refiner.refine(cond, a), refiner.refine(cond, b)));
}

TEST(FitMixture, OneComponentPerLabel) {
  ImageBuffer img(4, 1, 3);
  LabelRaster labels(4, 1);
  for (int x = 0; x < 4; ++x) {
    labels.at(x, 0) = x < 3 ? 7 : 2;
    for (int c = 0; c < 3; ++c) img.at(x, 0, c) = x < 3 ? 0.1f * (x + 1) : 0.9f;
  }
  const auto g = fit_label_mixture(img, labels);
  ASSERT_EQ(g.components.size(), 2u);
  // ascending label id: 2 then 7
  EXPECT_DOUBLE_EQ(g.components[0].weight, 0.25);
  EXPECT_NEAR(g.components[0].mean[0], 0.9, 1e-6);
  EXPECT_EQ(g.components[0].variance, 1e-4);
  EXPECT_NEAR(g.components[1].mean[1], 0.2, 1e-6);
  EXPECT_NEAR(g.components[1].variance, 2.0 / 300.0, 1e-6);
  EXPECT_NO_THROW(g.validate());
}

TEST(Lift, StaticSceneReproducesSeed) {
  const auto scene = static_scene(3);
  Rng rng(4);
  const auto r = lift_sequence(scene, scene.frames[0].image, 0, HarmonicFillRefiner(), {}, rng);
  ASSERT_EQ(r.stylized.size(), 3u);
  for (int i = 1; i < 3; ++i) {
    EXPECT_GT(psnr(r.stylized.at(i), scene.frames[i].image), 60.0);
    EXPECT_EQ(r.reports[i - 1].frame, i);
    EXPECT_EQ(r.reports[i - 1].coverage, 1.0);
  }
  EXPECT_EQ(r.reports[1].sources, (std::vector<int>{0, 1}));
}

TEST(Lift, BothDirectionsFromMiddleSeed) {
  const auto s = synth_scene(make_synth_config(5, TrajectoryKind::Pan, 32, 32), 5);
  LiftConfig cfg;
  cfg.direction = LiftDirection::Both;
  Rng rng(5);
  const auto r = lift_sequence(s.scene, s.scene.frames[2].image, 2, HarmonicFillRefiner(), cfg, rng);
  ASSERT_EQ(r.stylized.size(), 5u);
  ASSERT_EQ(r.reports.size(), 4u);
  EXPECT_EQ(r.reports[0].frame, 3);
  EXPECT_EQ(r.reports[2].frame, 1);
  EXPECT_EQ(r.reports[3].sources.back(), 1);  // frame 0 warps from frame 1 first
  for (const auto& [i, img] : r.stylized) EXPECT_GT(psnr(img, s.scene.frames[i].image), 20.0) << i;
  cfg.direction = LiftDirection::Forward;
  Rng rng2(5);
  EXPECT_EQ(lift_sequence(s.scene, s.scene.frames[2].image, 2, HarmonicFillRefiner(), cfg, rng2).stylized.size(), 3u);
}

TEST(Lift, DeterministicUnderSeed) {
  const auto s = synth_scene(make_synth_config(4, TrajectoryKind::Pan, 32, 32), 6);
  Rng a(7), b(7);
  const auto ra = lift_sequence(s.scene, s.scene.frames[0].image, 0, HarmonicFillRefiner(), {}, a);
  const auto rb = lift_sequence(s.scene, s.scene.frames[0].image, 0, HarmonicFillRefiner(), {}, b);
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(bit_equal(ra.stylized.at(i), rb.stylized.at(i)));
}

TEST(Lift, NoOverlapAndGapFallback) {
  auto scene = static_scene(2);
  scene.frames[0].pointmap = Pointmap(32, 32);  // all invalid
  Rng rng(8);
  try {
    lift_sequence(scene, scene.frames[0].image, 0, HarmonicFillRefiner(), {}, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoOverlap);
  }
  LiftConfig cfg;
  cfg.allow_gaps = true;
  const auto r = lift_sequence(scene, scene.frames[0].image, 0, HarmonicFillRefiner(), cfg, rng);
  EXPECT_TRUE(r.reports[0].gap);
  EXPECT_TRUE(bit_equal(r.stylized.at(1), scene.frames[0].image));
}

TEST(Lift, InputValidation) {
  const auto scene = static_scene(2);
  Rng rng(9);
  const HarmonicFillRefiner fill;
  EXPECT_THROW(lift_sequence(scene, scene.frames[0].image, 2, fill, {}, rng), Error);
  EXPECT_THROW(lift_sequence(scene, ImageBuffer(8, 8), 0, fill, {}, rng), Error);
  LiftConfig bad;
  bad.gamma = -1;
  EXPECT_THROW(lift_sequence(scene, scene.frames[0].image, 0, fill, bad, rng), Error);
  bad = {};
  bad.eps_cov = 1.0;
  EXPECT_THROW(lift_sequence(scene, scene.frames[0].image, 0, fill, bad, rng), Error);
}
