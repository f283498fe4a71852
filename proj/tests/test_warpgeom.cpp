#include <gtest/gtest.h>

#include "oracles.hpp"
#include "restyle/raster_io.hpp"
#include "restyle/synth.hpp"
#include "restyle/warpgeom.hpp"
#include "test_util.hpp"

using namespace restyle;

namespace {

FlowField constant_flow(int w, int h, float dx, float dy) {
  FlowField f(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      f.at(x, y, 0) = dx;
      f.at(x, y, 1) = dy;
    }
  return f;
}

WarpResult solid(int w, int h, float color, std::vector<int> covered) {
  WarpResult r;
  r.image = ImageBuffer(w, h, 3, 0.0f);
  r.mask = ImageBuffer(w, h, 1, 0.0f);
  r.weight = Raster<double>(w, h, 1, 0.0);
  r.mass = Raster<double>(w, h, 1, 0.0);
  for (int p : covered) {
    r.mask.data[p] = 1.0f;
    r.weight.data[p] = 1.0;
    for (int c = 0; c < 3; ++c) r.image.data[p * 3 + c] = color;
  }
  return r;
}

}  // namespace

TEST(Flow, SamePoseIsZero) {
  const auto s = synth_scene(make_synth_config(1, TrajectoryKind::Static, 16, 16), 0);
  const auto& f = s.scene.frames[0];
  const auto flow = flow_from_pointmaps(f.pointmap, f.pose, f.intrinsics);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      ASSERT_TRUE(flow.valid(x, y));
      EXPECT_NEAR(flow.at(x, y, 0), 0.0f, 1e-4f);
      EXPECT_NEAR(flow.at(x, y, 1), 0.0f, 1e-4f);
    }
}

TEST(Flow, FrontoParallelShift) {
  const int w = 20, h = 10;
  const CameraIntrinsics k{18.0, 18.0, 9.5, 4.5};
  Pointmap pts(w, h);
  const double z = 2.5;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) pts.set(x, y, z * k.ray(x, y));
  const double tx = 0.1;
  const auto pose = CameraPose::from_center({tx, 0, 0}, Eigen::Matrix3d::Identity());
  const auto flow = flow_from_pointmaps(pts, pose, k);
  int valid = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!flow.valid(x, y)) continue;
      ++valid;
      EXPECT_NEAR(flow.at(x, y, 0), -k.fx * tx / z, 1e-4);
      EXPECT_NEAR(flow.at(x, y, 1), 0.0, 1e-4);
    }
  EXPECT_EQ(valid, w * h - h);  // shift is -0.72 px, so column 0 leaves the image
}

TEST(Flow, BehindCameraAndInvalidAndMargin) {
  const CameraIntrinsics k{10, 10, 1.5, 1.5};
  Pointmap pts(4, 4);
  pts.set(0, 0, {0, 0, 1});
  pts.set(1, 0, {0, 0, -1});                 // behind
  pts.set(2, 0, {10.0 * 0.22, 0, 1});  // lands at u = 23.5, outside
  const auto flow = flow_from_pointmaps(pts, CameraPose{}, k);
  EXPECT_TRUE(flow.valid(0, 0));
  EXPECT_FALSE(flow.valid(1, 0));
  EXPECT_FALSE(flow.valid(2, 0));
  EXPECT_FALSE(flow.valid(3, 3));
  const auto loose = flow_from_pointmaps(pts, CameraPose{}, k, {1e-6, 100.0});
  EXPECT_TRUE(loose.valid(2, 0));
  CameraPose bad;
  bad.rotation(0, 1) = 0.5;
  EXPECT_THROW(flow_from_pointmaps(pts, bad, k), Error);
}

TEST(Flow, MatchesRendererGroundTruth) {
  const auto s = synth_scene(make_synth_config(3), 5);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const auto& fi = s.scene.frames[i];
      const auto& fj = s.scene.frames[j];
      const auto flow = flow_from_pointmaps(fi.pointmap, fj.pose, fj.intrinsics);
      const auto& gt = s.truth.flow(i, j);
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
          if (s.truth.covisible(i, j).at(x, y) < 0.5f) continue;
          ASSERT_TRUE(flow.valid(x, y));
          ASSERT_NEAR(flow.at(x, y, 0), gt.at(x, y, 0), 1e-3);
          ASSERT_NEAR(flow.at(x, y, 1), gt.at(x, y, 1), 1e-3);
        }
    }
}

TEST(Splat, IdentityFlowIsIdentity) {
  Rng rng(1);
  const auto img = testutil::random_image(rng, 9, 7);
  const auto r = softmax_splat(img, constant_flow(9, 7, 0, 0), Raster<float>(9, 7, 1, 0.3f));
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_FLOAT_EQ(r.image.data[i], img.data[i]);
  EXPECT_EQ(r.coverage(), 1.0);
  EXPECT_EQ(r.dropped_weight, 0.0);
}

TEST(Splat, DeltaShift) {
  ImageBuffer img(6, 3, 3, 0.0f);
  for (int c = 0; c < 3; ++c) img.at(1, 1, c) = 1.0f;
  const auto r = softmax_splat(img, constant_flow(6, 3, 2, 0), Raster<float>(6, 3, 1, 0.0f));
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 6; ++x) {
      EXPECT_EQ(r.image.at(x, y, 0), x == 3 && y == 1 ? 1.0f : 0.0f);
      EXPECT_EQ(r.covered(x, y), x >= 2);
    }
  EXPECT_NEAR(r.dropped_weight, 6.0, 1e-12);  // last two columns fall off
}

TEST(Splat, TwoPixelCollision) {
  ImageBuffer img(2, 1, 1, 0.0f);
  img.at(0, 0) = 1.0f;
  FlowField flow(2, 1);
  flow.at(0, 0, 0) = 1.0f;
  flow.at(0, 0, 1) = 0.0f;
  flow.at(1, 0, 0) = 0.0f;
  flow.at(1, 0, 1) = 0.0f;
  Raster<float> z(2, 1, 1);
  z.at(0, 0) = static_cast<float>(std::log(3.0));
  z.at(1, 0) = 0.0f;
  const auto r = softmax_splat(img, flow, z, {1.0, 1e-4});
  EXPECT_EQ(r.image.at(1, 0), 0.75f);
  EXPECT_FALSE(r.covered(0, 0));
}

TEST(Splat, NearSurfaceWinsCollision) {
  ImageBuffer img(2, 1, 1, 0.0f);
  img.at(0, 0) = 1.0f;  // near, white
  FlowField flow = constant_flow(2, 1, 0, 0);
  flow.at(0, 0, 0) = 1.0f;
  DepthMap depth(2, 1);
  depth.at(0, 0) = 1.0f;
  depth.at(1, 0) = 10.0f;
  const auto z = importance_from_depth(depth);
  EXPECT_EQ(z.at(0, 0), 0.0f);
  EXPECT_EQ(z.at(1, 0), -1.0f);
  const auto r = softmax_splat(img, flow, z, {10.0, 1e-4});
  EXPECT_GT(r.image.at(1, 0), 0.99f);
}

TEST(Splat, ConstantDepthGivesPlainAverage) {
  const auto z = importance_from_depth(DepthMap(3, 3, 2.0f));
  for (float v : z.data) EXPECT_EQ(v, 0.0f);
  DepthMap d(2, 1, 2.0f);
  d.at(1, 0) = kInvalid;
  EXPECT_EQ(importance_from_depth(d).at(1, 0), -1.0f);
}

TEST(Splat, ShapeMismatch) {
  try {
    softmax_splat(ImageBuffer(3, 3), constant_flow(3, 2, 0, 0), Raster<float>(3, 3, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(Splat, ConservationShiftInvarianceAndOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 25; ++trial) {
    const int w = 2 + static_cast<int>(rng.below(11));
    const int h = 2 + static_cast<int>(rng.below(11));
    const auto img = testutil::random_image(rng, w, h);
    FlowField flow(w, h);
    Raster<float> z(w, h, 1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        z.at(x, y) = static_cast<float>(-rng.uniform());
        if (rng.uniform() < 0.1) continue;
        flow.at(x, y, 0) = static_cast<float>(3.0 * rng.normal());
        flow.at(x, y, 1) = static_cast<float>(3.0 * rng.normal());
      }
    const double beta = 5.0;
    const auto r = softmax_splat(img, flow, z, {beta, 1e-4});
    double peak = -1e9, expected = 0, got = r.dropped_weight;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (flow.valid(x, y)) peak = std::max(peak, static_cast<double>(z.at(x, y)));
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (flow.valid(x, y)) expected += std::exp(beta * (z.at(x, y) - peak));
    for (double v : r.weight.data) got += v;
    EXPECT_NEAR(got / expected, 1.0, 1e-10);

    Raster<float> shifted = z;
    for (float& v : shifted.data) v += 0.75f;
    const auto r2 = softmax_splat(img, flow, shifted, {beta, 1e-4});
    for (std::size_t i = 0; i < r.image.data.size(); ++i) ASSERT_NEAR(r.image.data[i], r2.image.data[i], 1e-6);
    EXPECT_EQ(r.mask.data, r2.mask.data);

    const auto ref = oracle::splat(img, flow, z, beta);
    for (std::size_t p = 0; p < ref.weight.size(); ++p) {
      ASSERT_NEAR(r.weight.data[p], ref.weight[p], 1e-9);
      if (r.mask.data[p] > 0.5f) {
        for (int c = 0; c < 3; ++c) ASSERT_NEAR(r.image.data[p * 3 + c], ref.color[p * 3 + c], 1e-5);
      }
    }
  }
}

TEST(Splat, MaskFollowsRelativeMassThreshold) {
  // A source pixel landing at (0.99, 0) gives target 0 a kernel mass of 0.01.
  ImageBuffer img(3, 1, 1, 1.0f);
  FlowField flow(3, 1);
  flow.at(0, 0, 0) = 0.99f;
  flow.at(0, 0, 1) = 0.0f;
  flow.at(2, 0, 0) = 0.0f;
  flow.at(2, 0, 1) = 0.0f;
  const Raster<float> z(3, 1, 1, 0.0f);
  auto r = softmax_splat(img, flow, z, {10.0, 0.005});
  EXPECT_TRUE(r.covered(0, 0));
  r = softmax_splat(img, flow, z, {10.0, 0.05});
  EXPECT_FALSE(r.covered(0, 0));
  EXPECT_TRUE(r.covered(1, 0));
}

TEST(Blend, SingleWarpIsUnchanged) {
  Rng rng(3);
  WarpResult w = solid(4, 4, 0.0f, {0, 5, 6});
  w.image = testutil::random_image(rng, 4, 4);
  for (int p = 0; p < 16; ++p)
    if (w.mask.data[p] < 0.5f)
      for (int c = 0; c < 3; ++c) w.image.data[p * 3 + c] = 0.0f;
  const auto out = blend_history({{&w, 3}}, 1.0);
  EXPECT_EQ(out.image.data, w.image.data);
  EXPECT_EQ(out.mask.data, w.mask.data);
  EXPECT_EQ(out.weight.data, w.weight.data);
}

TEST(Blend, DisjointUnionAndHandOverlap) {
  const auto a = solid(2, 1, 1.0f, {0});
  const auto b = solid(2, 1, 0.0f, {1});
  auto out = blend_history({{&a, 1}, {&b, 2}}, 1.0);
  EXPECT_EQ(out.mask.data, (std::vector<float>{1, 1}));
  EXPECT_EQ(out.image.at(0, 0), 1.0f);
  EXPECT_EQ(out.image.at(1, 0), 0.0f);

  const auto c = solid(1, 1, 1.0f, {0});
  const auto d = solid(1, 1, 0.0f, {0});
  out = blend_history({{&c, 1}, {&d, 2}}, std::log(2.0));
  EXPECT_NEAR(out.image.at(0, 0), 2.0 / 3.0, 1e-7);
  EXPECT_EQ(out.weight.at(0, 0), 2.0);
}

TEST(Blend, MonotoneCoverageAndConvexity) {
  Rng rng(4);
  std::vector<WarpResult> ws;
  std::vector<float> colors;
  for (int k = 0; k < 4; ++k) {
    std::vector<int> cov;
    for (int p = 0; p < 25; ++p)
      if (rng.uniform() < 0.4) cov.push_back(p);
    colors.push_back(static_cast<float>(rng.uniform()));
    ws.push_back(solid(5, 5, colors.back(), cov));
  }
  std::vector<AgedWarp> set;
  ImageBuffer prev_mask(5, 5, 1, 0.0f);
  for (int k = 0; k < 4; ++k) {
    set.push_back({&ws[k], k + 1});
    const auto out = blend_history(set, 0.7);
    float lo = 1, hi = 0;
    for (int i = 0; i <= k; ++i) {
      lo = std::min(lo, colors[i]);
      hi = std::max(hi, colors[i]);
    }
    for (int p = 0; p < 25; ++p) {
      EXPECT_GE(out.mask.data[p], prev_mask.data[p]);
      if (out.mask.data[p] > 0.5f) {
        EXPECT_GE(out.image.data[p * 3], lo - 1e-6f);
        EXPECT_LE(out.image.data[p * 3], hi + 1e-6f);
      }
    }
    prev_mask = out.mask;
  }
}

TEST(Blend, Errors) {
  EXPECT_THROW(blend_history({}, 1.0), Error);
  const auto a = solid(2, 1, 1.0f, {0});
  const auto b = solid(3, 1, 1.0f, {0});
  try {
    blend_history({{&a, 1}, {&b, 1}}, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  EXPECT_THROW(blend_history({{&a, 0}}, 1.0), Error);
  EXPECT_DOUBLE_EQ(history_weight(1, 3.0), 1.0);
}

TEST(SelectFrames, Strategies) {
  Rng rng(5);
  EXPECT_EQ(select_frames(2, {1}, FrameStrategy::LastPlusTwoRandom, rng).indices, (std::vector<int>{1}));
  EXPECT_EQ(select_frames(5, {1, 2, 3, 4}, FrameStrategy::LastOnly, rng).indices, (std::vector<int>{4}));
  EXPECT_EQ(select_frames(5, {1, 2, 3, 4}, FrameStrategy::AllHistory, rng).indices, (std::vector<int>{1, 2, 3, 4}));
  std::map<int, int> seen;
  for (int r = 0; r < 600; ++r) {
    const auto sel = select_frames(5, {1, 2, 3, 4}, FrameStrategy::LastPlusTwoRandom, rng).indices;
    ASSERT_EQ(sel.size(), 3u);
    ASSERT_EQ(sel.back(), 4);
    ASSERT_TRUE(std::is_sorted(sel.begin(), sel.end()));
    ASSERT_NE(sel[0], sel[1]);
    seen[sel[0]]++;
    seen[sel[1]]++;
  }
  for (int k : {1, 2, 3}) EXPECT_NEAR(seen[k] / 600.0, 2.0 / 3.0, 0.1);
}

TEST(SelectFrames, DeterministicAndErrors) {
  Rng a(9), b(9), c(9);
  for (int r = 0; r < 20; ++r)
    EXPECT_EQ(select_frames(8, {0, 1, 2, 3, 4, 5, 6, 7}, FrameStrategy::LastPlusTwoRandom, b).indices,
              select_frames(8, {0, 1, 2, 3, 4, 5, 6, 7}, FrameStrategy::LastPlusTwoRandom, c).indices);
  try {
    select_frames(3, {}, FrameStrategy::LastOnly, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyHistory);
  }
  EXPECT_THROW(select_frames(3, {0, 1}, FrameStrategy::LastOnly, a), Error);
}

TEST(Condition, ChannelsAndSerialization) {
  auto w = solid(3, 2, 0.4f, {0, 1, 2, 3, 4, 5});
  const auto cond = compose_condition(w, DepthMap(3, 2, 1.0f));
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x) {
      EXPECT_EQ(cond.at(x, y, RefinerCondition::kMaskChannel), 1.0f);
      EXPECT_EQ(cond.at(x, y, RefinerCondition::kDepthChannel), 0.0f);
      EXPECT_EQ(cond.at(x, y, 1), 0.4f);
    }
  w = solid(3, 2, 0.4f, {0});
  DepthMap d(3, 2, 2.0f);
  d.at(2, 1) = 4.0f;
  const auto c2 = compose_condition(w, d);
  EXPECT_EQ(c2.at(1, 0, 0), 0.0f);  // uncovered RGB zeroed
  EXPECT_EQ(c2.at(2, 1, RefinerCondition::kDepthChannel), 1.0f);
  testutil::TempDir dir;
  write_raster(c2, dir / "c.rscn");
  EXPECT_TRUE(bit_equal(c2, read_raster<RefinerCondition>(dir / "c.rscn")));
  EXPECT_THROW(compose_condition(w, DepthMap(2, 2, 1.0f)), Error);
}

TEST(Geometry, WarpReproducesTargetOnCovisiblePixels) {
  const auto s = synth_scene(make_synth_config(3), 6);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      const auto& fi = s.scene.frames[i];
      const auto& fj = s.scene.frames[j];
      const auto r = softmax_splat(fi.image, flow_from_pointmaps(fi.pointmap, fj.pose, fj.intrinsics),
                                   importance_from_depth(fi.depth));
      double err = 0;
      int n = 0;
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
          if (s.truth.covisible(j, i).at(x, y) < 0.5f || !r.covered(x, y)) continue;
          for (int c = 0; c < 3; ++c) err += std::abs(r.image.at(x, y, c) - fj.image.at(x, y, c));
          n += 3;
        }
      ASSERT_GT(n, 0);
      EXPECT_LE(err / n, 2.0 / 255.0) << i << "->" << j;
    }
}
