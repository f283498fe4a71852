#include <gtest/gtest.h>

#include "oracles.hpp"
#include "restyle/metrics.hpp"
#include "test_util.hpp"

using namespace restyle;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidValue;
}

std::vector<CameraPose> random_trajectory(Rng& rng, int n) {
  std::vector<CameraPose> out;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d c(rng.normal(), rng.normal(), rng.normal());
    out.push_back(CameraPose::from_center(c, testutil::random_rotation(rng)));
  }
  return out;
}

}  // namespace

TEST(DepthMetrics, MatchesOracleUnderRandomMasks) {
  Rng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const int w = 3 + static_cast<int>(rng.below(10)), h = 3 + static_cast<int>(rng.below(10));
    DepthMap pred(w, h), ref(w, h);
    ImageBuffer mask(w, h, 1);
    std::vector<double> p, g;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        ref.at(x, y) = static_cast<float>(0.5 + 4 * rng.uniform());
        pred.at(x, y) = static_cast<float>(ref.at(x, y) * (0.6 + 0.8 * rng.uniform()));
        mask.at(x, y) = rng.uniform() < 0.7 ? 1.0f : 0.0f;
        if (rng.uniform() < 0.1) pred.at(x, y) = std::numeric_limits<float>::quiet_NaN();
        if (mask.at(x, y) > 0 && pred.valid(x, y)) {
          p.push_back(pred.at(x, y));
          g.push_back(ref.at(x, y));
        }
      }
    if (p.empty()) continue;
    const auto r = depth_metrics(pred, ref, &mask);
    const auto o = oracle::depth_metrics(p, g);
    EXPECT_EQ(r.valid_pixels, p.size());
    EXPECT_NEAR(r.abs_rel, o.abs_rel, 1e-9);
    EXPECT_NEAR(r.sq_rel, o.sq_rel, 1e-9);
    EXPECT_NEAR(r.delta1, o.delta1, 1e-9);
  }
}

TEST(DepthMetrics, HandCases) {
  DepthMap pred(2, 1, 1.3f), ref(2, 1, 1.0f);
  auto r = depth_metrics(pred, ref);
  EXPECT_EQ(r.delta1, 0.0);
  EXPECT_NEAR(r.abs_rel, 30.0, 1e-4);
  pred.at(1, 0) = 1.2f;
  EXPECT_EQ(depth_metrics(pred, ref).delta1, 50.0);
  EXPECT_EQ(depth_metrics(ref, ref).abs_rel, 0.0);
  ImageBuffer empty(2, 1, 1, 0.0f);
  EXPECT_EQ(code_of([&] { depth_metrics(pred, ref, &empty); }), ErrorCode::EmptyMask);
  EXPECT_EQ(code_of([&] { depth_metrics(pred, DepthMap(3, 1, 1.0f)); }), ErrorCode::DimensionMismatch);
}

TEST(Psnr, OracleAndEdgeCases) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = testutil::random_image(rng, 9, 7, 3);
    const auto b = testutil::random_image(rng, 9, 7, 3);
    std::vector<double> va(a.data.begin(), a.data.end()), vb(b.data.begin(), b.data.end());
    EXPECT_NEAR(psnr(a, b), oracle::psnr(va, vb), 1e-9);
  }
  ImageBuffer a(4, 4, 3, 0.5f), b(4, 4, 3, 0.6f);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-5);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  ImageBuffer mask(4, 4, 1, 0.0f);
  EXPECT_EQ(code_of([&] { psnr(a, b, &mask); }), ErrorCode::EmptyMask);
  mask.at(0, 0) = 1.0f;
  b.at(1, 1, 0) = 0.0f;  // outside the mask
  EXPECT_NEAR(psnr(a, b, &mask), 20.0, 1e-5);
}

TEST(Ssim, OracleAndHandCases) {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const auto a = testutil::random_image(rng, 16, 13, 3);
    auto b = a;
    for (auto& v : b.data) v = std::clamp(v + static_cast<float>(0.1 * rng.normal()), 0.0f, 1.0f);
    EXPECT_NEAR(ssim(a, b), oracle::ssim(a, b), 1e-9);
  }
  const auto a = testutil::random_image(rng, 12, 12, 3);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  // Flat black vs flat white: luminance term is c1 / (1 + c1).
  EXPECT_NEAR(ssim(ImageBuffer(11, 11, 1, 0.0f), ImageBuffer(11, 11, 1, 1.0f)), 1e-4 / (1 + 1e-4), 1e-12);
  EXPECT_EQ(code_of([] { ssim(ImageBuffer(10, 20, 3), ImageBuffer(10, 20, 3)); }), ErrorCode::TooSmall);
}

TEST(Rotation, AngleAndProjection) {
  const Eigen::Matrix3d r = Eigen::AngleAxisd(0.3, Eigen::Vector3d::UnitY()).toRotationMatrix();
  EXPECT_NEAR(rotation_angle_deg(r, Eigen::Matrix3d::Identity()), 0.3 * 180 / M_PI, 1e-9);
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const auto a = testutil::random_rotation(rng);
    const auto b = testutil::random_rotation(rng);
    EXPECT_NEAR(rotation_angle_deg(a, b), oracle::rotation_deg(a, b), 1e-6);
    EXPECT_TRUE(project_to_rotation(a).isApprox(a, 1e-12));
  }
}

TEST(PoseErrors, RecoverSimilarityAndMatchHorn) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ref = random_trajectory(rng, 4 + static_cast<int>(rng.below(6)));
    Similarity sim;
    sim.scale = 0.3 + 2 * rng.uniform();
    sim.rotation = testutil::random_rotation(rng);
    sim.translation = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    // est = sim^-1(ref), then perturb
    std::vector<CameraPose> est;
    std::vector<Eigen::Vector3d> ce, cr;
    for (const auto& p : ref) {
      const Eigen::Vector3d c = sim.rotation.transpose() * (p.center() - sim.translation) / sim.scale;
      CameraPose e = CameraPose::from_center(c + 0.01 * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()),
                                             (p.rotation * sim.rotation).transpose());
      est.push_back(e);
      ce.push_back(e.center());
      cr.push_back(p.center());
    }
    const auto report = pose_errors(est, ref);
    const auto h = oracle::horn(ce, cr);
    EXPECT_NEAR(report.alignment.scale, h.s, 1e-8);
    EXPECT_TRUE(report.alignment.rotation.isApprox(h.r, 1e-8));
    EXPECT_TRUE(report.alignment.translation.isApprox(h.t, 1e-8) || (report.alignment.translation - h.t).norm() < 1e-8);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      const CameraPose a = report.alignment.apply(est[i]);
      EXPECT_NEAR(report.rotation_deg[i], oracle::rotation_deg(a.rotation, ref[i].rotation), 1e-6);
      EXPECT_NEAR(report.translation_cm[i], 100 * (a.translation - ref[i].translation).norm(), 1e-9);
    }
  }
}

TEST(PoseErrors, ExactSimilarityGivesZero) {
  Rng rng(6);
  const auto ref = random_trajectory(rng, 6);
  const Eigen::Matrix3d q = testutil::random_rotation(rng);
  std::vector<CameraPose> est;
  for (const auto& p : ref)
    est.push_back(CameraPose::from_center(0.5 * q.transpose() * p.center(), (p.rotation * q).transpose()));
  const auto r = pose_errors(est, ref);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    EXPECT_LT(r.rotation_deg[i], 1e-5);
    EXPECT_LT(r.translation_cm[i], 1e-7);
  }
  const auto rel = relative_pose_errors(est, ref);
  EXPECT_EQ(rel.rotation_deg.size(), 15u);
  for (double e : rel.translation_cm) EXPECT_LT(e, 1e-7);
}

TEST(PoseErrors, CollinearCentersUseOrientations) {
  std::vector<CameraPose> ref, est;
  const Eigen::Matrix3d q = Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  for (int i = 0; i < 5; ++i) {
    const Eigen::Matrix3d o = Eigen::AngleAxisd(0.1 * i, Eigen::Vector3d::UnitY()).toRotationMatrix();
    ref.push_back(CameraPose::from_center(Eigen::Vector3d(0.2 * i, 0, 0), o));
    est.push_back(CameraPose::from_center(2.0 * q.transpose() * Eigen::Vector3d(0.2 * i, 0, 0), q.transpose() * o));
  }
  const auto r = pose_errors(est, ref);
  EXPECT_NEAR(r.alignment.scale, 0.5, 1e-9);
  for (double e : r.rotation_deg) EXPECT_LT(e, 1e-5);
  for (double e : r.translation_cm) EXPECT_LT(e, 1e-7);
}

TEST(PoseErrors, Errors) {
  Rng rng(7);
  const auto a = random_trajectory(rng, 3);
  EXPECT_EQ(code_of([&] { pose_errors(a, random_trajectory(rng, 4)); }), ErrorCode::LengthMismatch);
  std::vector<CameraPose> same(3, a[0]);
  EXPECT_EQ(code_of([&] { pose_errors(same, a); }), ErrorCode::DegenerateAlignment);
}

TEST(PoseAuc, OracleAndHandCases) {
  EXPECT_NEAR(pose_auc({2, 8}, 10), 50.0, 1e-12);
  EXPECT_EQ(pose_auc({0, 0}, 5), 100.0);
  EXPECT_EQ(pose_auc({20, 30}, 5), 0.0);
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> e(1 + rng.below(30));
    for (auto& v : e) v = 10 * rng.uniform();
    const double tau = 0.5 + 8 * rng.uniform();
    EXPECT_NEAR(pose_auc(e, tau), oracle::auc(e, tau), 1e-9);
  }
  EXPECT_EQ(code_of([] { pose_auc({}, 5); }), ErrorCode::EmptyErrors);
  EXPECT_THROW(pose_auc({1}, 0), Error);
  EXPECT_THROW(pose_auc({-1}, 5), Error);
}
