#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "restyle/error.hpp"
#include "restyle/raster.hpp"

namespace restyle {

namespace detail {

inline bool mask_on(const ImageBuffer* mask, int x, int y) { return !mask || mask->at(x, y) > 0.5f; }

inline void check_mask(const Raster<float>& a, const ImageBuffer* mask) {
  if (mask)
    require(mask->same_extent(a) && mask->channels == 1, ErrorCode::DimensionMismatch,
            "mask is " + extent_string(mask->width, mask->height) + ", expected " + extent_string(a.width, a.height));
}

}  // namespace detail

struct DepthMetricsReport {
  double abs_rel = 0.0;  // percent
  double sq_rel = 0.0;   // x100
  double delta1 = 0.0;   // percent
  std::size_t valid_pixels = 0;
};

/// Means over pixels where the mask is set and both depths are valid.
inline DepthMetricsReport depth_metrics(const DepthMap& pred, const DepthMap& ref, const ImageBuffer* mask = nullptr) {
  require(pred.same_extent(ref), ErrorCode::DimensionMismatch,
          "pred is " + extent_string(pred.width, pred.height) + ", ref is " + extent_string(ref.width, ref.height));
  detail::check_mask(pred, mask);
  DepthMetricsReport r;
  double abs_rel = 0.0, sq_rel = 0.0, good = 0.0;
  for (int y = 0; y < pred.height; ++y)
    for (int x = 0; x < pred.width; ++x) {
      if (!detail::mask_on(mask, x, y) || !pred.valid(x, y) || !ref.valid(x, y)) continue;
      const double p = pred.at(x, y);
      const double g = ref.at(x, y);
      abs_rel += std::abs(p - g) / g;
      sq_rel += (p - g) * (p - g) / g;
      good += std::max(p / g, g / p) < 1.25 ? 1.0 : 0.0;
      ++r.valid_pixels;
    }
  require(r.valid_pixels > 0, ErrorCode::EmptyMask, "no valid depth pixels under the mask");
  const double n = static_cast<double>(r.valid_pixels);
  r.abs_rel = 100.0 * abs_rel / n;
  r.sq_rel = 100.0 * sq_rel / n;
  r.delta1 = 100.0 * good / n;
  return r;
}

/// Peak 1.0. Returns +inf when the images agree exactly.
inline double psnr(const ImageBuffer& a, const ImageBuffer& b, const ImageBuffer* mask = nullptr) {
  require(a.same_extent(b) && a.channels == b.channels, ErrorCode::DimensionMismatch,
          "images are " + extent_string(a.width, a.height) + " and " + extent_string(b.width, b.height));
  detail::check_mask(a, mask);
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      if (!detail::mask_on(mask, x, y)) continue;
      for (int c = 0; c < a.channels; ++c) {
        const double d = static_cast<double>(a.at(x, y, c)) - b.at(x, y, c);
        sum += d * d;
        ++n;
      }
    }
  require(n > 0, ErrorCode::EmptyMask, "psnr mask selects no pixels");
  const double mse = sum / static_cast<double>(n);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

inline Raster<double> to_gray(const ImageBuffer& image) {
  require(image.channels == 1 || image.channels == 3, ErrorCode::DimensionMismatch, "gray conversion needs 1 or 3 channels");
  Raster<double> g(image.width, image.height, 1);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      g.at(x, y) = image.channels == 1
                       ? image.at(x, y)
                       : 0.299 * image.at(x, y, 0) + 0.587 * image.at(x, y, 1) + 0.114 * image.at(x, y, 2);
  return g;
}

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double range = 1.0;
};

/// Mean SSIM over fully contained windows (no padding), Gaussian weighted.
inline double ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimParams& params = {}) {
  require(a.same_extent(b) && a.channels == b.channels, ErrorCode::DimensionMismatch,
          "images are " + extent_string(a.width, a.height) + " and " + extent_string(b.width, b.height));
  const int win = params.window;
  require(a.width >= win && a.height >= win, ErrorCode::TooSmall,
          "ssim needs at least " + extent_string(win, win) + ", got " + extent_string(a.width, a.height));
  const Raster<double> ga = to_gray(a);
  const Raster<double> gb = to_gray(b);

  std::vector<double> kernel(static_cast<std::size_t>(win));
  double ksum = 0.0;
  for (int i = 0; i < win; ++i) {
    const double d = i - (win - 1) / 2.0;
    kernel[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * params.sigma * params.sigma));
    ksum += kernel[static_cast<std::size_t>(i)];
  }
  for (double& k : kernel) k /= ksum;

  const int ow = a.width - win + 1;
  const int oh = a.height - win + 1;
  // Separable filter: horizontal pass into 5 moment planes, then vertical.
  const int w = a.width;
  Raster<double> horiz(ow, a.height, 5, 0.0);
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < ow; ++x)
      for (int i = 0; i < win; ++i) {
        const double k = kernel[static_cast<std::size_t>(i)];
        const double va = ga.data[static_cast<std::size_t>(y) * w + x + i];
        const double vb = gb.data[static_cast<std::size_t>(y) * w + x + i];
        horiz.at(x, y, 0) += k * va;
        horiz.at(x, y, 1) += k * vb;
        horiz.at(x, y, 2) += k * va * va;
        horiz.at(x, y, 3) += k * vb * vb;
        horiz.at(x, y, 4) += k * va * vb;
      }
  const double c1 = (params.k1 * params.range) * (params.k1 * params.range);
  const double c2 = (params.k2 * params.range) * (params.k2 * params.range);
  double total = 0.0;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double m[5] = {0, 0, 0, 0, 0};
      for (int i = 0; i < win; ++i)
        for (int c = 0; c < 5; ++c) m[c] += kernel[static_cast<std::size_t>(i)] * horiz.at(x, y + i, c);
      const double va = m[2] - m[0] * m[0];
      const double vb = m[3] - m[1] * m[1];
      const double cov = m[4] - m[0] * m[1];
      total += ((2 * m[0] * m[1] + c1) * (2 * cov + c2)) / ((m[0] * m[0] + m[1] * m[1] + c1) * (va + vb + c2));
    }
  return total / (static_cast<double>(ow) * oh);
}

// ---------------------------------------------------------------------------
// Poses

inline double rotation_angle_deg(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const double c = std::clamp(((a * b.transpose()).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

inline Eigen::Matrix3d project_to_rotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2, 2) = -1;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

/// world_ref = scale * rotation * world_est + translation
struct Similarity {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  CameraPose apply(const CameraPose& est) const {
    const Eigen::Matrix3d r = est.rotation * rotation.transpose();
    const Eigen::Vector3d c = scale * rotation * est.center() + translation;
    CameraPose out;
    out.rotation = r;
    out.translation = -r * c;
    return out;
  }
};

/// Closed-form similarity mapping estimated camera centers onto reference
/// centers (Umeyama). When the centers do not span a plane the rotation about
/// their line is unobservable, so the rotation is taken from the camera
/// orientations instead (chordal mean) and scale/offset fitted afterwards.
inline Similarity align_trajectories(const std::vector<CameraPose>& est, const std::vector<CameraPose>& ref) {
  require(est.size() == ref.size(), ErrorCode::LengthMismatch,
          "estimated has " + std::to_string(est.size()) + " poses, reference has " + std::to_string(ref.size()));
  require(est.size() >= 2, ErrorCode::LengthMismatch, "alignment needs at least 2 poses");
  const std::size_t n = est.size();
  Eigen::Matrix3Xd ce(3, n), cr(3, n);
  for (std::size_t i = 0; i < n; ++i) {
    ce.col(static_cast<Eigen::Index>(i)) = est[i].center();
    cr.col(static_cast<Eigen::Index>(i)) = ref[i].center();
  }
  const Eigen::Vector3d me = ce.rowwise().mean();
  const Eigen::Vector3d mr = cr.rowwise().mean();
  const Eigen::Matrix3Xd de = ce.colwise() - me;
  const Eigen::Matrix3Xd dr = cr.colwise() - mr;
  const double var_e = de.squaredNorm();
  const double spread_r = dr.squaredNorm();
  const double scale_ref = std::max(1.0, me.norm());
  require(var_e > 1e-18 * scale_ref * scale_ref && spread_r > 1e-18 * std::max(1.0, mr.squaredNorm()),
          ErrorCode::DegenerateAlignment, "camera centers coincide");

  Similarity sim;
  Eigen::JacobiSVD<Eigen::Matrix3Xd> spread(de, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto sv = spread.singularValues();
  if (sv(1) > 1e-9 * sv(0)) {
    const Eigen::Matrix3d cov = dr * de.transpose() / static_cast<double>(n);
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) s(2, 2) = -1;
    sim.rotation = svd.matrixU() * s * svd.matrixV().transpose();
    sim.scale = (svd.singularValues().asDiagonal() * s).trace() / (var_e / static_cast<double>(n));
  } else {
    Eigen::Matrix3d sum = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < n; ++i) sum += ref[i].rotation.transpose() * est[i].rotation;
    sim.rotation = project_to_rotation(sum);
    sim.scale = (dr.cwiseProduct(sim.rotation * de)).sum() / var_e;
  }
  sim.translation = mr - sim.scale * sim.rotation * me;
  return sim;
}

struct PoseErrorReport {
  std::vector<double> rotation_deg;
  std::vector<double> translation_cm;
  Similarity alignment;
};

/// Absolute errors after similarity alignment. Translation compares the
/// world-to-camera translation vectors, in centimeters (scene units are meters).
inline PoseErrorReport pose_errors(const std::vector<CameraPose>& est, const std::vector<CameraPose>& ref) {
  PoseErrorReport report;
  report.alignment = align_trajectories(est, ref);
  for (std::size_t i = 0; i < est.size(); ++i) {
    const CameraPose aligned = report.alignment.apply(est[i]);
    report.rotation_deg.push_back(rotation_angle_deg(aligned.rotation, ref[i].rotation));
    report.translation_cm.push_back(100.0 * (aligned.translation - ref[i].translation).norm());
  }
  return report;
}

/// Errors of relative motions i -> j for every pair i < j, with estimated
/// translations rescaled by the trajectory alignment scale.
inline PoseErrorReport relative_pose_errors(const std::vector<CameraPose>& est, const std::vector<CameraPose>& ref) {
  PoseErrorReport report;
  report.alignment = align_trajectories(est, ref);
  for (std::size_t i = 0; i < est.size(); ++i)
    for (std::size_t j = i + 1; j < est.size(); ++j) {
      const Eigen::Matrix3d re = est[j].rotation * est[i].rotation.transpose();
      const Eigen::Matrix3d rr = ref[j].rotation * ref[i].rotation.transpose();
      const Eigen::Vector3d te = est[j].translation - re * est[i].translation;
      const Eigen::Vector3d tr = ref[j].translation - rr * ref[i].translation;
      report.rotation_deg.push_back(rotation_angle_deg(re, rr));
      report.translation_cm.push_back(100.0 * (report.alignment.scale * te - tr).norm());
    }
  return report;
}

/// Normalized area under the cumulative error curve on [0, threshold], percent.
inline double pose_auc(std::vector<double> errors, double threshold) {
  require(!errors.empty(), ErrorCode::EmptyErrors, "no errors to summarize");
  require(threshold > 0.0 && std::isfinite(threshold), ErrorCode::InvalidParams, "AUC threshold must be positive");
  for (double e : errors) require(e >= 0.0 && !std::isnan(e), ErrorCode::InvalidValue, "errors must be >= 0");
  std::sort(errors.begin(), errors.end());
  const double n = static_cast<double>(errors.size());
  double area = 0.0;
  // CDF equals (k+1)/n on [e_k, e_{k+1}).
  for (std::size_t k = 0; k < errors.size(); ++k) {
    if (errors[k] >= threshold) break;
    const double next = k + 1 < errors.size() ? std::min(errors[k + 1], threshold) : threshold;
    area += (next - errors[k]) * static_cast<double>(k + 1) / n;
  }
  return 100.0 * area / threshold;
}

}  // namespace restyle
