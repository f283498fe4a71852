#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "restyle/error.hpp"
#include "restyle/parallel.hpp"
#include "restyle/raster.hpp"
#include "restyle/rng.hpp"

namespace restyle {

struct FlowParams {
  /// Points at or closer than this camera depth are dropped.
  double z_min = 1e-6;
  /// Extra tolerance, in pixels, around the target image bounds.
  double margin = 0.0;
};

/// Reprojects a world pointmap into camera j. Pixels whose point is behind
/// the camera or lands outside the target image are marked invalid.
inline FlowField flow_from_pointmaps(const Pointmap& points, const CameraPose& pose_j, const CameraIntrinsics& k_j,
                                     const FlowParams& params = {}) {
  validate(pose_j, "target pose");
  validate(k_j, "target intrinsics");
  const int w = points.width;
  const int h = points.height;
  FlowField flow(w, h);
  parallel_for(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      if (!points.valid(x, y)) continue;
      const Eigen::Vector3d cam = pose_j.to_camera(points.point(x, y));
      if (cam.z() <= params.z_min) continue;
      const Eigen::Vector2d uv = k_j.project(cam);
      const double lo = -0.5 - params.margin;
      if (uv.x() < lo || uv.y() < lo || uv.x() >= w - 0.5 + params.margin || uv.y() >= h - 0.5 + params.margin) continue;
      flow.at(x, y, 0) = static_cast<float>(uv.x() - x);
      flow.at(x, y, 1) = static_cast<float>(uv.y() - y);
    }
  });
  return flow;
}

struct SplatParams {
  /// Sharpness applied to the importance metric.
  double beta = 10.0;
  /// Coverage threshold relative to the largest per-pixel kernel mass.
  double eps_cov = 1e-4;
};

struct WarpResult {
  ImageBuffer image;
  /// 1 where covered.
  ImageBuffer mask;
  /// Accumulated splat denominator per target pixel.
  Raster<double> weight;
  /// Accumulated bilinear kernel mass, before importance weighting. Coverage
  /// is decided on this, since e^{beta Z} alone would push far surfaces below
  /// any relative threshold.
  Raster<double> mass;
  /// Splat mass that fell outside the target image.
  double dropped_weight = 0.0;

  bool covered(int x, int y) const { return mask.at(x, y) > 0.5f; }
  double coverage() const {
    double n = 0.0;
    for (float v : mask.data) n += v > 0.5f ? 1.0 : 0.0;
    return mask.data.empty() ? 0.0 : n / static_cast<double>(mask.data.size());
  }
};

/// Forward splat with a bilinear kernel, each source pixel weighted by
/// exp(beta * (Z_p - max Z)). Accumulation is sequential row-major, so the
/// result is bit-reproducible.
inline WarpResult softmax_splat(const ImageBuffer& image, const FlowField& flow, const Raster<float>& importance,
                                const SplatParams& params = {}) {
  require(image.same_extent(flow) && image.same_extent(importance) && importance.channels == 1,
          ErrorCode::ShapeMismatch, "image, flow and importance must share extent");
  const int w = image.width;
  const int h = image.height;
  const int ch = image.channels;

  double peak = -std::numeric_limits<double>::infinity();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (flow.valid(x, y) && std::isfinite(importance.at(x, y))) peak = std::max(peak, static_cast<double>(importance.at(x, y)));

  Raster<double> numer(w, h, ch, 0.0);
  WarpResult out;
  out.weight = Raster<double>(w, h, 1, 0.0);
  out.mass = Raster<double>(w, h, 1, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!flow.valid(x, y) || !std::isfinite(importance.at(x, y))) continue;
      const double e = std::exp(params.beta * (importance.at(x, y) - peak));
      const double qx = x + static_cast<double>(flow.at(x, y, 0));
      const double qy = y + static_cast<double>(flow.at(x, y, 1));
      const double fx0 = std::floor(qx);
      const double fy0 = std::floor(qy);
      const double ax = qx - fx0;
      const double ay = qy - fy0;
      const int x0 = static_cast<int>(fx0);
      const int y0 = static_cast<int>(fy0);
      const int tx[4] = {x0, x0 + 1, x0, x0 + 1};
      const int ty[4] = {y0, y0, y0 + 1, y0 + 1};
      const double kernel[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
      for (int n = 0; n < 4; ++n) {
        const double wgt = e * kernel[n];
        if (wgt == 0.0) continue;
        if (tx[n] < 0 || ty[n] < 0 || tx[n] >= w || ty[n] >= h) {
          out.dropped_weight += wgt;
          continue;
        }
        out.weight.at(tx[n], ty[n]) += wgt;
        out.mass.at(tx[n], ty[n]) += kernel[n];
        for (int c = 0; c < ch; ++c) numer.at(tx[n], ty[n], c) += wgt * image.at(x, y, c);
      }
    }
  }

  double max_mass = 0.0;
  for (double v : out.mass.data) max_mass = std::max(max_mass, v);
  const double threshold = params.eps_cov * max_mass;
  out.image = ImageBuffer(w, h, ch, 0.0f);
  out.mask = ImageBuffer(w, h, 1, 0.0f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d = out.weight.at(x, y);
      if (!(out.mass.at(x, y) > threshold) || !(d > 0.0)) continue;
      out.mask.at(x, y) = 1.0f;
      for (int c = 0; c < ch; ++c) out.image.at(x, y, c) = static_cast<float>(numer.at(x, y, c) / d);
    }
  return out;
}

/// Z = -(depth - min) / (max - min): nearer surfaces get larger importance.
/// Constant depth maps to 0; invalid depth maps to -1.
inline Raster<float> importance_from_depth(const DepthMap& depth) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (int y = 0; y < depth.height; ++y)
    for (int x = 0; x < depth.width; ++x)
      if (depth.valid(x, y)) {
        lo = std::min(lo, static_cast<double>(depth.at(x, y)));
        hi = std::max(hi, static_cast<double>(depth.at(x, y)));
      }
  Raster<float> z(depth.width, depth.height, 1, -1.0f);
  const double range = hi - lo;
  for (int y = 0; y < depth.height; ++y)
    for (int x = 0; x < depth.width; ++x) {
      if (!depth.valid(x, y)) continue;
      z.at(x, y) = range > 0.0 ? static_cast<float>(-(depth.at(x, y) - lo) / range) : 0.0f;
    }
  return z;
}

struct AgedWarp {
  const WarpResult* warp = nullptr;
  /// Frame distance j - k, >= 1.
  int age = 1;
};

inline double history_weight(int age, double gamma) { return std::exp(-gamma * (age - 1)); }

/// Per pixel, a normalized exp(-gamma (age - 1)) average over the warps that
/// cover it. Mask is the union; weight sums the contributing splat weights.
inline WarpResult blend_history(const std::vector<AgedWarp>& warps, double gamma) {
  require(!warps.empty(), ErrorCode::EmptyList, "blend_history needs at least one warp");
  const WarpResult& first = *warps.front().warp;
  for (const auto& aw : warps) {
    require(aw.warp && aw.warp->image.same_extent(first.image) && aw.warp->image.channels == first.image.channels,
            ErrorCode::DimensionMismatch, "warps must share extent and channels");
    require(aw.age >= 1, ErrorCode::InvalidParams, "warp age must be >= 1");
  }
  const int w = first.image.width;
  const int h = first.image.height;
  const int ch = first.image.channels;
  WarpResult out;
  out.image = ImageBuffer(w, h, ch, 0.0f);
  out.mask = ImageBuffer(w, h, 1, 0.0f);
  out.weight = Raster<double>(w, h, 1, 0.0);
  out.mass = Raster<double>(w, h, 1, 0.0);
  for (const auto& aw : warps) out.dropped_weight += aw.warp->dropped_weight;

  parallel_for(h, [&](int y) {
    std::vector<double> acc(static_cast<std::size_t>(ch));
    for (int x = 0; x < w; ++x) {
      double total = 0.0;
      std::fill(acc.begin(), acc.end(), 0.0);
      for (const auto& aw : warps) {
        if (!aw.warp->covered(x, y)) continue;
        const double wk = history_weight(aw.age, gamma);
        total += wk;
        for (int c = 0; c < ch; ++c) acc[static_cast<std::size_t>(c)] += wk * aw.warp->image.at(x, y, c);
        if (!aw.warp->weight.data.empty()) out.weight.at(x, y) += aw.warp->weight.at(x, y);
        if (!aw.warp->mass.data.empty()) out.mass.at(x, y) += aw.warp->mass.at(x, y);
      }
      if (total <= 0.0) continue;
      out.mask.at(x, y) = 1.0f;
      for (int c = 0; c < ch; ++c) out.image.at(x, y, c) = static_cast<float>(acc[static_cast<std::size_t>(c)] / total);
    }
  });
  return out;
}

enum class FrameStrategy { LastOnly, AllHistory, LastPlusTwoRandom };

struct FrameSelection {
  FrameStrategy strategy = FrameStrategy::LastPlusTwoRandom;
  std::vector<int> indices;  // ascending
};

/// Source frames for target j. The previous frame j-1 is always included;
/// LastPlusTwoRandom adds two distinct uniform picks from the rest of history.
inline FrameSelection select_frames(int j, const std::vector<int>& history, FrameStrategy strategy, Rng& rng) {
  require(!history.empty(), ErrorCode::EmptyHistory, "no stylized frames to warp from for frame " + std::to_string(j));
  const std::set<int> unique(history.begin(), history.end());
  require(*unique.rbegin() == j - 1, ErrorCode::InvalidParams,
          "history must end at frame " + std::to_string(j - 1) + " for target " + std::to_string(j));
  FrameSelection sel;
  sel.strategy = strategy;
  switch (strategy) {
    case FrameStrategy::LastOnly:
      sel.indices = {j - 1};
      break;
    case FrameStrategy::AllHistory:
      sel.indices.assign(unique.begin(), unique.end());
      break;
    case FrameStrategy::LastPlusTwoRandom: {
      std::vector<int> older(unique.begin(), std::prev(unique.end()));
      // partial Fisher-Yates
      const std::size_t picks = std::min<std::size_t>(2, older.size());
      for (std::size_t i = 0; i < picks; ++i) {
        const std::size_t r = i + static_cast<std::size_t>(rng.below(older.size() - i));
        std::swap(older[i], older[r]);
      }
      sel.indices.assign(older.begin(), older.begin() + static_cast<std::ptrdiff_t>(picks));
      sel.indices.push_back(j - 1);
      std::sort(sel.indices.begin(), sel.indices.end());
      break;
    }
  }
  return sel;
}

/// Channels: warped RGB, warp mask, per-frame normalized depth.
inline RefinerCondition compose_condition(const WarpResult& warped, const DepthMap& depth) {
  require(warped.image.channels == 3, ErrorCode::DimensionMismatch, "warped image must be RGB");
  require(warped.image.same_extent(depth) && warped.mask.same_extent(depth), ErrorCode::DimensionMismatch,
          "warp is " + extent_string(warped.image.width, warped.image.height) + ", depth is " +
              extent_string(depth.width, depth.height));
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (int y = 0; y < depth.height; ++y)
    for (int x = 0; x < depth.width; ++x)
      if (depth.valid(x, y)) {
        lo = std::min(lo, static_cast<double>(depth.at(x, y)));
        hi = std::max(hi, static_cast<double>(depth.at(x, y)));
      }
  const double range = hi - lo;
  RefinerCondition cond(depth.width, depth.height);
  for (int y = 0; y < depth.height; ++y)
    for (int x = 0; x < depth.width; ++x) {
      const bool covered = warped.covered(x, y);
      for (int c = 0; c < 3; ++c) cond.at(x, y, c) = covered ? warped.image.at(x, y, c) : 0.0f;
      cond.at(x, y, RefinerCondition::kMaskChannel) = covered ? 1.0f : 0.0f;
      cond.at(x, y, RefinerCondition::kDepthChannel) =
          depth.valid(x, y) && range > 0.0 ? static_cast<float>((depth.at(x, y) - lo) / range) : 0.0f;
    }
  return cond;
}

}  // namespace restyle
