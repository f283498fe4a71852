#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "restyle/error.hpp"
#include "restyle/parallel.hpp"
#include "restyle/raster.hpp"
#include "restyle/rng.hpp"
#include "restyle/scene_io.hpp"

namespace restyle {

/// Smooth procedural texture over plane coordinates (meters):
/// color = base + amplitude * (sin(2 pi u / period_u + phase_u) + sin(2 pi v / period_v + phase_v)) / 2
struct PlaneTexture {
  std::array<double, 3> base{0.5, 0.5, 0.5};
  std::array<double, 3> amplitude{0.1, 0.1, 0.1};
  double period_u = 2.0;
  double period_v = 2.0;
  double phase_u = 0.0;
  double phase_v = 0.0;

  std::array<double, 3> color(double u, double v) const {
    const double wave = 0.5 * (std::sin(2.0 * std::numbers::pi * u / period_u + phase_u) +
                               std::sin(2.0 * std::numbers::pi * v / period_v + phase_v));
    std::array<double, 3> c{};
    for (int k = 0; k < 3; ++k) c[k] = std::clamp(base[k] + amplitude[k] * wave, 0.0, 1.0);
    return c;
  }
};

/// Textured plane through `origin` spanned by orthonormal axes u, v.
/// A half extent of 0 leaves that direction unbounded.
struct PlaneSpec {
  std::string label;
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d axis_u = Eigen::Vector3d::UnitX();
  Eigen::Vector3d axis_v = Eigen::Vector3d::UnitY();
  double half_u = 0.0;
  double half_v = 0.0;
  /// Period of the texture along each axis; colors and phases come from the seed
  /// unless `texture` is set.
  double period_u = 2.0;
  double period_v = 2.0;
  std::optional<PlaneTexture> texture;

  Eigen::Vector3d normal() const { return axis_u.cross(axis_v).normalized(); }

  /// Ray parameter s > 0 of the hit C + s*d, if any, within the extent.
  std::optional<double> intersect(const Eigen::Vector3d& c, const Eigen::Vector3d& d) const {
    const Eigen::Vector3d n = normal();
    const double denom = n.dot(d);
    if (std::abs(denom) < 1e-12) return std::nullopt;
    const double s = n.dot(origin - c) / denom;
    if (!(s > 1e-9)) return std::nullopt;
    const Eigen::Vector3d local = c + s * d - origin;
    if (half_u > 0.0 && std::abs(local.dot(axis_u)) > half_u) return std::nullopt;
    if (half_v > 0.0 && std::abs(local.dot(axis_v)) > half_v) return std::nullopt;
    return s;
  }

  bool contains_point(const Eigen::Vector3d& p, double tol) const {
    const Eigen::Vector3d local = p - origin;
    if (std::abs(local.dot(normal())) > tol) return false;
    if (half_u > 0.0 && std::abs(local.dot(axis_u)) > half_u) return false;
    if (half_v > 0.0 && std::abs(local.dot(axis_v)) > half_v) return false;
    return true;
  }
};

enum class TrajectoryKind { Static, Pan, Revisit };

struct SynthConfig {
  int width = 64;
  int height = 64;
  /// Zero focal length means 0.9 * width; principal point defaults to the center.
  CameraIntrinsics intrinsics{0.0, 0.0, -1.0, -1.0};
  std::vector<PlaneSpec> planes;
  std::vector<CameraPose> trajectory;
  /// Std-dev of additive Gaussian pixel noise.
  double noise = 0.0;
  /// Color is averaged over supersample^2 rays per pixel (box filter), like a
  /// sensor integrating over its area. Depth, points, labels and ground truth
  /// always come from the pixel center. 1 gives point sampling.
  int supersample = 4;

  CameraIntrinsics resolved_intrinsics() const {
    CameraIntrinsics k = intrinsics;
    if (k.fx <= 0.0) k.fx = 0.9 * width;
    if (k.fy <= 0.0) k.fy = k.fx;
    if (k.cx < 0.0) k.cx = 0.5 * (width - 1);
    if (k.cy < 0.0) k.cy = 0.5 * (height - 1);
    return k;
  }
};

/// A small room: back wall at z = 6, floor at y = 1.5 (y points down), and
/// two fronto-parallel boxes that occlude the wall.
inline std::vector<PlaneSpec> default_room() {
  std::vector<PlaneSpec> planes;
  PlaneSpec wall;
  wall.label = "wall";
  wall.origin = {0.0, 0.0, 6.0};
  wall.period_u = 2.6;
  wall.period_v = 3.1;
  planes.push_back(wall);

  PlaneSpec floor;
  floor.label = "floor";
  floor.origin = {0.0, 1.5, 0.0};
  floor.axis_u = Eigen::Vector3d::UnitX();
  floor.axis_v = Eigen::Vector3d::UnitZ();
  floor.period_u = 2.2;
  floor.period_v = 9.0;
  planes.push_back(floor);

  PlaneSpec sofa;
  sofa.label = "sofa";
  sofa.origin = {-0.7, 0.75, 4.0};
  sofa.half_u = 0.8;
  sofa.half_v = 0.45;
  sofa.period_u = 1.7;
  sofa.period_v = 1.9;
  planes.push_back(sofa);

  PlaneSpec cabinet;
  cabinet.label = "cabinet";
  cabinet.origin = {1.05, -0.1, 3.2};
  cabinet.half_u = 0.35;
  cabinet.half_v = 0.7;
  cabinet.period_u = 1.3;
  cabinet.period_v = 1.5;
  planes.push_back(cabinet);
  return planes;
}

/// Camera trajectories. Pan: steady sideways motion with a slight yaw.
/// Revisit: out and back along x, so frame k+2m re-observes frame k's viewpoint.
inline std::vector<CameraPose> make_trajectory(TrajectoryKind kind, int frames, double step = 0.25) {
  require(frames >= 1, ErrorCode::DegenerateTrajectory, "trajectory needs at least one frame");
  std::vector<CameraPose> poses;
  for (int k = 0; k < frames; ++k) {
    double x = 0.0;
    double yaw = 0.0;
    switch (kind) {
      case TrajectoryKind::Static:
        break;
      case TrajectoryKind::Pan:
        x = step * k;
        yaw = -1.0 * std::numbers::pi / 180.0 * k;
        break;
      case TrajectoryKind::Revisit: {
        const int period = 6;  // 0 1 2 3 2 1 | 0 1 2 ...
        const int phase = k % period;
        x = step * (phase <= 3 ? phase : period - phase);
        break;
      }
    }
    const Eigen::Matrix3d orientation = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()).toRotationMatrix();
    poses.push_back(CameraPose::from_center({x, 0.0, 0.0}, orientation));
  }
  return poses;
}

/// Analytic correspondences for every ordered frame pair.
struct GroundTruth {
  int frames = 0;
  std::vector<FlowField> flows;          // index i * frames + j, flow from i to j
  std::vector<ImageBuffer> covisibility; // 1 where pixel of i is visible in j

  const FlowField& flow(int i, int j) const { return flows.at(static_cast<std::size_t>(i * frames + j)); }
  const ImageBuffer& covisible(int i, int j) const {
    return covisibility.at(static_cast<std::size_t>(i * frames + j));
  }
};

struct SynthScene {
  SceneManifest scene;
  GroundTruth truth;
  std::vector<PlaneSpec> planes;  // with resolved textures
};

namespace detail {

struct Hit {
  int plane = -1;
  double s = std::numeric_limits<double>::infinity();
};

inline Hit nearest_hit(const std::vector<PlaneSpec>& planes, const Eigen::Vector3d& c, const Eigen::Vector3d& d) {
  Hit best;
  for (int p = 0; p < static_cast<int>(planes.size()); ++p) {
    if (auto s = planes[static_cast<std::size_t>(p)].intersect(c, d); s && *s < best.s) best = {p, *s};
  }
  return best;
}

inline PlaneTexture random_texture(Rng& rng, double period_u, double period_v) {
  PlaneTexture t;
  for (int k = 0; k < 3; ++k) {
    t.base[k] = 0.25 + 0.5 * rng.uniform();
    t.amplitude[k] = 0.06 + 0.08 * rng.uniform();
  }
  t.period_u = period_u;
  t.period_v = period_v;
  t.phase_u = 2.0 * std::numbers::pi * rng.uniform();
  t.phase_v = 2.0 * std::numbers::pi * rng.uniform();
  return t;
}

inline std::string frame_file(int i, const char* kind, const char* ext) {
  std::ostringstream os;
  os << "frame_" << std::setw(3) << std::setfill('0') << i << '_' << kind << ext;
  return os.str();
}

}  // namespace detail

/// Renders the planes through each trajectory pose by exact ray casting.
/// Colors are evaluated analytically at each hit, so the only resampling
/// error anywhere downstream comes from the warp under test.
inline SynthScene synth_scene(const SynthConfig& config, std::uint64_t seed) {
  require(config.width >= 8 && config.height >= 8, ErrorCode::InvalidParams, "resolution must be at least 8x8");
  require(!config.trajectory.empty(), ErrorCode::DegenerateTrajectory, "trajectory is empty");
  require(config.noise >= 0.0 && std::isfinite(config.noise), ErrorCode::InvalidParams, "noise must be >= 0");
  require(config.supersample >= 1 && config.supersample <= 16, ErrorCode::InvalidParams,
          "supersample must lie in [1, 16]");

  SynthScene out;
  out.planes = config.planes.empty() ? default_room() : config.planes;
  require(out.planes.size() <= 0xffff, ErrorCode::InvalidParams, "too many planes");
  Rng palette = Rng(seed).split(1);
  for (auto& plane : out.planes)
    if (!plane.texture) plane.texture = detail::random_texture(palette, plane.period_u, plane.period_v);

  const CameraIntrinsics k = config.resolved_intrinsics();
  validate(k, "synth intrinsics");
  const int w = config.width;
  const int h = config.height;
  const int n = static_cast<int>(config.trajectory.size());

  for (int f = 0; f < n; ++f) {
    const CameraPose& pose = config.trajectory[static_cast<std::size_t>(f)];
    validate(pose, "trajectory pose " + std::to_string(f));
    const Eigen::Vector3d c = pose.center();
    for (const auto& plane : out.planes)
      require(!plane.contains_point(c, 1e-6), ErrorCode::DegenerateTrajectory,
              "camera " + std::to_string(f) + " lies inside plane '" + plane.label + "'");
  }

  // Label ids follow plane order; planes sharing a class name share an id.
  std::vector<std::uint16_t> plane_label(out.planes.size());
  for (std::size_t p = 0; p < out.planes.size(); ++p) {
    std::uint16_t id = static_cast<std::uint16_t>(out.scene.labels.size());
    for (const auto& [existing, name] : out.scene.labels)
      if (name == out.planes[p].label) id = existing;
    out.scene.labels[id] = out.planes[p].label;
    plane_label[p] = id;
  }

  Rng noise_rng = Rng(seed).split(2);
  for (int f = 0; f < n; ++f) {
    const CameraPose& pose = config.trajectory[static_cast<std::size_t>(f)];
    const Eigen::Vector3d c = pose.center();
    const Eigen::Matrix3d cam_to_world = pose.rotation.transpose();
    FrameRecord rec;
    rec.image_path = detail::frame_file(f, "image", ".rsim");
    rec.depth_path = detail::frame_file(f, "depth", ".rsdp");
    rec.pointmap_path = detail::frame_file(f, "points", ".rspm");
    rec.segmentation_path = detail::frame_file(f, "seg", ".rssg");
    rec.intrinsics = k;
    rec.pose = pose;
    rec.image = ImageBuffer(w, h, 3);
    rec.depth = DepthMap(w, h);
    rec.pointmap = Pointmap(w, h);
    rec.segmentation = LabelRaster(w, h);

    parallel_for(h, [&](int y) {
      for (int x = 0; x < w; ++x) {
        // Camera ray with unit z, so the hit parameter equals camera depth.
        const Eigen::Vector3d d = cam_to_world * k.ray(x, y);
        const auto hit = detail::nearest_hit(out.planes, c, d);
        if (hit.plane < 0) continue;
        const Eigen::Vector3d p = c + hit.s * d;
        const int ss = config.supersample;
        std::array<double, 3> sum{};
        int hits = 0;
        for (int sy = 0; sy < ss; ++sy)
          for (int sx = 0; sx < ss; ++sx) {
            const Eigen::Vector3d sd =
                ss == 1 ? d : Eigen::Vector3d(cam_to_world * k.ray(x - 0.5 + (sx + 0.5) / ss, y - 0.5 + (sy + 0.5) / ss));
            const auto sub = ss == 1 ? hit : detail::nearest_hit(out.planes, c, sd);
            if (sub.plane < 0) continue;
            const auto& sp = out.planes[static_cast<std::size_t>(sub.plane)];
            const Eigen::Vector3d local = c + sub.s * sd - sp.origin;
            const auto color = sp.texture->color(local.dot(sp.axis_u), local.dot(sp.axis_v));
            for (int ch = 0; ch < 3; ++ch) sum[static_cast<std::size_t>(ch)] += color[static_cast<std::size_t>(ch)];
            ++hits;
          }
        if (hits == 0) {  // every sub-ray slipped past a plane edge; fall back to the center
          const auto& plane = out.planes[static_cast<std::size_t>(hit.plane)];
          const Eigen::Vector3d local = p - plane.origin;
          sum = plane.texture->color(local.dot(plane.axis_u), local.dot(plane.axis_v));
          hits = 1;
        }
        for (int ch = 0; ch < 3; ++ch)
          rec.image.at(x, y, ch) = static_cast<float>(sum[static_cast<std::size_t>(ch)] / hits);
        rec.depth.at(x, y) = static_cast<float>(hit.s);
        rec.pointmap.set(x, y, p);
        rec.segmentation.at(x, y) = plane_label[static_cast<std::size_t>(hit.plane)];
      }
    });
    if (config.noise > 0.0) {
      for (float& v : rec.image.data)
        v = static_cast<float>(std::clamp(v + config.noise * noise_rng.normal(), 0.0, 1.0));
    }
    out.scene.frames.push_back(std::move(rec));
  }

  // Ground truth from the exact (double precision) hit points.
  out.truth.frames = n;
  out.truth.flows.resize(static_cast<std::size_t>(n * n));
  out.truth.covisibility.resize(static_cast<std::size_t>(n * n));
  for (int i = 0; i < n; ++i) {
    const CameraPose& pi = config.trajectory[static_cast<std::size_t>(i)];
    const Eigen::Vector3d ci = pi.center();
    const Eigen::Matrix3d ri = pi.rotation.transpose();
    for (int j = 0; j < n; ++j) {
      const CameraPose& pj = config.trajectory[static_cast<std::size_t>(j)];
      const Eigen::Vector3d cj = pj.center();
      FlowField flow(w, h);
      ImageBuffer covis(w, h, 1, 0.0f);
      parallel_for(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
          const Eigen::Vector3d d = ri * k.ray(x, y);
          const auto hit = detail::nearest_hit(out.planes, ci, d);
          if (hit.plane < 0) continue;
          const Eigen::Vector3d world = ci + hit.s * d;
          const Eigen::Vector3d cam = pj.to_camera(world);
          if (cam.z() <= 1e-9) continue;
          const Eigen::Vector2d uv = k.project(cam);
          flow.at(x, y, 0) = static_cast<float>(uv.x() - x);
          flow.at(x, y, 1) = static_cast<float>(uv.y() - y);
          const bool inside = uv.x() >= -0.5 && uv.x() < w - 0.5 && uv.y() >= -0.5 && uv.y() < h - 0.5;
          if (!inside) continue;
          // Visible in j iff nothing is hit before the point along the ray from j.
          const auto blocker = detail::nearest_hit(out.planes, cj, world - cj);
          if (blocker.s >= 1.0 - 1e-7) covis.at(x, y) = 1.0f;
        }
      });
      out.truth.flows[static_cast<std::size_t>(i * n + j)] = std::move(flow);
      out.truth.covisibility[static_cast<std::size_t>(i * n + j)] = std::move(covis);
    }
  }
  return out;
}

inline SynthConfig make_synth_config(int frames, TrajectoryKind kind = TrajectoryKind::Pan, int width = 64,
                                     int height = 64, double noise = 0.0) {
  SynthConfig config;
  config.width = width;
  config.height = height;
  config.noise = noise;
  config.trajectory = make_trajectory(kind, frames);
  return config;
}

}  // namespace restyle
