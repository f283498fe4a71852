#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "restyle/error.hpp"

namespace restyle {

/// Dense row-major raster with interleaved channels. Pixel centers sit at
/// integer coordinates, so the image covers [-0.5, width - 0.5).
template <typename T>
struct Raster {
  using value_type = T;

  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<T> data;

  Raster() = default;
  Raster(int w, int h, int c, T fill = T{})
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels) +
           static_cast<std::size_t>(c);
  }
  T& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  const T& at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  template <typename U>
  bool same_extent(const Raster<U>& other) const {
    return width == other.width && height == other.height;
  }
};

/// Byte-level equality, so NaN-encoded invalid pixels compare equal.
template <typename T>
bool bit_equal(const Raster<T>& a, const Raster<T>& b) {
  return a.width == b.width && a.height == b.height && a.channels == b.channels &&
         a.data.size() == b.data.size() &&
         (a.data.empty() || std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(T)) == 0);
}

inline constexpr float kInvalid = std::numeric_limits<float>::quiet_NaN();

/// Color or grayscale image, values in [0,1].
struct ImageBuffer : Raster<float> {
  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c = 3, float fill = 0.0f) : Raster<float>(w, h, c, fill) {}
};

/// Metric depth. Invalid pixels hold NaN (or any non-positive value).
struct DepthMap : Raster<float> {
  DepthMap() = default;
  DepthMap(int w, int h, float fill = kInvalid) : Raster<float>(w, h, 1, fill) {}
  bool valid(int x, int y) const {
    const float v = at(x, y);
    return std::isfinite(v) && v > 0.0f;
  }
};

/// World-coordinate 3D point per pixel. Invalid pixels hold NaN.
struct Pointmap : Raster<float> {
  Pointmap() = default;
  Pointmap(int w, int h, float fill = kInvalid) : Raster<float>(w, h, 3, fill) {}
  bool valid(int x, int y) const {
    return std::isfinite(at(x, y, 0)) && std::isfinite(at(x, y, 1)) && std::isfinite(at(x, y, 2));
  }
  Eigen::Vector3d point(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
  void set(int x, int y, const Eigen::Vector3d& p) {
    for (int c = 0; c < 3; ++c) at(x, y, c) = static_cast<float>(p[c]);
  }
};

/// Per-pixel displacement (target minus source) in pixels. Invalid pixels hold NaN.
struct FlowField : Raster<float> {
  FlowField() = default;
  FlowField(int w, int h, float fill = kInvalid) : Raster<float>(w, h, 2, fill) {}
  bool valid(int x, int y) const { return std::isfinite(at(x, y, 0)) && std::isfinite(at(x, y, 1)); }
};

/// Categorical segmentation ids.
struct LabelRaster : Raster<std::uint16_t> {
  LabelRaster() = default;
  LabelRaster(int w, int h, std::uint16_t fill = 0) : Raster<std::uint16_t>(w, h, 1, fill) {}
};

/// Refiner input: warped RGB (0..2), warp mask (3), normalized depth (4).
struct RefinerCondition : Raster<float> {
  static constexpr int kMaskChannel = 3;
  static constexpr int kDepthChannel = 4;
  RefinerCondition() = default;
  RefinerCondition(int w, int h) : Raster<float>(w, h, 5, 0.0f) {}
  bool covered(int x, int y) const { return at(x, y, kMaskChannel) > 0.5f; }
};

using LabelTable = std::map<std::uint16_t, std::string>;

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Eigen::Vector2d project(const Eigen::Vector3d& camera_point) const {
    return {fx * camera_point.x() / camera_point.z() + cx, fy * camera_point.y() / camera_point.z() + cy};
  }
  /// Camera-frame ray through pixel (u, v) with unit z.
  Eigen::Vector3d ray(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }
};

/// World-to-camera rigid transform: X_cam = rotation * X_world + translation.
struct CameraPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const { return rotation * world + translation; }
  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }

  /// Pose of a camera located at `center` whose camera-to-world rotation is `orientation`.
  static CameraPose from_center(const Eigen::Vector3d& center, const Eigen::Matrix3d& orientation) {
    CameraPose pose;
    pose.rotation = orientation.transpose();
    pose.translation = -pose.rotation * center;
    return pose;
  }
};

inline void validate(const CameraIntrinsics& k, const std::string& where) {
  require(std::isfinite(k.fx) && std::isfinite(k.fy) && k.fx > 0.0 && k.fy > 0.0, ErrorCode::InvalidValue,
          where + ": focal lengths must be positive");
  require(std::isfinite(k.cx) && std::isfinite(k.cy), ErrorCode::InvalidValue, where + ": principal point not finite");
}

inline void validate(const CameraPose& pose, const std::string& where) {
  require(pose.rotation.allFinite() && pose.translation.allFinite(), ErrorCode::InvalidValue,
          where + ": pose not finite");
  const double ortho = (pose.rotation * pose.rotation.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  require(ortho <= 1e-6, ErrorCode::InvalidValue, where + ": rotation is not orthonormal");
  require(std::abs(pose.rotation.determinant() - 1.0) <= 1e-6, ErrorCode::InvalidValue,
          where + ": rotation determinant is not +1");
}

inline std::string extent_string(int w, int h) { return std::to_string(w) + "x" + std::to_string(h); }

}  // namespace restyle
