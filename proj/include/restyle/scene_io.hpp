#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "restyle/error.hpp"
#include "restyle/raster.hpp"
#include "restyle/raster_io.hpp"
#include "restyle/segmatch.hpp"

namespace restyle {

using json = nlohmann::json;

struct FrameRecord {
  // Paths as written in the manifest, relative to the manifest directory.
  std::string image_path;
  std::string depth_path;
  std::string pointmap_path;
  std::string segmentation_path;
  CameraIntrinsics intrinsics;
  CameraPose pose;

  ImageBuffer image;
  DepthMap depth;
  Pointmap pointmap;
  LabelRaster segmentation;
};

struct SceneManifest {
  std::vector<FrameRecord> frames;
  LabelTable labels;

  int width() const { return frames.empty() ? 0 : frames.front().image.width; }
  int height() const { return frames.empty() ? 0 : frames.front().image.height; }
  int size() const { return static_cast<int>(frames.size()); }

  SemanticMap semantic_map(int frame) const {
    return SemanticMap{frames.at(static_cast<std::size_t>(frame)).segmentation, labels};
  }
  std::vector<CameraPose> poses() const {
    std::vector<CameraPose> out;
    for (const auto& f : frames) out.push_back(f.pose);
    return out;
  }
};

inline json pose_to_json(const CameraPose& pose) {
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.push_back(pose.rotation(i, j));
  return json{{"R", r}, {"t", {pose.translation.x(), pose.translation.y(), pose.translation.z()}}};
}

inline CameraPose pose_from_json(const json& j, const std::string& where) {
  require(j.is_object() && j.contains("R") && j.contains("t"), ErrorCode::MalformedHeader,
          where + ": pose needs keys R and t");
  const auto& r = j.at("R");
  const auto& t = j.at("t");
  require(r.is_array() && r.size() == 9 && t.is_array() && t.size() == 3, ErrorCode::MalformedHeader,
          where + ": pose R needs 9 numbers and t needs 3");
  CameraPose pose;
  for (int i = 0; i < 9; ++i) {
    require(r[i].is_number(), ErrorCode::MalformedHeader, where + ": pose R entries must be numbers");
    pose.rotation(i / 3, i % 3) = r[i].get<double>();
  }
  for (int i = 0; i < 3; ++i) {
    require(t[i].is_number(), ErrorCode::MalformedHeader, where + ": pose t entries must be numbers");
    pose.translation[i] = t[i].get<double>();
  }
  validate(pose, where);
  return pose;
}

inline json poses_to_json(const std::vector<CameraPose>& poses) {
  json arr = json::array();
  for (const auto& p : poses) arr.push_back(pose_to_json(p));
  return arr;
}

inline std::vector<CameraPose> poses_from_json(const json& j, const std::string& where) {
  require(j.is_array(), ErrorCode::MalformedHeader, where + ": expected a JSON list of poses");
  std::vector<CameraPose> poses;
  for (std::size_t i = 0; i < j.size(); ++i) poses.push_back(pose_from_json(j[i], where + "[" + std::to_string(i) + "]"));
  return poses;
}

inline json read_json_file(const fs::path& path) {
  require(fs::exists(path), ErrorCode::MissingFile, path.string() + " does not exist");
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoFailure, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::MalformedHeader, path.string() + ": " + e.what());
  }
}

inline void write_json_file(const json& j, const fs::path& path) {
  auto out = io::open_out(path);
  out << j.dump(2) << '\n';
  require(out.good(), ErrorCode::IoFailure, "write failed: " + path.string());
}

inline json manifest_to_json(const SceneManifest& scene) {
  json frames = json::array();
  for (const auto& f : scene.frames) {
    frames.push_back({{"image", f.image_path},
                      {"depth", f.depth_path},
                      {"pointmap", f.pointmap_path},
                      {"segmentation", f.segmentation_path},
                      {"intrinsics",
                       {{"fx", f.intrinsics.fx}, {"fy", f.intrinsics.fy}, {"cx", f.intrinsics.cx}, {"cy", f.intrinsics.cy}}},
                      {"pose", pose_to_json(f.pose)}});
  }
  json labels = json::object();
  for (const auto& [id, name] : scene.labels) labels[std::to_string(id)] = name;
  return {{"frames", frames}, {"labels", labels}};
}

/// Writes manifest.json plus every frame raster at its manifest path under `dir`.
inline fs::path save_scene(const SceneManifest& scene, const fs::path& dir) {
  for (const auto& f : scene.frames) {
    write_image(f.image, dir / f.image_path);
    write_depth(f.depth, dir / f.depth_path);
    write_raster(f.pointmap, dir / f.pointmap_path);
    write_raster(f.segmentation, dir / f.segmentation_path);
  }
  const fs::path manifest = dir / "manifest.json";
  write_json_file(manifest_to_json(scene), manifest);
  return manifest;
}

namespace detail {

inline std::string frame_field(std::size_t index, const std::string& field) {
  return "frame " + std::to_string(index) + ": " + field;
}

inline std::string string_field(const json& frame, std::size_t index, const char* key) {
  require(frame.contains(key) && frame.at(key).is_string(), ErrorCode::MalformedHeader,
          frame_field(index, key) + " missing or not a string");
  return frame.at(key).get<std::string>();
}

// Re-raise a raster error with the frame/field prefix.
template <typename Fn>
auto load_field(std::size_t index, const char* field, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), frame_field(index, field) + ": " + e.detail());
  }
}

}  // namespace detail

/// Loads a manifest and every raster it references, cross-validating extents,
/// channel counts, label ids and camera parameters.
inline SceneManifest load_scene(const fs::path& manifest_path) {
  const json doc = read_json_file(manifest_path);
  const fs::path root = manifest_path.parent_path();
  require(doc.is_object() && doc.contains("frames") && doc.at("frames").is_array(), ErrorCode::MalformedHeader,
          manifest_path.string() + ": missing \"frames\" array");
  require(doc.contains("labels") && doc.at("labels").is_object(), ErrorCode::MalformedHeader,
          manifest_path.string() + ": missing \"labels\" object");
  const auto& frames = doc.at("frames");
  require(!frames.empty(), ErrorCode::MalformedHeader, manifest_path.string() + ": manifest has no frames");

  SceneManifest scene;
  for (const auto& [key, value] : doc.at("labels").items()) {
    std::size_t used = 0;
    unsigned long id = 0;
    try {
      id = std::stoul(key, &used);
    } catch (...) {
      used = 0;
    }
    require(used == key.size() && id <= 0xffff && value.is_string(), ErrorCode::MalformedHeader,
            "labels: bad entry '" + key + "'");
    scene.labels[static_cast<std::uint16_t>(id)] = value.get<std::string>();
  }

  for (std::size_t i = 0; i < frames.size(); ++i) {
    const json& jf = frames[i];
    require(jf.is_object(), ErrorCode::MalformedHeader, detail::frame_field(i, "record") + " is not an object");
    FrameRecord f;
    f.image_path = detail::string_field(jf, i, "image");
    f.depth_path = detail::string_field(jf, i, "depth");
    f.pointmap_path = detail::string_field(jf, i, "pointmap");
    f.segmentation_path = detail::string_field(jf, i, "segmentation");

    require(jf.contains("intrinsics") && jf.at("intrinsics").is_object(), ErrorCode::MalformedHeader,
            detail::frame_field(i, "intrinsics") + " missing");
    const auto& k = jf.at("intrinsics");
    for (const char* key : {"fx", "fy", "cx", "cy"})
      require(k.contains(key) && k.at(key).is_number(), ErrorCode::MalformedHeader,
              detail::frame_field(i, std::string("intrinsics.") + key) + " missing or not a number");
    f.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(), k.at("cy").get<double>()};
    validate(f.intrinsics, detail::frame_field(i, "intrinsics"));
    require(jf.contains("pose"), ErrorCode::MalformedHeader, detail::frame_field(i, "pose") + " missing");
    f.pose = pose_from_json(jf.at("pose"), detail::frame_field(i, "pose"));

    f.image = detail::load_field(i, "image", [&] { return read_image(root / f.image_path); });
    f.depth = detail::load_field(i, "depth", [&] { return read_depth(root / f.depth_path); });
    f.pointmap = detail::load_field(i, "pointmap", [&] { return read_raster<Pointmap>(root / f.pointmap_path); });
    f.segmentation =
        detail::load_field(i, "segmentation", [&] { return read_raster<LabelRaster>(root / f.segmentation_path); });

    for (float v : f.image.data)
      require(std::isfinite(v) && v >= 0.0f && v <= 1.0f, ErrorCode::InvalidValue,
              detail::frame_field(i, "image") + ": values must be finite and within [0,1]");

    const int w = f.image.width;
    const int h = f.image.height;
    auto check_extent = [&](const char* field, int fw, int fh) {
      require(fw == w && fh == h, ErrorCode::DimensionMismatch,
              detail::frame_field(i, field) + " is " + extent_string(fw, fh) + " but image is " + extent_string(w, h));
    };
    check_extent("depth", f.depth.width, f.depth.height);
    check_extent("pointmap", f.pointmap.width, f.pointmap.height);
    check_extent("segmentation", f.segmentation.width, f.segmentation.height);
    if (!scene.frames.empty()) {
      const auto& first = scene.frames.front().image;
      require(first.width == w && first.height == h && first.channels == f.image.channels,
              ErrorCode::DimensionMismatch,
              detail::frame_field(i, "image") + " is " + extent_string(w, h) + "x" + std::to_string(f.image.channels) +
                  " but frame 0 is " + extent_string(first.width, first.height) + "x" + std::to_string(first.channels));
    }
    for (auto id : f.segmentation.data)
      require(scene.labels.count(id) != 0, ErrorCode::UnknownLabelId,
              detail::frame_field(i, "segmentation") + ": label id " + std::to_string(id) + " not in label table");
    scene.frames.push_back(std::move(f));
  }
  return scene;
}

}  // namespace restyle
