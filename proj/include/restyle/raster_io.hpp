#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <png.h>

#include "restyle/error.hpp"
#include "restyle/raster.hpp"

namespace restyle {

namespace fs = std::filesystem;

// Raw raster container, little-endian:
//   4-byte magic | uint32 width | uint32 height | uint32 channels | payload
// The payload is row-major float32, except segmentation (uint16).

template <typename R>
struct raster_traits;

template <>
struct raster_traits<ImageBuffer> {
  static constexpr std::string_view magic = "RSIM";
  static bool channels_ok(std::uint32_t c) { return c == 1 || c == 3; }
};
template <>
struct raster_traits<DepthMap> {
  static constexpr std::string_view magic = "RSDP";
  static bool channels_ok(std::uint32_t c) { return c == 1; }
};
template <>
struct raster_traits<Pointmap> {
  static constexpr std::string_view magic = "RSPM";
  static bool channels_ok(std::uint32_t c) { return c == 3; }
};
template <>
struct raster_traits<FlowField> {
  static constexpr std::string_view magic = "RSFL";
  static bool channels_ok(std::uint32_t c) { return c == 2; }
};
template <>
struct raster_traits<LabelRaster> {
  static constexpr std::string_view magic = "RSSG";
  static bool channels_ok(std::uint32_t c) { return c == 1; }
};
template <>
struct raster_traits<RefinerCondition> {
  static constexpr std::string_view magic = "RSCN";
  static bool channels_ok(std::uint32_t c) { return c == 5; }
};

namespace io {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<std::byte, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  } else {
    return v;
  }
}

template <typename T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<std::size_t>(in.gcount()) == sizeof(T), ErrorCode::MalformedHeader, what + ": truncated header");
  return to_little(v);
}

template <typename T>
void put_payload(std::ostream& out, const std::vector<T>& data) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(T)));
  } else {
    for (const T& v : data) put(out, v);
  }
}

template <typename T>
void get_payload(std::istream& in, std::vector<T>& data, const std::string& what) {
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(T)));
  require(static_cast<std::size_t>(in.gcount()) == data.size() * sizeof(T), ErrorCode::MalformedHeader,
          what + ": payload shorter than header declares");
  if constexpr (std::endian::native == std::endian::big) {
    for (T& v : data) v = to_little(v);
  }
}

inline std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  return out;
}

inline std::ifstream open_in(const fs::path& path) {
  require(fs::exists(path), ErrorCode::MissingFile, path.string() + " does not exist");
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoFailure, "cannot open " + path.string() + " for reading");
  return in;
}

inline bool has_extension(const fs::path& path, std::string_view ext) {
  std::string e = path.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e == ext;
}

}  // namespace io

/// Writes any raw raster with its magic. Raw writes are lossless.
template <typename R>
void write_raster(const R& raster, const fs::path& path) {
  using value_type = typename R::value_type;
  require(raster.data.size() == raster.pixel_count() * static_cast<std::size_t>(raster.channels),
          ErrorCode::DimensionMismatch, path.string() + ": payload size does not match extent");
  auto out = io::open_out(path);
  out.write(raster_traits<R>::magic.data(), 4);
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(raster.width));
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(raster.height));
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(raster.channels));
  io::put_payload<value_type>(out, raster.data);
  require(out.good(), ErrorCode::IoFailure, "write failed: " + path.string());
}

template <typename R>
R read_raster(const fs::path& path) {
  using value_type = typename R::value_type;
  auto in = io::open_in(path);
  const std::string what = path.string();
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  require(in.gcount() == 4, ErrorCode::MalformedHeader, what + ": truncated header");
  const std::string_view got(magic.data(), 4);
  require(got == raster_traits<R>::magic, ErrorCode::MagicMismatch,
          what + ": expected magic " + std::string(raster_traits<R>::magic) + ", found " + std::string(got));
  const auto w = io::get<std::uint32_t>(in, what);
  const auto h = io::get<std::uint32_t>(in, what);
  const auto c = io::get<std::uint32_t>(in, what);
  require(w > 0 && h > 0 && w <= (1u << 16) && h <= (1u << 16), ErrorCode::MalformedHeader,
          what + ": implausible extent " + extent_string(static_cast<int>(w), static_cast<int>(h)));
  require(raster_traits<R>::channels_ok(c), ErrorCode::MalformedHeader,
          what + ": unsupported channel count " + std::to_string(c));
  R raster;
  raster.width = static_cast<int>(w);
  raster.height = static_cast<int>(h);
  raster.channels = static_cast<int>(c);
  raster.data.resize(static_cast<std::size_t>(w) * h * c);
  io::get_payload<value_type>(in, raster.data, what);
  in.peek();
  require(in.eof(), ErrorCode::MalformedHeader, what + ": trailing bytes after payload");
  return raster;
}

// 8-bit PNG. Writes quantize to round(v * 255).

inline std::uint8_t quantize_unit(float v) {
  const float clamped = std::clamp(std::isfinite(v) ? v : 0.0f, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

inline void write_png(const ImageBuffer& image, const fs::path& path) {
  require(image.channels == 1 || image.channels == 3, ErrorCode::DimensionMismatch,
          path.string() + ": PNG export needs 1 or 3 channels");
  std::vector<std::uint8_t> bytes(image.data.size());
  std::transform(image.data.begin(), image.data.end(), bytes.begin(), quantize_unit);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  const int ok = png_image_write_to_file(&png, path.string().c_str(), 0, bytes.data(), 0, nullptr);
  if (!ok) {
    const std::string msg = png.message;
    png_image_free(&png);
    fail(ErrorCode::IoFailure, path.string() + ": " + msg);
  }
}

inline ImageBuffer read_png(const fs::path& path) {
  require(fs::exists(path), ErrorCode::MissingFile, path.string() + " does not exist");
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    fail(ErrorCode::MalformedHeader, path.string() + ": " + png.message);
  }
  const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
  png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const int channels = gray ? 1 : 3;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    fail(ErrorCode::MalformedHeader, path.string() + ": " + msg);
  }
  ImageBuffer image(static_cast<int>(png.width), static_cast<int>(png.height), channels);
  std::transform(bytes.begin(), bytes.end(), image.data.begin(),
                 [](std::uint8_t b) { return static_cast<float>(b) / 255.0f; });
  return image;
}

// PFM (single channel "Pf"), bottom-to-top rows, little-endian scale.

inline void write_pfm(const DepthMap& depth, const fs::path& path) {
  auto out = io::open_out(path);
  out << "Pf\n" << depth.width << ' ' << depth.height << "\n-1.0\n";
  for (int y = depth.height - 1; y >= 0; --y)
    for (int x = 0; x < depth.width; ++x) io::put<float>(out, depth.at(x, y));
  require(out.good(), ErrorCode::IoFailure, "write failed: " + path.string());
}

inline DepthMap read_pfm(const fs::path& path) {
  auto in = io::open_in(path);
  const std::string what = path.string();
  std::string tag;
  int w = 0;
  int h = 0;
  double scale = 0.0;
  in >> tag >> w >> h >> scale;
  require(in.good(), ErrorCode::MalformedHeader, what + ": bad PFM header");
  require(tag == "Pf", tag == "PF" ? ErrorCode::MalformedHeader : ErrorCode::MagicMismatch,
          what + ": depth PFM must be single-channel 'Pf', found '" + tag + "'");
  require(w > 0 && h > 0 && scale != 0.0, ErrorCode::MalformedHeader, what + ": bad PFM header");
  in.get();  // single whitespace before payload
  DepthMap depth(w, h);
  const bool little = scale < 0.0;
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x) {
      std::array<char, 4> b{};
      in.read(b.data(), 4);
      require(in.gcount() == 4, ErrorCode::MalformedHeader, what + ": truncated PFM payload");
      if (little != (std::endian::native == std::endian::little)) std::reverse(b.begin(), b.end());
      float v = 0.0f;
      std::memcpy(&v, b.data(), 4);
      depth.at(x, y) = v;
    }
  }
  return depth;
}

/// Image by extension: ".png" (8-bit) or raw "RSIM".
inline ImageBuffer read_image(const fs::path& path) {
  return io::has_extension(path, ".png") ? read_png(path) : read_raster<ImageBuffer>(path);
}

inline void write_image(const ImageBuffer& image, const fs::path& path) {
  if (io::has_extension(path, ".png"))
    write_png(image, path);
  else
    write_raster(image, path);
}

/// Depth by extension: ".pfm" or raw "RSDP".
inline DepthMap read_depth(const fs::path& path) {
  return io::has_extension(path, ".pfm") ? read_pfm(path) : read_raster<DepthMap>(path);
}

inline void write_depth(const DepthMap& depth, const fs::path& path) {
  if (io::has_extension(path, ".pfm"))
    write_pfm(depth, path);
  else
    write_raster(depth, path);
}

}  // namespace restyle
