#pragma once

// 8-bit PNG rasters and the "SRT1" raw float32 tensor container.
//
// SRT1 layout (little-endian): "SRT1", u32 H, u32 W, u32 C, then H*W*C float32
// in row-major (row, col, channel) order.

#include <png.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "salattack/errors.hpp"
#include "salattack/image.hpp"

namespace salattack {

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

inline std::uint32_t get_u32(std::istream& is, const std::string& what) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw FormatError(what + ": truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }

inline float get_f32(std::istream& is, const std::string& what) { return std::bit_cast<float>(get_u32(is, what)); }

inline std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace detail

/// Raw 8-bit raster as read from disk.
struct Raster8 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> bytes;
};

inline Raster8 read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw FormatError("cannot read PNG '" + path.string() + "': " + img.message);
  if (img.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&img);
    throw FormatError("unsupported bit depth (16-bit) in '" + path.string() + "'");
  }
  if (img.format & PNG_FORMAT_FLAG_ALPHA) {
    png_image_free(&img);
    throw FormatError("unsupported alpha channel in '" + path.string() + "'");
  }
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Raster8 r{static_cast<int>(img.height), static_cast<int>(img.width), color ? 3 : 1, {}};
  r.bytes.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, r.bytes.data(), 0, nullptr)) {
    png_image_free(&img);
    throw FormatError("cannot decode PNG '" + path.string() + "': " + img.message);
  }
  return r;
}

inline void write_png(const std::filesystem::path& path, const Raster8& r) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(r.width);
  img.height = static_cast<png_uint_32>(r.height);
  img.format = r.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, r.bytes.data(), 0, nullptr))
    throw FormatError("cannot write PNG '" + path.string() + "': " + img.message);
}

/// Loads an 8-bit gray or RGB PNG; intensity = byte / 255.
inline Image load_image(const std::filesystem::path& path) {
  const Raster8 r = read_png(path);
  std::vector<float> data(r.bytes.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = r.bytes[i] / 255.0f;
  return Image(r.height, r.width, r.channels, std::move(data));
}

/// Saves as 8-bit PNG; each intensity is rounded to the nearest byte.
inline void save_image(const Image& x, const std::filesystem::path& path) {
  Raster8 r{x.height(), x.width(), x.channels(), std::vector<std::uint8_t>(x.size())};
  const auto d = x.data();
  for (std::size_t i = 0; i < d.size(); ++i) r.bytes[i] = detail::quantize(d[i]);
  write_png(path, r);
}

inline void save_mask(const SalientMask& m, const std::filesystem::path& path) {
  Raster8 r{m.height(), m.width(), 1, std::vector<std::uint8_t>(m.bits().size())};
  for (std::size_t i = 0; i < r.bytes.size(); ++i) r.bytes[i] = m.bits()[i] ? 255 : 0;
  write_png(path, r);
}

inline void save_tensor(const Image& x, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  os.write("SRT1", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(x.height()));
  detail::put_u32(os, static_cast<std::uint32_t>(x.width()));
  detail::put_u32(os, static_cast<std::uint32_t>(x.channels()));
  for (float v : x.data()) detail::put_f32(os, v);
  if (!os) throw FormatError("write failed for '" + path.string() + "'");
}

inline Image load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path.string() + "'");
  const std::string what = "SRT1 '" + path.string() + "'";
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "SRT1", 4) != 0) throw FormatError(what + ": bad magic");
  const auto h = detail::get_u32(is, what);
  const auto w = detail::get_u32(is, what);
  const auto c = detail::get_u32(is, what);
  if (h == 0 || w == 0 || h > (1u << 15) || w > (1u << 15) || (c != 1 && c != 3))
    throw FormatError(what + ": invalid dimensions");
  std::vector<float> data(static_cast<std::size_t>(h) * w * c);
  for (float& v : data) v = detail::get_f32(is, what);
  try {
    return Image(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c), std::move(data));
  } catch (const InvalidInput& e) {
    throw FormatError(what + ": " + e.what());
  }
}

}  // namespace salattack
