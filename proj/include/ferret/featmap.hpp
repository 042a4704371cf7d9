#pragma once

// Dense H x W x C feature grids, bilinear lookup and the .fmap file format.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ferret/error.hpp"
#include "ferret/geometry.hpp"
#include "ferret/rng.hpp"

namespace ferret {

class FeatureMap {
 public:
  FeatureMap() = default;

  FeatureMap(int height, int width, int channels, std::vector<double> values)
      : height_(height), width_(width), channels_(channels), values_(std::move(values)) {
    if (height <= 0 || width <= 0 || channels <= 0) {
      throw Error(ErrorCode::kShapeMismatch, "feature map dimensions must be positive");
    }
    if (values_.size() != static_cast<std::size_t>(height) * width * channels) {
      throw Error(ErrorCode::kShapeMismatch, "feature map payload size mismatch");
    }
    for (double v : values_) {
      if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "non-finite feature value");
    }
  }

  FeatureMap(int height, int width, int channels)
      : FeatureMap(height, width, channels,
                   std::vector<double>(static_cast<std::size_t>(height) * width * channels, 0.0)) {}

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return values_.size(); }

  std::size_t offset(int y, int x, int c = 0) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }
  double at(int y, int x, int c) const { return values_[offset(y, x, c)]; }
  double& at(int y, int x, int c) { return values_[offset(y, x, c)]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  bool operator==(const FeatureMap&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> values_;
};

// The four grid cells and weights a bilinear lookup blends.
struct BilinearTaps {
  std::array<std::size_t, 4> offsets{};  // (x0,y0) (x1,y0) (x0,y1) (x1,y1), channel 0
  std::array<double, 4> weights{};
  double fx = 0.0;
  double fy = 0.0;
};

inline BilinearTaps bilinear_taps(const FeatureMap& map, double x, double y) {
  if (!(x >= 0.0 && x <= map.width() - 1 && y >= 0.0 && y <= map.height() - 1)) {
    throw Error(ErrorCode::kOutOfRange, "bilinear query outside the feature grid");
  }
  const int x0 = map.width() > 1 ? std::min(static_cast<int>(std::floor(x)), map.width() - 2) : 0;
  const int y0 = map.height() > 1 ? std::min(static_cast<int>(std::floor(y)), map.height() - 2) : 0;
  const int x1 = std::min(x0 + 1, map.width() - 1);
  const int y1 = std::min(y0 + 1, map.height() - 1);
  BilinearTaps t;
  t.fx = x - x0;
  t.fy = y - y0;
  t.offsets = {map.offset(y0, x0), map.offset(y0, x1), map.offset(y1, x0), map.offset(y1, x1)};
  t.weights = {(1.0 - t.fx) * (1.0 - t.fy), t.fx * (1.0 - t.fy), (1.0 - t.fx) * t.fy, t.fx * t.fy};
  return t;
}

/// C-vector at continuous grid coordinate (x, y), 0 <= x <= W-1, 0 <= y <= H-1.
inline std::vector<double> bilinear(const FeatureMap& map, double x, double y) {
  const BilinearTaps t = bilinear_taps(map, x, y);
  const auto v = map.values();
  std::vector<double> out(map.channels());
  for (int c = 0; c < map.channels(); ++c) {
    const double a = v[t.offsets[0] + c], b = v[t.offsets[1] + c];
    const double d = v[t.offsets[2] + c], e = v[t.offsets[3] + c];
    // std::lerp is exact at both ends and on constant spans.
    out[c] = std::lerp(std::lerp(a, b, t.fx), std::lerp(d, e, t.fx), t.fy);
  }
  return out;
}

// Partial derivatives of the bilinear lookup w.r.t. x and y (one-sided on
// lattice lines, taken within the cell bilinear_taps selects).
inline std::array<std::vector<double>, 2> bilinear_grad_xy(const FeatureMap& map, double x, double y) {
  const BilinearTaps t = bilinear_taps(map, x, y);
  const auto v = map.values();
  std::array<std::vector<double>, 2> g{std::vector<double>(map.channels()),
                                       std::vector<double>(map.channels())};
  const bool has_dx = t.offsets[0] != t.offsets[1];
  const bool has_dy = t.offsets[0] != t.offsets[2];
  for (int c = 0; c < map.channels(); ++c) {
    const double a = v[t.offsets[0] + c], b = v[t.offsets[1] + c];
    const double d = v[t.offsets[2] + c], e = v[t.offsets[3] + c];
    g[0][c] = has_dx ? (1.0 - t.fy) * (b - a) + t.fy * (e - d) : 0.0;
    g[1][c] = has_dy ? (1.0 - t.fx) * (d - a) + t.fx * (e - b) : 0.0;
  }
  return g;
}

// Normalized image position (u, v) in [0,1]^2 -> grid coordinate, aligning
// pixel centers with cell centers and clamping into the valid range.
inline Vec2 normalized_to_grid(Vec2 normalized, const FeatureMap& map) {
  const double gx = normalized.x * map.width() - 0.5;
  const double gy = normalized.y * map.height() - 0.5;
  return {std::clamp(gx, 0.0, static_cast<double>(map.width() - 1)),
          std::clamp(gy, 0.0, static_cast<double>(map.height() - 1))};
}

/// ((px + 0.5) / width * W - 0.5, (py + 0.5) / height * H - 0.5), clamped.
inline Vec2 mask_to_featmap_coords(int px, int py, ImageSize image, const FeatureMap& map) {
  detail::check_image(image);
  return normalized_to_grid({(px + 0.5) / image.width, (py + 0.5) / image.height}, map);
}

// ---- .fmap I/O -------------------------------------------------------------
// Header: H, W, C as little-endian int32. Payload: H*W*C little-endian
// float32 values, row-major (y, x, c).

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  os.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw Error(ErrorCode::kFormat, "truncated binary file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, double v) { put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

inline double get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

}  // namespace detail

inline void write_fmap(std::ostream& os, const FeatureMap& map) {
  detail::put_u32(os, static_cast<std::uint32_t>(map.height()));
  detail::put_u32(os, static_cast<std::uint32_t>(map.width()));
  detail::put_u32(os, static_cast<std::uint32_t>(map.channels()));
  for (double v : map.values()) detail::put_f32(os, v);
  if (!os) throw Error(ErrorCode::kIo, "failed writing feature map");
}

inline FeatureMap read_fmap(std::istream& is) {
  const auto h = static_cast<std::int32_t>(detail::get_u32(is));
  const auto w = static_cast<std::int32_t>(detail::get_u32(is));
  const auto c = static_cast<std::int32_t>(detail::get_u32(is));
  if (h <= 0 || w <= 0 || c <= 0) throw Error(ErrorCode::kFormat, "fmap header has non-positive dims");
  const std::size_t n = static_cast<std::size_t>(h) * w * c;
  if (n > (std::size_t{1} << 31)) throw Error(ErrorCode::kFormat, "fmap too large");
  std::vector<double> values(n);
  for (double& v : values) v = detail::get_f32(is);
  if (is.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::kFormat, "trailing bytes in fmap");
  return FeatureMap(h, w, c, std::move(values));
}

inline void save_fmap(const std::string& path, const FeatureMap& map) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::kIo, "cannot open " + path);
  write_fmap(os, map);
}

inline FeatureMap load_fmap(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kIo, "cannot open " + path);
  return read_fmap(is);
}

// ---- synthetic maps ----------------------------------------------------------
// Values are rounded to float32 so they survive a .fmap round trip unchanged.

inline FeatureMap random_feature_map(int height, int width, int channels, std::uint64_t seed) {
  RandomStream rng(seed);
  std::vector<double> values(static_cast<std::size_t>(height) * width * channels);
  for (double& v : values) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return FeatureMap(height, width, channels, std::move(values));
}

// Channel c holds (c + 1) * x + (c + 2) * y.
inline FeatureMap ramp_feature_map(int height, int width, int channels) {
  FeatureMap map(height, width, channels);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) map.at(y, x, c) = static_cast<float>((c + 1.0) * x + (c + 2.0) * y);
    }
  }
  return map;
}

inline FeatureMap constant_feature_map(int height, int width, int channels, double value) {
  return FeatureMap(height, width, channels,
                    std::vector<double>(static_cast<std::size_t>(height) * width * channels,
                                        static_cast<float>(value)));
}

}  // namespace ferret
