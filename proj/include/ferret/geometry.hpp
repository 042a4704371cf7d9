#pragma once

// Region shapes, binary-mask rasterization and box geometry.
//
// Pixel membership rule shared by every shape: pixel (i, j) belongs to a
// region iff its center (i + 0.5, j + 0.5) lies inside the continuous shape.
// Zero-extent shapes (zero-area boxes, zero-radius points) fall back to the
// pixel underneath the coordinate so they never vanish.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "ferret/error.hpp"

namespace ferret {

struct ImageSize {
  int width = 0;
  int height = 0;

  bool operator==(const ImageSize&) const = default;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Vec2&) const = default;
};

constexpr double kDefaultPointRadius = 5.0;
constexpr double kDefaultStrokeWidth = 3.0;

struct Point {
  double x = 0.0;
  double y = 0.0;
  double radius = kDefaultPointRadius;

  bool operator==(const Point&) const = default;
};

// Axis-aligned box in continuous pixel coordinates.
struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool valid() const { return x_min <= x_max && y_min <= y_max; }

  bool operator==(const Box&) const = default;
};

struct Polygon {
  std::vector<Vec2> vertices;

  bool operator==(const Polygon&) const = default;
};

struct Scribble {
  std::vector<std::vector<Vec2>> strokes;
  double stroke_width = kDefaultStrokeWidth;

  bool operator==(const Scribble&) const = default;
};

class BinaryMask {
 public:
  BinaryMask() = default;

  BinaryMask(int width, int height) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) {
      throw Error(ErrorCode::kInvalidArgument, "mask dimensions must be positive");
    }
    bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  ImageSize size() const { return {width_, height_}; }
  bool empty_dims() const { return bits_.empty(); }

  bool at(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool on = true) { bits_[index(x, y)] = on ? 1 : 0; }

  std::size_t popcount() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }

  // Pixel indices of all set pixels in row-major (raster) order.
  std::vector<std::uint32_t> on_pixels() const {
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < bits_.size(); ++i) {
      if (bits_[i]) out.push_back(static_cast<std::uint32_t>(i));
    }
    return out;
  }

  // True when every set pixel of *this is also set in other.
  bool subset_of(const BinaryMask& other) const {
    if (size() != other.size()) return false;
    for (std::size_t i = 0; i < bits_.size(); ++i) {
      if (bits_[i] && !other.bits_[i]) return false;
    }
    return true;
  }

  bool operator==(const BinaryMask&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

using Region = std::variant<Point, Box, Polygon, Scribble, BinaryMask>;

inline const char* region_type_name(const Region& region) {
  constexpr const char* kNames[] = {"point", "box", "polygon", "scribble", "mask"};
  return kNames[region.index()];
}

namespace detail {

inline void check_image(ImageSize size) {
  if (size.width <= 0 || size.height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "image size must be positive");
  }
}

inline void check_in_bounds(double x, double y, ImageSize size) {
  if (!(x >= 0.0 && x <= size.width && y >= 0.0 && y <= size.height)) {
    throw Error(ErrorCode::kOutOfBounds, "coordinate (" + std::to_string(x) + ", " +
                                             std::to_string(y) + ") outside " +
                                             std::to_string(size.width) + "x" +
                                             std::to_string(size.height));
  }
}

// Pixel index under a continuous coordinate; the right/bottom edge maps to the
// last pixel.
inline int pixel_under(double v, int extent) {
  return std::clamp(static_cast<int>(std::floor(v)), 0, extent - 1);
}

inline double squared_distance_to_segment(Vec2 p, Vec2 a, Vec2 b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) {
    t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
  }
  const double cx = a.x + t * dx - p.x;
  const double cy = a.y + t * dy - p.y;
  return cx * cx + cy * cy;
}

// Even-odd crossing test.
inline bool inside_polygon(const std::vector<Vec2>& v, double px, double py) {
  bool inside = false;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    if ((v[i].y > py) != (v[j].y > py)) {
      const double x_cross = v[j].x + (py - v[j].y) * (v[i].x - v[j].x) / (v[i].y - v[j].y);
      if (px < x_cross) inside = !inside;
    }
  }
  return inside;
}

inline BinaryMask rasterize_point(const Point& p, ImageSize size) {
  check_in_bounds(p.x, p.y, size);
  if (!(p.radius >= 0.0)) throw Error(ErrorCode::kDegenerateRegion, "negative point radius");
  BinaryMask mask(size.width, size.height);
  const double r2 = p.radius * p.radius;
  const int x0 = std::max(0, static_cast<int>(std::floor(p.x - p.radius)) - 1);
  const int x1 = std::min(size.width - 1, static_cast<int>(std::ceil(p.x + p.radius)) + 1);
  const int y0 = std::max(0, static_cast<int>(std::floor(p.y - p.radius)) - 1);
  const int y1 = std::min(size.height - 1, static_cast<int>(std::ceil(p.y + p.radius)) + 1);
  bool any = false;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - p.x;
      const double dy = y + 0.5 - p.y;
      if (dx * dx + dy * dy <= r2) {
        mask.set(x, y);
        any = true;
      }
    }
  }
  if (!any) mask.set(pixel_under(p.x, size.width), pixel_under(p.y, size.height));
  return mask;
}

inline BinaryMask rasterize_box(const Box& b, ImageSize size) {
  if (!b.valid()) throw Error(ErrorCode::kDegenerateRegion, "box has min > max");
  check_in_bounds(b.x_min, b.y_min, size);
  check_in_bounds(b.x_max, b.y_max, size);
  BinaryMask mask(size.width, size.height);
  // Pixel columns/rows whose centers fall in [min, max]; a zero-extent axis
  // collapses to the pixel under the coordinate.
  auto span = [](double lo, double hi, int extent) {
    if (lo == hi) {
      const int p = pixel_under(lo, extent);
      return std::pair<int, int>{p, p};
    }
    const int first = std::max(0, static_cast<int>(std::ceil(lo - 0.5)));
    const int last = std::min(extent - 1, static_cast<int>(std::floor(hi - 0.5)));
    return std::pair<int, int>{first, last};
  };
  const auto [xa, xb] = span(b.x_min, b.x_max, size.width);
  const auto [ya, yb] = span(b.y_min, b.y_max, size.height);
  for (int y = ya; y <= yb; ++y) {
    for (int x = xa; x <= xb; ++x) mask.set(x, y);
  }
  return mask;
}

inline BinaryMask rasterize_polygon(const Polygon& poly, ImageSize size) {
  if (poly.vertices.size() < 3) {
    throw Error(ErrorCode::kDegenerateRegion, "polygon needs at least 3 vertices");
  }
  double x_lo = size.width, x_hi = 0.0, y_lo = size.height, y_hi = 0.0;
  for (const Vec2& v : poly.vertices) {
    check_in_bounds(v.x, v.y, size);
    x_lo = std::min(x_lo, v.x);
    x_hi = std::max(x_hi, v.x);
    y_lo = std::min(y_lo, v.y);
    y_hi = std::max(y_hi, v.y);
  }
  BinaryMask mask(size.width, size.height);
  const int xa = std::max(0, static_cast<int>(std::floor(x_lo)) - 1);
  const int xb = std::min(size.width - 1, static_cast<int>(std::ceil(x_hi)));
  const int ya = std::max(0, static_cast<int>(std::floor(y_lo)) - 1);
  const int yb = std::min(size.height - 1, static_cast<int>(std::ceil(y_hi)));
  for (int y = ya; y <= yb; ++y) {
    for (int x = xa; x <= xb; ++x) {
      if (inside_polygon(poly.vertices, x + 0.5, y + 0.5)) mask.set(x, y);
    }
  }
  return mask;
}

inline BinaryMask rasterize_scribble(const Scribble& s, ImageSize size) {
  if (s.strokes.empty()) throw Error(ErrorCode::kDegenerateRegion, "scribble has no strokes");
  if (!(s.stroke_width > 0.0)) throw Error(ErrorCode::kDegenerateRegion, "stroke width must be positive");
  for (const auto& stroke : s.strokes) {
    if (stroke.empty()) throw Error(ErrorCode::kDegenerateRegion, "empty stroke");
    for (const Vec2& v : stroke) check_in_bounds(v.x, v.y, size);
  }
  BinaryMask mask(size.width, size.height);
  const double half = s.stroke_width / 2.0;
  const double r2 = half * half;
  for (const auto& stroke : s.strokes) {
    // A single-vertex stroke is a zero-length segment, i.e. a dot.
    const std::size_t segments = stroke.size() == 1 ? 1 : stroke.size() - 1;
    for (std::size_t i = 0; i < segments; ++i) {
      const Vec2 a = stroke[i];
      const Vec2 b = stroke[std::min(i + 1, stroke.size() - 1)];
      const int xa = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - half)) - 1);
      const int xb = std::min(size.width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + half)));
      const int ya = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - half)) - 1);
      const int yb = std::min(size.height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + half)));
      for (int y = ya; y <= yb; ++y) {
        for (int x = xa; x <= xb; ++x) {
          if (squared_distance_to_segment({x + 0.5, y + 0.5}, a, b) <= r2) mask.set(x, y);
        }
      }
    }
  }
  return mask;
}

}  // namespace detail

/// Binary mask of `region` at image resolution. Throws OutOfBounds for
/// coordinates outside [0, width] x [0, height], DegenerateRegion for
/// malformed shapes and SizeMismatch for a mask of the wrong dimensions.
inline BinaryMask rasterize(const Region& region, ImageSize size) {
  detail::check_image(size);
  return std::visit(
      [&](const auto& shape) -> BinaryMask {
        using T = std::decay_t<decltype(shape)>;
        if constexpr (std::is_same_v<T, Point>) {
          return detail::rasterize_point(shape, size);
        } else if constexpr (std::is_same_v<T, Box>) {
          return detail::rasterize_box(shape, size);
        } else if constexpr (std::is_same_v<T, Polygon>) {
          return detail::rasterize_polygon(shape, size);
        } else if constexpr (std::is_same_v<T, Scribble>) {
          return detail::rasterize_scribble(shape, size);
        } else {
          if (shape.size() != size) {
            throw Error(ErrorCode::kSizeMismatch, "mask dimensions differ from image size");
          }
          return shape;
        }
      },
      region);
}

/// Tightest box of pixel indices covering all set pixels; Box(0,0,3,3) for a
/// full 4x4 mask.
inline Box bounding_box(const BinaryMask& mask) {
  int x_lo = mask.width(), y_lo = mask.height(), x_hi = -1, y_hi = -1;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(x, y)) continue;
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
    }
  }
  if (x_hi < 0) throw Error(ErrorCode::kEmptyMask, "bounding box of an empty mask");
  return {static_cast<double>(x_lo), static_cast<double>(y_lo), static_cast<double>(x_hi),
          static_cast<double>(y_hi)};
}

// Continuous area covered by the pixels of an index box.
inline Box pixel_extent(const Box& index_box) {
  return {index_box.x_min, index_box.y_min, index_box.x_max + 1.0, index_box.y_max + 1.0};
}

inline double iou(const Box& a, const Box& b) {
  if (!a.valid() || !b.valid()) throw Error(ErrorCode::kDegenerateRegion, "iou of an invalid box");
  const double iw = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double ih = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return a == b ? 1.0 : 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace ferret
