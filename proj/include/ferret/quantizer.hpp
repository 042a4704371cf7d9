#pragma once

// Discrete coordinate bins and the textual hybrid region encoding
// "name [b1, b2, b3, b4] <SPE>".

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "ferret/error.hpp"
#include "ferret/geometry.hpp"

namespace ferret {

inline constexpr int kDefaultBins = 1000;
inline constexpr const char* kSpeToken = "<SPE>";

struct QuantizerConfig {
  int n_bins = kDefaultBins;

  void validate() const {
    if (n_bins < 2) throw Error(ErrorCode::kInvalidArgument, "n_bins must be >= 2");
  }
};

/// Bin of `coord` within [0, extent]: floor(coord * n_bins / extent), with the
/// right edge clamped into the last bin. Depends only on coord / extent.
inline int quantize(double coord, double extent, const QuantizerConfig& cfg = {}) {
  cfg.validate();
  if (!(extent > 0.0)) throw Error(ErrorCode::kOutOfRange, "extent must be positive");
  if (!(coord >= 0.0 && coord <= extent)) {
    throw Error(ErrorCode::kOutOfRange,
                "coordinate " + std::to_string(coord) + " outside [0, " + std::to_string(extent) + "]");
  }
  // Single rounding on the product keeps integer-valued inputs exact.
  const double scaled = std::floor(coord * cfg.n_bins / extent);
  return std::clamp(static_cast<int>(scaled), 0, cfg.n_bins - 1);
}

/// Bin center in pixels.
inline double dequantize(int bin, double extent, const QuantizerConfig& cfg = {}) {
  cfg.validate();
  if (bin < 0 || bin >= cfg.n_bins) {
    throw Error(ErrorCode::kOutOfRange, "bin " + std::to_string(bin) + " outside [0, n_bins)");
  }
  if (!(extent > 0.0)) throw Error(ErrorCode::kOutOfRange, "extent must be positive");
  return (bin + 0.5) * extent / cfg.n_bins;
}

// Relative coordinates in [0, 1] as written in scene descriptions (three
// decimals). Products that land within 1e-9 below a bin edge are snapped up so
// decimal inputs such as 0.698 bin to 698.
inline int quantize_relative(double rel, const QuantizerConfig& cfg = {}) {
  cfg.validate();
  if (!(rel >= 0.0 && rel <= 1.0)) {
    throw Error(ErrorCode::kOutOfRange, "relative coordinate " + std::to_string(rel) + " outside [0, 1]");
  }
  const double scaled = std::floor(rel * cfg.n_bins + 1e-9);
  return std::clamp(static_cast<int>(scaled), 0, cfg.n_bins - 1);
}

// Box in bin units; points use x_min == x_max, y_min == y_max and point_form.
struct BinBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;
  bool point_form = false;

  bool in_range(int n_bins) const {
    auto ok = [n_bins](int v) { return v >= 0 && v < n_bins; };
    return ok(x_min) && ok(y_min) && ok(x_max) && ok(y_max) && x_min <= x_max && y_min <= y_max;
  }

  bool operator==(const BinBox&) const = default;
};

inline std::string format_bins(const BinBox& b) {
  if (b.point_form) return "[" + std::to_string(b.x_min) + ", " + std::to_string(b.y_min) + "]";
  return "[" + std::to_string(b.x_min) + ", " + std::to_string(b.y_min) + ", " +
         std::to_string(b.x_max) + ", " + std::to_string(b.y_max) + "]";
}

inline BinBox quantize_box(const Box& box, ImageSize size, const QuantizerConfig& cfg = {}) {
  return {quantize(box.x_min, size.width, cfg), quantize(box.y_min, size.height, cfg),
          quantize(box.x_max, size.width, cfg), quantize(box.y_max, size.height, cfg)};
}

// Pixel-space box spanned by bin centers.
inline Box dequantize_box(const BinBox& b, ImageSize size, const QuantizerConfig& cfg = {}) {
  return {dequantize(b.x_min, size.width, cfg), dequantize(b.y_min, size.height, cfg),
          dequantize(b.x_max, size.width, cfg), dequantize(b.y_max, size.height, cfg)};
}

struct HybridRegionToken {
  std::string region_name;
  BinBox bins;

  std::string render(bool include_spe = true) const {
    std::string out = region_name + " " + format_bins(bins);
    if (include_spe) out += std::string(" ") + kSpeToken;
    return out;
  }
};

/// Coordinate bins of a region: points keep their two coordinates, boxes
/// their corners, and free-form shapes the pixel extent of their rasterized
/// bounding box.
inline BinBox region_bins(const Region& region, ImageSize size, const QuantizerConfig& cfg = {}) {
  detail::check_image(size);
  if (const auto* p = std::get_if<Point>(&region)) {
    detail::check_in_bounds(p->x, p->y, size);
    const int bx = quantize(p->x, size.width, cfg);
    const int by = quantize(p->y, size.height, cfg);
    return {bx, by, bx, by, true};
  }
  if (const auto* b = std::get_if<Box>(&region)) {
    if (!b->valid()) throw Error(ErrorCode::kDegenerateRegion, "box has min > max");
    detail::check_in_bounds(b->x_min, b->y_min, size);
    detail::check_in_bounds(b->x_max, b->y_max, size);
    return quantize_box(*b, size, cfg);
  }
  return quantize_box(pixel_extent(bounding_box(rasterize(region, size))), size, cfg);
}

inline HybridRegionToken encode_region(const std::string& name, const Region& region, ImageSize size,
                                       const QuantizerConfig& cfg = {}) {
  if (name.empty()) throw Error(ErrorCode::kInvalidArgument, "region name must be non-empty");
  return {name, region_bins(region, size, cfg)};
}

/// "a cat [100, 50, 200, 300] <SPE>" style text for a referred region.
inline std::string encode_region_text(const std::string& name, const Region& region, ImageSize size,
                                      const QuantizerConfig& cfg = {}, bool include_spe = true) {
  return encode_region(name, region, size, cfg).render(include_spe);
}

}  // namespace ferret
