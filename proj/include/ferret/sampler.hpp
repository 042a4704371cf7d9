#pragma once

// Spatial-aware visual sampler: turns (binary mask, feature map) into one
// fixed-size region feature.
//
//   sample N positive points in the mask -> bilinear features
//   repeat `blocks` times:
//     FPS picks n/r centers; each center gathers its k nearest neighbors from
//     the block input and fuses them with
//       h_ik = sigma([theta([Z(x_ik) - Z(x_i); C(x_ik) - C(x_i)]); Z(x_i); C(x_i)])
//       h_i  = max_k h_ik                                  (per channel)
//   flatten the final points and apply an affine projection to D dims.
//
// C(x) is the point position normalized to [0,1]^2 by the image size. All
// index choices (samples, FPS picks, kNN lists, pooling argmax) are recorded in
// a tape so sampler_backward can route gradients through exactly the graph
// the forward pass built.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "ferret/error.hpp"
#include "ferret/featmap.hpp"
#include "ferret/geometry.hpp"
#include "ferret/rng.hpp"

namespace ferret {

struct SamplerConfig {
  int num_points = 512;  // N
  int ratio = 4;         // r, downsampling per block
  int neighbors = 24;    // k
  int blocks = 2;
  int channels = 1;      // C, feature-map channels
  int out_dim = 1;       // D

  // Input point count of block b (b == blocks gives the final count).
  int points_at(int b) const {
    int n = num_points;
    for (int i = 0; i < b; ++i) n /= ratio;
    return n;
  }
  int final_points() const { return points_at(blocks); }
  int flat_dim() const { return final_points() * channels; }

  void validate() const {
    if (num_points <= 0 || ratio <= 0 || neighbors <= 0 || blocks <= 0 || channels <= 0 || out_dim <= 0) {
      throw Error(ErrorCode::kInvalidArgument, "sampler config values must be positive");
    }
    int n = num_points;
    for (int b = 0; b < blocks; ++b) {
      if (n % ratio != 0) throw Error(ErrorCode::kInvalidArgument, "N must be divisible by r^blocks");
      n /= ratio;
      if (neighbors > n) throw Error(ErrorCode::kInvalidArgument, "k must not exceed n/r at any block");
    }
  }

  bool operator==(const SamplerConfig&) const = default;
};

// y = W x + b with W stored row-major (out x in).
struct Linear {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  Linear() = default;
  Linear(int in, int out)
      : in_dim(in), out_dim(out), weight(static_cast<std::size_t>(in) * out, 0.0), bias(out, 0.0) {}

  double& w(int o, int i) { return weight[static_cast<std::size_t>(o) * in_dim + i]; }
  double w(int o, int i) const { return weight[static_cast<std::size_t>(o) * in_dim + i]; }

  void apply(std::span<const double> x, std::span<double> y) const {
    for (int o = 0; o < out_dim; ++o) {
      double acc = bias[o];
      const double* row = weight.data() + static_cast<std::size_t>(o) * in_dim;
      for (int i = 0; i < in_dim; ++i) acc += row[i] * x[i];
      y[o] = acc;
    }
  }

  // grad_w += g x^T, grad_b += g, grad_x += W^T g.
  void backward(std::span<const double> x, std::span<const double> g, Linear& grad,
                std::span<double> grad_x) const {
    for (int o = 0; o < out_dim; ++o) {
      const double go = g[o];
      if (go == 0.0) continue;
      grad.bias[o] += go;
      double* grow = grad.weight.data() + static_cast<std::size_t>(o) * in_dim;
      const double* row = weight.data() + static_cast<std::size_t>(o) * in_dim;
      for (int i = 0; i < in_dim; ++i) {
        grow[i] += go * x[i];
        grad_x[i] += row[i] * go;
      }
    }
  }

  bool operator==(const Linear&) const = default;
};

struct BlockParams {
  Linear theta;  // [dZ; dC] (C + 2) -> C
  Linear sigma;  // [theta out; Z; C] (2C + 2) -> C

  bool operator==(const BlockParams&) const = default;
};

struct SamplerParams {
  std::vector<BlockParams> blocks;
  Linear projection;  // final_points * C -> D

  static SamplerParams zeros(const SamplerConfig& cfg) {
    cfg.validate();
    SamplerParams p;
    const int c = cfg.channels;
    for (int b = 0; b < cfg.blocks; ++b) p.blocks.push_back({Linear(c + 2, c), Linear(2 * c + 2, c)});
    p.projection = Linear(cfg.flat_dim(), cfg.out_dim);
    return p;
  }

  // Seeded uniform(-a, a), a = fan_in^-1/2, rounded to float32 so that a
  // .sparams round trip is lossless.
  static SamplerParams init(const SamplerConfig& cfg, std::uint64_t seed) {
    SamplerParams p = zeros(cfg);
    RandomStream rng(seed);
    p.for_each_tensor([&](const std::string&, std::span<double> t, int fan_in) {
      const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (double& v : t) v = static_cast<float>(rng.uniform(-a, a));
    });
    return p;
  }

  // Visits every parameter tensor in serialization order with its fan-in.
  template <typename Fn>
  void for_each_tensor(Fn&& fn) { visit_tensors(*this, fn); }

  template <typename Fn>
  void for_each_tensor(Fn&& fn) const { visit_tensors(*this, fn); }

  void check(const SamplerConfig& cfg) const {
    const int c = cfg.channels;
    bool ok = static_cast<int>(blocks.size()) == cfg.blocks;
    for (const BlockParams& b : blocks) {
      ok = ok && b.theta.in_dim == c + 2 && b.theta.out_dim == c && b.sigma.in_dim == 2 * c + 2 &&
           b.sigma.out_dim == c && b.theta.weight.size() == static_cast<std::size_t>(c) * (c + 2) &&
           b.sigma.weight.size() == static_cast<std::size_t>(c) * (2 * c + 2) &&
           b.theta.bias.size() == static_cast<std::size_t>(c) && b.sigma.bias.size() == static_cast<std::size_t>(c);
    }
    ok = ok && projection.in_dim == cfg.flat_dim() && projection.out_dim == cfg.out_dim &&
         projection.weight.size() == static_cast<std::size_t>(cfg.flat_dim()) * cfg.out_dim &&
         projection.bias.size() == static_cast<std::size_t>(cfg.out_dim);
    if (!ok) throw Error(ErrorCode::kShapeMismatch, "sampler params do not match config");
    for_each_tensor([](const std::string& name, std::span<const double> t, int) {
      for (double v : t) {
        if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "non-finite value in " + name);
      }
    });
  }

  // FNV-1a over the raw parameter bytes.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for_each_tensor([&](const std::string&, std::span<const double> t, int) {
      const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
      for (std::size_t i = 0; i < t.size_bytes(); ++i) {
        h ^= bytes[i];
        h *= 0x100000001B3ULL;
      }
      h ^= t.size();
      h *= 0x100000001B3ULL;
    });
    return h;
  }

  template <typename Self, typename Fn>
  static void visit_tensors(Self& self, Fn& fn) {
    using Elem = std::conditional_t<std::is_const_v<Self>, const double, double>;
    auto span_of = [](auto& v) { return std::span<Elem>(v.data(), v.size()); };
    for (std::size_t b = 0; b < self.blocks.size(); ++b) {
      auto& blk = self.blocks[b];
      const std::string pre = "block" + std::to_string(b) + ".";
      fn(pre + "theta.weight", span_of(blk.theta.weight), blk.theta.in_dim);
      fn(pre + "theta.bias", span_of(blk.theta.bias), blk.theta.in_dim);
      fn(pre + "sigma.weight", span_of(blk.sigma.weight), blk.sigma.in_dim);
      fn(pre + "sigma.bias", span_of(blk.sigma.bias), blk.sigma.in_dim);
    }
    fn(std::string("projection.weight"), span_of(self.projection.weight), self.projection.in_dim);
    fn(std::string("projection.bias"), span_of(self.projection.bias), self.projection.in_dim);
  }

  bool operator==(const SamplerParams&) const = default;
};

struct PointSet {
  std::vector<Vec2> coords;  // normalized to [0,1]^2
  int channels = 0;
  std::vector<double> features;  // size() x channels, row-major

  std::size_t size() const { return coords.size(); }
  std::span<const double> feature(std::size_t i) const {
    return {features.data() + i * channels, static_cast<std::size_t>(channels)};
  }
  std::span<double> feature(std::size_t i) {
    return {features.data() + i * channels, static_cast<std::size_t>(channels)};
  }
};

struct RegionFeature {
  std::vector<double> values;
};

/// n pixel centers drawn uniformly from the set pixels of `mask`: without
/// replacement when the mask has at least n pixels, with replacement
/// otherwise. Coordinates are normalized by the mask size.
inline PointSet sample_positive_points(const BinaryMask& mask, int n, std::uint64_t seed) {
  if (n <= 0) throw Error(ErrorCode::kInvalidArgument, "sample count must be positive");
  std::vector<std::uint32_t> pool = mask.empty_dims() ? std::vector<std::uint32_t>{} : mask.on_pixels();
  if (pool.empty()) throw Error(ErrorCode::kEmptyMask, "cannot sample points from an empty mask");
  RandomStream rng(seed);
  std::vector<std::uint32_t> picked;
  picked.reserve(n);
  if (pool.size() >= static_cast<std::size_t>(n)) {
    // Partial Fisher-Yates; picks come out in draw order.
    for (int i = 0; i < n; ++i) {
      const std::size_t j = i + rng.uniform_index(pool.size() - i);
      std::swap(pool[i], pool[j]);
      picked.push_back(pool[i]);
    }
  } else {
    for (int i = 0; i < n; ++i) picked.push_back(pool[rng.uniform_index(pool.size())]);
  }
  PointSet out;
  out.coords.reserve(n);
  const double w = mask.width();
  const double h = mask.height();
  for (std::uint32_t p : picked) {
    const std::uint32_t px = p % static_cast<std::uint32_t>(mask.width());
    const std::uint32_t py = p / static_cast<std::uint32_t>(mask.width());
    out.coords.push_back({(px + 0.5) / w, (py + 0.5) / h});
  }
  return out;
}

inline double squared_distance(Vec2 a, Vec2 b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

/// Farthest point sampling: a seeded random start, then repeatedly the
/// unselected point farthest from the selected set (lowest index on ties).
inline std::vector<std::uint32_t> fps(const PointSet& points, int m, std::uint64_t seed) {
  const std::size_t n = points.size();
  if (m < 0 || static_cast<std::size_t>(m) > n) {
    throw Error(ErrorCode::kInvalidArgument, "fps: m must be in [0, n]");
  }
  std::vector<std::uint32_t> out;
  if (m == 0) return out;
  out.reserve(m);
  RandomStream rng(seed);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  std::uint32_t cur = static_cast<std::uint32_t>(rng.uniform_index(n));
  for (int step = 0; step < m; ++step) {
    out.push_back(cur);
    taken[cur] = 1;
    if (step + 1 == m) break;
    std::uint32_t best = 0;
    double best_d2 = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      min_d2[i] = std::min(min_d2[i], squared_distance(points.coords[i], points.coords[cur]));
      if (min_d2[i] > best_d2) {
        best_d2 = min_d2[i];
        best = static_cast<std::uint32_t>(i);
      }
    }
    cur = best;
  }
  return out;
}

/// Indices of the k points nearest to points[query] (itself included), in
/// ascending distance, lowest index first on ties.
inline std::vector<std::uint32_t> knn(const PointSet& points, std::size_t query, int k) {
  const std::size_t n = points.size();
  if (query >= n) throw Error(ErrorCode::kOutOfRange, "knn query index out of range");
  if (k < 0 || static_cast<std::size_t>(k) > n) throw Error(ErrorCode::kInvalidArgument, "knn: k must be in [0, n]");
  std::vector<std::pair<double, std::uint32_t>> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = {squared_distance(points.coords[i], points.coords[query]), static_cast<std::uint32_t>(i)};
  }
  std::partial_sort(d.begin(), d.begin() + k, d.end());
  std::vector<std::uint32_t> out(k);
  for (int i = 0; i < k; ++i) out[i] = d[i].second;
  return out;
}

// Everything one block decided during forward.
struct BlockTrace {
  PointSet input;
  std::vector<std::uint32_t> centers;
  std::vector<std::uint32_t> neighbors;  // centers.size() x k
  std::vector<double> fused;             // h_ik: centers.size() x k x C
  std::vector<std::uint32_t> argmax;     // pooled slot per (center, channel)
  int k = 0;
};

namespace detail {

// delta = [Z(j) - Z(i); C(j) - C(i)] and u = [theta(delta); Z(i); C(i)].
inline void fusion_inputs(const PointSet& in, std::uint32_t center, std::uint32_t nb, const BlockParams& p,
                          std::span<double> delta, std::span<double> u) {
  const int c = in.channels;
  const auto zi = in.feature(center);
  const auto zj = in.feature(nb);
  for (int ch = 0; ch < c; ++ch) delta[ch] = zj[ch] - zi[ch];
  delta[c] = in.coords[nb].x - in.coords[center].x;
  delta[c + 1] = in.coords[nb].y - in.coords[center].y;
  p.theta.apply(delta, u.subspan(0, c));
  for (int ch = 0; ch < c; ++ch) u[c + ch] = zi[ch];
  u[2 * c] = in.coords[center].x;
  u[2 * c + 1] = in.coords[center].y;
}

}  // namespace detail

/// Gathering and pooling for fixed centers: fuses each center with its k
/// nearest neighbors and max-pools over them. Output points take the
/// centers' coordinates.
inline PointSet fuse_and_pool(const PointSet& in, const std::vector<std::uint32_t>& centers, const BlockParams& p,
                              int k, BlockTrace* trace = nullptr) {
  const int c = in.channels;
  if (p.theta.in_dim != c + 2 || p.theta.out_dim != c || p.sigma.in_dim != 2 * c + 2 || p.sigma.out_dim != c) {
    throw Error(ErrorCode::kShapeMismatch, "block params do not match point feature width");
  }
  if (in.features.size() != in.size() * static_cast<std::size_t>(c)) {
    throw Error(ErrorCode::kShapeMismatch, "point set feature buffer size mismatch");
  }
  const std::size_t m = centers.size();
  PointSet out;
  out.channels = c;
  out.coords.reserve(m);
  out.features.assign(m * c, 0.0);
  std::vector<double> delta(c + 2), u(2 * c + 2), fused(static_cast<std::size_t>(k) * c);
  if (trace) {
    trace->input = in;
    trace->centers = centers;
    trace->k = k;
    trace->neighbors.assign(m * k, 0);
    trace->fused.assign(m * k * c, 0.0);
    trace->argmax.assign(m * c, 0);
  }
  for (std::size_t i = 0; i < m; ++i) {
    const std::uint32_t ci = centers[i];
    const std::vector<std::uint32_t> nb = knn(in, ci, k);
    for (int s = 0; s < k; ++s) {
      detail::fusion_inputs(in, ci, nb[s], p, delta, u);
      p.sigma.apply(u, std::span<double>(fused).subspan(static_cast<std::size_t>(s) * c, c));
    }
    out.coords.push_back(in.coords[ci]);
    auto h = out.feature(i);
    for (int ch = 0; ch < c; ++ch) {
      int best = 0;
      for (int s = 1; s < k; ++s) {
        if (fused[static_cast<std::size_t>(s) * c + ch] > fused[static_cast<std::size_t>(best) * c + ch]) best = s;
      }
      h[ch] = fused[static_cast<std::size_t>(best) * c + ch];
      if (trace) trace->argmax[i * c + ch] = static_cast<std::uint32_t>(best);
    }
    if (trace) {
      std::copy(nb.begin(), nb.end(), trace->neighbors.begin() + i * k);
      std::copy(fused.begin(), fused.end(), trace->fused.begin() + i * k * c);
    }
  }
  return out;
}

/// One sampling / gathering / pooling block: n input points -> n / ratio.
inline PointSet block_forward(const PointSet& in, const BlockParams& p, int ratio, int k, std::uint64_t seed,
                              BlockTrace* trace = nullptr) {
  if (ratio <= 0 || in.size() % static_cast<std::size_t>(ratio) != 0) {
    throw Error(ErrorCode::kShapeMismatch, "point count not divisible by ratio");
  }
  const int m = static_cast<int>(in.size()) / ratio;
  if (k <= 0 || k > static_cast<int>(in.size())) throw Error(ErrorCode::kShapeMismatch, "k exceeds block input size");
  return fuse_and_pool(in, fps(in, m, seed), p, k, trace);
}

// Seeds of the sub-streams of one sampler call.
inline std::uint64_t point_sampling_seed(std::uint64_t seed) { return derive_seed(seed, 0); }
inline std::uint64_t block_seed(std::uint64_t seed, int block) { return derive_seed(seed, 1 + static_cast<std::uint64_t>(block)); }

struct SamplerTape {
  bool valid = false;
  SamplerConfig cfg;
  std::uint64_t params_fingerprint = 0;
  int map_height = 0, map_width = 0, map_channels = 0;
  std::vector<BilinearTaps> taps;  // one per sampled point
  std::vector<BlockTrace> blocks;
  std::vector<double> flat;        // projection input
};

struct SamplerOutput {
  RegionFeature feature;
  SamplerTape tape;
  PointSet final_points;
};

/// Full sampler pass. The mask is image-resolution; the feature map may be
/// any size and is addressed through normalized coordinates.
inline SamplerOutput sampler_forward(const BinaryMask& mask, const FeatureMap& map, const SamplerConfig& cfg,
                                     const SamplerParams& params, std::uint64_t seed) {
  cfg.validate();
  params.check(cfg);
  if (map.channels() != cfg.channels) throw Error(ErrorCode::kShapeMismatch, "feature map channels != config C");
  SamplerOutput out;
  SamplerTape& tape = out.tape;
  tape.cfg = cfg;
  tape.params_fingerprint = params.fingerprint();
  tape.map_height = map.height();
  tape.map_width = map.width();
  tape.map_channels = map.channels();

  PointSet pts = sample_positive_points(mask, cfg.num_points, point_sampling_seed(seed));
  pts.channels = cfg.channels;
  pts.features.resize(pts.size() * cfg.channels);
  tape.taps.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec2 g = normalized_to_grid(pts.coords[i], map);
    tape.taps.push_back(bilinear_taps(map, g.x, g.y));
    const std::vector<double> f = bilinear(map, g.x, g.y);
    std::copy(f.begin(), f.end(), pts.feature(i).begin());
  }

  tape.blocks.resize(cfg.blocks);
  for (int b = 0; b < cfg.blocks; ++b) {
    pts = block_forward(pts, params.blocks[b], cfg.ratio, cfg.neighbors, block_seed(seed, b), &tape.blocks[b]);
  }
  tape.flat = pts.features;
  out.feature.values.assign(cfg.out_dim, 0.0);
  params.projection.apply(tape.flat, out.feature.values);
  out.final_points = std::move(pts);
  tape.valid = true;
  return out;
}

struct SamplerGrads {
  SamplerParams params;
  std::vector<double> feature_map;  // same layout as FeatureMap::values()
};

/// Reverse-mode gradients of <upstream, feature> w.r.t. every parameter and
/// every feature-map value, with all discrete choices held as recorded.
inline SamplerGrads sampler_backward(const SamplerTape& tape, const SamplerParams& params,
                                     std::span<const double> upstream) {
  if (!tape.valid) throw Error(ErrorCode::kStaleTape, "tape was not produced by a forward pass");
  if (params.fingerprint() != tape.params_fingerprint) {
    throw Error(ErrorCode::kStaleTape, "params differ from the ones used in forward");
  }
  const SamplerConfig& cfg = tape.cfg;
  if (upstream.size() != static_cast<std::size_t>(cfg.out_dim)) {
    throw Error(ErrorCode::kShapeMismatch, "upstream gradient must have D entries");
  }
  const int c = cfg.channels;
  SamplerGrads grads;
  grads.params = SamplerParams::zeros(cfg);
  grads.feature_map.assign(static_cast<std::size_t>(tape.map_height) * tape.map_width * tape.map_channels, 0.0);

  std::vector<double> g_points(tape.flat.size(), 0.0);
  params.projection.backward(tape.flat, upstream, grads.params.projection, g_points);

  std::vector<double> delta(c + 2), u(2 * c + 2), g_h(c), g_u(2 * c + 2), g_delta(c + 2);
  for (int b = cfg.blocks - 1; b >= 0; --b) {
    const BlockTrace& tr = tape.blocks[b];
    const BlockParams& p = params.blocks[b];
    BlockParams& gp = grads.params.blocks[b];
    std::vector<double> g_in(tr.input.features.size(), 0.0);
    for (std::size_t i = 0; i < tr.centers.size(); ++i) {
      const std::uint32_t ci = tr.centers[i];
      for (int s = 0; s < tr.k; ++s) {
        bool any = false;
        for (int ch = 0; ch < c; ++ch) {
          const bool routed = tr.argmax[i * c + ch] == static_cast<std::uint32_t>(s);
          g_h[ch] = routed ? g_points[i * c + ch] : 0.0;
          any = any || g_h[ch] != 0.0;
        }
        if (!any) continue;
        const std::uint32_t nb = tr.neighbors[i * tr.k + s];
        detail::fusion_inputs(tr.input, ci, nb, p, delta, u);
        std::fill(g_u.begin(), g_u.end(), 0.0);
        p.sigma.backward(u, g_h, gp.sigma, g_u);
        for (int ch = 0; ch < c; ++ch) g_in[ci * c + ch] += g_u[c + ch];
        std::fill(g_delta.begin(), g_delta.end(), 0.0);
        p.theta.backward(delta, std::span<const double>(g_u).subspan(0, c), gp.theta, g_delta);
        for (int ch = 0; ch < c; ++ch) {
          g_in[nb * c + ch] += g_delta[ch];
          g_in[ci * c + ch] -= g_delta[ch];
        }
      }
    }
    g_points = std::move(g_in);
  }

  for (std::size_t i = 0; i < tape.taps.size(); ++i) {
    const BilinearTaps& t = tape.taps[i];
    for (int q = 0; q < 4; ++q) {
      for (int ch = 0; ch < c; ++ch) grads.feature_map[t.offsets[q] + ch] += t.weights[q] * g_points[i * c + ch];
    }
  }
  return grads;
}

// ---- .sparams I/O ----------------------------------------------------------
// "SPRM", u32 version (1), u32 N, r, k, blocks, C, D, then float32 tensors in
// SamplerParams::for_each_tensor order. All integers little-endian.

inline constexpr std::uint32_t kSparamsVersion = 1;

struct SamplerBundle {
  SamplerConfig cfg;
  SamplerParams params;
};

inline void write_sparams(std::ostream& os, const SamplerConfig& cfg, const SamplerParams& params) {
  cfg.validate();
  params.check(cfg);
  os.write("SPRM", 4);
  detail::put_u32(os, kSparamsVersion);
  for (int v : {cfg.num_points, cfg.ratio, cfg.neighbors, cfg.blocks, cfg.channels, cfg.out_dim}) {
    detail::put_u32(os, static_cast<std::uint32_t>(v));
  }
  params.for_each_tensor([&](const std::string&, std::span<const double> t, int) {
    for (double v : t) detail::put_f32(os, v);
  });
  if (!os) throw Error(ErrorCode::kIo, "failed writing sampler params");
}

inline SamplerBundle read_sparams(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "SPRM") throw Error(ErrorCode::kFormat, "bad .sparams magic");
  if (detail::get_u32(is) != kSparamsVersion) throw Error(ErrorCode::kFormat, "unsupported .sparams version");
  SamplerBundle bundle;
  int* fields[] = {&bundle.cfg.num_points, &bundle.cfg.ratio, &bundle.cfg.neighbors,
                   &bundle.cfg.blocks, &bundle.cfg.channels, &bundle.cfg.out_dim};
  for (int* f : fields) {
    const std::uint32_t v = detail::get_u32(is);
    if (v == 0 || v > (1u << 24)) throw Error(ErrorCode::kFormat, ".sparams header value out of range");
    *f = static_cast<int>(v);
  }
  bundle.cfg.validate();
  bundle.params = SamplerParams::zeros(bundle.cfg);
  bundle.params.for_each_tensor([&](const std::string&, std::span<double> t, int) {
    for (double& v : t) v = detail::get_f32(is);
  });
  if (is.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::kFormat, "trailing bytes in .sparams");
  bundle.params.check(bundle.cfg);
  return bundle;
}

inline void save_sparams(const std::string& path, const SamplerConfig& cfg, const SamplerParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::kIo, "cannot open " + path);
  write_sparams(os, cfg, params);
}

inline SamplerBundle load_sparams(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kIo, "cannot open " + path);
  return read_sparams(is);
}

}  // namespace ferret
