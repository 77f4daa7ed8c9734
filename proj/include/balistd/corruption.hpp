#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "balistd/common.hpp"
#include "balistd/imageio.hpp"
#include "balistd/rng.hpp"

namespace balistd {

enum class CorruptionKind : int {
  gaussian_noise = 0,
  shot_noise,
  impulse_noise,
  motion_blur,
  defocus_blur,
  gaussian_blur,
  brightness,
  contrast,
  pixelate,
  jpeg_compression,
};

inline constexpr int kNumKinds = 10;
inline constexpr int kNumSeverities = 3;
inline constexpr int kNumActions = kNumKinds * kNumSeverities;

enum class CorruptionGroup { noise, blur, isp };

inline CorruptionGroup group_of(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::gaussian_noise:
    case CorruptionKind::shot_noise:
    case CorruptionKind::impulse_noise:
      return CorruptionGroup::noise;
    case CorruptionKind::motion_blur:
    case CorruptionKind::defocus_blur:
    case CorruptionKind::gaussian_blur:
      return CorruptionGroup::blur;
    default:
      return CorruptionGroup::isp;
  }
}

inline constexpr std::array<const char*, kNumKinds> kKindNames = {
    "gaussian_noise", "shot_noise", "impulse_noise", "motion_blur",  "defocus_blur",
    "gaussian_blur",  "brightness", "contrast",      "pixelate",     "jpeg_compression",
};

inline const char* kind_name(CorruptionKind k) { return kKindNames[static_cast<int>(k)]; }

inline std::string all_kind_names() {
  std::string s;
  for (int i = 0; i < kNumKinds; ++i) {
    if (i) s += ", ";
    s += kKindNames[i];
  }
  return s;
}

inline CorruptionKind kind_from_name(const std::string& name) {
  for (int i = 0; i < kNumKinds; ++i)
    if (name == kKindNames[i]) return static_cast<CorruptionKind>(i);
  throw std::invalid_argument("unknown corruption kind '" + name + "' (valid: " + all_kind_names() + ")");
}

struct Severity {
  int level;
  explicit Severity(int lvl) : level(lvl) {
    if (lvl < 1 || lvl > kNumSeverities)
      throw std::invalid_argument("severity level must be in {1,2,3}, got " + std::to_string(lvl));
  }
};

struct CorruptionAction {
  CorruptionKind kind;
  Severity severity;
};

inline int action_index(const CorruptionAction& a) {
  return kNumSeverities * static_cast<int>(a.kind) + (a.severity.level - 1);
}

inline CorruptionAction action_from_index(int i) {
  if (i < 0 || i >= kNumActions) throw std::invalid_argument("action index out of range");
  return {static_cast<CorruptionKind>(i / kNumSeverities), Severity(i % kNumSeverities + 1)};
}

// Severity parameters, indexed by level-1. The shipped defaults can be
// overridden from the run config; the resolved table is recorded in every
// robustness report and its fingerprint in every checkpoint.
struct CorruptionTable {
  std::array<double, 3> gaussian_noise_sigma{0.04, 0.08, 0.12};
  std::array<double, 3> shot_noise_photons{60.0, 25.0, 12.0};
  std::array<double, 3> impulse_noise_prob{0.01, 0.03, 0.06};
  std::array<int, 3> motion_blur_length{5, 9, 15};
  std::array<int, 3> defocus_blur_radius{2, 4, 6};
  std::array<double, 3> gaussian_blur_sigma{1.0, 2.0, 3.0};
  std::array<double, 3> brightness_delta{0.1, 0.2, 0.3};
  std::array<double, 3> contrast_scale{0.75, 0.5, 0.3};
  std::array<int, 3> pixelate_block{2, 4, 6};
  std::array<int, 3> jpeg_quality{25, 15, 10};

  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mixd = [&h](double v) { h = fnv1a64(&v, sizeof(v), h); };
    auto mixi = [&h](int v) { h = fnv1a64(&v, sizeof(v), h); };
    for (double v : gaussian_noise_sigma) mixd(v);
    for (double v : shot_noise_photons) mixd(v);
    for (double v : impulse_noise_prob) mixd(v);
    for (int v : motion_blur_length) mixi(v);
    for (int v : defocus_blur_radius) mixi(v);
    for (double v : gaussian_blur_sigma) mixd(v);
    for (double v : brightness_delta) mixd(v);
    for (double v : contrast_scale) mixd(v);
    for (int v : pixelate_block) mixi(v);
    for (int v : jpeg_quality) mixi(v);
    return h;
  }
};

// Side of the square kernel a blur kind needs at the given level; images
// smaller than this are rejected for blur kinds.
inline int blur_kernel_side(CorruptionKind k, int level, const CorruptionTable& tbl) {
  const int i = level - 1;
  switch (k) {
    case CorruptionKind::motion_blur:
      return tbl.motion_blur_length[i] | 1;
    case CorruptionKind::defocus_blur:
      return 2 * tbl.defocus_blur_radius[i] + 1;
    case CorruptionKind::gaussian_blur:
      return 2 * static_cast<int>(std::ceil(4.0 * tbl.gaussian_blur_sigma[i])) + 1;
    default:
      return 0;
  }
}

namespace detail {

// Dense 2-D convolution with replicate (clamp-to-edge) padding.
template <typename T>
Plane<T> conv2_replicate(const Plane<T>& img, const Plane<double>& kernel) {
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  const int kh = static_cast<int>(kernel.rows()), kw = static_cast<int>(kernel.cols());
  const int cy = kh / 2, cx = kw / 2;
  Plane<T> out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int i = 0; i < kh; ++i) {
        int rr = std::clamp(r + i - cy, 0, h - 1);
        for (int j = 0; j < kw; ++j) {
          int cc = std::clamp(c + j - cx, 0, w - 1);
          acc += kernel(i, j) * static_cast<double>(img(rr, cc));
        }
      }
      out(r, c) = static_cast<T>(acc);
    }
  }
  return out;
}

// Separable pass along one axis, replicate padding.
template <typename T>
Plane<T> conv1_replicate(const Plane<T>& img, const std::vector<double>& taps, bool horizontal) {
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  const int radius = static_cast<int>(taps.size()) / 2;
  Plane<T> out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) {
        int rr = horizontal ? r : std::clamp(r + t, 0, h - 1);
        int cc = horizontal ? std::clamp(c + t, 0, w - 1) : c;
        acc += taps[t + radius] * static_cast<double>(img(rr, cc));
      }
      out(r, c) = static_cast<T>(acc);
    }
  }
  return out;
}

inline Plane<double> motion_kernel(int length, double angle) {
  const int side = length | 1;
  Plane<double> k = Plane<double>::Zero(side, side);
  const double cy = (side - 1) / 2.0, cx = (side - 1) / 2.0;
  const double dy = std::sin(angle), dx = std::cos(angle);
  // Bilinear splat of `length` unit points along the line through the center.
  for (int i = 0; i < length; ++i) {
    const double t = i - (length - 1) / 2.0;
    const double y = cy + t * dy, x = cx + t * dx;
    const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
    const double fy = y - y0, fx = x - x0;
    auto add = [&](int r, int c, double wgt) {
      if (r >= 0 && r < side && c >= 0 && c < side) k(r, c) += wgt;
    };
    add(y0, x0, (1 - fy) * (1 - fx));
    add(y0, x0 + 1, (1 - fy) * fx);
    add(y0 + 1, x0, fy * (1 - fx));
    add(y0 + 1, x0 + 1, fy * fx);
  }
  k /= k.sum();
  return k;
}

inline Plane<double> disk_kernel(int radius) {
  const int side = 2 * radius + 1;
  Plane<double> k(side, side);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      const double d = std::hypot(r - radius, c - radius);
      k(r, c) = d <= radius + 1e-9 ? 1.0 : 0.0;
    }
  k /= k.sum();
  return k;
}

inline std::vector<double> gaussian_taps(double sigma) {
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    taps[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
    sum += taps[t + radius];
  }
  for (double& v : taps) v /= sum;
  return taps;
}

}  // namespace detail

// Realizes one (kind, severity) corruption on a [0,1] grayscale image.
// Pure in (image, action, seed): identical triples give bit-identical
// outputs. Pixels are visited row-major wherever randomness is consumed.
template <typename T>
Plane<T> apply(const Plane<T>& img, const CorruptionAction& action, std::uint64_t seed,
               const CorruptionTable& tbl = {}) {
  require_finite(img, "corruption apply");
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  if (h <= 0 || w <= 0) throw std::invalid_argument("corruption apply: empty image");
  const int lvl = action.severity.level, i = lvl - 1;

  if (group_of(action.kind) == CorruptionGroup::blur) {
    const int side = blur_kernel_side(action.kind, lvl, tbl);
    if (h < side || w < side)
      throw std::invalid_argument("corruption apply: image " + std::to_string(h) + "x" +
                                  std::to_string(w) + " smaller than blur kernel (" +
                                  std::to_string(side) + ")");
  }

  Rng rng(derive_seed(seed, "corruption", static_cast<std::uint64_t>(action_index(action))));
  Plane<T> out;

  switch (action.kind) {
    case CorruptionKind::gaussian_noise: {
      const double sigma = tbl.gaussian_noise_sigma[i];
      out = img;
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
          out(r, c) = static_cast<T>(img(r, c) + sigma * rng.normal());
      break;
    }
    case CorruptionKind::shot_noise: {
      const double photons = tbl.shot_noise_photons[i];
      out.resize(h, w);
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
          out(r, c) = static_cast<T>(rng.poisson(static_cast<double>(img(r, c)) * photons) / photons);
      break;
    }
    case CorruptionKind::impulse_noise: {
      const double p = tbl.impulse_noise_prob[i];
      out = img;
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
          if (rng.uniform() < p) out(r, c) = rng.uniform() < 0.5 ? T(0) : T(1);
      break;
    }
    case CorruptionKind::motion_blur: {
      const double angle = rng.uniform(0.0, M_PI);
      out = detail::conv2_replicate(img, detail::motion_kernel(tbl.motion_blur_length[i], angle));
      break;
    }
    case CorruptionKind::defocus_blur: {
      out = detail::conv2_replicate(img, detail::disk_kernel(tbl.defocus_blur_radius[i]));
      break;
    }
    case CorruptionKind::gaussian_blur: {
      const auto taps = detail::gaussian_taps(tbl.gaussian_blur_sigma[i]);
      out = detail::conv1_replicate(detail::conv1_replicate(img, taps, true), taps, false);
      break;
    }
    case CorruptionKind::brightness: {
      out = img + static_cast<T>(tbl.brightness_delta[i]);
      break;
    }
    case CorruptionKind::contrast: {
      const T c = static_cast<T>(tbl.contrast_scale[i]);
      out = (img - T(0.5)) * c + T(0.5);
      break;
    }
    case CorruptionKind::pixelate: {
      const int b = tbl.pixelate_block[i];
      out.resize(h, w);
      for (int r0 = 0; r0 < h; r0 += b)
        for (int c0 = 0; c0 < w; c0 += b) {
          const int rn = std::min(b, h - r0), cn = std::min(b, w - c0);
          const double mean = img.block(r0, c0, rn, cn).template cast<double>().mean();
          out.block(r0, c0, rn, cn).setConstant(static_cast<T>(mean));
        }
      break;
    }
    case CorruptionKind::jpeg_compression: {
      const Gray8 decoded = jpeg_roundtrip_gray8(quantize_to_gray8(img), tbl.jpeg_quality[i]);
      out = to_unit_plane<T>(decoded);
      break;
    }
  }

  return clamp01(std::move(out));
}

// Mean absolute pixel difference; 0 iff the images are identical.
template <typename T>
double distortion_magnitude(const Plane<T>& clean, const Plane<T>& corrupted) {
  if (clean.rows() != corrupted.rows() || clean.cols() != corrupted.cols())
    throw std::invalid_argument("distortion_magnitude: shape mismatch");
  return (clean.template cast<double>() - corrupted.template cast<double>()).abs().mean();
}

}  // namespace balistd
