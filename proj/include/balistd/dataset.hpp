#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "balistd/common.hpp"
#include "balistd/imageio.hpp"
#include "balistd/rng.hpp"

namespace balistd {

struct SynthConfig {
  int count = 200;
  int size = 64;  // square scenes
  int targets_min = 1, targets_max = 3;
  double radius_min = 1.5, radius_max = 4.0;     // Gaussian profile sigmas, px
  double contrast_min = 0.1, contrast_max = 0.4;  // peak above local background
  double clutter_scale = 0.08;                    // low-frequency background amplitude
  double train_fraction = 0.8;
  std::uint64_t seed = 0;

  void validate() const {
    if (count < 0) throw std::invalid_argument("synth count must be >= 0");
    if (size < 16 || size % 8) throw std::invalid_argument("synth size must be >= 16 and divisible by 8");
    if (targets_min < 1 || targets_max < targets_min)
      throw std::invalid_argument("bad targets_per_image range");
    if (radius_min <= 0 || radius_max < radius_min)
      throw std::invalid_argument("bad target radius range");
    if (contrast_min <= 0 || contrast_max < contrast_min || contrast_max > 0.5)
      throw std::invalid_argument("bad target contrast range");
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
      throw std::invalid_argument("train_fraction must be in (0,1)");
    // Half-peak ellipse area ~= pi * 2 ln2 * rx * ry must stay small-target.
    if (M_PI * 2.0 * std::log(2.0) * radius_max * radius_max > 81.0)
      throw std::invalid_argument("target radius too large for the small-target bound (81 px)");
  }
};

template <typename T>
struct ImageSample {
  std::string id;
  GrayImage<T> image;
  MaskPlane mask;
};

namespace detail {

// Bilinearly upsampled coarse noise in [-1, 1].
template <typename T>
Plane<T> smooth_noise(int size, int cell, Rng& rng) {
  const int n = size / cell + 2;
  Plane<double> grid(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) grid(r, c) = rng.uniform(-1.0, 1.0);
  Plane<T> out(size, size);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const double y = static_cast<double>(r) / cell, x = static_cast<double>(c) / cell;
      const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
      const double fy = y - y0, fx = x - x0;
      out(r, c) = static_cast<T>(grid(y0, x0) * (1 - fy) * (1 - fx) +
                                 grid(y0, x0 + 1) * (1 - fy) * fx +
                                 grid(y0 + 1, x0) * fy * (1 - fx) +
                                 grid(y0 + 1, x0 + 1) * fy * fx);
    }
  return out;
}

}  // namespace detail

// Synthetic infrared-like scene: smooth low-frequency background plus mild
// clutter texture plus anisotropic Gaussian-profile targets. The mask marks
// pixels where a target profile exceeds half its peak. Images are quantized
// to the 8-bit grid so a disk round trip reproduces them exactly.
template <typename T>
ImageSample<T> synth_scene(const SynthConfig& cfg, int index) {
  Rng rng(derive_seed(cfg.seed, "synth-scene", static_cast<std::uint64_t>(index)));
  const int n = cfg.size;

  GrayImage<T> img(n, n);
  const double base = rng.uniform(0.25, 0.45);
  img.setConstant(static_cast<T>(base));
  img += detail::smooth_noise<T>(n, 8, rng) * static_cast<T>(cfg.clutter_scale);
  img += detail::smooth_noise<T>(n, 2, rng) * static_cast<T>(cfg.clutter_scale * 0.25);

  MaskPlane mask = MaskPlane::Zero(n, n);
  const int targets = cfg.targets_min + static_cast<int>(rng.uniform_int(
                          static_cast<std::uint32_t>(cfg.targets_max - cfg.targets_min + 1)));
  const double margin = 8.0;
  const double min_sep = 12.0;
  std::vector<std::pair<double, double>> centers;
  for (int t = 0; t < targets; ++t) {
    double cy = 0, cx = 0;
    for (int attempt = 0; attempt < 64; ++attempt) {
      cy = rng.uniform(margin, n - margin);
      cx = rng.uniform(margin, n - margin);
      bool ok = true;
      for (auto& [py, px] : centers)
        if (std::hypot(cy - py, cx - px) < min_sep) ok = false;
      if (ok) break;
    }
    centers.emplace_back(cy, cx);
    const double rx = rng.uniform(cfg.radius_min, cfg.radius_max);
    const double ry = rng.uniform(cfg.radius_min, cfg.radius_max);
    const double theta = rng.uniform(0.0, M_PI);
    const double amp = rng.uniform(cfg.contrast_min, cfg.contrast_max);
    const double ct = std::cos(theta), st = std::sin(theta);
    const int reach = static_cast<int>(std::ceil(3.5 * std::max(rx, ry)));
    for (int r = std::max(0, static_cast<int>(cy) - reach);
         r <= std::min(n - 1, static_cast<int>(cy) + reach); ++r)
      for (int c = std::max(0, static_cast<int>(cx) - reach);
           c <= std::min(n - 1, static_cast<int>(cx) + reach); ++c) {
        const double dy = r - cy, dx = c - cx;
        const double u = ct * dx + st * dy, v = -st * dx + ct * dy;
        const double p = amp * std::exp(-0.5 * (u * u / (rx * rx) + v * v / (ry * ry)));
        img(r, c) += static_cast<T>(p);
        if (p > amp / 2) mask(r, c) = 1;
      }
  }

  img = clamp01(std::move(img));
  // snap to the 8-bit grid (disk format is 8-bit PNG)
  for (Eigen::Index i = 0; i < img.size(); ++i)
    img.data()[i] = static_cast<T>(std::round(static_cast<double>(img.data()[i]) * 255.0) / 255.0);

  char id[32];
  std::snprintf(id, sizeof(id), "synth_%05d", index);
  return {id, std::move(img), std::move(mask)};
}

template <typename T>
std::vector<ImageSample<T>> synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<ImageSample<T>> out;
  out.reserve(cfg.count);
  for (int i = 0; i < cfg.count; ++i) out.push_back(synth_scene<T>(cfg, i));
  return out;
}

struct ManifestEntry {
  std::string id;
  std::string image_path;
  std::string mask_path;
  bool train = true;
};

struct DatasetManifest {
  std::string root;
  std::vector<ManifestEntry> entries;
  std::string hash_hex;  // sha-256 over all dataset file bytes

  std::vector<ManifestEntry> split(bool train) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
      if (e.train == train) out.push_back(e);
    return out;
  }
};

// Writes images/, masks/, splits.txt and MANIFEST.sha under root. The first
// floor(count * train_fraction) samples are tagged train, the rest test.
void write_dataset(const std::string& root, const std::vector<ImageSample<Real>>& samples,
                   double train_fraction);

// Loads and validates the directory layout written by write_dataset (and by
// the common images/ masks/ + split-list convention).
DatasetManifest load_manifest(const std::string& root);

// SHA-256 (hex) over every dataset file: sorted relative path, NUL, bytes.
std::string dataset_hash(const std::string& root, const std::vector<std::string>& rel_paths);

template <typename T>
ImageSample<T> load_sample(const ManifestEntry& e) {
  const Gray8 img = read_png_gray8(e.image_path);
  const Gray8 msk = read_png_gray8(e.mask_path);
  if (img.height != msk.height || img.width != msk.width)
    throw std::runtime_error("dimension mismatch between " + e.image_path + " (" +
                             std::to_string(img.height) + "x" + std::to_string(img.width) +
                             ") and " + e.mask_path + " (" + std::to_string(msk.height) + "x" +
                             std::to_string(msk.width) + ")");
  ImageSample<T> s;
  s.id = e.id;
  s.image = to_unit_plane<T>(img);
  s.mask.resize(msk.height, msk.width);
  for (int r = 0; r < msk.height; ++r)
    for (int c = 0; c < msk.width; ++c)
      s.mask(r, c) = msk.pixels[static_cast<std::size_t>(r) * msk.width + c] >= 128 ? 1 : 0;
  return s;
}

template <typename T>
std::vector<ImageSample<T>> load_split(const DatasetManifest& m, bool train) {
  std::vector<ImageSample<T>> out;
  for (const auto& e : m.entries)
    if (e.train == train) out.push_back(load_sample<T>(e));
  return out;
}

}  // namespace balistd
