#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace balistd {

// Scalar used by the shipped pipeline. Core math is templated, so tests can
// instantiate double where finite-difference accuracy matters.
using Real = float;

// Row-major so a plane maps 1:1 onto an image row buffer and onto a tensor
// channel (pixel index p = r*W + c throughout).
template <typename T>
using Plane = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using GrayImage = Plane<T>;

using MaskPlane = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <typename T>
using RowVecX = Eigen::Matrix<T, 1, Eigen::Dynamic>;

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

template <typename T>
void require_finite(const Plane<T>& img, const char* what) {
  if (!img.isFinite().all()) throw std::invalid_argument(std::string(what) + ": non-finite pixel");
}

template <typename T>
Plane<T> clamp01(Plane<T> img) {
  return img.max(T(0)).min(T(1));
}

}  // namespace balistd
