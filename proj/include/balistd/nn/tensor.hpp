#pragma once

#include <Eigen/Core>

#include <stdexcept>

#include "balistd/common.hpp"

namespace balistd::nn {

// A C-channel feature map stored as an (H*W) x C column-major matrix, so each
// channel is one contiguous column. Pixel index p = r*W + c.
template <typename T>
struct Tensor {
  int h = 0, w = 0;
  MatX<T> m;  // (h*w) x channels

  Tensor() = default;
  Tensor(int channels, int height, int width)
      : h(height), w(width), m(MatX<T>::Zero(static_cast<Eigen::Index>(height) * width, channels)) {}

  int channels() const { return static_cast<int>(m.cols()); }
  Eigen::Index pixels() const { return m.rows(); }

  T& at(int ch, int r, int c) { return m(static_cast<Eigen::Index>(r) * w + c, ch); }
  T at(int ch, int r, int c) const { return m(static_cast<Eigen::Index>(r) * w + c, ch); }

  // Row-major H x W view of one channel.
  auto plane(int ch) {
    return Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        m.col(ch).data(), h, w);
  }
  auto plane(int ch) const {
    return Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        m.col(ch).data(), h, w);
  }

  bool all_finite() const { return m.allFinite(); }
};

template <typename T>
Tensor<T> from_plane(const Plane<T>& img) {
  Tensor<T> t(1, static_cast<int>(img.rows()), static_cast<int>(img.cols()));
  for (int r = 0; r < t.h; ++r)
    for (int c = 0; c < t.w; ++c) t.m(static_cast<Eigen::Index>(r) * t.w + c, 0) = img(r, c);
  return t;
}

template <typename T>
Plane<T> to_plane(const Tensor<T>& t, int ch = 0) {
  Plane<T> img(t.h, t.w);
  for (int r = 0; r < t.h; ++r)
    for (int c = 0; c < t.w; ++c) img(r, c) = t.m(static_cast<Eigen::Index>(r) * t.w + c, ch);
  return img;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.h != b.h || a.w != b.w) throw std::invalid_argument("concat_channels: shape mismatch");
  Tensor<T> out(a.channels() + b.channels(), a.h, a.w);
  out.m.leftCols(a.channels()) = a.m;
  out.m.rightCols(b.channels()) = b.m;
  return out;
}

}  // namespace balistd::nn
