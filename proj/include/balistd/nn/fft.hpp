#pragma once

#include <unsupported/Eigen/FFT>

#include <complex>
#include <vector>

#include "balistd/nn/tensor.hpp"

namespace balistd::nn {

template <typename T>
using CMat = Eigen::Matrix<std::complex<T>, Eigen::Dynamic, Eigen::Dynamic>;

// Full 2-D complex DFT (rows then columns). Inverse carries the usual
// 1/(H*W) normalization.
template <typename T>
void fft2_inplace(CMat<T>& a, bool inverse) {
  static thread_local Eigen::FFT<T> fft;
  const int h = static_cast<int>(a.rows()), w = static_cast<int>(a.cols());
  std::vector<std::complex<T>> in(std::max(h, w)), out(std::max(h, w));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) in[c] = a(r, c);
    if (inverse)
      fft.inv(out.data(), in.data(), w);
    else
      fft.fwd(out.data(), in.data(), w);
    for (int c = 0; c < w; ++c) a(r, c) = out[c];
  }
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) in[r] = a(r, c);
    if (inverse)
      fft.inv(out.data(), in.data(), h);
    else
      fft.fwd(out.data(), in.data(), h);
    for (int r = 0; r < h; ++r) a(r, c) = out[r];
  }
}

inline int half_width(int w) { return w / 2 + 1; }

// Forward real 2-D DFT of each channel, keeping the non-redundant half
// spectrum. Output holds 2C channels of size H x (W/2+1): first the real
// components, then the imaginary ones.
template <typename T>
Tensor<T> rfft2(const Tensor<T>& in) {
  const int c = in.channels(), h = in.h, w = in.w, wf = half_width(w);
  Tensor<T> out(2 * c, h, wf);
  CMat<T> full(h, w);
  for (int ch = 0; ch < c; ++ch) {
    for (int r = 0; r < h; ++r)
      for (int x = 0; x < w; ++x)
        full(r, x) = std::complex<T>(in.m(static_cast<Eigen::Index>(r) * w + x, ch), T(0));
    fft2_inplace(full, false);
    for (int r = 0; r < h; ++r)
      for (int v = 0; v < wf; ++v) {
        out.m(static_cast<Eigen::Index>(r) * wf + v, ch) = full(r, v).real();
        out.m(static_cast<Eigen::Index>(r) * wf + v, c + ch) = full(r, v).imag();
      }
  }
  return out;
}

namespace detail {

// Rebuild the full spectrum from a half spectrum by conjugate mirroring of
// the interior columns; edge columns (v = 0 and, for even W, v = W/2) are
// taken as stored.
template <typename T>
void mirror_extend(const Tensor<T>& freq, int ch_re, int ch_im, int w, CMat<T>& full) {
  const int h = freq.h, wf = freq.w;
  full.resize(h, w);
  for (int r = 0; r < h; ++r)
    for (int v = 0; v < wf; ++v)
      full(r, v) = std::complex<T>(freq.m(static_cast<Eigen::Index>(r) * wf + v, ch_re),
                                   freq.m(static_cast<Eigen::Index>(r) * wf + v, ch_im));
  for (int vhi = wf; vhi < w; ++vhi) {
    const int v = w - vhi;
    for (int r = 0; r < h; ++r) full(r, vhi) = std::conj(full((h - r) % h, v));
  }
}

}  // namespace detail

// Inverse of rfft2. Defined as the real part of the full inverse DFT of the
// mirror-extended spectrum, so it is a well-defined linear map even when the
// refined half spectrum no longer satisfies edge-column symmetry.
template <typename T>
Tensor<T> irfft2(const Tensor<T>& freq, int w) {
  const int c2 = freq.channels(), c = c2 / 2, h = freq.h;
  Tensor<T> out(c, h, w);
  CMat<T> full;
  for (int ch = 0; ch < c; ++ch) {
    detail::mirror_extend(freq, ch, c + ch, w, full);
    fft2_inplace(full, true);
    for (int r = 0; r < h; ++r)
      for (int x = 0; x < w; ++x)
        out.m(static_cast<Eigen::Index>(r) * w + x, ch) = full(r, x).real();
  }
  return out;
}

// Adjoint of rfft2: maps a gradient on the half spectrum back to a gradient
// on the spatial input.
template <typename T>
Tensor<T> rfft2_adjoint(const Tensor<T>& gfreq, int w) {
  const int c2 = gfreq.channels(), c = c2 / 2, h = gfreq.h, wf = gfreq.w;
  Tensor<T> gin(c, h, w);
  CMat<T> full(h, w);
  const T scale = static_cast<T>(h) * static_cast<T>(w);
  for (int ch = 0; ch < c; ++ch) {
    full.setZero();
    for (int r = 0; r < h; ++r)
      for (int v = 0; v < wf; ++v)
        full(r, v) = std::complex<T>(gfreq.m(static_cast<Eigen::Index>(r) * wf + v, ch),
                                     gfreq.m(static_cast<Eigen::Index>(r) * wf + v, c + ch));
    fft2_inplace(full, true);
    for (int r = 0; r < h; ++r)
      for (int x = 0; x < w; ++x)
        gin.m(static_cast<Eigen::Index>(r) * w + x, ch) = scale * full(r, x).real();
  }
  return gin;
}

// Adjoint of irfft2: maps a spatial gradient to a gradient on the half
// spectrum. Interior columns pick up a factor 2 from their mirrored twins.
template <typename T>
Tensor<T> irfft2_adjoint(const Tensor<T>& gspatial) {
  const int c = gspatial.channels(), h = gspatial.h, w = gspatial.w, wf = half_width(w);
  Tensor<T> gfreq(2 * c, h, wf);
  CMat<T> full(h, w);
  const T norm = T(1) / (static_cast<T>(h) * static_cast<T>(w));
  for (int ch = 0; ch < c; ++ch) {
    for (int r = 0; r < h; ++r)
      for (int x = 0; x < w; ++x)
        full(r, x) = std::complex<T>(gspatial.m(static_cast<Eigen::Index>(r) * w + x, ch), T(0));
    fft2_inplace(full, false);
    for (int r = 0; r < h; ++r)
      for (int v = 0; v < wf; ++v) {
        const bool edge = v == 0 || (w % 2 == 0 && v == w / 2);
        const T s = (edge ? T(1) : T(2)) * norm;
        gfreq.m(static_cast<Eigen::Index>(r) * wf + v, ch) = s * full(r, v).real();
        gfreq.m(static_cast<Eigen::Index>(r) * wf + v, c + ch) = s * full(r, v).imag();
      }
  }
  return gfreq;
}

}  // namespace balistd::nn
