#pragma once

#include <array>
#include <stdexcept>
#include <string>

#include "balistd/common.hpp"
#include "balistd/nn/fft.hpp"
#include "balistd/nn/layers.hpp"
#include "balistd/nn/tensor.hpp"
#include "balistd/rng.hpp"

namespace balistd {

template <typename T>
using ProbabilityMap = Plane<T>;

// Real/imaginary half-spectrum components of a feature map under the 2-D DFT.
template <typename T>
struct FrequencyPair {
  nn::Tensor<T> real, imag;
};

template <typename T>
FrequencyPair<T> split_pair(const nn::Tensor<T>& packed) {
  const int c = packed.channels() / 2;
  FrequencyPair<T> p;
  p.real = nn::Tensor<T>(c, packed.h, packed.w);
  p.imag = nn::Tensor<T>(c, packed.h, packed.w);
  p.real.m = packed.m.leftCols(c);
  p.imag.m = packed.m.rightCols(c);
  return p;
}

template <typename T>
nn::Tensor<T> pack_pair(const FrequencyPair<T>& p) {
  return nn::concat_channels(p.real, p.imag);
}

// Frequency-domain refinement: a per-channel 3x3 convolution over the
// frequency plane, a per-channel PReLU, then a 1x1 convolution mixing the
// real and imaginary channels jointly (2C -> 2C).
template <typename T>
struct FrequencyRefine {
  int feature_channels = 0;  // C; the stage operates on 2C packed channels
  nn::DepthwiseConv2d<T> dw;
  nn::PReLU<T> act;
  nn::Conv2d<T> mix;

  void setup(const std::string& name, int c) {
    feature_channels = c;
    dw.setup(name + ".dw", 2 * c);
    act.setup(name + ".act", 2 * c);
    mix.setup(name + ".mix", 2 * c, 2 * c, 1);
  }

  // Near-identity start: delta-ish depthwise taps, identity-ish mixing.
  void init(Rng& rng, double jitter = 0.05) {
    dw.set_identity();
    for (Eigen::Index i = 0; i < dw.weight.w.size(); ++i)
      dw.weight.w.data()[i] += static_cast<T>(jitter * rng.normal());
    mix.weight.w.setIdentity();
    const double s = jitter / std::sqrt(2.0 * feature_channels);
    for (Eigen::Index i = 0; i < mix.weight.w.size(); ++i)
      mix.weight.w.data()[i] += static_cast<T>(s * rng.normal());
    mix.bias.w.setZero();
    act.slope.w.setOnes();
  }

  // Exact identity: centered delta kernels, unit slopes, identity 1x1, zero biases.
  void set_identity() {
    dw.set_identity();
    act.slope.w.setOnes();
    mix.weight.w.setIdentity();
    mix.bias.w.setZero();
  }

  void collect(nn::ParamList<T>& ps) {
    dw.collect(ps);
    act.collect(ps);
    mix.collect(ps);
  }

  nn::Tensor<T> forward(const nn::Tensor<T>& packed) {
    return mix.forward(act.forward(dw.forward(packed)));
  }

  nn::Tensor<T> backward(const nn::Tensor<T>& gout) {
    return dw.backward(act.backward(mix.backward(gout)));
  }
};

// frequency_refine as an operation on an explicit real/imaginary pair.
template <typename T>
FrequencyPair<T> frequency_refine(const FrequencyPair<T>& pair, FrequencyRefine<T>& stage) {
  if (pair.real.h != pair.imag.h || pair.real.w != pair.imag.w ||
      pair.real.channels() != pair.imag.channels())
    throw std::invalid_argument("frequency_refine: real/imag shape mismatch");
  nn::Tensor<T> out = stage.forward(pack_pair(pair));
  if (!out.all_finite())
    throw std::runtime_error("frequency refinement stage produced non-finite values");
  return split_pair(out);
}

// Spatial-Frequency Interaction Module: forward real DFT, refinement of the
// half spectrum, inverse DFT, then a residual spatial block (two 3x3
// convolutions with a ReLU between, additive skip).
template <typename T>
struct Sfim {
  int channels = 0;
  bool use_frequency = true;
  FrequencyRefine<T> freq;
  nn::Conv2d<T> res1, res2;
  nn::ReLU<T> res_act;
  int in_w = 0;

  void setup(const std::string& name, int c, bool frequency_path = true) {
    channels = c;
    use_frequency = frequency_path;
    freq.setup(name + ".freq", c);
    res1.setup(name + ".res1", c, c, 3);
    res2.setup(name + ".res2", c, c, 3);
  }

  // res2 starts at zero so the module begins as (near-)identity.
  void init(Rng& rng) {
    freq.init(rng);
    res1.init_he(rng);
    res2.weight.w.setZero();
    res2.bias.w.setZero();
  }

  void collect(nn::ParamList<T>& ps) {
    if (use_frequency) freq.collect(ps);
    res1.collect(ps);
    res2.collect(ps);
  }

  nn::Tensor<T> forward(const nn::Tensor<T>& in) {
    in_w = in.w;
    nn::Tensor<T> y = in;
    if (use_frequency) {
      nn::Tensor<T> refined = freq.forward(nn::rfft2(in));
      if (!refined.all_finite())
        throw std::runtime_error("frequency refinement stage produced non-finite values");
      y = nn::irfft2(refined, in.w);
    }
    nn::Tensor<T> out = y;
    out.m += res2.forward(res_act.forward(res1.forward(y))).m;
    return out;
  }

  nn::Tensor<T> backward(const nn::Tensor<T>& gout) {
    nn::Tensor<T> gy = res1.backward(res_act.backward(res2.backward(gout)));
    gy.m += gout.m;
    if (!use_frequency) return gy;
    return nn::rfft2_adjoint(freq.backward(nn::irfft2_adjoint(gy)), in_w);
  }
};

struct DetectorConfig {
  std::array<int, 3> channels{16, 32, 64};
  bool use_sfim_frequency = true;

  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (int c : channels) h = fnv1a64(&c, sizeof(c), h);
    const int f = use_sfim_frequency ? 1 : 0;
    return fnv1a64(&f, sizeof(f), h);
  }
};

// Compact three-level U-shaped segmenter with one SFIM per level. Encoder
// and decoder blocks are conv -> instance norm -> ReLU (the norm keeps the
// soft-IoU background push from collapsing the activations); output is a
// full-resolution probability map through a 1x1 head and sigmoid.
template <typename T>
class Detector {
 public:
  explicit Detector(const DetectorConfig& cfg = {}) : cfg_(cfg) {
    const auto [c0, c1, c2] = std::array{cfg.channels[0], cfg.channels[1], cfg.channels[2]};
    enc1_.setup("det.enc1", 1, c0, 3);
    norm1_.setup("det.norm1", c0);
    sfim1_.setup("det.sfim1", c0, cfg.use_sfim_frequency);
    enc2_.setup("det.enc2", c0, c1, 3);
    norm2_.setup("det.norm2", c1);
    sfim2_.setup("det.sfim2", c1, cfg.use_sfim_frequency);
    enc3_.setup("det.enc3", c1, c2, 3);
    norm3_.setup("det.norm3", c2);
    sfim3_.setup("det.sfim3", c2, cfg.use_sfim_frequency);
    dec2_.setup("det.dec2", c2 + c1, c1, 3);
    norm_d2_.setup("det.norm_d2", c1);
    dec1_.setup("det.dec1", c1 + c0, c0, 3);
    norm_d1_.setup("det.norm_d1", c0);
    head_.setup("det.head", c0, 1, 1);
  }

  void init(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "init:detector"));
    enc1_.init_he(rng);
    enc2_.init_he(rng);
    enc3_.init_he(rng);
    sfim1_.init(rng);
    sfim2_.init(rng);
    sfim3_.init(rng);
    dec2_.init_he(rng);
    dec1_.init_he(rng);
    head_.weight.w.setZero();
    head_.bias.w.setConstant(T(-2));  // sparse-target prior
  }

  const DetectorConfig& config() const { return cfg_; }

  // Built per call so the object stays freely copyable and movable.
  nn::ParamList<T> params() {
    nn::ParamList<T> ps;
    enc1_.collect(ps);
    norm1_.collect(ps);
    sfim1_.collect(ps);
    enc2_.collect(ps);
    norm2_.collect(ps);
    sfim2_.collect(ps);
    enc3_.collect(ps);
    norm3_.collect(ps);
    sfim3_.collect(ps);
    dec2_.collect(ps);
    norm_d2_.collect(ps);
    dec1_.collect(ps);
    norm_d1_.collect(ps);
    head_.collect(ps);
    return ps;
  }

  Sfim<T>& sfim(int level) { return level == 0 ? sfim1_ : level == 1 ? sfim2_ : sfim3_; }

  ProbabilityMap<T> forward(const Plane<T>& image) {
    if (image.rows() % 8 || image.cols() % 8)
      throw std::invalid_argument("detector input H and W must be divisible by 8");
    require_finite(image, "detector input");
    nn::Tensor<T> p = forward_t(nn::from_plane(image));
    return nn::to_plane(p, 0);
  }

  nn::Tensor<T> forward_t(const nn::Tensor<T>& x) {
    e1_ = sfim1_.forward(relu1_.forward(norm1_.forward(enc1_.forward(x))));
    nn::Tensor<T> t = pool1_.forward(e1_);
    e2_ = sfim2_.forward(relu2_.forward(norm2_.forward(enc2_.forward(t))));
    t = pool2_.forward(e2_);
    t = sfim3_.forward(relu3_.forward(norm3_.forward(enc3_.forward(t))));
    t = up2_.forward(t);
    t = relu_d2_.forward(norm_d2_.forward(dec2_.forward(nn::concat_channels(t, e2_))));
    t = up1_.forward(t);
    t = relu_d1_.forward(norm_d1_.forward(dec1_.forward(nn::concat_channels(t, e1_))));
    t = head_.forward(t);
    if (!t.all_finite()) throw std::runtime_error("detector produced non-finite activations");
    sig_out_ = t;
    sig_out_.m = (T(1) / (T(1) + (-t.m.array()).exp())).matrix();
    return sig_out_;
  }

  // Accumulates parameter gradients given dL/d(probability map).
  void backward_t(const nn::Tensor<T>& gprob) {
    nn::Tensor<T> g = gprob;
    g.m.array() *= sig_out_.m.array() * (T(1) - sig_out_.m.array());
    g = norm_d1_.backward(relu_d1_.backward(head_.backward(g)));
    g = dec1_.backward(g);
    const int c0 = cfg_.channels[0], c1 = cfg_.channels[1], c2 = cfg_.channels[2];
    nn::Tensor<T> gu1(c1, g.h, g.w), gs1(c0, g.h, g.w);
    gu1.m = g.m.leftCols(c1);
    gs1.m = g.m.rightCols(c0);
    g = norm_d2_.backward(relu_d2_.backward(up1_.backward(gu1)));
    g = dec2_.backward(g);
    nn::Tensor<T> gu2(c2, g.h, g.w), gs2(c1, g.h, g.w);
    gu2.m = g.m.leftCols(c2);
    gs2.m = g.m.rightCols(c1);
    g = up2_.backward(gu2);
    g = enc3_.backward(norm3_.backward(relu3_.backward(sfim3_.backward(g))));
    g = pool2_.backward(g);
    g.m += gs2.m;
    g = enc2_.backward(norm2_.backward(relu2_.backward(sfim2_.backward(g))));
    g = pool1_.backward(g);
    g.m += gs1.m;
    enc1_.backward(norm1_.backward(relu1_.backward(sfim1_.backward(g))));
  }

 private:
  DetectorConfig cfg_;
  nn::Conv2d<T> enc1_, enc2_, enc3_, dec2_, dec1_, head_;
  nn::InstanceNorm<T> norm1_, norm2_, norm3_, norm_d2_, norm_d1_;
  nn::ReLU<T> relu1_, relu2_, relu3_, relu_d2_, relu_d1_;
  nn::AvgPool2<T> pool1_, pool2_;
  nn::Upsample2<T> up2_, up1_;
  Sfim<T> sfim1_, sfim2_, sfim3_;
  nn::Tensor<T> e1_, e2_, sig_out_;
};

}  // namespace balistd
