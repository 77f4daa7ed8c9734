#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "balistd/common.hpp"
#include "balistd/corruption.hpp"
#include "balistd/nn/layers.hpp"
#include "balistd/nn/tensor.hpp"
#include "balistd/rng.hpp"

namespace balistd {

template <typename T>
struct ActionDistribution {
  RowVecX<T> probs;

  int size() const { return static_cast<int>(probs.size()); }

  void validate() const {
    if (!probs.allFinite()) throw std::invalid_argument("action distribution has non-finite probs");
    if ((probs.array() < T(0)).any())
      throw std::invalid_argument("action distribution has negative probs");
    if (std::abs(static_cast<double>(probs.sum()) - 1.0) > 1e-5)
      throw std::invalid_argument("action distribution does not sum to 1");
  }
};

struct SampledAction {
  int index = 0;
  double log_prob = 0.0;
};

// Categorical draw by CDF inversion; deterministic given the seed.
template <typename T>
SampledAction sample_action(const ActionDistribution<T>& dist, std::uint64_t seed) {
  dist.validate();
  Rng rng(derive_seed(seed, "action-sample"));
  const double u = rng.uniform() * static_cast<double>(dist.probs.sum());
  double acc = 0.0;
  int chosen = -1;
  for (int i = 0; i < dist.size(); ++i) {
    acc += static_cast<double>(dist.probs(i));
    if (u < acc) {
      chosen = i;
      break;
    }
  }
  if (chosen < 0) {  // numerical tail: last action with nonzero mass
    for (int i = dist.size() - 1; i >= 0; --i)
      if (dist.probs(i) > T(0)) {
        chosen = i;
        break;
      }
  }
  return {chosen, std::log(static_cast<double>(dist.probs(chosen)))};
}

// E(theta) for one sample: sum_k rewards[k] * probs[k].
template <typename T>
double expected_objective(const ActionDistribution<T>& dist, const RowVecX<T>& rewards) {
  if (rewards.size() != dist.probs.size())
    throw std::invalid_argument("expected_objective: length mismatch");
  if (!rewards.allFinite()) throw std::invalid_argument("expected_objective: non-finite rewards");
  return static_cast<double>(dist.probs.template cast<double>()
                                 .cwiseProduct(rewards.template cast<double>())
                                 .sum());
}

struct RewardRecord {
  int action_index = 0;
  double log_prob = 0.0;
  double reward = 0.0;
};

struct StrategyNetConfig {
  // Five conv blocks (conv3x3 -> instance norm -> ReLU -> 2x avg pool) with
  // channel doubling, then global average pooling and one fully-connected
  // layer onto the 30 action logits.
  int base_channels = 16;
  int actions = kNumActions;
};

template <typename T>
class StrategyNet {
 public:
  static constexpr int kBlocks = 5;

  explicit StrategyNet(const StrategyNetConfig& cfg = {}) : cfg_(cfg) {
    if (cfg_.base_channels <= 0) throw std::invalid_argument("base_channels must be positive");
    int in_ch = 1;
    for (int b = 0; b < kBlocks; ++b) {
      const int out_ch = cfg_.base_channels << b;
      conv_[b].setup("strategy.block" + std::to_string(b + 1) + ".conv", in_ch, out_ch, 3);
      norm_[b].setup("strategy.block" + std::to_string(b + 1) + ".norm", out_ch);
      in_ch = out_ch;
    }
    head_.setup("strategy.head", in_ch, cfg_.actions);
  }

  // Conv blocks get He init; the head stays zero so a fresh policy is exactly
  // uniform over actions.
  void init(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "init:strategy"));
    for (auto& c : conv_) c.init_he(rng);
    head_.weight.w.setZero();
    head_.bias.w.setZero();
  }

  const StrategyNetConfig& config() const { return cfg_; }

  nn::ParamList<T> params() {
    nn::ParamList<T> ps;
    for (int b = 0; b < kBlocks; ++b) {
      conv_[b].collect(ps);
      norm_[b].collect(ps);
    }
    head_.collect(ps);
    return ps;
  }

  // Logits for one image; caches activations for backward_logits.
  RowVecX<T> forward_logits(const Plane<T>& image) {
    if (image.rows() < 32 || image.cols() < 32)
      throw std::invalid_argument("strategy net needs H, W >= 32 (five 2x downsamples)");
    nn::Tensor<T> t = nn::from_plane(image);
    for (int b = 0; b < kBlocks; ++b) {
      t = pool_[b].forward(relu_[b].forward(norm_[b].forward(conv_[b].forward(t))));
      if (!t.all_finite())
        throw std::runtime_error("strategy block " + std::to_string(b + 1) +
                                 " produced non-finite activations");
    }
    last_channels_ = t.channels();
    return head_.forward(gap_.forward(t));
  }

  ActionDistribution<T> forward(const Plane<T>& image, const std::vector<int>* allowed = nullptr) {
    RowVecX<T> logits = forward_logits(image);
    ActionDistribution<T> dist;
    if (!allowed) {
      dist.probs = nn::softmax_row(logits);
    } else {
      if (allowed->empty()) throw std::invalid_argument("empty allowed-action set");
      RowVecX<T> sub(allowed->size());
      for (std::size_t i = 0; i < allowed->size(); ++i) sub(i) = logits((*allowed)[i]);
      sub = nn::softmax_row(sub);
      dist.probs = RowVecX<T>::Zero(cfg_.actions);
      for (std::size_t i = 0; i < allowed->size(); ++i) dist.probs((*allowed)[i]) = sub(i);
    }
    return dist;
  }

  std::vector<ActionDistribution<T>> forward_batch(const std::vector<Plane<T>>& images,
                                                   const std::vector<int>* allowed = nullptr) {
    if (images.empty()) return {};
    for (const auto& im : images)
      if (im.rows() != images.front().rows() || im.cols() != images.front().cols())
        throw std::invalid_argument("policy_forward: images must share one HxW");
    std::vector<ActionDistribution<T>> out;
    out.reserve(images.size());
    for (const auto& im : images) out.push_back(forward(im, allowed));
    return out;
  }

  // Accumulates d(objective)/d(theta) given a gradient on the logits of the
  // most recent forward.
  void backward_logits(const RowVecX<T>& glogits) {
    nn::Tensor<T> g = gap_.backward(head_.backward(glogits), last_channels_);
    for (int b = kBlocks - 1; b >= 0; --b)
      g = conv_[b].backward(norm_[b].backward(relu_[b].backward(pool_[b].backward(g))));
  }

 private:
  StrategyNetConfig cfg_;
  std::array<nn::Conv2d<T>, kBlocks> conv_;
  std::array<nn::InstanceNorm<T>, kBlocks> norm_;
  std::array<nn::ReLU<T>, kBlocks> relu_;
  std::array<nn::AvgPool2<T>, kBlocks> pool_;
  nn::GlobalAvgPool<T> gap_;
  nn::Linear<T> head_;
  int last_channels_ = 0;
};

// Score-function gradient of the softmax log-probability: for the sampled
// action a, d log p(a) / d logit_j = [j == a] - p_j (restricted to the
// allowed set when the action space is masked).
template <typename T>
RowVecX<T> logprob_logit_grad(const ActionDistribution<T>& dist, int action,
                              const std::vector<int>* allowed = nullptr) {
  RowVecX<T> g = RowVecX<T>::Zero(dist.probs.size());
  if (!allowed) {
    g = -dist.probs;
    g(action) += T(1);
  } else {
    for (int idx : *allowed) g(idx) = -dist.probs(idx);
    g(action) += T(1);
  }
  return g;
}

// Monte-Carlo REINFORCE estimator (1/N) sum_i (r_i - baseline) *
// grad_theta log p(s_i | x_i), accumulated into the model's parameter
// gradients. With baseline = 0 this is the plain score-function estimator.
// Model must provide forward(image, allowed) -> ActionDistribution and
// backward_logits(glogits).
template <typename T, typename Model>
void accumulate_reinforce(Model& model, const std::vector<Plane<T>>& images,
                          const std::vector<RewardRecord>& records, double baseline,
                          const std::vector<int>* allowed = nullptr) {
  if (images.size() != records.size())
    throw std::invalid_argument("reinforce_gradient: record/image count mismatch");
  if (!std::isfinite(baseline)) throw std::invalid_argument("reinforce_gradient: non-finite baseline");
  const double n = static_cast<double>(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!std::isfinite(records[i].reward))
      throw std::invalid_argument("reinforce_gradient: non-finite reward");
    ActionDistribution<T> dist = model.forward(images[i], allowed);
    const T coef = static_cast<T>((records[i].reward - baseline) / n);
    RowVecX<T> glogits = coef * logprob_logit_grad(dist, records[i].action_index, allowed);
    model.backward_logits(glogits);
  }
}

// reinforce_gradient as a standalone operation: zeroes the gradient buffers,
// runs the estimator, leaves the result in params()->g.
template <typename T, typename Model>
void reinforce_gradient(Model& model, const std::vector<Plane<T>>& images,
                        const std::vector<RewardRecord>& records, double baseline,
                        const std::vector<int>* allowed = nullptr) {
  nn::zero_grads(model.params());
  accumulate_reinforce(model, images, records, baseline, allowed);
  for (const auto* p : model.params())
    if (!p->g.allFinite())
      throw std::runtime_error("reinforce_gradient: non-finite gradient in " + p->name);
}

// Plain gradient-ascent update w += lr * g.
template <typename T>
void sgd_ascent_step(MatX<T>& w, const MatX<T>& g, double lr) {
  if (!g.allFinite()) throw std::invalid_argument("strategy_step: non-finite gradient");
  w += static_cast<T>(lr) * g;
}

// strategy_step: theta <- theta + lr_s * grad (maximization).
template <typename Model>
void strategy_step(Model& model, double lr_s) {
  if (lr_s <= 0.0) throw std::invalid_argument("strategy_step: lr_s must be > 0");
  for (auto* p : model.params()) sgd_ascent_step(p->w, p->g, lr_s);
}

}  // namespace balistd
