#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "balistd/corruption.hpp"
#include "balistd/dataset.hpp"
#include "balistd/detector.hpp"
#include "balistd/metrics.hpp"
#include "balistd/policy.hpp"
#include "balistd/rng.hpp"

namespace balistd {

enum class TrainMode { joint, adversarial };

// Action-space restriction used for the training-strategy ablation rows:
// "random" keeps the full 10x3 grid, the group names restrict to one group.
enum class Ablation { none, random, noise, blur, isp };

inline const char* mode_name(TrainMode m) { return m == TrainMode::joint ? "joint" : "adversarial"; }

inline TrainMode mode_from_name(const std::string& s) {
  if (s == "joint") return TrainMode::joint;
  if (s == "adversarial") return TrainMode::adversarial;
  throw std::invalid_argument("mode must be 'joint' or 'adversarial', got '" + s + "'");
}

inline const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::random: return "random";
    case Ablation::noise: return "noise";
    case Ablation::blur: return "blur";
    case Ablation::isp: return "isp";
  }
  return "none";
}

inline Ablation ablation_from_name(const std::string& s) {
  if (s == "none") return Ablation::none;
  if (s == "random") return Ablation::random;
  if (s == "noise") return Ablation::noise;
  if (s == "blur") return Ablation::blur;
  if (s == "isp") return Ablation::isp;
  throw std::invalid_argument("ablation must be one of none|random|noise|blur|isp, got '" + s + "'");
}

// Flat action indices allowed under an ablation; empty means all 30.
inline std::vector<int> allowed_actions(Ablation a) {
  if (a == Ablation::none || a == Ablation::random) return {};
  CorruptionGroup g = a == Ablation::noise   ? CorruptionGroup::noise
                      : a == Ablation::blur ? CorruptionGroup::blur
                                            : CorruptionGroup::isp;
  std::vector<int> out;
  for (int i = 0; i < kNumActions; ++i)
    if (group_of(action_from_index(i).kind) == g) out.push_back(i);
  return out;
}

struct TrainConfig {
  double lr_d = 5e-4;   // detector (Adam)
  double lr_s = 1e-4;   // strategy (gradient ascent)
  double lambda = 1.0;  // corrupted-loss trade-off; 0 disables the corruption branch
  int batch_size = 8;
  int steps = 1000;
  int crop = 256;  // desk-scale runs use 64 or smaller
  TrainMode mode = TrainMode::adversarial;
  std::uint64_t seed = 0;
  double baseline_decay = 0.9;
  Ablation ablation = Ablation::none;
  int val_interval = 200;
  int workers = 1;
  int policy_base_channels = 16;
  bool detector_sfim_frequency = true;
  CorruptionTable table;

  void validate() const {
    if (lr_d <= 0 || lr_s <= 0) throw std::invalid_argument("learning rates must be > 0");
    if (lambda < 0) throw std::invalid_argument("lambda must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (steps < 0) throw std::invalid_argument("steps must be >= 0");
    if (crop < 32 || crop % 8) throw std::invalid_argument("crop must be >= 32 and divisible by 8");
    if (baseline_decay < 0 || baseline_decay >= 1)
      throw std::invalid_argument("baseline_decay must be in [0,1)");
    if (workers < 1) throw std::invalid_argument("workers must be >= 1");
    if (val_interval < 1) throw std::invalid_argument("val_interval must be >= 1");
    if (policy_base_channels < 1) throw std::invalid_argument("policy_base_channels must be >= 1");
  }
};

// Adaptive-moment descent for the detector.
template <typename T>
struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;
  std::vector<MatX<T>> m, v;

  void bind(const nn::ParamList<T>& ps) {
    m.clear();
    v.clear();
    for (const auto* p : ps) {
      m.push_back(MatX<T>::Zero(p->w.rows(), p->w.cols()));
      v.push_back(MatX<T>::Zero(p->w.rows(), p->w.cols()));
    }
  }

  void step(const nn::ParamList<T>& ps, double lr) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      auto& p = *ps[i];
      m[i] = static_cast<T>(beta1) * m[i] + static_cast<T>(1 - beta1) * p.g;
      v[i] = (static_cast<T>(beta2) * v[i].array() +
              static_cast<T>(1 - beta2) * p.g.array().square())
                 .matrix();
      p.w.array() -= static_cast<T>(lr) *
                     (m[i].array() / bc1) /
                     ((v[i].array() / bc2).sqrt() + static_cast<T>(eps));
    }
  }
};

template <typename T>
struct TrainState {
  TrainConfig cfg;
  Detector<T> detector;
  StrategyNet<T> strategy;
  Adam<T> adam;
  long step = 0;
  double reward_baseline = 0.0;
  bool baseline_init = false;
  Rng batch_rng;

  explicit TrainState(const TrainConfig& c)
      : cfg(c),
        detector(DetectorConfig{{16, 32, 64}, c.detector_sfim_frequency}),
        strategy(StrategyNetConfig{c.policy_base_channels, kNumActions}),
        batch_rng(derive_seed(c.seed, "batch")) {
    cfg.validate();
    detector.init(c.seed);
    strategy.init(c.seed);
    adam.bind(detector.params());
  }
};

// Identical spatial transform on image and mask: horizontal/vertical flips
// with probability 0.5 each and a uniform crop to crop x crop.
template <typename T>
std::pair<GrayImage<T>, MaskPlane> augment(const GrayImage<T>& image, const MaskPlane& mask,
                                           int crop, std::uint64_t seed) {
  const int h = static_cast<int>(image.rows()), w = static_cast<int>(image.cols());
  if (h < crop || w < crop)
    throw std::invalid_argument("augment: image " + std::to_string(h) + "x" + std::to_string(w) +
                                " smaller than crop " + std::to_string(crop));
  if (image.rows() != mask.rows() || image.cols() != mask.cols())
    throw std::invalid_argument("augment: image/mask shape mismatch");
  Rng rng(derive_seed(seed, "augment"));
  const bool fh = rng.uniform() < 0.5;
  const bool fv = rng.uniform() < 0.5;
  const int r0 = static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(h - crop + 1)));
  const int c0 = static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(w - crop + 1)));

  GrayImage<T> img = image.block(r0, c0, crop, crop);
  MaskPlane msk = mask.block(r0, c0, crop, crop);
  if (fh) {
    img = img.rowwise().reverse().eval();
    msk = msk.rowwise().reverse().eval();
  }
  if (fv) {
    img = img.colwise().reverse().eval();
    msk = msk.colwise().reverse().eval();
  }
  return {std::move(img), std::move(msk)};
}

template <typename T>
struct CorruptedBatch {
  std::vector<GrayImage<T>> images;
  std::vector<RewardRecord> records;
};

// Alg. 1's generation step: one corruption action per sample, realized with a
// per-sample derived seed. Adversarial mode samples from the policy; joint
// mode draws uniformly over the allowed actions.
template <typename T>
CorruptedBatch<T> generate_corrupted_batch(TrainState<T>& st, const std::vector<GrayImage<T>>& images,
                                           long step) {
  const auto allowed = allowed_actions(st.cfg.ablation);
  const std::vector<int>* allowed_ptr = allowed.empty() ? nullptr : &allowed;
  const int n_allowed = allowed.empty() ? kNumActions : static_cast<int>(allowed.size());

  CorruptedBatch<T> out;
  out.images.reserve(images.size());
  out.records.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::uint64_t act_seed = derive_seed(st.cfg.seed, "action", step, i);
    RewardRecord rec;
    if (st.cfg.mode == TrainMode::adversarial) {
      ActionDistribution<T> dist = st.strategy.forward(images[i], allowed_ptr);
      const SampledAction s = sample_action(dist, act_seed);
      rec.action_index = s.index;
      rec.log_prob = s.log_prob;
    } else {
      Rng rng(act_seed);
      const int pick = static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(n_allowed)));
      rec.action_index = allowed.empty() ? pick : allowed[pick];
      rec.log_prob = std::log(1.0 / n_allowed);
    }
    out.images.push_back(apply(images[i], action_from_index(rec.action_index),
                               derive_seed(st.cfg.seed, "corrupt", step, i), st.cfg.table));
    out.records.push_back(rec);
  }
  return out;
}

struct DetectorStepLosses {
  double clean = 0.0;
  double corrupted = 0.0;
  std::vector<double> per_sample_corrupted;
};

// One cooperated update: L = mean_i [ soft_iou(x_i) + lambda * soft_iou(x^_i) ],
// followed by a single Adam step. Returns the loss components and the
// per-sample corrupted losses (the strategy rewards).
template <typename T>
DetectorStepLosses detector_step(TrainState<T>& st, const std::vector<GrayImage<T>>& clean,
                                 const std::vector<GrayImage<T>>& corrupted,
                                 const std::vector<MaskPlane>& masks,
                                 const std::vector<std::string>* ids = nullptr) {
  const std::size_t n = clean.size();
  if (masks.size() != n || (!corrupted.empty() && corrupted.size() != n))
    throw std::invalid_argument("detector_step: batch size mismatch");
  const bool use_cor = st.cfg.lambda > 0.0 && !corrupted.empty();

  auto params = st.detector.params();
  nn::zero_grads(params);

  DetectorStepLosses out;
  out.per_sample_corrupted.assign(n, 0.0);
  auto sample_id = [&](std::size_t i) { return ids ? (*ids)[i] : "sample " + std::to_string(i); };

  for (std::size_t i = 0; i < n; ++i) {
    {
      nn::Tensor<T> prob = st.detector.forward_t(nn::from_plane(clean[i]));
      const Plane<T> pmap = nn::to_plane(prob, 0);
      const double loss = soft_iou_loss(pmap, masks[i]);
      if (!std::isfinite(loss))
        throw std::runtime_error("detector_step: non-finite clean loss on " + sample_id(i));
      out.clean += loss;
      Plane<T> g = soft_iou_loss_grad(pmap, masks[i]);
      nn::Tensor<T> gt = nn::from_plane(g);
      gt.m *= static_cast<T>(1.0 / n);
      st.detector.backward_t(gt);
    }
    if (use_cor) {
      nn::Tensor<T> prob = st.detector.forward_t(nn::from_plane(corrupted[i]));
      const Plane<T> pmap = nn::to_plane(prob, 0);
      const double loss = soft_iou_loss(pmap, masks[i]);
      if (!std::isfinite(loss))
        throw std::runtime_error("detector_step: non-finite corrupted loss on " + sample_id(i));
      out.corrupted += loss;
      out.per_sample_corrupted[i] = loss;
      Plane<T> g = soft_iou_loss_grad(pmap, masks[i]);
      nn::Tensor<T> gt = nn::from_plane(g);
      gt.m *= static_cast<T>(st.cfg.lambda / n);
      st.detector.backward_t(gt);
    }
  }
  out.clean /= n;
  out.corrupted /= n;

  st.adam.step(params, st.cfg.lr_d);
  return out;
}

enum class TrainPhase { corrupted_generated, detector_updated, strategy_updated };

struct TrainLogRow {
  long step = 0;
  double clean_loss = 0.0;
  double cor_loss = 0.0;
  double e_hat = 0.0;  // batch estimate of E(theta): mean corrupted reward
  double baseline = 0.0;
  std::array<long, kNumActions> action_histogram{};
  std::optional<double> val_iou;
};

using TrainObserver = std::function<void(long step, TrainPhase phase)>;

// Mean per-image IOU of binarized predictions on a sample set.
template <typename T>
double mean_clean_iou(Detector<T>& det, const std::vector<ImageSample<T>>& set,
                      double threshold = 0.5) {
  if (set.empty()) throw std::invalid_argument("mean_clean_iou: empty dataset");
  double acc = 0.0;
  for (const auto& s : set)
    acc += iou(binarize(det.forward(s.image), threshold), s.mask);
  return acc / static_cast<double>(set.size());
}

// Alg. 1: per iteration, generate the corrupted batch, update the detector
// (descent on the cooperated loss), then in adversarial mode update the
// strategy by policy-gradient ascent with an EMA reward baseline.
template <typename T>
std::vector<TrainLogRow> train(TrainState<T>& st, const std::vector<ImageSample<T>>& train_set,
                               const std::vector<ImageSample<T>>& val_set,
                               const TrainObserver& observer = {}) {
  const TrainConfig& cfg = st.cfg;
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty dataset");
  for (const auto& s : train_set)
    if (s.image.rows() < cfg.crop || s.image.cols() < cfg.crop)
      throw std::invalid_argument("train: dataset image " + s.id + " smaller than crop " +
                                  std::to_string(cfg.crop));

  std::vector<TrainLogRow> log;
  log.reserve(cfg.steps);

  for (int it = 0; it < cfg.steps; ++it) {
    const long step = st.step;

    std::vector<GrayImage<T>> images(cfg.batch_size);
    std::vector<MaskPlane> masks(cfg.batch_size);
    std::vector<std::string> ids(cfg.batch_size);
    for (int i = 0; i < cfg.batch_size; ++i) {
      const auto& s = train_set[st.batch_rng.uniform_int(static_cast<std::uint32_t>(train_set.size()))];
      auto [img, msk] = augment(s.image, s.mask, cfg.crop, derive_seed(cfg.seed, "augment", step, i));
      images[i] = std::move(img);
      masks[i] = std::move(msk);
      ids[i] = s.id;
    }

    TrainLogRow row;
    row.step = step;

    CorruptedBatch<T> cor;
    const bool use_cor = cfg.lambda > 0.0;
    if (use_cor) {
      cor = generate_corrupted_batch(st, images, step);
      for (const auto& r : cor.records) ++row.action_histogram[r.action_index];
      if (observer) observer(step, TrainPhase::corrupted_generated);
    }

    DetectorStepLosses losses = detector_step(st, images, cor.images, masks, &ids);
    if (observer) observer(step, TrainPhase::detector_updated);
    row.clean_loss = losses.clean;
    row.cor_loss = losses.corrupted;

    if (use_cor) {
      for (std::size_t i = 0; i < cor.records.size(); ++i)
        cor.records[i].reward = losses.per_sample_corrupted[i];
      double mean_reward = 0.0;
      for (const auto& r : cor.records) mean_reward += r.reward;
      mean_reward /= static_cast<double>(cor.records.size());
      row.e_hat = mean_reward;

      if (cfg.mode == TrainMode::adversarial) {
        if (!st.baseline_init) {
          st.reward_baseline = mean_reward;
          st.baseline_init = true;
        }
        row.baseline = st.reward_baseline;
        const auto allowed = allowed_actions(cfg.ablation);
        reinforce_gradient(st.strategy, images, cor.records, st.reward_baseline,
                           allowed.empty() ? nullptr : &allowed);
        strategy_step(st.strategy, cfg.lr_s);
        st.reward_baseline =
            cfg.baseline_decay * st.reward_baseline + (1.0 - cfg.baseline_decay) * mean_reward;
        if (observer) observer(step, TrainPhase::strategy_updated);
      }
    }

    if (!val_set.empty() && (step + 1) % cfg.val_interval == 0)
      row.val_iou = mean_clean_iou(st.detector, val_set);

    log.push_back(row);
    ++st.step;
  }
  return log;
}

struct RobustnessReport {
  std::vector<RobustnessRecord> grid;      // 1 clean row + 30 (kind, severity) rows
  std::vector<RobustnessRecord> kind_avg;  // severity-averaged, one per kind
  RobustnessRecord grid_avg;               // averaged over all 30 cells
  CorruptionTable table;
  std::uint64_t seed = 0;
};

template <typename T>
using PredictFn = std::function<ProbabilityMap<T>(const GrayImage<T>&)>;

namespace detail {

struct EvalCellStats {
  double iou_sum = 0.0;
  long matched = 0, targets = 0, false_px = 0, total_px = 0;
};

}  // namespace detail

// Evaluates the detector over the full corruption grid plus clean data.
// Per-image work parallelizes over `workers` with a deterministic, index-
// ordered reduction, so results are identical for any worker count.
template <typename T>
RobustnessReport evaluate_robustness(Detector<T>& det, const std::vector<ImageSample<T>>& test,
                                     const CorruptionTable& table, const TargetMatchConfig& match,
                                     std::uint64_t seed, int workers = 1,
                                     PredictFn<T> predict = {}) {
  if (test.empty()) throw std::invalid_argument("evaluate_robustness: empty dataset");
  match.validate();

  // cell -1 is clean; cells 0..29 are the corruption actions
  const int n_cells = kNumActions + 1;
  const int n_imgs = static_cast<int>(test.size());
  std::vector<detail::EvalCellStats> cells(n_cells);

  struct ImgResult {
    double iou = 0.0;
    long matched = 0, targets = 0, false_px = 0, total_px = 0;
  };

  auto eval_one = [&](Detector<T>& d, int cell, int img_idx) -> ImgResult {
    const auto& s = test[img_idx];
    GrayImage<T> input = s.image;
    if (cell >= 0)
      input = apply(input, action_from_index(cell),
                    derive_seed(seed, "eval", static_cast<std::uint64_t>(cell),
                                static_cast<std::uint64_t>(img_idx)),
                    table);
    const ProbabilityMap<T> prob = predict ? predict(input) : d.forward(input);
    const MaskPlane pred = binarize(prob, match.binarize_threshold);
    ImgResult r;
    r.iou = iou(pred, s.mask);
    const auto gt = connected_components(s.mask);
    const auto pf = pd_fa(pred, s.mask, match);
    r.targets = static_cast<long>(gt.size());
    r.matched = std::lround(pf.pd * static_cast<double>(gt.size()));
    r.false_px = std::lround(pf.fa * static_cast<double>(pred.size()));
    r.total_px = static_cast<long>(pred.size());
    return r;
  };

  std::vector<ImgResult> results(static_cast<std::size_t>(n_cells) * n_imgs);
  const int nw = std::max(1, workers);
  if (nw == 1) {
    for (int cell = -1; cell < kNumActions; ++cell)
      for (int i = 0; i < n_imgs; ++i)
        results[static_cast<std::size_t>(cell + 1) * n_imgs + i] = eval_one(det, cell, i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    const int total = n_cells * n_imgs;
    for (int t = 0; t < nw; ++t)
      pool.emplace_back([&]() {
        Detector<T> local(det.config());
        auto src = det.params();
        auto dst = local.params();
        for (std::size_t k = 0; k < src.size(); ++k) dst[k]->w = src[k]->w;
        for (int job = next.fetch_add(1); job < total; job = next.fetch_add(1)) {
          const int cell = job / n_imgs - 1, i = job % n_imgs;
          results[job] = eval_one(local, cell, i);
        }
      });
    for (auto& th : pool) th.join();
  }

  for (int cell = -1; cell < kNumActions; ++cell) {
    auto& st = cells[cell + 1];
    for (int i = 0; i < n_imgs; ++i) {
      const auto& r = results[static_cast<std::size_t>(cell + 1) * n_imgs + i];
      st.iou_sum += r.iou;
      st.matched += r.matched;
      st.targets += r.targets;
      st.false_px += r.false_px;
      st.total_px += r.total_px;
    }
  }

  auto finish = [&](const detail::EvalCellStats& st) {
    RobustnessRecord rec;
    rec.iou_cor = st.iou_sum / n_imgs;
    rec.pd = st.targets == 0 ? 1.0 : static_cast<double>(st.matched) / st.targets;
    rec.fa = st.total_px == 0 ? 0.0 : static_cast<double>(st.false_px) / st.total_px;
    return rec;
  };

  RobustnessReport rep;
  rep.table = table;
  rep.seed = seed;

  RobustnessRecord clean = finish(cells[0]);
  clean.clean = true;
  clean.iou_clean = clean.iou_cor;
  clean.rce = rce(clean.iou_clean, clean.iou_cor);
  rep.grid.push_back(clean);

  for (int a = 0; a < kNumActions; ++a) {
    RobustnessRecord rec = finish(cells[a + 1]);
    const CorruptionAction act = action_from_index(a);
    rec.kind = act.kind;
    rec.severity = act.severity.level;
    rec.iou_clean = clean.iou_clean;
    rec.rce = rce(rec.iou_clean, rec.iou_cor);
    rep.grid.push_back(rec);
  }

  double grid_iou = 0.0, grid_pd = 0.0, grid_fa = 0.0;
  for (int k = 0; k < kNumKinds; ++k) {
    RobustnessRecord avg;
    avg.kind = static_cast<CorruptionKind>(k);
    avg.severity = 0;
    avg.iou_clean = clean.iou_clean;
    for (int l = 1; l <= kNumSeverities; ++l) {
      const auto& rec = rep.grid[static_cast<std::size_t>(1 + k * kNumSeverities + (l - 1))];
      avg.iou_cor += rec.iou_cor / kNumSeverities;
      avg.pd += rec.pd / kNumSeverities;
      avg.fa += rec.fa / kNumSeverities;
    }
    avg.rce = rce(avg.iou_clean, avg.iou_cor);
    rep.kind_avg.push_back(avg);
    grid_iou += avg.iou_cor / kNumKinds;
    grid_pd += avg.pd / kNumKinds;
    grid_fa += avg.fa / kNumKinds;
  }
  rep.grid_avg.severity = 0;
  rep.grid_avg.iou_clean = clean.iou_clean;
  rep.grid_avg.iou_cor = grid_iou;
  rep.grid_avg.pd = grid_pd;
  rep.grid_avg.fa = grid_fa;
  rep.grid_avg.rce = rce(clean.iou_clean, grid_iou);
  return rep;
}

}  // namespace balistd
