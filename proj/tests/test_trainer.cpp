#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "balistd/checkpoint.hpp"
#include "balistd/dataset.hpp"
#include "balistd/trainer.hpp"
#include "oracles.hpp"

using namespace balistd;
using namespace balistd::nn;

namespace {

std::vector<ImageSample<Real>> tiny_dataset(int count, std::uint64_t seed = 42) {
  SynthConfig cfg;
  cfg.count = count;
  cfg.seed = seed;
  return synth_generate<Real>(cfg);
}

TrainConfig desk_config() {
  TrainConfig cfg;
  cfg.crop = 32;
  cfg.batch_size = 2;
  cfg.steps = 4;
  cfg.val_interval = 2;
  cfg.seed = 0;
  return cfg;
}

template <typename T>
std::uint64_t weights_fingerprint(nn::ParamList<T> ps) {
  return nn::fingerprint(ps);
}

}  // namespace

TEST_CASE("augment: determinism, involution with full-size crop, mask shrinkage") {
  const auto data = tiny_dataset(2);
  const auto& s = data[0];

  const auto a = augment(s.image, s.mask, 32, 7);
  const auto b = augment(s.image, s.mask, 32, 7);
  CHECK((a.first == b.first).all());
  CHECK((a.second == b.second).all());

  // same seed, full-size crop: the flip decisions repeat, so applying the
  // augment twice restores the original
  const auto once = augment(s.image, s.mask, 64, 99);
  const auto twice = augment(once.first, once.second, 64, 99);
  CHECK((twice.first == s.image).all());
  CHECK((twice.second == s.mask).all());

  CHECK(a.second.cast<int>().sum() <= s.mask.cast<int>().sum());
  CHECK_THROWS_AS(augment(s.image, s.mask, 72, 0), std::invalid_argument);
}

TEST_CASE("allowed_actions covers the ablation groups") {
  CHECK(allowed_actions(Ablation::none).empty());
  CHECK(allowed_actions(Ablation::random).empty());
  const auto noise = allowed_actions(Ablation::noise);
  REQUIRE(noise.size() == 9);
  for (int idx : noise) CHECK(group_of(action_from_index(idx).kind) == CorruptionGroup::noise);
  CHECK(allowed_actions(Ablation::blur).size() == 9);
  CHECK(allowed_actions(Ablation::isp).size() == 12);
}

TEST_CASE("generate_corrupted_batch: determinism, uniform joint histogram, one-hot policy") {
  TrainConfig cfg = desk_config();
  cfg.mode = TrainMode::joint;
  TrainState<Real> st(cfg);

  std::vector<GrayImage<Real>> images(4, oracle::textured_fixture<Real>(32, 32));
  const auto a = generate_corrupted_batch(st, images, 3);
  const auto b = generate_corrupted_batch(st, images, 3);
  REQUIRE(a.images.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK((a.images[i] == b.images[i]).all());
    CHECK(a.records[i].action_index == b.records[i].action_index);
  }

  // joint histogram over many draws is uniform within +-0.01 of 1/30
  std::array<long, kNumActions> hist{};
  std::vector<GrayImage<Real>> batch(64, images[0]);
  const int table_steps = 470;  // 30080 draws
  for (int step = 0; step < table_steps; ++step) {
    const auto cb = generate_corrupted_batch(st, batch, 1000 + step);
    for (const auto& r : cb.records) ++hist[r.action_index];
  }
  const double total = 64.0 * table_steps;
  for (int i = 0; i < kNumActions; ++i)
    CHECK(std::abs(hist[i] / total - 1.0 / 30) <= 0.01);

  // one-hot policy in adversarial mode sends every sample to that action
  TrainConfig acfg = desk_config();
  acfg.mode = TrainMode::adversarial;
  TrainState<Real> ast(acfg);
  for (auto* p : ast.strategy.params())
    if (p->name == "strategy.head.b") p->w(0, 17) = 50.0f;
  const auto cb = generate_corrupted_batch(ast, images, 0);
  for (const auto& r : cb.records) CHECK(r.action_index == 17);
}

TEST_CASE("reward records carry valid log-probabilities") {
  TrainConfig cfg = desk_config();
  cfg.mode = TrainMode::adversarial;
  TrainState<Real> st(cfg);
  std::vector<GrayImage<Real>> images(8, oracle::textured_fixture<Real>(32, 32));
  const auto cb = generate_corrupted_batch(st, images, 0);
  for (const auto& r : cb.records) {
    CHECK(r.log_prob <= 1e-9);
    CHECK(std::isfinite(r.log_prob));
    CHECK(r.action_index >= 0);
    CHECK(r.action_index < kNumActions);
  }
}

TEST_CASE("ablation restricts the sampled actions") {
  TrainConfig cfg = desk_config();
  cfg.mode = TrainMode::joint;
  cfg.ablation = Ablation::noise;
  TrainState<Real> st(cfg);
  std::vector<GrayImage<Real>> images(32, oracle::textured_fixture<Real>(32, 32));
  for (int step = 0; step < 8; ++step) {
    const auto cb = generate_corrupted_batch(st, images, step);
    for (const auto& r : cb.records)
      CHECK(group_of(action_from_index(r.action_index).kind) == CorruptionGroup::noise);
  }
}

TEST_CASE("detector_step: identity corruption with lambda 1 doubles the clean gradient") {
  TrainConfig cfg = desk_config();
  TrainState<double> st_a(cfg), st_b(cfg);

  const auto data = tiny_dataset(2);
  std::vector<GrayImage<double>> clean;
  std::vector<MaskPlane> masks;
  for (const auto& s : data) {
    clean.push_back(s.image.cast<double>());
    masks.push_back(s.mask);
  }

  st_a.cfg.lambda = 1.0;
  detector_step(st_a, clean, clean, masks);  // x^ = x injected
  st_b.cfg.lambda = 0.0;
  detector_step(st_b, clean, {}, masks);

  auto pa = st_a.detector.params(), pb = st_b.detector.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->g.allFinite());
    CHECK((pa[i]->g - 2.0 * pb[i]->g).cwiseAbs().maxCoeff() <=
          1e-9 * std::max(1.0, pb[i]->g.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("lambda 0 training equals a plain supervised loop step for step") {
  auto data = tiny_dataset(6);
  TrainConfig cfg = desk_config();
  cfg.mode = TrainMode::joint;
  cfg.lambda = 0.0;
  cfg.steps = 3;
  TrainState<Real> st(cfg);
  const auto log = train(st, data, {});

  // plain supervised loop with the same seeds and components
  TrainState<Real> ref(cfg);
  std::vector<double> plain_losses;
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<GrayImage<Real>> images(cfg.batch_size);
    std::vector<MaskPlane> masks(cfg.batch_size);
    for (int i = 0; i < cfg.batch_size; ++i) {
      const auto& s = data[ref.batch_rng.uniform_int(static_cast<std::uint32_t>(data.size()))];
      auto [img, msk] = augment(s.image, s.mask, cfg.crop, derive_seed(cfg.seed, "augment", step, i));
      images[i] = std::move(img);
      masks[i] = std::move(msk);
    }
    plain_losses.push_back(detector_step(ref, images, {}, masks).clean);
  }
  for (int step = 0; step < cfg.steps; ++step) {
    CHECK(log[step].clean_loss == plain_losses[step]);
    CHECK(log[step].cor_loss == 0.0);
  }
  CHECK(weights_fingerprint(st.detector.params()) == weights_fingerprint(ref.detector.params()));
}

TEST_CASE("train: steps zero, alternation order, state isolation, EMA bounds") {
  auto data = tiny_dataset(6);
  TrainConfig cfg = desk_config();
  cfg.mode = TrainMode::adversarial;
  cfg.steps = 6;
  TrainState<Real> st(cfg);

  {
    TrainConfig zero = cfg;
    zero.steps = 0;
    TrainState<Real> st0(zero);
    const auto log = train(st0, data, {});
    CHECK(log.empty());
    CHECK(st0.step == 0);
  }

  std::vector<std::pair<long, TrainPhase>> phases;
  std::uint64_t det_fp_at_gen = 0, strat_fp_at_gen = 0, det_fp_at_det = 0;
  double min_reward = 1e9, max_reward = -1e9;
  bool baseline_ok = true;
  TrainObserver obs = [&](long step, TrainPhase ph) {
    phases.emplace_back(step, ph);
    if (ph == TrainPhase::corrupted_generated) {
      det_fp_at_gen = weights_fingerprint(st.detector.params());
      strat_fp_at_gen = weights_fingerprint(st.strategy.params());
    } else if (ph == TrainPhase::detector_updated) {
      // detector update must not have touched the strategy
      CHECK(weights_fingerprint(st.strategy.params()) == strat_fp_at_gen);
      det_fp_at_det = weights_fingerprint(st.detector.params());
      CHECK(det_fp_at_det != det_fp_at_gen);
    } else {
      // strategy update must not touch the detector
      CHECK(weights_fingerprint(st.detector.params()) == det_fp_at_det);
    }
  };
  const auto log = train(st, data, {}, obs);
  REQUIRE(log.size() == 6);

  REQUIRE(phases.size() == 18);
  for (int step = 0; step < 6; ++step) {
    CHECK(phases[3 * step] == std::make_pair(long(step), TrainPhase::corrupted_generated));
    CHECK(phases[3 * step + 1] == std::make_pair(long(step), TrainPhase::detector_updated));
    CHECK(phases[3 * step + 2] == std::make_pair(long(step), TrainPhase::strategy_updated));
  }

  for (const auto& row : log) {
    min_reward = std::min(min_reward, row.e_hat);
    max_reward = std::max(max_reward, row.e_hat);
    if (row.baseline < min_reward - 1e-12 || row.baseline > max_reward + 1e-12)
      baseline_ok = false;
    long total = 0;
    for (long c : row.action_histogram) total += c;
    CHECK(total == cfg.batch_size);
  }
  CHECK(baseline_ok);
  CHECK(st.step == 6);
}

TEST_CASE("full-run determinism: same config gives bit-identical states and logs") {
  auto data = tiny_dataset(6);
  TrainConfig cfg = desk_config();
  cfg.mode = TrainMode::adversarial;
  cfg.steps = 8;
  TrainState<Real> a(cfg), b(cfg);
  const auto la = train(a, data, data);
  const auto lb = train(b, data, data);
  CHECK(weights_fingerprint(a.detector.params()) == weights_fingerprint(b.detector.params()));
  CHECK(weights_fingerprint(a.strategy.params()) == weights_fingerprint(b.strategy.params()));
  REQUIRE(la.size() == lb.size());
  for (std::size_t i = 0; i < la.size(); ++i) {
    CHECK(la[i].clean_loss == lb[i].clean_loss);
    CHECK(la[i].cor_loss == lb[i].cor_loss);
    CHECK(la[i].e_hat == lb[i].e_hat);
    CHECK(la[i].action_histogram == lb[i].action_histogram);
  }
  CHECK(a.reward_baseline == b.reward_baseline);
  CHECK(a.batch_rng.state() == b.batch_rng.state());
}

TEST_CASE("joint and adversarial modes diverge from the first step") {
  auto data = tiny_dataset(6);
  TrainConfig cfg = desk_config();
  cfg.steps = 1;
  cfg.mode = TrainMode::joint;
  TrainState<Real> j(cfg);
  train(j, data, {});
  cfg.mode = TrainMode::adversarial;
  TrainState<Real> a(cfg);
  train(a, data, {});
  CHECK(weights_fingerprint(j.detector.params()) != weights_fingerprint(a.detector.params()));
}

TEST_CASE("train rejects images smaller than the crop") {
  auto data = tiny_dataset(2);
  TrainConfig cfg = desk_config();
  cfg.crop = 128;
  TrainState<Real> st(cfg);
  CHECK_THROWS_AS(train(st, data, {}), std::invalid_argument);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.crop = 30;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.lambda = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.lr_s = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("evaluate_robustness: oracle rows, counts, clean RCE, perfect prediction") {
  auto data = tiny_dataset(4);
  TrainConfig cfg = desk_config();
  TrainState<Real> st(cfg);
  // zero the head so the detector outputs exactly 0.5 everywhere
  for (auto* p : st.detector.params())
    if (p->name == "det.head.w" || p->name == "det.head.b") p->w.setZero();

  const TargetMatchConfig match;
  const auto rep = evaluate_robustness(st.detector, data, cfg.table, match, 5, 1);

  REQUIRE(rep.grid.size() == 31);  // 1 clean + 30 cells
  CHECK(rep.kind_avg.size() == 10);
  CHECK(rep.grid.front().clean);
  CHECK(*rep.grid.front().rce == 0.0);  // clean vs clean

  // uniform 0.5 output binarizes to all-positive: IOU equals the
  // all-ones-prediction oracle
  double oracle_iou = 0.0;
  for (const auto& s : data) {
    MaskPlane ones = MaskPlane::Ones(s.image.rows(), s.image.cols());
    oracle_iou += oracle::iou_bruteforce(ones, s.mask);
  }
  oracle_iou /= data.size();
  CHECK(rep.grid.front().iou_clean == doctest::Approx(oracle_iou).epsilon(1e-12));

  // perfect-prediction override scores IOU 1, Pd 1, Fa 0 everywhere
  int img_idx = 0;
  PredictFn<Real> perfect = [&, i = 0](const GrayImage<Real>&) mutable -> ProbabilityMap<Real> {
    (void)img_idx;
    const auto& s = data[static_cast<std::size_t>(i) % data.size()];
    ++i;
    ProbabilityMap<Real> p(s.image.rows(), s.image.cols());
    for (Eigen::Index j = 0; j < p.size(); ++j) p.data()[j] = static_cast<Real>(s.mask.data()[j]);
    return p;
  };
  const auto perfect_rep = evaluate_robustness(st.detector, data, cfg.table, match, 5, 1, perfect);
  CHECK(perfect_rep.grid.front().iou_clean == 1.0);
  CHECK(perfect_rep.grid.front().pd == 1.0);
  CHECK(perfect_rep.grid.front().fa == 0.0);
  CHECK(perfect_rep.grid_avg.iou_cor == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*perfect_rep.grid_avg.rce == doctest::Approx(0.0).epsilon(1e-9));

  CHECK_THROWS_AS(evaluate_robustness(st.detector, {}, cfg.table, match, 0, 1),
                  std::invalid_argument);
}

TEST_CASE("evaluate_robustness is identical across worker counts") {
  auto data = tiny_dataset(3);
  TrainConfig cfg = desk_config();
  TrainState<Real> st(cfg);
  Rng rng(3);
  for (auto* p : st.detector.params())
    for (Eigen::Index i = 0; i < p->w.size(); ++i)
      p->w.data()[i] += static_cast<Real>(0.02 * rng.normal());
  const TargetMatchConfig match;
  const auto r1 = evaluate_robustness(st.detector, data, cfg.table, match, 9, 1);
  const auto r2 = evaluate_robustness(st.detector, data, cfg.table, match, 9, 3);
  for (std::size_t i = 0; i < r1.grid.size(); ++i) {
    CHECK(r1.grid[i].iou_cor == r2.grid[i].iou_cor);
    CHECK(r1.grid[i].pd == r2.grid[i].pd);
    CHECK(r1.grid[i].fa == r2.grid[i].fa);
  }
}

TEST_CASE("checkpoint round trip is bit-exact and detects mismatches") {
  namespace fs = std::filesystem;
  auto data = tiny_dataset(6);
  TrainConfig cfg = desk_config();
  cfg.mode = TrainMode::adversarial;
  cfg.steps = 3;
  TrainState<Real> st(cfg);
  train(st, data, {});

  const auto path = (fs::temp_directory_path() / "balistd_ckpt_test.ckpt").string();
  save_checkpoint(path, st);
  TrainState<Real> loaded = load_checkpoint<Real>(path);

  CHECK(weights_fingerprint(loaded.detector.params()) == weights_fingerprint(st.detector.params()));
  CHECK(weights_fingerprint(loaded.strategy.params()) == weights_fingerprint(st.strategy.params()));
  CHECK(loaded.step == st.step);
  CHECK(loaded.reward_baseline == st.reward_baseline);
  CHECK(loaded.batch_rng.state() == st.batch_rng.state());
  CHECK(loaded.adam.t == st.adam.t);
  for (std::size_t i = 0; i < st.adam.m.size(); ++i) {
    CHECK((loaded.adam.m[i] == st.adam.m[i]));
    CHECK((loaded.adam.v[i] == st.adam.v[i]));
  }

  // save(load(x)) produces identical bytes
  const auto path2 = (fs::temp_directory_path() / "balistd_ckpt_test2.ckpt").string();
  save_checkpoint(path2, loaded);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);

  // resumed training continues identically to uninterrupted training
  TrainConfig cfg6 = cfg;
  cfg6.steps = 6;
  TrainState<Real> full(cfg6);
  train(full, data, {});
  TrainState<Real> resumed = load_checkpoint<Real>(path);
  resumed.cfg.steps = 3;
  train(resumed, data, {});
  CHECK(weights_fingerprint(resumed.detector.params()) ==
        weights_fingerprint(full.detector.params()));

  fs::remove(path);
  fs::remove(path2);
}

TEST_CASE("single-sample cooperated overfit drives the full loss under 0.1") {
  SynthConfig scfg;
  scfg.count = 1;
  scfg.seed = 11;
  auto data = synth_generate<Real>(scfg);

  TrainConfig cfg;
  cfg.crop = 64;
  cfg.batch_size = 2;
  cfg.steps = 300;
  cfg.mode = TrainMode::joint;
  cfg.lr_d = 3e-3;
  cfg.seed = 0;
  cfg.val_interval = 1000;
  TrainState<Real> st(cfg);
  train(st, data, {});

  // expected cooperated loss at the final weights: clean branch plus the
  // corrupted branch averaged over the whole action grid
  const auto& s = data[0];
  auto loss_of = [&](const GrayImage<Real>& img) {
    return soft_iou_loss(st.detector.forward(img), s.mask);
  };
  const double clean = loss_of(s.image);
  double cor = 0.0;
  for (int a = 0; a < kNumActions; ++a)
    cor += loss_of(apply(s.image, action_from_index(a), 77, cfg.table)) / kNumActions;
  INFO("expected L^D = ", clean + cfg.lambda * cor);
  CHECK(clean + cfg.lambda * cor < 0.1);
}
