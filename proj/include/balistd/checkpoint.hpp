#pragma once

#include <json.hpp>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "balistd/trainer.hpp"

namespace balistd {

// Single-file container holding both weight sets, the resolved train config,
// optimizer state, step counter, rng state and the action-space layout.
// Round-trips bit-exactly.
inline constexpr char kCheckpointMagic[8] = {'B', 'L', 'S', 'T', 'D', 'C', 'K', '1'};

namespace detail {

inline void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename V>
void write_pod(std::ofstream& out, const V& v) {
  write_bytes(out, &v, sizeof(V));
}

inline void read_bytes(std::ifstream& in, void* p, std::size_t n) {
  if (!in.read(static_cast<char*>(p), static_cast<std::streamsize>(n)))
    throw std::runtime_error("checkpoint: truncated file");
}

template <typename V>
V read_pod(std::ifstream& in) {
  V v;
  read_bytes(in, &v, sizeof(V));
  return v;
}

inline void write_string(std::ofstream& out, const std::string& s) {
  write_pod<std::uint64_t>(out, s.size());
  write_bytes(out, s.data(), s.size());
}

inline std::string read_string(std::ifstream& in) {
  const auto n = read_pod<std::uint64_t>(in);
  std::string s(n, '\0');
  read_bytes(in, s.data(), n);
  return s;
}

template <typename T>
void write_mat(std::ofstream& out, const MatX<T>& m) {
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  write_bytes(out, m.data(), sizeof(T) * m.size());
}

template <typename T>
void read_mat_into(std::ifstream& in, MatX<T>& m, const std::string& what) {
  const auto rows = read_pod<std::uint64_t>(in);
  const auto cols = read_pod<std::uint64_t>(in);
  if (rows != static_cast<std::uint64_t>(m.rows()) || cols != static_cast<std::uint64_t>(m.cols()))
    throw std::runtime_error("checkpoint: shape mismatch for " + what);
  read_bytes(in, m.data(), sizeof(T) * m.size());
}

}  // namespace detail

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json t;
  t["mode"] = mode_name(c.mode);
  t["lr_d"] = c.lr_d;
  t["lr_s"] = c.lr_s;
  t["lambda"] = c.lambda;
  t["batch_size"] = c.batch_size;
  t["steps"] = c.steps;
  t["crop"] = c.crop;
  t["seed"] = c.seed;
  t["baseline_decay"] = c.baseline_decay;
  t["ablation"] = ablation_name(c.ablation);
  t["val_interval"] = c.val_interval;
  t["workers"] = c.workers;
  t["policy_base_channels"] = c.policy_base_channels;
  t["detector_sfim_frequency"] = c.detector_sfim_frequency;
  return t;
}

inline nlohmann::json corruption_table_to_json(const CorruptionTable& t) {
  nlohmann::json j;
  j["gaussian_noise_sigma"] = t.gaussian_noise_sigma;
  j["shot_noise_photons"] = t.shot_noise_photons;
  j["impulse_noise_prob"] = t.impulse_noise_prob;
  j["motion_blur_length"] = t.motion_blur_length;
  j["defocus_blur_radius"] = t.defocus_blur_radius;
  j["gaussian_blur_sigma"] = t.gaussian_blur_sigma;
  j["brightness_delta"] = t.brightness_delta;
  j["contrast_scale"] = t.contrast_scale;
  j["pixelate_block"] = t.pixelate_block;
  j["jpeg_quality"] = t.jpeg_quality;
  return j;
}

namespace detail {

inline void check_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                       const std::string& context) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) throw std::invalid_argument("unknown key '" + it.key() + "' in " + context);
  }
}

}  // namespace detail

inline CorruptionTable corruption_table_from_json(const nlohmann::json& j) {
  detail::check_keys(j,
                     {"gaussian_noise_sigma", "shot_noise_photons", "impulse_noise_prob",
                      "motion_blur_length", "defocus_blur_radius", "gaussian_blur_sigma",
                      "brightness_delta", "contrast_scale", "pixelate_block", "jpeg_quality"},
                     "corruption section");
  CorruptionTable t;
  auto arr3d = [&](const char* key, std::array<double, 3>& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::array<double, 3>>();
  };
  auto arr3i = [&](const char* key, std::array<int, 3>& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::array<int, 3>>();
  };
  arr3d("gaussian_noise_sigma", t.gaussian_noise_sigma);
  arr3d("shot_noise_photons", t.shot_noise_photons);
  arr3d("impulse_noise_prob", t.impulse_noise_prob);
  arr3i("motion_blur_length", t.motion_blur_length);
  arr3i("defocus_blur_radius", t.defocus_blur_radius);
  arr3d("gaussian_blur_sigma", t.gaussian_blur_sigma);
  arr3d("brightness_delta", t.brightness_delta);
  arr3d("contrast_scale", t.contrast_scale);
  arr3i("pixelate_block", t.pixelate_block);
  arr3i("jpeg_quality", t.jpeg_quality);
  return t;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  detail::check_keys(j,
                     {"mode", "lr_d", "lr_s", "lambda", "batch_size", "steps", "crop", "seed",
                      "baseline_decay", "ablation", "val_interval", "workers",
                      "policy_base_channels", "detector_sfim_frequency"},
                     "train section");
  if (j.contains("mode")) c.mode = mode_from_name(j.at("mode").get<std::string>());
  if (j.contains("lr_d")) c.lr_d = j.at("lr_d").get<double>();
  if (j.contains("lr_s")) c.lr_s = j.at("lr_s").get<double>();
  if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (j.contains("steps")) c.steps = j.at("steps").get<int>();
  if (j.contains("crop")) c.crop = j.at("crop").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("baseline_decay")) c.baseline_decay = j.at("baseline_decay").get<double>();
  if (j.contains("ablation")) c.ablation = ablation_from_name(j.at("ablation").get<std::string>());
  if (j.contains("val_interval")) c.val_interval = j.at("val_interval").get<int>();
  if (j.contains("workers")) c.workers = j.at("workers").get<int>();
  if (j.contains("policy_base_channels"))
    c.policy_base_channels = j.at("policy_base_channels").get<int>();
  if (j.contains("detector_sfim_frequency"))
    c.detector_sfim_frequency = j.at("detector_sfim_frequency").get<bool>();
  return c;
}

template <typename T>
void save_checkpoint(const std::string& path, TrainState<T>& st) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);

  nlohmann::json meta;
  meta["format_version"] = 1;
  meta["scalar_bytes"] = sizeof(T);
  meta["train_config"] = train_config_to_json(st.cfg);
  meta["corruption_table"] = corruption_table_to_json(st.cfg.table);
  char fp[32];
  std::snprintf(fp, sizeof(fp), "%016llx",
                static_cast<unsigned long long>(st.cfg.table.fingerprint()));
  meta["corruption_table_fingerprint"] = fp;
  meta["detector"] = {{"channels", st.detector.config().channels},
                      {"use_sfim_frequency", st.detector.config().use_sfim_frequency}};
  std::snprintf(fp, sizeof(fp), "%016llx",
                static_cast<unsigned long long>(st.detector.config().fingerprint()));
  meta["detector_fingerprint"] = fp;
  meta["strategy"] = {{"base_channels", st.strategy.config().base_channels},
                      {"actions", st.strategy.config().actions}};
  // action-space layout: flat index -> "kind:level"
  std::vector<std::string> layout;
  for (int i = 0; i < kNumActions; ++i) {
    const auto a = action_from_index(i);
    layout.push_back(std::string(kind_name(a.kind)) + ":" + std::to_string(a.severity.level));
  }
  meta["action_layout"] = layout;

  detail::write_bytes(out, kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_pod<std::uint32_t>(out, sizeof(T));
  detail::write_string(out, meta.dump());
  detail::write_pod<std::int64_t>(out, st.step);
  detail::write_pod<double>(out, st.reward_baseline);
  detail::write_pod<std::uint8_t>(out, st.baseline_init ? 1 : 0);
  const auto rng_state = st.batch_rng.state();
  for (auto v : rng_state) detail::write_pod<std::uint64_t>(out, v);
  detail::write_pod<std::int64_t>(out, st.adam.t);

  auto det_params = st.detector.params();
  detail::write_pod<std::uint64_t>(out, det_params.size());
  for (std::size_t i = 0; i < det_params.size(); ++i) {
    detail::write_string(out, det_params[i]->name);
    detail::write_mat(out, det_params[i]->w);
    detail::write_mat(out, st.adam.m[i]);
    detail::write_mat(out, st.adam.v[i]);
  }
  auto strat_params = st.strategy.params();
  detail::write_pod<std::uint64_t>(out, strat_params.size());
  for (auto* p : strat_params) {
    detail::write_string(out, p->name);
    detail::write_mat(out, p->w);
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

template <typename T>
TrainState<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);

  char magic[8];
  detail::read_bytes(in, magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  const auto scalar = detail::read_pod<std::uint32_t>(in);
  if (scalar != sizeof(T))
    throw std::runtime_error("checkpoint scalar width " + std::to_string(scalar) +
                             " does not match build (" + std::to_string(sizeof(T)) + ")");

  const nlohmann::json meta = nlohmann::json::parse(detail::read_string(in));
  TrainConfig cfg = train_config_from_json(meta.at("train_config"));
  cfg.table = corruption_table_from_json(meta.at("corruption_table"));

  TrainState<T> st(cfg);
  // architecture fingerprint check
  char fp[32];
  std::snprintf(fp, sizeof(fp), "%016llx",
                static_cast<unsigned long long>(st.detector.config().fingerprint()));
  if (meta.at("detector_fingerprint").get<std::string>() != fp)
    throw std::runtime_error("checkpoint architecture fingerprint mismatch");

  st.step = detail::read_pod<std::int64_t>(in);
  st.reward_baseline = detail::read_pod<double>(in);
  st.baseline_init = detail::read_pod<std::uint8_t>(in) != 0;
  Rng::State rs;
  for (auto& v : rs) v = detail::read_pod<std::uint64_t>(in);
  st.batch_rng.set_state(rs);
  st.adam.t = detail::read_pod<std::int64_t>(in);

  auto det_params = st.detector.params();
  const auto n_det = detail::read_pod<std::uint64_t>(in);
  if (n_det != det_params.size()) throw std::runtime_error("checkpoint: detector param count mismatch");
  for (std::size_t i = 0; i < det_params.size(); ++i) {
    const std::string name = detail::read_string(in);
    if (name != det_params[i]->name)
      throw std::runtime_error("checkpoint: unexpected parameter " + name);
    detail::read_mat_into(in, det_params[i]->w, name);
    detail::read_mat_into(in, st.adam.m[i], name + ".adam_m");
    detail::read_mat_into(in, st.adam.v[i], name + ".adam_v");
  }
  auto strat_params = st.strategy.params();
  const auto n_strat = detail::read_pod<std::uint64_t>(in);
  if (n_strat != strat_params.size())
    throw std::runtime_error("checkpoint: strategy param count mismatch");
  for (auto* p : strat_params) {
    const std::string name = detail::read_string(in);
    if (name != p->name) throw std::runtime_error("checkpoint: unexpected parameter " + name);
    detail::read_mat_into(in, p->w, name);
  }
  return st;
}

}  // namespace balistd
