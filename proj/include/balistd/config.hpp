#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "balistd/checkpoint.hpp"
#include "balistd/dataset.hpp"
#include "balistd/metrics.hpp"
#include "balistd/trainer.hpp"

namespace balistd {

// Run configuration: one JSON document with a section per module. Unknown
// keys are rejected everywhere; every command writes its fully resolved
// config next to its outputs.
struct RunConfig {
  std::string output_dir = "runs/out";
  TrainConfig train;
  SynthConfig synth;
  TargetMatchConfig match;
};

inline SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig c = {}) {
  detail::check_keys(j,
                     {"count", "size", "targets_min", "targets_max", "radius_min", "radius_max",
                      "contrast_min", "contrast_max", "clutter_scale", "train_fraction", "seed"},
                     "synth section");
  if (j.contains("count")) c.count = j.at("count").get<int>();
  if (j.contains("size")) c.size = j.at("size").get<int>();
  if (j.contains("targets_min")) c.targets_min = j.at("targets_min").get<int>();
  if (j.contains("targets_max")) c.targets_max = j.at("targets_max").get<int>();
  if (j.contains("radius_min")) c.radius_min = j.at("radius_min").get<double>();
  if (j.contains("radius_max")) c.radius_max = j.at("radius_max").get<double>();
  if (j.contains("contrast_min")) c.contrast_min = j.at("contrast_min").get<double>();
  if (j.contains("contrast_max")) c.contrast_max = j.at("contrast_max").get<double>();
  if (j.contains("clutter_scale")) c.clutter_scale = j.at("clutter_scale").get<double>();
  if (j.contains("train_fraction")) c.train_fraction = j.at("train_fraction").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline nlohmann::json synth_config_to_json(const SynthConfig& c) {
  return {{"count", c.count},
          {"size", c.size},
          {"targets_min", c.targets_min},
          {"targets_max", c.targets_max},
          {"radius_min", c.radius_min},
          {"radius_max", c.radius_max},
          {"contrast_min", c.contrast_min},
          {"contrast_max", c.contrast_max},
          {"clutter_scale", c.clutter_scale},
          {"train_fraction", c.train_fraction},
          {"seed", c.seed}};
}

inline TargetMatchConfig match_config_from_json(const nlohmann::json& j, TargetMatchConfig c = {}) {
  detail::check_keys(j, {"binarize_threshold", "match_distance"}, "match section");
  if (j.contains("binarize_threshold"))
    c.binarize_threshold = j.at("binarize_threshold").get<double>();
  if (j.contains("match_distance")) c.match_distance = j.at("match_distance").get<double>();
  return c;
}

inline nlohmann::json match_config_to_json(const TargetMatchConfig& c) {
  return {{"binarize_threshold", c.binarize_threshold}, {"match_distance", c.match_distance}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  detail::check_keys(j, {"output_dir", "train", "synth", "match", "corruption"}, "run config");
  RunConfig c;
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  if (j.contains("synth")) c.synth = synth_config_from_json(j.at("synth"));
  if (j.contains("match")) c.match = match_config_from_json(j.at("match"));
  if (j.contains("corruption")) c.train.table = corruption_table_from_json(j.at("corruption"));
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw std::invalid_argument("config parse error in " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["output_dir"] = c.output_dir;
  j["train"] = train_config_to_json(c.train);
  j["synth"] = synth_config_to_json(c.synth);
  j["match"] = match_config_to_json(c.match);
  j["corruption"] = corruption_table_to_json(c.train.table);
  return j;
}

inline void write_resolved_config(const std::string& dir, const RunConfig& c) {
  std::filesystem::create_directories(dir);
  std::ofstream out((std::filesystem::path(dir) / "resolved_config.json").string());
  if (!out) throw std::runtime_error("cannot write resolved config under " + dir);
  out << run_config_to_json(c).dump(2) << '\n';
}

}  // namespace balistd
