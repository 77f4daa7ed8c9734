#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "balistd/checkpoint.hpp"
#include "balistd/config.hpp"
#include "balistd/dataset.hpp"
#include "balistd/report.hpp"
#include "balistd/trainer.hpp"

namespace fs = std::filesystem;
using namespace balistd;

namespace {

// seed precedence: --seed flag > BALISTD_SEED env > config file
std::uint64_t resolve_seed(std::uint64_t file_seed, bool flag_given, std::uint64_t flag_seed) {
  if (flag_given) return flag_seed;
  if (const char* env = std::getenv("BALISTD_SEED")) return std::strtoull(env, nullptr, 10);
  return file_seed;
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return {};
  return load_run_config(path);
}

int cmd_synth(const CommonArgs& args) {
  RunConfig cfg = load_config_or_default(args.config_path);
  cfg.synth.seed = resolve_seed(cfg.synth.seed, args.seed_given, args.seed);
  if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
  if (cfg.synth.count <= 0)
    throw std::invalid_argument("synth: count must be > 0 (got " +
                                std::to_string(cfg.synth.count) + ")");
  cfg.synth.validate();

  const auto samples = synth_generate<Real>(cfg.synth);
  write_dataset(cfg.output_dir, samples, cfg.synth.train_fraction);
  write_resolved_config(cfg.output_dir, cfg);

  const auto manifest = load_manifest(cfg.output_dir);
  std::cout << "wrote " << samples.size() << " scenes to " << cfg.output_dir << "\n";
  std::cout << "MANIFEST.sha " << manifest.hash_hex << "\n";
  return 0;
}

struct TrainArgs : CommonArgs {
  std::string data_dir;
  std::string mode, ablation;
  int steps = -1, crop = -1, batch = -1, workers = -1;
  double lambda = -1.0, lr_d = -1.0, lr_s = -1.0;
  bool no_sfim = false;
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = load_config_or_default(a.config_path);
  TrainConfig& t = cfg.train;
  t.seed = resolve_seed(t.seed, a.seed_given, a.seed);
  if (!a.mode.empty()) t.mode = mode_from_name(a.mode);
  if (!a.ablation.empty()) t.ablation = ablation_from_name(a.ablation);
  if (a.steps >= 0) t.steps = a.steps;
  if (a.crop > 0) t.crop = a.crop;
  if (a.batch > 0) t.batch_size = a.batch;
  if (a.workers > 0) t.workers = a.workers;
  if (a.lambda >= 0) t.lambda = a.lambda;
  if (a.lr_d > 0) t.lr_d = a.lr_d;
  if (a.lr_s > 0) t.lr_s = a.lr_s;
  if (a.no_sfim) t.detector_sfim_frequency = false;
  if (!a.out_dir.empty()) cfg.output_dir = a.out_dir;
  t.validate();

  const auto manifest = load_manifest(a.data_dir);
  const auto train_set = load_split<Real>(manifest, true);
  const auto val_set = load_split<Real>(manifest, false);
  if (train_set.empty()) throw std::runtime_error("dataset has no train split: " + a.data_dir);

  fs::create_directories(cfg.output_dir);
  write_resolved_config(cfg.output_dir, cfg);

  TrainState<Real> st(t);
  const auto log = train(st, train_set, val_set);
  write_train_log((fs::path(cfg.output_dir) / "train_log.csv").string(), log);
  save_checkpoint((fs::path(cfg.output_dir) / "checkpoint.ckpt").string(), st);

  double last_val = -1.0;
  for (const auto& r : log)
    if (r.val_iou) last_val = *r.val_iou;
  std::cout << "trained " << t.steps << " steps (mode " << mode_name(t.mode) << ", seed " << t.seed
            << ")\n";
  if (last_val >= 0) std::cout << "last validation IOU " << last_val << "\n";
  std::cout << "checkpoint " << (fs::path(cfg.output_dir) / "checkpoint.ckpt").string() << "\n";
  return 0;
}

struct EvalArgs : CommonArgs {
  std::string checkpoint, data_dir, dataset_name = "synthetic";
  bool clean_only = false;
  int workers = -1;
};

int cmd_eval(const EvalArgs& a) {
  RunConfig cfg = load_config_or_default(a.config_path);
  if (!a.out_dir.empty()) cfg.output_dir = a.out_dir;

  TrainState<Real> st = load_checkpoint<Real>(a.checkpoint);
  cfg.train = st.cfg;
  if (!a.config_path.empty()) {
    // allow corruption-table and match overrides from the config file
    const RunConfig file_cfg = load_run_config(a.config_path);
    cfg.train.table = file_cfg.train.table;
    cfg.match = file_cfg.match;
  }
  const std::uint64_t seed = resolve_seed(st.cfg.seed, a.seed_given, a.seed);
  const int workers = a.workers > 0 ? a.workers : st.cfg.workers;

  const auto manifest = load_manifest(a.data_dir);
  const auto test_set = load_split<Real>(manifest, false);
  if (test_set.empty()) throw std::runtime_error("dataset has no test split: " + a.data_dir);

  fs::create_directories(cfg.output_dir);
  write_resolved_config(cfg.output_dir, cfg);

  if (a.clean_only) {
    double iou_sum = 0.0;
    long matched = 0, targets = 0, false_px = 0, total_px = 0;
    for (const auto& s : test_set) {
      const MaskPlane pred = binarize(st.detector.forward(s.image), cfg.match.binarize_threshold);
      iou_sum += iou(pred, s.mask);
      const auto gt = connected_components(s.mask);
      const auto pf = pd_fa(pred, s.mask, cfg.match);
      targets += static_cast<long>(gt.size());
      matched += std::lround(pf.pd * static_cast<double>(gt.size()));
      false_px += std::lround(pf.fa * static_cast<double>(pred.size()));
      total_px += static_cast<long>(pred.size());
    }
    RobustnessRecord clean;
    clean.clean = true;
    clean.iou_clean = iou_sum / static_cast<double>(test_set.size());
    clean.iou_cor = clean.iou_clean;
    clean.pd = targets == 0 ? 1.0 : static_cast<double>(matched) / targets;
    clean.fa = static_cast<double>(false_px) / total_px;
    write_clean_csv((fs::path(cfg.output_dir) / "clean.csv").string(), clean, a.dataset_name, seed);
    write_clean_md((fs::path(cfg.output_dir) / "clean.md").string(), clean, a.dataset_name);
    std::printf("clean IOU %.2f%%  Pd %.2f%%  Fa %.2f x1e-6\n", clean.iou_clean * 100.0,
                clean.pd * 100.0, clean.fa * 1e6);
    return 0;
  }

  const RobustnessReport rep =
      evaluate_robustness(st.detector, test_set, cfg.train.table, cfg.match, seed, workers);
  write_robustness_csv((fs::path(cfg.output_dir) / "robustness.csv").string(), rep, a.dataset_name);
  write_robustness_md((fs::path(cfg.output_dir) / "robustness.md").string(), rep, a.dataset_name);
  std::printf("clean IOU %.2f%%  corruption-averaged IOU %.2f%%  RCE %.2f%%\n",
              rep.grid.front().iou_clean * 100.0, rep.grid_avg.iou_cor * 100.0,
              rep.grid_avg.rce ? *rep.grid_avg.rce : 0.0);
  std::cout << "report " << (fs::path(cfg.output_dir) / "robustness.md").string() << "\n";
  return 0;
}

struct CorruptArgs {
  std::string in_path, kind, out_path, config_path;
  int severity = 0;
  std::uint64_t seed = 0;
};

int cmd_corrupt(const CorruptArgs& a) {
  const RunConfig cfg = load_config_or_default(a.config_path);
  const CorruptionAction action{kind_from_name(a.kind), Severity(a.severity)};
  const Gray8 in = read_png_gray8(a.in_path);
  const GrayImage<Real> img = to_unit_plane<Real>(in);
  const GrayImage<Real> out = apply(img, action, a.seed, cfg.train.table);
  write_png_gray8(a.out_path, quantize_to_gray8(out));
  char fp[32];
  std::snprintf(fp, sizeof(fp), "%016llx",
                static_cast<unsigned long long>(cfg.train.table.fingerprint()));
  std::cout << "wrote " << a.out_path << " (" << a.kind << " severity " << a.severity << ", seed "
            << a.seed << ", table " << fp << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"balistd: bi-level adversarial training laboratory for infrared small-target detection"};
  app.require_subcommand(1);

  CommonArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--config", synth_args.config_path, "Run config file (JSON)");
  synth->add_option("--out", synth_args.out_dir, "Output dataset directory");
  auto* synth_seed = synth->add_option("--seed", synth_args.seed, "Dataset seed");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train detector and corruption strategy");
  train_cmd->add_option("--config", train_args.config_path, "Run config file (JSON)");
  train_cmd->add_option("--data", train_args.data_dir, "Dataset root")->required();
  train_cmd->add_option("--out", train_args.out_dir, "Output directory");
  train_cmd->add_option("--mode", train_args.mode, "joint|adversarial");
  train_cmd->add_option("--ablation", train_args.ablation, "random|noise|blur|isp");
  train_cmd->add_option("--steps", train_args.steps, "Training steps");
  train_cmd->add_option("--crop", train_args.crop, "Crop size");
  train_cmd->add_option("--batch-size", train_args.batch, "Batch size");
  train_cmd->add_option("--workers", train_args.workers, "Data-parallel worker cap");
  train_cmd->add_option("--lambda", train_args.lambda, "Corrupted-loss trade-off");
  train_cmd->add_option("--lr-d", train_args.lr_d, "Detector learning rate");
  train_cmd->add_option("--lr-s", train_args.lr_s, "Strategy learning rate");
  train_cmd->add_flag("--no-sfim", train_args.no_sfim, "Disable the SFIM frequency path");
  auto* train_seed = train_cmd->add_option("--seed", train_args.seed, "Run seed");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate robustness over the corruption grid");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval_args.data_dir, "Dataset root")->required();
  eval_cmd->add_option("--out", eval_args.out_dir, "Output directory");
  eval_cmd->add_option("--config", eval_args.config_path, "Run config file (JSON)");
  eval_cmd->add_option("--dataset-name", eval_args.dataset_name, "Name in reports");
  eval_cmd->add_option("--workers", eval_args.workers, "Data-parallel worker cap");
  eval_cmd->add_flag("--clean-only", eval_args.clean_only, "Only the clean IOU/Pd/Fa row");
  auto* eval_seed = eval_cmd->add_option("--seed", eval_args.seed, "Evaluation seed");

  CorruptArgs cor_args;
  auto* cor_cmd = app.add_subcommand("corrupt", "Apply one corruption to one image");
  cor_cmd->add_option("input", cor_args.in_path, "Input PNG")->required();
  cor_cmd->add_option("kind", cor_args.kind, "Corruption kind")->required();
  cor_cmd->add_option("severity", cor_args.severity, "Severity level 1..3")->required();
  cor_cmd->add_option("output", cor_args.out_path, "Output PNG")->required();
  cor_cmd->add_option("--seed", cor_args.seed, "Corruption seed");
  cor_cmd->add_option("--config", cor_args.config_path, "Run config file (JSON)");

  struct {
    std::string csv, out;
  } report_args;
  auto* report_cmd = app.add_subcommand("report", "Render a Markdown table from a robustness CSV");
  report_cmd->add_option("--csv", report_args.csv, "robustness.csv from eval")->required();
  report_cmd->add_option("--out", report_args.out, "Output Markdown path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (synth->parsed()) {
      synth_args.seed_given = synth_seed->count() > 0;
      return cmd_synth(synth_args);
    }
    if (train_cmd->parsed()) {
      train_args.seed_given = train_seed->count() > 0;
      return cmd_train(train_args);
    }
    if (eval_cmd->parsed()) {
      eval_args.seed_given = eval_seed->count() > 0;
      return cmd_eval(eval_args);
    }
    if (cor_cmd->parsed()) return cmd_corrupt(cor_args);
    if (report_cmd->parsed()) {
      render_report_from_csv(report_args.csv, report_args.out);
      std::cout << "wrote " << report_args.out << "\n";
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
