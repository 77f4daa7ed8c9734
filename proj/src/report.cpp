#include "balistd/report.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace balistd {

namespace {

std::string fmt(double v, const char* f = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string rce_str(const std::optional<double>& r) { return r ? fmt(*r, "%.4f") : ""; }

void csv_row(std::ofstream& out, const std::string& dataset, const std::string& kind,
             const std::string& severity, const RobustnessRecord& r, std::uint64_t seed) {
  out << dataset << ',' << kind << ',' << severity << ',' << fmt(r.iou_clean) << ','
      << fmt(r.iou_cor) << ',' << rce_str(r.rce) << ',' << fmt(r.pd) << ',' << fmt(r.fa) << ','
      << seed << ',' << fmt(r.fa * 1e6, "%.4f") << '\n';
}

// Column order used by the Markdown table: the nine-kind set in its usual
// order, then impulse_noise as the flagged extra.
const CorruptionKind kMdOrder[] = {
    CorruptionKind::gaussian_noise, CorruptionKind::shot_noise,   CorruptionKind::defocus_blur,
    CorruptionKind::motion_blur,    CorruptionKind::gaussian_blur, CorruptionKind::brightness,
    CorruptionKind::contrast,       CorruptionKind::pixelate,      CorruptionKind::jpeg_compression,
    CorruptionKind::impulse_noise,
};

std::string display_name(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::gaussian_noise: return "Gaussian Noise";
    case CorruptionKind::shot_noise: return "Shot Noise";
    case CorruptionKind::impulse_noise: return "Impulse Noise*";
    case CorruptionKind::motion_blur: return "Motion Blur";
    case CorruptionKind::defocus_blur: return "Defocus Blur";
    case CorruptionKind::gaussian_blur: return "Gaussian Blur";
    case CorruptionKind::brightness: return "Brightness";
    case CorruptionKind::contrast: return "Contrast";
    case CorruptionKind::pixelate: return "Pixelate";
    case CorruptionKind::jpeg_compression: return "JPEG Compression";
  }
  return "?";
}

}  // namespace

void write_robustness_csv(const std::string& path, const RobustnessReport& rep,
                          const std::string& dataset_name) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "dataset,kind,severity,iou_clean,iou_cor,rce,pd,fa,seed,fa_e6\n";
  for (const auto& r : rep.grid) {
    if (r.clean)
      csv_row(out, dataset_name, "clean", "-", r, rep.seed);
    else
      csv_row(out, dataset_name, kind_name(r.kind), std::to_string(r.severity), r, rep.seed);
  }
  for (const auto& r : rep.kind_avg) csv_row(out, dataset_name, kind_name(r.kind), "avg", r, rep.seed);
  csv_row(out, dataset_name, "all", "avg", rep.grid_avg, rep.seed);
}

void write_robustness_md(const std::string& path, const RobustnessReport& rep,
                         const std::string& dataset_name) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);

  std::map<int, const RobustnessRecord*> by_kind;
  for (const auto& r : rep.kind_avg) by_kind[static_cast<int>(r.kind)] = &r;

  out << "# Robustness on " << dataset_name << "\n\n";
  out << "Severity-averaged IOU (%, higher is better) and RCE (%, lower is better); clean IOU "
      << fmt(rep.grid.front().iou_clean * 100.0, "%.2f") << "%.\n\n";

  out << "| Metric |";
  for (auto k : kMdOrder) out << ' ' << display_name(k) << " |";
  out << " Average |\n";
  out << "|---|";
  for (int i = 0; i <= static_cast<int>(std::size(kMdOrder)); ++i) out << "---|";
  out << '\n';

  out << "| IOU |";
  for (auto k : kMdOrder) out << ' ' << fmt(by_kind.at(static_cast<int>(k))->iou_cor * 100.0, "%.2f") << " |";
  out << ' ' << fmt(rep.grid_avg.iou_cor * 100.0, "%.2f") << " |\n";

  out << "| RCE |";
  for (auto k : kMdOrder) {
    const auto& r = by_kind.at(static_cast<int>(k))->rce;
    out << ' ' << (r ? fmt(*r, "%.2f") : std::string("n/a")) << " |";
  }
  out << ' ' << (rep.grid_avg.rce ? fmt(*rep.grid_avg.rce, "%.2f") : std::string("n/a")) << " |\n\n";

  out << "\\* impulse_noise is an extra column beyond the usual nine-kind table set.\n";
}

void write_clean_csv(const std::string& path, const RobustnessRecord& clean,
                     const std::string& dataset_name, std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "dataset,iou,pd,fa,fa_e6,seed\n";
  out << dataset_name << ',' << fmt(clean.iou_clean) << ',' << fmt(clean.pd) << ','
      << fmt(clean.fa) << ',' << fmt(clean.fa * 1e6, "%.4f") << ',' << seed << '\n';
}

void write_clean_md(const std::string& path, const RobustnessRecord& clean,
                    const std::string& dataset_name) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# Clean evaluation on " << dataset_name << "\n\n";
  out << "| IOU (%) | Pd (%) | Fa (x1e-6) |\n|---|---|---|\n";
  out << "| " << fmt(clean.iou_clean * 100.0, "%.2f") << " | " << fmt(clean.pd * 100.0, "%.2f")
      << " | " << fmt(clean.fa * 1e6, "%.2f") << " |\n";
}

void render_report_from_csv(const std::string& csv_path, const std::string& md_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot open " + csv_path);
  std::string header;
  if (!std::getline(in, header) ||
      header != "dataset,kind,severity,iou_clean,iou_cor,rce,pd,fa,seed,fa_e6")
    throw std::runtime_error(csv_path + " is not a robustness CSV");

  RobustnessReport rep;
  std::string dataset = "dataset";
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() < 10) throw std::runtime_error("bad CSV row: " + line);
    dataset = f[0];
    RobustnessRecord r;
    r.iou_clean = std::stod(f[3]);
    r.iou_cor = std::stod(f[4]);
    if (!f[5].empty()) r.rce = std::stod(f[5]);
    r.pd = std::stod(f[6]);
    r.fa = std::stod(f[7]);
    rep.seed = std::stoull(f[8]);
    if (f[1] == "clean") {
      r.clean = true;
      rep.grid.insert(rep.grid.begin(), r);
    } else if (f[1] == "all") {
      rep.grid_avg = r;
    } else if (f[2] == "avg") {
      r.kind = kind_from_name(f[1]);
      rep.kind_avg.push_back(r);
    }
  }
  if (rep.grid.empty() || rep.kind_avg.size() != kNumKinds)
    throw std::runtime_error(csv_path + " does not contain a full robustness grid");
  write_robustness_md(md_path, rep, dataset);
}

void write_train_log(const std::string& path, const std::vector<TrainLogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "step,clean_loss,cor_loss,e_hat,baseline,action_histogram,val_iou\n";
  for (const auto& r : rows) {
    out << r.step << ',' << fmt(r.clean_loss) << ',' << fmt(r.cor_loss) << ',' << fmt(r.e_hat)
        << ',' << fmt(r.baseline) << ',';
    for (int i = 0; i < kNumActions; ++i) {
      if (i) out << ';';
      out << r.action_histogram[i];
    }
    out << ',';
    if (r.val_iou) out << fmt(*r.val_iou);
    out << '\n';
  }
}

}  // namespace balistd
