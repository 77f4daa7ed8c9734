#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "balistd/common.hpp"
#include "balistd/corruption.hpp"

namespace balistd {

struct TargetMatchConfig {
  double binarize_threshold = 0.5;
  double match_distance = 3.0;  // centroid distance in pixels
  // connectivity is fixed to 8

  void validate() const {
    if (binarize_threshold <= 0.0 || binarize_threshold >= 1.0)
      throw std::invalid_argument("binarize_threshold must be in (0,1)");
    if (match_distance <= 0.0) throw std::invalid_argument("match_distance must be > 0");
  }
};

inline void require_binary(const MaskPlane& m, const char* what) {
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (m.data()[i] > 1) throw std::invalid_argument(std::string(what) + ": mask not binary");
}

// Differentiable 1 - (sum p*y + eps) / (sum p + sum y - sum p*y + eps), eps = 1.
template <typename T>
double soft_iou_loss(const Plane<T>& pred, const MaskPlane& mask) {
  if (pred.rows() != mask.rows() || pred.cols() != mask.cols())
    throw std::invalid_argument("soft_iou_loss: shape mismatch");
  require_binary(mask, "soft_iou_loss");
  constexpr double eps = 1.0;
  double inter = 0.0, psum = 0.0, ysum = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double p = static_cast<double>(pred.data()[i]);
    const double y = static_cast<double>(mask.data()[i]);
    inter += p * y;
    psum += p;
    ysum += y;
  }
  return 1.0 - (inter + eps) / (psum + ysum - inter + eps);
}

// Gradient of soft_iou_loss with respect to pred.
template <typename T>
Plane<T> soft_iou_loss_grad(const Plane<T>& pred, const MaskPlane& mask) {
  if (pred.rows() != mask.rows() || pred.cols() != mask.cols())
    throw std::invalid_argument("soft_iou_loss_grad: shape mismatch");
  constexpr double eps = 1.0;
  double inter = 0.0, psum = 0.0, ysum = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double p = static_cast<double>(pred.data()[i]);
    const double y = static_cast<double>(mask.data()[i]);
    inter += p * y;
    psum += p;
    ysum += y;
  }
  const double u = psum + ysum - inter + eps;
  const double ieps = inter + eps;
  Plane<T> g(pred.rows(), pred.cols());
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double y = static_cast<double>(mask.data()[i]);
    g.data()[i] = static_cast<T>(-(y * u - ieps * (1.0 - y)) / (u * u));
  }
  return g;
}

template <typename T>
MaskPlane binarize(const Plane<T>& pred, double threshold) {
  MaskPlane out(pred.rows(), pred.cols());
  for (Eigen::Index i = 0; i < pred.size(); ++i)
    out.data()[i] = static_cast<double>(pred.data()[i]) >= threshold ? 1 : 0;
  return out;
}

// Pixel-wise intersection over union; 1 when both masks are empty.
inline double iou(const MaskPlane& pred, const MaskPlane& mask) {
  if (pred.rows() != mask.rows() || pred.cols() != mask.cols())
    throw std::invalid_argument("iou: shape mismatch");
  require_binary(pred, "iou");
  require_binary(mask, "iou");
  long inter = 0, uni = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const bool a = pred.data()[i] != 0, b = mask.data()[i] != 0;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct Component {
  long area = 0;
  double centroid_r = 0.0, centroid_c = 0.0;
};

// 8-connected components.
inline std::vector<Component> connected_components(const MaskPlane& m) {
  const int h = static_cast<int>(m.rows()), w = static_cast<int>(m.cols());
  std::vector<int> label(static_cast<std::size_t>(h) * w, -1);
  std::vector<Component> comps;
  std::vector<int> stack;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const int p = r * w + c;
      if (m(r, c) == 0 || label[p] >= 0) continue;
      const int id = static_cast<int>(comps.size());
      comps.push_back({});
      Component& comp = comps.back();
      double sr = 0.0, sc = 0.0;
      stack.assign(1, p);
      label[p] = id;
      while (!stack.empty()) {
        const int q = stack.back();
        stack.pop_back();
        const int qr = q / w, qc = q % w;
        ++comp.area;
        sr += qr;
        sc += qc;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            if (!dr && !dc) continue;
            const int nr = qr + dr, nc = qc + dc;
            if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
            const int np = nr * w + nc;
            if (m(nr, nc) != 0 && label[np] < 0) {
              label[np] = id;
              stack.push_back(np);
            }
          }
      }
      comp.centroid_r = sr / comp.area;
      comp.centroid_c = sc / comp.area;
    }
  return comps;
}

struct PdFa {
  double pd = 1.0;
  double fa = 0.0;
};

// Target-wise detection rate and false-alarm rate. A ground-truth target is
// detected when a predicted component centroid lies within match_distance of
// its centroid; matching is greedy one-to-one, nearest pair first. Fa counts
// pixels of unmatched predicted components over total pixels.
inline PdFa pd_fa(const MaskPlane& pred, const MaskPlane& mask, const TargetMatchConfig& cfg = {}) {
  if (pred.rows() != mask.rows() || pred.cols() != mask.cols())
    throw std::invalid_argument("pd_fa: shape mismatch");
  cfg.validate();
  const auto gt = connected_components(mask);
  const auto pr = connected_components(pred);

  struct Pair {
    double d;
    int gi, pi;
  };
  std::vector<Pair> pairs;
  for (int gi = 0; gi < static_cast<int>(gt.size()); ++gi)
    for (int pi = 0; pi < static_cast<int>(pr.size()); ++pi) {
      const double d = std::hypot(gt[gi].centroid_r - pr[pi].centroid_r,
                                  gt[gi].centroid_c - pr[pi].centroid_c);
      if (d <= cfg.match_distance) pairs.push_back({d, gi, pi});
    }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.d != b.d) return a.d < b.d;
    if (a.gi != b.gi) return a.gi < b.gi;
    return a.pi < b.pi;
  });

  std::vector<bool> gt_used(gt.size(), false), pr_used(pr.size(), false);
  long detected = 0;
  for (const auto& pa : pairs) {
    if (gt_used[pa.gi] || pr_used[pa.pi]) continue;
    gt_used[pa.gi] = true;
    pr_used[pa.pi] = true;
    ++detected;
  }

  long false_pixels = 0;
  for (int pi = 0; pi < static_cast<int>(pr.size()); ++pi)
    if (!pr_used[pi]) false_pixels += pr[pi].area;

  PdFa out;
  out.pd = gt.empty() ? 1.0 : static_cast<double>(detected) / static_cast<double>(gt.size());
  out.fa = static_cast<double>(false_pixels) /
           (static_cast<double>(pred.rows()) * static_cast<double>(pred.cols()));
  return out;
}

// Relative corruption error, reported as a percentage. Undefined (nullopt)
// when the clean IOU is not positive.
inline std::optional<double> rce(double iou_clean, double iou_cor) {
  if (iou_clean <= 0.0) return std::nullopt;
  return (iou_clean - iou_cor) / iou_clean * 100.0;
}

struct RobustnessRecord {
  bool clean = false;  // true for the clean-data row
  CorruptionKind kind = CorruptionKind::gaussian_noise;
  int severity = 0;  // 0 for clean / severity-averaged rows
  double iou_clean = 0.0;
  double iou_cor = 0.0;
  std::optional<double> rce;
  double pd = 0.0;
  double fa = 0.0;
};

}  // namespace balistd
