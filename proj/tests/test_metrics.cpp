#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "balistd/metrics.hpp"
#include "balistd/rng.hpp"
#include "oracles.hpp"

using namespace balistd;

namespace {

MaskPlane mask_from_bits(int h, int w, std::initializer_list<int> ones) {
  MaskPlane m = MaskPlane::Zero(h, w);
  for (int p : ones) m(p / w, p % w) = 1;
  return m;
}

}  // namespace

TEST_CASE("soft-IoU loss: perfect overlap, empty-vs-empty and a hand case") {
  MaskPlane m = mask_from_bits(4, 4, {0, 1, 5, 6});
  Plane<double> pred(4, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) pred(r, c) = m(r, c);
  CHECK(soft_iou_loss(pred, m) == doctest::Approx(0.0).epsilon(1e-12));

  const MaskPlane empty = MaskPlane::Zero(4, 4);
  const Plane<double> zeros = Plane<double>::Zero(4, 4);
  CHECK(soft_iou_loss(zeros, empty) == doctest::Approx(0.0).epsilon(1e-12));

  // sum p*y = 2, sum p = 3, sum y = 4 -> 1 - (2+1)/(3+4-2+1) = 0.5
  MaskPlane y = mask_from_bits(4, 4, {0, 1, 2, 3});
  Plane<double> p = Plane<double>::Zero(4, 4);
  p(0, 0) = 1.0;
  p(0, 1) = 1.0;
  p(1, 0) = 1.0;
  CHECK(soft_iou_loss(p, y) == doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(soft_iou_loss(p, MaskPlane::Zero(3, 4)), std::invalid_argument);
  MaskPlane notbin = MaskPlane::Zero(4, 4);
  notbin(0, 0) = 7;
  CHECK_THROWS_AS(soft_iou_loss(p, notbin), std::invalid_argument);
}

TEST_CASE("soft-IoU loss gradient matches finite differences") {
  Rng rng(3);
  MaskPlane m = mask_from_bits(4, 4, {2, 5, 9});
  Plane<double> pred(4, 4);
  for (Eigen::Index i = 0; i < pred.size(); ++i) pred.data()[i] = rng.uniform(0.05, 0.95);
  const Plane<double> g = soft_iou_loss_grad(pred, m);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double saved = pred.data()[i];
    pred.data()[i] = saved + h;
    const double fp = soft_iou_loss(pred, m);
    pred.data()[i] = saved - h;
    const double fm = soft_iou_loss(pred, m);
    pred.data()[i] = saved;
    CHECK(g.data()[i] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-4));
  }
}

TEST_CASE("soft-IoU loss decreases monotonically toward the mask") {
  MaskPlane m = mask_from_bits(8, 8, {9, 10, 17, 18, 36});
  double prev = 1e9;
  for (int s = 0; s <= 4; ++s) {
    const double t = s / 4.0;
    Plane<double> pred(8, 8);
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) pred(r, c) = 0.5 * (1 - t) + t * m(r, c);
    const double loss = soft_iou_loss(pred, m);
    CHECK(loss < prev);
    prev = loss;
  }
}

TEST_CASE("iou basics and brute-force equivalence on all 512 3x3 pairs") {
  MaskPlane a = mask_from_bits(8, 8, {0, 1, 8});
  CHECK(iou(a, a) == 1.0);
  MaskPlane b = mask_from_bits(8, 8, {30, 31});
  CHECK(iou(a, b) == 0.0);
  CHECK(iou(MaskPlane::Zero(4, 4), MaskPlane::Zero(4, 4)) == 1.0);

  // 6-pixel intersection, 14-pixel union
  MaskPlane u = mask_from_bits(8, 8, {0, 1, 2, 3, 4, 5, 8, 9, 10, 11});
  MaskPlane v = mask_from_bits(8, 8, {2, 3, 4, 5, 8, 9, 16, 17, 18, 19});
  CHECK(iou(u, v) == doctest::Approx(6.0 / 14.0).epsilon(1e-12));
  CHECK(iou(u, v) == iou(v, u));

  const MaskPlane fixed = mask_from_bits(3, 3, {0, 4, 8});
  for (int bits = 0; bits < 512; ++bits) {
    MaskPlane p = MaskPlane::Zero(3, 3);
    for (int i = 0; i < 9; ++i)
      if (bits & (1 << i)) p(i / 3, i % 3) = 1;
    CHECK(iou(p, fixed) == oracle::iou_bruteforce(p, fixed));
    CHECK(iou(p, fixed) == iou(fixed, p));
  }
}

TEST_CASE("connected components: areas and centroids with 8-connectivity") {
  // two diagonal pixels are ONE component under 8-connectivity
  MaskPlane m = mask_from_bits(4, 4, {0, 5});
  const auto comps = connected_components(m);
  REQUIRE(comps.size() == 1);
  CHECK(comps[0].area == 2);
  CHECK(comps[0].centroid_r == doctest::Approx(0.5));
  CHECK(comps[0].centroid_c == doctest::Approx(0.5));
}

TEST_CASE("pd_fa: exact match, empty prediction, constructed scene") {
  MaskPlane gt = MaskPlane::Zero(16, 16);
  gt(2, 2) = 1;
  gt(8, 8) = 1;
  gt(13, 3) = 1;
  auto r = pd_fa(gt, gt);
  CHECK(r.pd == 1.0);
  CHECK(r.fa == 0.0);

  r = pd_fa(MaskPlane::Zero(16, 16), mask_from_bits(16, 16, {0, 200}));
  CHECK(r.pd == 0.0);
  CHECK(r.fa == 0.0);

  // 32x32 scene: 2 true targets; prediction hits one centroid within 2 px and
  // adds a 5-pixel spurious blob -> pd = 0.5, fa = 5/1024
  MaskPlane scene_gt = MaskPlane::Zero(32, 32);
  scene_gt.block(4, 4, 2, 2).setConstant(1);    // centroid (4.5, 4.5)
  scene_gt.block(20, 24, 2, 2).setConstant(1);  // centroid (20.5, 24.5)
  MaskPlane pred = MaskPlane::Zero(32, 32);
  pred.block(5, 5, 2, 2).setConstant(1);  // centroid (5.5, 5.5): distance sqrt(2) < 2
  pred(28, 10) = pred(28, 11) = pred(28, 12) = pred(29, 10) = pred(29, 11) = 1;  // 5 px blob
  r = pd_fa(pred, scene_gt);
  CHECK(r.pd == 0.5);
  CHECK(r.fa == doctest::Approx(5.0 / 1024.0).epsilon(1e-12));

  // no targets at all -> pd defined as 1
  r = pd_fa(MaskPlane::Zero(8, 8), MaskPlane::Zero(8, 8));
  CHECK(r.pd == 1.0);
  CHECK(r.fa == 0.0);
}

TEST_CASE("pd_fa is invariant to mirroring the scene") {
  MaskPlane gt = MaskPlane::Zero(24, 24);
  gt.block(3, 3, 2, 2).setConstant(1);
  gt.block(15, 18, 2, 2).setConstant(1);
  MaskPlane pred = MaskPlane::Zero(24, 24);
  pred.block(4, 3, 2, 2).setConstant(1);
  pred.block(10, 10, 3, 1).setConstant(1);
  const auto a = pd_fa(pred, gt);
  const MaskPlane gt_m = gt.rowwise().reverse();
  const MaskPlane pred_m = pred.rowwise().reverse();
  const auto b = pd_fa(pred_m, gt_m);
  CHECK(a.pd == b.pd);
  CHECK(a.fa == b.fa);
}

TEST_CASE("rce reproduces the reference rows and is scale invariant") {
  CHECK(*rce(67.10, 29.87) == doctest::Approx(55.48).epsilon(1e-4));
  CHECK(*rce(68.52, 36.43) == doctest::Approx(46.84).epsilon(1e-3));
  CHECK(std::abs(*rce(67.10, 29.87) - 55.48) < 0.01);
  CHECK(std::abs(*rce(68.52, 36.43) - 46.84) < 0.01);
  for (double c : {0.3, 12.0, 67.1}) CHECK(*rce(c, c) == 0.0);
  CHECK(*rce(0.671, 0.2987) == doctest::Approx(*rce(67.1, 29.87)).epsilon(1e-12));
  CHECK(!rce(0.0, 0.5).has_value());
  CHECK(!rce(-1.0, 0.5).has_value());
}

TEST_CASE("binarize uses >= so a uniform 0.5 map is all-positive at threshold 0.5") {
  Plane<double> half = Plane<double>::Constant(4, 4, 0.5);
  const MaskPlane b = binarize(half, 0.5);
  CHECK(static_cast<int>(b.cast<int>().sum()) == 16);
}

TEST_CASE("target match config validation") {
  TargetMatchConfig c;
  c.binarize_threshold = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.match_distance = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
