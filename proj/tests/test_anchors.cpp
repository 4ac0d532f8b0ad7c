#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace ccad;

TEST(Anchors, SingleLevelStride16Gives36) {
  AnchorConfig cfg;
  cfg.levels = {{16, 32, {1.0}, {1.0}}};
  EXPECT_EQ(build_anchors(96, cfg).size(), 36u);
}

TEST(Anchors, DefaultTwoLevelsGive540) {
  const auto grid = build_anchors(96, AnchorConfig{});
  EXPECT_EQ(grid.size(), 144u * 3 + 36u * 3);
  ASSERT_EQ(grid.levels.size(), 2u);
  EXPECT_EQ(grid.levels[1].offset, 432u);
}

TEST(Anchors, Deterministic) {
  const auto a = build_anchors(96, AnchorConfig{}), b = build_anchors(96, AnchorConfig{});
  EXPECT_EQ(a.anchors, b.anchors);
}

TEST(Anchors, StrideNotDividingImageIsConfigError) {
  AnchorConfig cfg;
  cfg.levels = {{7, 16, {1.0}, {1.0}}};
  EXPECT_THROW(build_anchors(96, cfg), ConfigError);
}

TEST(Anchors, CenteredOnCellsAndClipped) {
  AnchorConfig cfg;
  cfg.levels = {{16, 16, {1.0}, {1.0}}};
  const auto grid = build_anchors(96, cfg);
  EXPECT_DOUBLE_EQ(grid.anchors[0].center_x(), 8.0);
  EXPECT_DOUBLE_EQ(grid.anchors[0].center_y(), 8.0);
  EXPECT_DOUBLE_EQ(grid.anchors[7].center_x(), 24.0);
  EXPECT_DOUBLE_EQ(grid.anchors[7].center_y(), 24.0);
  for (const auto& a : build_anchors(96, AnchorConfig{}).anchors) {
    EXPECT_GE(a.x_min, 0);
    EXPECT_GE(a.y_min, 0);
    EXPECT_LE(a.x_max, 96);
    EXPECT_LE(a.y_max, 96);
    EXPECT_TRUE(a.valid());
  }
}

TEST(Matching, EmptyAnnotationsAllNegative) {
  const auto grid = build_anchors(96, AnchorConfig{});
  const auto t = match_targets(grid, {}, 3);
  EXPECT_EQ(t.num_positive(), 0u);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    EXPECT_FALSE(t.ignore_mask[j]);
    EXPECT_EQ(t.cls_target[j], 3);
  }
}

TEST(Matching, GroundTruthEqualToAnchorIsPositiveWithZeroOffsets) {
  const auto grid = build_anchors(96, AnchorConfig{});
  const std::size_t j = 200;
  const auto t = match_targets(grid, {{1, grid.anchors[j]}}, 3);
  EXPECT_TRUE(t.positive_mask[j]);
  EXPECT_EQ(t.cls_target[j], 1);
  for (double v : t.loc_target[j]) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Matching, WeakOverlapStillClaimsExactlyOneAnchor) {
  AnchorConfig cfg;
  cfg.levels = {{16, 16, {1.0}, {1.0}}};
  const auto grid = build_anchors(96, cfg);
  // A 16x16 anchor at (16,16)-(32,32); shift a same-size box so IoU = 0.45 with it.
  // Horizontal overlap o gives IoU = 16o / (512 - 16o) = 0.45  =>  o = 230.4 / 23.2.
  const double o = 0.45 * 512 / (16 * 1.45);
  const BBox gt{32 - o, 16, 48 - o, 32};
  double best = 0;
  for (const auto& a : grid.anchors) best = std::max(best, iou(a, gt));
  ASSERT_NEAR(best, 0.45, 1e-9);
  const auto t = match_targets(grid, {{0, gt}}, 3);
  EXPECT_EQ(t.num_positive(), 1u);
}

TEST(Matching, ThresholdBandsAndMaskInvariants) {
  const auto grid = build_anchors(96, AnchorConfig{});
  const std::vector<Annotation> anns{{0, {10, 10, 40, 40}}, {2, {50, 30, 70, 50}}};
  const auto t = match_targets(grid, anns, 3);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    double best = 0;
    for (const auto& a : anns) best = std::max(best, iou(grid.anchors[j], a.box));
    if (best >= 0.5) {
      EXPECT_TRUE(t.positive_mask[j]);
    }
    if (t.positive_mask[j]) {
      EXPECT_NE(t.cls_target[j], t.background);
      EXPECT_FALSE(t.ignore_mask[j]);
    }
    if (!t.positive_mask[j] && best >= 0.4) {
      EXPECT_TRUE(t.ignore_mask[j]);
    }
    if (best < 0.4 && !t.positive_mask[j]) {
      EXPECT_FALSE(t.ignore_mask[j]);
    }
  }
}

TEST(TruePositiveCount, OneGroundTruthMatchingThreeAnchors) {
  // Three co-centred anchors of sides 16, 17, 18 all overlap a 17x17 box at IoU >= 0.5.
  AnchorConfig cfg;
  cfg.levels = {{16, 16, {1.0, 17.0 / 16.0, 18.0 / 16.0}, {1.0}}};
  const auto grid = build_anchors(96, cfg);
  const BBox gt = BBox::from_center(40, 40, 17, 17);
  std::size_t expected = 0;
  for (const auto& a : grid.anchors) expected += iou(a, gt) >= 0.5;
  ASSERT_EQ(expected, 3u);
  Dataset ds;
  SyntheticSample s;
  s.image_id = 0;
  s.annotations = {{0, gt}};
  ds.samples.push_back(s);
  EXPECT_EQ(count_true_positive_instances({0}, ds, grid, 3, cfg), 3);
}

TEST(TruePositiveCount, BackgroundOnlyImagesGiveZero) {
  Dataset ds;
  for (int i = 0; i < 3; ++i) {
    SyntheticSample s;
    s.image_id = i;
    ds.samples.push_back(s);
  }
  EXPECT_EQ(count_true_positive_instances({0, 1, 2}, ds, build_anchors(96, AnchorConfig{}), 3), 0);
}
