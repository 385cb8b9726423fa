// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "dic/align_branch.hpp"
#include "dic/dataset.hpp"
#include "dic/sr_branch.hpp"
#include "support/scenarios.hpp"

namespace dic {
namespace {

using testing::random_tensor;

NetworkConfig small_config() {
  NetworkConfig c;
  c.channels = 8;
  c.groups = 2;
  c.align_width = 16;
  c.hourglass_depth = 2;
  return c;
}

double max_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, double(std::abs(a[i] - b[i])));
  return m;
}

class SrBranchTest : public ::testing::Test {
 protected:
  Rng rng{1};
  SrBranch<float> sr{small_config(), rng};
  Var<float> lr{random_tensor<float>({2, 3, 16, 16}, 2, 0, 1)};
};

TEST_F(SrBranchTest, ShapeChain) {
  const Var<float> feat = sr.extract_lr_features(lr);
  EXPECT_EQ(feat.shape(), (Shape{2, 8, 32, 32}));
  const Var<float> f0 = sr.init(feat);
  EXPECT_EQ(f0.shape(), feat.shape());
  const Var<float> lm(Tensor<float>({2, kNumLandmarks, 32, 32}));
  const auto out = sr.step(feat, f0, lm, upsample_skip(lr), Variant::DIC);
  EXPECT_EQ(out.sr.shape(), (Shape{2, 3, 128, 128}));
  EXPECT_EQ(out.feedback.shape(), feat.shape());
  EXPECT_THROW(sr.extract_lr_features(Var<float>(Tensor<float>({1, 4, 16, 16}))), ShapeError);
}

TEST_F(SrBranchTest, ZeroOutputConvGivesBicubic) {
  sr.output_conv().weight.mutable_value().fill(0.0f);
  sr.output_conv().bias.mutable_value().fill(0.0f);
  const Var<float> feat = sr.extract_lr_features(lr);
  const Var<float> lm(random_tensor<float>({2, kNumLandmarks, 32, 32}, 3, 0, 1));
  const Var<float> up = upsample_skip(lr);
  for (Variant v : {Variant::DIC, Variant::DIC_CL, Variant::DIC_NL}) {
    const auto out = sr.step(feat, sr.init(feat), lm, up, v);
    EXPECT_EQ(out.sr.value().vec(), up.value().vec());
  }
  EXPECT_EQ(up.value().vec(), bicubic_resize(lr.value(), 128, 128).vec());
}

TEST_F(SrBranchTest, ResidualEqualsGeneratedImage) {
  std::mt19937_64 g(10);
  std::normal_distribution<float> d(0, 0.05f);
  for (auto& v : sr.output_conv().weight.mutable_value().vec()) v += d(g);
  const Var<float> feat = sr.extract_lr_features(lr);
  const Var<float> up = upsample_skip(lr);
  const Var<float> lm(random_tensor<float>({2, kNumLandmarks, 32, 32}, 11, 0, 1));
  const auto out = sr.step(feat, sr.init(feat), lm, up, Variant::DIC);
  const auto residual = ag::sub(out.sr, up).value();
  const auto generated = sr.generate(out.feedback).value();
  EXPECT_LT(max_abs_diff(residual, generated), 1e-6);
  EXPECT_GT(max_abs_diff(generated, Tensor<float>(generated.shape())), 1e-4);
}

TEST_F(SrBranchTest, DeterministicInit) {
  const Var<float> feat = sr.extract_lr_features(lr);
  EXPECT_EQ(sr.init(feat).value().vec(), sr.init(feat).value().vec());
}

TEST_F(SrBranchTest, LandmarksReachOutput) {
  ParamList<float> params;
  sr.collect("sr", Variant::DIC, params);
  std::mt19937_64 g(4);
  std::normal_distribution<float> d(0, 0.05f);
  for (auto& v : sr.output_conv().weight.mutable_value().vec()) v += d(g);
  const Var<float> feat = sr.extract_lr_features(lr);
  const Var<float> f0 = sr.init(feat);
  const Var<float> up = upsample_skip(lr);
  const auto base = random_tensor<float>({2, kNumLandmarks, 32, 32}, 5, 0, 1);
  auto bumped = base;
  for (int i = 0; i < 32 * 32; ++i) bumped[static_cast<std::size_t>(48 * 32 * 32 + i)] += 2.0f;
  for (Variant v : {Variant::DIC, Variant::DIC_CL}) {
    const auto a = sr.step(feat, f0, Var<float>(base), up, v).sr.value();
    const auto b = sr.step(feat, f0, Var<float>(bumped), up, v).sr.value();
    EXPECT_GT(max_abs_diff(a, b), 1e-6) << to_string(v);
  }
  const auto a = sr.step(feat, f0, Var<float>(base), up, Variant::DIC_NL).sr.value();
  const auto b = sr.step(feat, f0, Var<float>(bumped), up, Variant::DIC_NL).sr.value();
  EXPECT_EQ(max_abs_diff(a, b), 0.0);
}

TEST_F(SrBranchTest, VariantParameterSets) {
  ParamList<float> dic, cl, nl, all;
  sr.collect("sr", Variant::DIC, dic);
  sr.collect("sr", Variant::DIC_CL, cl);
  sr.collect("sr", Variant::DIC_NL, nl);
  sr.collect_all("sr", all);
  auto has = [](const ParamList<float>& l, const std::string& key) {
    for (const auto& [n, v] : l.items())
      if (n.find(key) != std::string::npos) return true;
    return false;
  };
  EXPECT_TRUE(has(dic, ".fusion."));
  EXPECT_FALSE(has(dic, "concat_conv"));
  EXPECT_TRUE(has(cl, "concat_conv"));
  EXPECT_FALSE(has(cl, ".fusion."));
  EXPECT_FALSE(has(nl, ".fusion."));
  EXPECT_FALSE(has(nl, "concat_conv"));
  EXPECT_EQ(all.size(), dic.size() + 2);
}

TEST(SrStepGradient, MatchesFiniteDifferences) {
  const auto r = testing::sr_step_gradcheck();
  EXPECT_GE(r.pass_fraction(), 0.95) << "worst " << r.worst << " at " << r.worst_name;
}

class AlignBranchTest : public ::testing::Test {
 protected:
  Rng rng{6};
  AlignBranch<float> align{small_config(), rng};
  Var<float> sr{random_tensor<float>({1, 3, 128, 128}, 7, 0, 1)};
};

TEST_F(AlignBranchTest, ShapeChain) {
  const Var<float> f0 = align.init(sr);
  EXPECT_EQ(f0.shape(), (Shape{1, 16, 32, 32}));
  EXPECT_EQ(align.recur(f0, f0).shape(), (Shape{1, 32, 32, 32}));
  const auto out = align.step(sr, f0);
  EXPECT_EQ(out.heatmaps.shape(), (Shape{1, kNumLandmarks, 32, 32}));
  EXPECT_EQ(out.feedback.shape(), f0.shape());
  EXPECT_THROW(align.step(sr, Var<float>(Tensor<float>({1, 16, 16, 16}))), ShapeError);
}

TEST_F(AlignBranchTest, SplitFeedsBothHalves) {
  const Var<float> f0 = align.init(sr);
  const Var<float> trunk = align.recur(align.stem(sr), f0);
  const auto out = align.step(sr, f0);
  EXPECT_EQ(out.feedback.value().vec(), ag::slice_channels(trunk, 0, 16).value().vec());
  EXPECT_EQ(out.heatmaps.value().vec(), align.head(ag::slice_channels(trunk, 16, 16)).value().vec());
}

TEST_F(AlignBranchTest, FeedbackChangesHeatmaps) {
  ParamList<float> params;
  align.collect("align", params);
  std::mt19937_64 g(12);
  std::normal_distribution<float> d(0, 0.05f);
  for (auto& [name, v] : params.items())
    if (name == "align.head2.weight")
      for (auto& x : v.mutable_value().vec()) x += d(g);
  const Var<float> f0 = align.init(sr);
  auto other = f0.value();
  for (auto& v : other.vec()) v = v * 0.5f + 0.1f;
  const auto a = align.step(sr, f0).heatmaps.value();
  const auto b = align.step(sr, Var<float>(other)).heatmaps.value();
  EXPECT_GT(max_abs_diff(a, b), 1e-6);
}

TEST(Hourglass, PreservesExtentAndRequiresDivisibility) {
  Rng rng(8);
  Hourglass<float> hg(3, 8, rng);
  EXPECT_EQ(hg.depth(), 3);
  const Var<float> x(random_tensor<float>({1, 8, 16, 16}, 9));
  EXPECT_EQ(hg(x).shape(), x.shape());
  EXPECT_THROW(hg(Var<float>(Tensor<float>({1, 8, 12, 12}))), ShapeError);
  EXPECT_THROW(Hourglass<float>(0, 8, rng), std::invalid_argument);
}

TEST(AlignStepGradient, MatchesFiniteDifferences) {
  const auto r = testing::align_step_gradcheck();
  EXPECT_GE(r.pass_fraction(), 0.95) << "worst " << r.worst << " at " << r.worst_name;
}

}  // namespace
}  // namespace dic
