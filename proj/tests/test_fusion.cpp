// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "dic/dataset.hpp"
#include "dic/fusion.hpp"
#include "support/scenarios.hpp"

namespace dic {
namespace {

using testing::random_tensor;

Var<double> component_pixel(std::vector<double> values) {
  Tensor<double> t({1, kNumComponents, 1, 1}, std::move(values));
  return Var<double>(t);
}

TEST(Grouping, PartitionsAllLandmarks) {
  std::set<int> seen;
  std::size_t total = 0;
  for (const auto& g : component_groups()) {
    total += g.size();
    seen.insert(g.begin(), g.end());
  }
  EXPECT_EQ(component_groups().size(), 5u);
  EXPECT_EQ(total, 68u);
  EXPECT_EQ(seen.size(), 68u);
  EXPECT_EQ(*seen.begin(), 0);
  EXPECT_EQ(*seen.rbegin(), 67);
}

TEST(Grouping, SumsChannelsOfEachComponent) {
  Tensor<double> h({1, kNumLandmarks, 8, 8});
  h.at(0, 36, 5, 5) = 1;
  h.at(0, 17, 5, 5) = 1;
  const Var<double> c = group_components(Var<double>(h));
  ASSERT_EQ(c.shape(), (Shape{1, 5, 8, 8}));
  EXPECT_DOUBLE_EQ(c.value().at(0, static_cast<int>(Component::LeftEye), 5, 5), 2.0);
  double rest = 0;
  for (double v : c.value().vec()) rest += v;
  EXPECT_DOUBLE_EQ(rest, 2.0);
  const Var<double> zero = group_components(Var<double>(Tensor<double>({1, 68, 4, 4})));
  for (double v : zero.value().vec()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(group_components(Var<double>(Tensor<double>({1, 67, 4, 4}))), ShapeError);
}

TEST(Grouping, ExportedJsonMatchesTable) {
  const auto j = component_groups_json();
  EXPECT_EQ(j.at("num_landmarks"), 68);
  ASSERT_EQ(j.at("components").size(), 5u);
  for (int p = 0; p < kNumComponents; ++p) {
    EXPECT_EQ(j["components"][p]["name"], component_names()[p]);
    EXPECT_EQ(j["components"][p]["landmarks"].get<std::vector<int>>(), component_groups()[p]);
  }
}

TEST(Grouping, ShippedArtifactIsCurrent) {
  std::ifstream in(DIC_SOURCE_DIR "/data/component_groups.json");
  ASSERT_TRUE(in) << "data/component_groups.json missing";
  EXPECT_EQ(nlohmann::json::parse(in), component_groups_json());
}

TEST(Attention, GoldenValues) {
  Var<double> m = attention_softmax(component_pixel({std::log(2.0), 0, 0, 0, 0}));
  EXPECT_NEAR(m.value()[0], 1.0 / 3, 1e-12);
  for (int p = 1; p < 5; ++p) EXPECT_NEAR(m.value()[p], 1.0 / 6, 1e-12);
  m = attention_softmax(component_pixel({0.7, 0.7, 0.7, 0.7, 0.7}));
  for (int p = 0; p < 5; ++p) EXPECT_NEAR(m.value()[p], 0.2, 1e-12);
  m = attention_softmax(component_pixel({1000, 0, 0, 0, 0}));
  EXPECT_NEAR(m.value()[0], 1.0, 1e-12);
  for (int p = 1; p < 5; ++p) EXPECT_GE(m.value()[p], 0.0);
}

TEST(Attention, PartitionOfUnity) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto h = random_tensor<float>({2, kNumLandmarks, 8, 8}, seed, -3, 3);
    const Var<float> m = attention_softmax(group_components(Var<float>(h)));
    for (int n = 0; n < 2; ++n)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          double s = 0;
          for (int p = 0; p < 5; ++p) s += m.value().at(n, p, y, x);
          ASSERT_NEAR(s, 1.0, 1e-6);
        }
  }
}

TEST(Attention, MonotoneInOwnComponent) {
  std::vector<double> c{0.3, -0.2, 1.1, 0.0, 0.5};
  double prev = attention_softmax(component_pixel(c)).value()[2];
  for (int i = 0; i < 5; ++i) {
    c[2] += 0.25;
    const double now = attention_softmax(component_pixel(c)).value()[2];
    EXPECT_GT(now, prev);
    prev = now;
  }
}

TEST(Attention, RejectsNan) {
  Tensor<double> h({1, kNumLandmarks, 2, 2});
  h[3] = std::nan("");
  EXPECT_THROW(attention_softmax(group_components(Var<double>(h))), std::domain_error);
}

TEST(Masking, Algebra) {
  const auto h = random_tensor<double>({1, kNumLandmarks, 4, 4}, 7);
  const Var<double> m = attention_softmax(group_components(Var<double>(h)));
  const Var<double> all = mask_components(m, parse_component_set("all"));
  EXPECT_EQ(all.value().vec(), m.value().vec());
  const Var<double> none = mask_components(m, parse_component_set("none"));
  for (double v : none.value().vec()) EXPECT_EQ(v, 0.0);
  const Var<double> mouth = mask_components(m, parse_component_set("mouth"));
  for (int p = 0; p < 5; ++p)
    for (int i = 0; i < 16; ++i) {
      const double want = p == static_cast<int>(Component::Mouth) ? m.value()[p * 16 + i] : 0.0;
      EXPECT_EQ(mouth.value()[p * 16 + i], want);
    }
}

TEST(Masking, ComponentSetParsing) {
  EXPECT_EQ(parse_component_set("all").count(), 5u);
  EXPECT_EQ(parse_component_set("none").count(), 0u);
  const ComponentSet s = parse_component_set("mouth,left_eye");
  EXPECT_TRUE(s.test(3));
  EXPECT_TRUE(s.test(0));
  EXPECT_EQ(s.count(), 2u);
  EXPECT_EQ(component_set_name(s), "left_eye+mouth");
  EXPECT_THROW(parse_component_set("ear"), std::invalid_argument);
}

class FusionFixture : public ::testing::Test {
 protected:
  static constexpr int kC = 4;
  Rng rng{17};
  AttentiveFusion<double> fusion{kC, 2, rng};
  Var<double> feature{random_tensor<double>({1, kC, 6, 6}, 1)};
  Var<double> heatmaps{random_tensor<double>({1, kNumLandmarks, 6, 6}, 2, 0, 1)};
};

TEST_F(FusionFixture, OutputShape) {
  EXPECT_EQ(fusion(feature, heatmaps).shape(), feature.shape());
  EXPECT_EQ(fusion.group_features(feature).shape(), (Shape{1, 5 * kC, 6, 6}));
  EXPECT_THROW(fusion(feature, Var<double>(Tensor<double>({1, 68, 5, 6}))), ShapeError);
}

TEST_F(FusionFixture, IdenticalGroupsGiveThatFeature) {
  // Equal weights in every group make all five f_p the same map.
  auto& e = fusion.expand().weight.mutable_value();
  auto& eb = fusion.expand().bias.mutable_value();
  const std::size_t per = e.size() / 5;
  for (int p = 1; p < 5; ++p) {
    std::copy(e.vec().begin(), e.vec().begin() + per, e.vec().begin() + p * per);
    for (int c = 0; c < kC; ++c) eb[p * kC + c] = eb[c];
  }
  for (auto& conv : fusion.group_convs()) {
    auto& w = conv.weight.mutable_value();
    const std::size_t gper = w.size() / 5;
    for (int p = 1; p < 5; ++p) std::copy(w.vec().begin(), w.vec().begin() + gper, w.vec().begin() + p * gper);
    auto& b = conv.bias.mutable_value();
    for (int p = 1; p < 5; ++p)
      for (int c = 0; c < kC; ++c) b[p * kC + c] = b[c];
  }
  const Var<double> groups = fusion.group_features(feature);
  const Var<double> f0 = ag::slice_channels(groups, 0, kC);
  const Var<double> out = fusion(feature, heatmaps);
  for (std::size_t i = 0; i < out.value().size(); ++i) ASSERT_NEAR(out.value()[i], f0.value()[i], 1e-12);
}

TEST_F(FusionFixture, OneHotAttentionSelectsGroup) {
  const Var<double> groups(random_tensor<double>({1, 5 * kC, 6, 6}, 3));
  Tensor<double> onehot({1, 5, 6, 6});
  for (int i = 0; i < 36; ++i) onehot[1 * 36 + i] = 1.0;
  const Var<double> out = fuse_groups(groups, Var<double>(onehot));
  const Var<double> f1 = ag::slice_channels(groups, kC, kC);
  EXPECT_EQ(out.value().vec(), f1.value().vec());
}

TEST_F(FusionFixture, MaskingRemovesOneContribution) {
  const Var<double> groups = fusion.group_features(feature);
  const Var<double> m = attention_softmax(group_components(heatmaps));
  ComponentSet keep = ComponentSet().set();
  keep.reset(static_cast<std::size_t>(Component::Nose));
  const Var<double> masked = fusion(feature, heatmaps, keep);
  Tensor<double> expect({1, kC, 6, 6});
  for (int p = 0; p < 5; ++p) {
    if (p == static_cast<int>(Component::Nose)) continue;
    for (int c = 0; c < kC; ++c)
      for (int i = 0; i < 36; ++i)
        expect[c * 36 + i] += m.value()[p * 36 + i] * groups.value()[(p * kC + c) * 36 + i];
  }
  for (std::size_t i = 0; i < expect.size(); ++i) ASSERT_NEAR(masked.value()[i], expect[i], 1e-12);
  const Var<double> none = fusion(feature, heatmaps, ComponentSet{});
  for (double v : none.value().vec()) EXPECT_EQ(v, 0.0);
}

TEST_F(FusionFixture, LinearInGroupFeatures) {
  const Var<double> m = attention_softmax(group_components(heatmaps));
  const auto a = random_tensor<double>({1, 5 * kC, 6, 6}, 4);
  const auto b = random_tensor<double>({1, 5 * kC, 6, 6}, 5);
  Tensor<double> mix(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) mix[i] = 2.0 * a[i] - 0.5 * b[i];
  const auto fa = fuse_groups(Var<double>(a), m).value();
  const auto fb = fuse_groups(Var<double>(b), m).value();
  const auto fm = fuse_groups(Var<double>(mix), m).value();
  for (std::size_t i = 0; i < fm.size(); ++i) {
    const double want = 2.0 * fa[i] - 0.5 * fb[i];
    ASSERT_NEAR(fm[i], want, 1e-5 * std::max(1.0, std::abs(want)));
  }
}

TEST_F(FusionFixture, PerturbingOneGroupOnlyActsWhereAttended) {
  Tensor<double> att({1, 5, 6, 6});
  for (int i = 0; i < 36; ++i) {
    const bool left = i % 6 < 3;
    att[2 * 36 + i] = left ? 1.0 : 0.0;
    att[0 * 36 + i] = left ? 0.0 : 1.0;
  }
  auto g = random_tensor<double>({1, 5 * kC, 6, 6}, 6);
  const auto before = fuse_groups(Var<double>(g), Var<double>(att)).value();
  for (int c = 0; c < kC; ++c)
    for (int i = 0; i < 36; ++i) g[(2 * kC + c) * 36 + i] += 1.0;
  const auto after = fuse_groups(Var<double>(g), Var<double>(att)).value();
  for (int c = 0; c < kC; ++c)
    for (int i = 0; i < 36; ++i) {
      if (i % 6 < 3) EXPECT_NE(after[c * 36 + i], before[c * 36 + i]);
      else EXPECT_EQ(after[c * 36 + i], before[c * 36 + i]);
    }
}

TEST(FusionGradient, MatchesFiniteDifferences) {
  const auto r = testing::fusion_gradcheck();
  EXPECT_GE(r.pass_fraction(), 0.95) << "worst " << r.worst << " at " << r.worst_name;
}

}  // namespace
}  // namespace dic
