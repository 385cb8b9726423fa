// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "support/gradcheck.hpp"

namespace dic {
namespace {

using testing::gradcheck;
using testing::project;
using testing::random_tensor;

using Fn = std::function<Var<double>(const Var<double>&)>;

void expect_unary_grad(const Fn& f, Shape s, double lo = -1.0, double hi = 1.0) {
  Var<double> x(random_tensor<double>(s, 1, lo, hi), true);
  testing::GradCheckOptions opt;
  opt.samples_per_leaf = 40;
  const auto r = gradcheck([&] { return project(f(x), 2); }, {{"x", x}}, opt);
  EXPECT_EQ(r.passed, r.checked) << "worst " << r.worst << " at " << r.worst_name;
}

TEST(Autograd, ElementwiseGradients) {
  const Shape s{2, 3, 4, 4};
  expect_unary_grad([](const Var<double>& x) { return ag::leaky_relu(x, 0.2); }, s);
  expect_unary_grad([](const Var<double>& x) { return ag::sigmoid(x); }, s);
  expect_unary_grad([](const Var<double>& x) { return ag::affine(x, 2.5, -1.0); }, s);
  expect_unary_grad([](const Var<double>& x) { return ag::mul(x, x); }, s);
  expect_unary_grad([](const Var<double>& x) { return ag::sub(x, ag::affine(x, 0.3, 0.0)); }, s);
}

TEST(Autograd, StructuralGradients) {
  expect_unary_grad([](const Var<double>& x) { return ag::pixel_shuffle(x, 2); }, {2, 8, 3, 3});
  expect_unary_grad([](const Var<double>& x) { return ag::max_pool2(x); }, {1, 2, 6, 6});
  expect_unary_grad([](const Var<double>& x) { return ag::upsample_nearest2(x); }, {1, 2, 3, 3});
  expect_unary_grad([](const Var<double>& x) { return ag::global_avg_pool(x); }, {2, 3, 4, 4});
  expect_unary_grad([](const Var<double>& x) { return ag::slice_channels(x, 1, 2); }, {2, 4, 3, 3});
  expect_unary_grad(
      [](const Var<double>& x) {
        const Var<double> parts[] = {x, ag::affine(x, -1.0, 0.0)};
        return ag::concat_channels<double>(parts);
      },
      {1, 2, 3, 3});
  expect_unary_grad([](const Var<double>& x) { return ag::channel_softmax(x); }, {2, 5, 3, 3});
  expect_unary_grad(
      [](const Var<double>& x) { return ag::channel_group_sum(x, {{0, 2}, {1}, {3, 4, 5}}); },
      {1, 6, 3, 3});
  expect_unary_grad(
      [](const Var<double>& x) { return ag::scale_channels(x, std::vector<double>{1.0, 0.0, -2.0}); },
      {1, 3, 2, 2});
}

TEST(Autograd, ReductionGradients) {
  const Var<double> target(random_tensor<double>({1, 2, 3, 3}, 7), false);
  expect_unary_grad([&](const Var<double>& x) { return ag::mse(x, target); }, {1, 2, 3, 3});
  expect_unary_grad([&](const Var<double>& x) { return ag::mean_abs_diff(x, target); }, {1, 2, 3, 3});
  expect_unary_grad([](const Var<double>& x) { return ag::mean(x); }, {1, 2, 3, 3});
  expect_unary_grad([](const Var<double>& x) { return ag::mean_neg_log(x, 1e-7); }, {1, 1, 3, 3},
                    0.05, 0.95);
}

TEST(Autograd, ConvolutionGradients) {
  Var<double> x(random_tensor<double>({2, 4, 6, 6}, 3), true);
  Var<double> w(random_tensor<double>({6, 2, 3, 3}, 4), true);
  Var<double> b(random_tensor<double>({6, 1, 1, 1}, 5), true);
  auto r = gradcheck([&] { return project(ag::conv2d(x, w, &b, {2, 1, 2}), 6); },
                     {{"x", x}, {"w", w}, {"b", b}});
  EXPECT_EQ(r.passed, r.checked) << r.worst_name;

  Var<double> wt(random_tensor<double>({4, 3, 8, 8}, 8), true);
  Var<double> bt(random_tensor<double>({3, 1, 1, 1}, 9), true);
  r = gradcheck([&] { return project(ag::conv_transpose2d(x, wt, &bt, {4, 2, 1}), 10); },
                {{"x", x}, {"w", wt}, {"b", bt}});
  EXPECT_EQ(r.passed, r.checked) << r.worst_name;
}

TEST(Autograd, WeightedGroupSumGradients) {
  Var<double> f(random_tensor<double>({1, 6, 3, 3}, 11), true);
  Var<double> m(random_tensor<double>({1, 3, 3, 3}, 12), true);
  const auto r = gradcheck([&] { return project(ag::weighted_group_sum(f, m), 13); },
                           {{"f", f}, {"m", m}});
  EXPECT_EQ(r.passed, r.checked) << r.worst_name;
}

TEST(Autograd, PixelShuffleOrdering) {
  // Channels (a, b, c, d) of one cell land as (a b / c d).
  Tensor<float> t({1, 4, 1, 1}, std::vector<float>{1, 2, 3, 4});
  const Var<float> y = ag::pixel_shuffle(Var<float>(t), 2);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(y.value().vec(), (std::vector<float>{1, 2, 3, 4}));
}

TEST(Autograd, SoftmaxIsStableAndRejectsNan) {
  Tensor<double> t({1, 5, 1, 1}, std::vector<double>{1000, 0, 0, 0, 0});
  const Var<double> y = ag::channel_softmax(Var<double>(t));
  EXPECT_NEAR(y.value()[0], 1.0, 1e-12);
  for (int c = 1; c < 5; ++c) EXPECT_TRUE(std::isfinite(y.value()[c]));
  t[2] = std::nan("");
  EXPECT_THROW(ag::channel_softmax(Var<double>(t)), std::domain_error);
}

TEST(Autograd, NoGradGuardSkipsRecording) {
  Var<float> w(Tensor<float>({1, 1, 1, 1}, 2.0f), true);
  Var<float> y;
  {
    NoGradGuard g;
    EXPECT_TRUE(NoGradGuard::enabled());
    y = ag::mul(w, w);
  }
  EXPECT_FALSE(NoGradGuard::enabled());
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node()->parents.empty());
}

TEST(Autograd, GradientsAccumulateAcrossBackwardCalls) {
  Var<double> w(Tensor<double>({1, 1, 1, 1}, 3.0), true);
  backward(ag::mul(w, w));
  backward(ag::mul(w, w));
  EXPECT_DOUBLE_EQ(w.grad()[0], 12.0);
  w.zero_grad();
  EXPECT_DOUBLE_EQ(w.grad()[0], 0.0);
}

TEST(Autograd, SharedSubgraphIsDifferentiatedOnce) {
  Var<double> w(Tensor<double>({1, 1, 1, 1}, 1.5), true);
  const Var<double> h = ag::affine(w, 2.0, 0.0);
  backward(ag::add(h, ag::mul(h, h)));  // 2w + 4w²
  EXPECT_DOUBLE_EQ(w.grad()[0], 2.0 + 8.0 * 1.5);
}

TEST(Autograd, BackwardRequiresScalar) {
  Var<double> w(Tensor<double>({1, 2, 1, 1}, 1.0), true);
  EXPECT_THROW(backward(w), ShapeError);
}

}  // namespace
}  // namespace dic
