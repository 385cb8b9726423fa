// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#include "dic/losses.hpp"

#include <map>
#include <mutex>
#include <stdexcept>

namespace dic {

template <typename T>
Var<T> step_mse(std::span<const Var<T>> steps, const Var<T>& target) {
  if (steps.empty()) throw std::invalid_argument("step loss: empty trace");
  std::vector<Var<T>> terms;
  terms.reserve(steps.size());
  for (const auto& s : steps) terms.push_back(ag::mse(s, target));
  return ag::affine(ag::sum<T>(terms), static_cast<T>(1.0 / static_cast<double>(steps.size())), T(0));
}

template <typename T>
Discriminator<T>::Discriminator(int base, std::uint64_t seed) {
  if (base < 1) throw std::invalid_argument("discriminator width must be positive");
  Rng rng(seed);
  int in = 3;
  for (int level = 0; level < 4; ++level) {
    const int out = base << level;
    convs_.emplace_back(in, out, 3, ConvGeometry{1, 1, 1}, rng, kLeakySlope);
    convs_.emplace_back(out, out, 3, ConvGeometry{2, 1, 1}, rng, kLeakySlope);
    in = out;
  }
  head_ = Conv2d<T>(in, 1, 1, ConvGeometry{}, rng, 1.0);
}

template <typename T>
Var<T> Discriminator<T>::operator()(const Var<T>& image) const {
  Var<T> x = image;
  for (const auto& conv : convs_) x = lrelu(conv(x));
  return ag::sigmoid(head_(ag::global_avg_pool(x)));
}

template <typename T>
ParamList<T> Discriminator<T>::parameters() const {
  ParamList<T> out;
  for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].collect("disc.conv" + std::to_string(i), out);
  head_.collect("disc.head", out);
  return out;
}

template <typename T>
Var<T> d_loss_from_probs(const Var<T>& p_real, const Var<T>& p_fake) {
  const T eps = static_cast<T>(kProbEps);
  return ag::add(ag::mean_neg_log(p_real, eps), ag::mean_neg_log(ag::affine(p_fake, T(-1), T(1)), eps));
}

template <typename T>
Var<T> g_adv_loss_from_probs(const Var<T>& p_fake) {
  return ag::mean_neg_log(p_fake, static_cast<T>(kProbEps));
}

template <typename T>
RandomConvExtractor<T>::RandomConvExtractor(std::uint64_t seed) {
  Rng rng(seed);
  convs_.emplace_back(3, 16, 3, ConvGeometry{1, 1, 1}, rng, kLeakySlope);
  convs_.emplace_back(16, 32, 3, ConvGeometry{2, 1, 1}, rng, kLeakySlope);
  convs_.emplace_back(32, 64, 3, ConvGeometry{2, 1, 1}, rng, kLeakySlope);
  for (auto& c : convs_) {
    c.weight.set_requires_grad(false);
    c.bias.set_requires_grad(false);
  }
}

template <typename T>
std::vector<Var<T>> RandomConvExtractor<T>::features(const Var<T>& image) const {
  std::vector<Var<T>> levels;
  Var<T> x = image;
  for (const auto& conv : convs_) {
    x = lrelu(conv(x));
    levels.push_back(x);
  }
  return levels;
}

template <typename T>
ParamList<T> RandomConvExtractor<T>::frozen_parameters() const {
  ParamList<T> out;
  for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].collect("phi.conv" + std::to_string(i), out);
  return out;
}

namespace {

template <typename T>
struct Registry {
  std::mutex mutex;
  std::map<std::string, ExtractorFactory<T>> factories{
      {"random-conv", [](std::uint64_t seed) { return std::make_unique<RandomConvExtractor<T>>(seed); }},
      {"pixels", [](std::uint64_t) { return std::make_unique<PixelExtractor<T>>(); }},
  };
};

template <typename T>
Registry<T>& registry() {
  static Registry<T> r;
  return r;
}

}  // namespace

template <typename T>
void register_feature_extractor(const std::string& name, ExtractorFactory<T> factory) {
  auto& r = registry<T>();
  std::lock_guard lock(r.mutex);
  r.factories[name] = std::move(factory);
}

template <typename T>
std::unique_ptr<FeatureExtractor<T>> make_feature_extractor(const std::string& name,
                                                            std::uint64_t seed) {
  auto& r = registry<T>();
  std::lock_guard lock(r.mutex);
  const auto it = r.factories.find(name);
  if (it == r.factories.end()) throw std::invalid_argument("unknown feature extractor '" + name + "'");
  return it->second(seed);
}

template <typename T>
Var<T> perceptual_loss(const FeatureExtractor<T>& phi, const Var<T>& sr, const Var<T>& hr) {
  expect_shape(hr.shape(), sr.shape(), "perceptual_loss");
  const std::vector<Var<T>> fs = phi.features(sr);
  std::vector<Var<T>> fh;
  {
    NoGradGuard guard;
    fh = phi.features(hr.detach());
  }
  if (fs.size() != fh.size() || fs.empty()) throw std::logic_error("perceptual_loss: extractor level mismatch");
  double total = 0;
  for (const auto& f : fs) total += static_cast<double>(f.value().size());
  std::vector<Var<T>> terms;
  for (std::size_t l = 0; l < fs.size(); ++l) {
    const double w = static_cast<double>(fs[l].value().size()) / total;
    terms.push_back(ag::affine(ag::mean_abs_diff(fs[l], fh[l]), static_cast<T>(w), T(0)));
  }
  return ag::sum<T>(terms);
}

template <typename T>
Var<T> total_g_loss(const LossParts<T>& parts, const LossWeights& weights) {
  weights.validate();
  std::vector<Var<T>> terms;
  if (parts.pixel.defined()) terms.push_back(parts.pixel);
  const auto add = [&](const Var<T>& v, double w) {
    if (v.defined() && w != 0.0) terms.push_back(ag::affine(v, static_cast<T>(w), T(0)));
  };
  add(parts.adv, weights.lambda_adv);
  add(parts.perc, weights.lambda_perc);
  add(parts.align, weights.beta_align);
  if (terms.empty()) return Var<T>(Tensor<T>({1, 1, 1, 1}));
  return ag::sum<T>(terms);
}

#define DIC_INSTANTIATE_LOSSES(T)                                                          \
  template Var<T> step_mse<T>(std::span<const Var<T>>, const Var<T>&);                    \
  template class Discriminator<T>;                                                         \
  template Var<T> d_loss_from_probs<T>(const Var<T>&, const Var<T>&);                     \
  template Var<T> g_adv_loss_from_probs<T>(const Var<T>&);                                \
  template class RandomConvExtractor<T>;                                                   \
  template void register_feature_extractor<T>(const std::string&, ExtractorFactory<T>);    \
  template std::unique_ptr<FeatureExtractor<T>> make_feature_extractor<T>(const std::string&, \
                                                                          std::uint64_t);  \
  template Var<T> perceptual_loss<T>(const FeatureExtractor<T>&, const Var<T>&, const Var<T>&); \
  template Var<T> total_g_loss<T>(const LossParts<T>&, const LossWeights&);

DIC_INSTANTIATE_LOSSES(float)
DIC_INSTANTIATE_LOSSES(double)

}  // namespace dic
