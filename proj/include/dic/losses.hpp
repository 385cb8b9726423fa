// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dic/collaboration.hpp"

namespace dic {

inline constexpr double kProbEps = 1e-7;

struct LossWeights {
  double lambda_adv = 0.0;
  double lambda_perc = 0.0;
  double beta_align = 0.1;

  static LossWeights psnr_phase() { return {0.0, 0.0, 0.1}; }
  static LossWeights gan_phase() { return {0.005, 0.1, 0.1}; }
  void validate() const {
    if (lambda_adv < 0 || lambda_perc < 0 || beta_align < 0)
      throw std::invalid_argument("loss weights must be non-negative");
  }
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

inline void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"lambda_adv", w.lambda_adv}, {"lambda_perc", w.lambda_perc}, {"beta_align", w.beta_align}};
}
inline void from_json(const nlohmann::json& j, LossWeights& w) {
  w.lambda_adv = j.value("lambda_adv", 0.0);
  w.lambda_perc = j.value("lambda_perc", 0.0);
  w.beta_align = j.value("beta_align", 0.1);
}

/// Mean over steps of the per-element MSE between each step output and `target`.
template <typename T>
Var<T> step_mse(std::span<const Var<T>> steps, const Var<T>& target);

template <typename T>
Var<T> pixel_loss(const StepTrace<T>& trace, const Var<T>& hr) {
  return step_mse<T>(trace.sr_images, hr);
}

template <typename T>
Var<T> align_loss(const StepTrace<T>& trace, const Var<T>& gt_heatmaps) {
  return step_mse<T>(trace.heatmaps, gt_heatmaps);
}

/// Strided conv stack with a sigmoid head: (N, 3, H, W) -> (N, 1, 1, 1) probabilities.
template <typename T>
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(int base, std::uint64_t seed);

  Var<T> operator()(const Var<T>& image) const;
  [[nodiscard]] ParamList<T> parameters() const;

 private:
  std::vector<Conv2d<T>> convs_;
  Conv2d<T> head_;
};

/// −mean ln p_real − mean ln(1 − p_fake), probabilities clamped to [ε, 1−ε].
template <typename T>
Var<T> d_loss_from_probs(const Var<T>& p_real, const Var<T>& p_fake);
/// −mean ln p_fake.
template <typename T>
Var<T> g_adv_loss_from_probs(const Var<T>& p_fake);

/// `sr` must already be detached from the generator.
template <typename T>
Var<T> d_loss(const Discriminator<T>& d, const Var<T>& hr, const Var<T>& sr) {
  return d_loss_from_probs(d(hr), d(sr));
}
template <typename T>
Var<T> g_adv_loss(const Discriminator<T>& d, const Var<T>& sr) {
  return g_adv_loss_from_probs(d(sr));
}

/// Frozen image-to-feature mapping. Implementations never expose trainable parameters.
template <typename T>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  /// Feature maps for an image batch in [0,1]; the flattened concatenation is the feature vector.
  virtual std::vector<Var<T>> features(const Var<T>& image) const = 0;
  [[nodiscard]] virtual std::string name() const = 0;
  /// Parameters held by the extractor; all have requires_grad == false.
  [[nodiscard]] virtual ParamList<T> frozen_parameters() const { return {}; }
};

/// Three-level pyramid of randomly initialised, frozen 3×3 convolutions.
template <typename T>
class RandomConvExtractor final : public FeatureExtractor<T> {
 public:
  explicit RandomConvExtractor(std::uint64_t seed);
  std::vector<Var<T>> features(const Var<T>& image) const override;
  [[nodiscard]] std::string name() const override { return "random-conv"; }
  [[nodiscard]] ParamList<T> frozen_parameters() const override;

 private:
  std::vector<Conv2d<T>> convs_;
};

/// Identity features, mostly useful for tests.
template <typename T>
class PixelExtractor final : public FeatureExtractor<T> {
 public:
  std::vector<Var<T>> features(const Var<T>& image) const override { return {image}; }
  [[nodiscard]] std::string name() const override { return "pixels"; }
};

template <typename T>
using ExtractorFactory = std::function<std::unique_ptr<FeatureExtractor<T>>(std::uint64_t seed)>;

/// Registers a named extractor; later registrations replace earlier ones.
template <typename T>
void register_feature_extractor(const std::string& name, ExtractorFactory<T> factory);
/// Built-ins: "random-conv", "pixels". Throws std::invalid_argument for unknown names.
template <typename T>
std::unique_ptr<FeatureExtractor<T>> make_feature_extractor(const std::string& name,
                                                            std::uint64_t seed);

/// Mean |φ(sr) − φ(hr)| over all feature elements.
template <typename T>
Var<T> perceptual_loss(const FeatureExtractor<T>& phi, const Var<T>& sr, const Var<T>& hr);

template <typename T>
struct LossParts {
  Var<T> pixel;
  Var<T> align;  // undefined without landmarks
  Var<T> adv;    // undefined in the psnr phase
  Var<T> perc;   // undefined in the psnr phase
};

/// pixel + λ_adv·adv + λ_perc·perc + β·align; undefined parts count as zero.
template <typename T>
Var<T> total_g_loss(const LossParts<T>& parts, const LossWeights& weights);

}  // namespace dic
