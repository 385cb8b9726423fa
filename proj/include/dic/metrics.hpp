// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dic/dataset.hpp"
#include "dic/image.hpp"

namespace dic {

inline constexpr double kPsnrCap = 100.0;

/// BT.601 studio-swing luma of a (1, 3, H, W) image in [0,1]; result is (1, 1, H, W).
Tensor<double> rgb_to_y(const Image& image);

/// 10·log10(1/MSE) on luma; identical images give kPsnrCap.
double psnr_y(const Image& sr, const Image& hr);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Gaussian-windowed SSIM on luma, averaged over fully contained windows.
double ssim_y(const Image& sr, const Image& hr, const SsimOptions& options = {});
/// Same, on two single-channel planes.
double ssim_plane(const Tensor<double>& a, const Tensor<double>& b, const SsimOptions& options = {});

struct DecodedLandmarks {
  LandmarkSet points{};
  /// true where the channel was all zero and the point is the map centre.
  std::array<bool, kNumLandmarks> empty{};
};

/// Argmax with a quadratic sub-pixel refinement per channel, scaled by `stride` into HR pixels.
/// `heatmaps` is (1, 68, h, w) or (68, h, w) with n = 1.
DecodedLandmarks heatmaps_to_landmarks(const Tensor<float>& heatmaps, double stride = 4.0);

/// max_x − min_x of a landmark set.
double face_width(const LandmarkSet& landmarks);

/// RMS landmark distance divided by `width`; throws std::invalid_argument if width <= 0.
double nrmse(const LandmarkSet& pred, const LandmarkSet& gt, double width);

struct StepMetrics {
  double psnr_db = 0;
  double ssim = 0;
  std::optional<double> nrmse;
};

struct MetricReport {
  std::string id;
  double psnr_db = 0;
  double ssim = 0;
  std::optional<double> nrmse;
  std::vector<StepMetrics> per_step;
};

nlohmann::json to_json(const StepMetrics& m);
nlohmann::json to_json(const MetricReport& r);
MetricReport metric_report_from_json(const nlohmann::json& j);

/// Element-wise mean of the reports (per-step lists must have equal length).
MetricReport aggregate(const std::vector<MetricReport>& reports, const std::string& id = "mean");

}  // namespace dic
