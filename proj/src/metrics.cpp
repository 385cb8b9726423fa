// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#include "dic/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dic {

Tensor<double> rgb_to_y(const Image& image) {
  if (image.n() != 1 || image.c() != 3) throw ShapeError("rgb_to_y: expected (1,3,H,W), got " + image.shape().str());
  Tensor<double> y({1, 1, image.h(), image.w()});
  const std::size_t plane = image.shape().plane();
  const float* r = image.data();
  const float* g = r + plane;
  const float* b = g + plane;
  for (std::size_t i = 0; i < plane; ++i) {
    y[i] = (16.0 + 65.481 * r[i] + 128.553 * g[i] + 24.966 * b[i]) / 255.0;
  }
  return y;
}

double psnr_y(const Image& sr, const Image& hr) {
  expect_shape(sr.shape(), hr.shape(), "psnr_y");
  const Tensor<double> a = rgb_to_y(sr);
  const Tensor<double> b = rgb_to_y(hr);
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  const double mse = acc / static_cast<double>(a.size());
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double centre = (size - 1) / 2.0;
  double total = 0;
  for (int i = 0; i < size; ++i) {
    w[i] = std::exp(-((i - centre) * (i - centre)) / (2 * sigma * sigma));
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

// Valid-mode separable filtering of an H×W plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::vector<double>& k) {
  const int ks = static_cast<int>(k.size());
  const int oh = h - ks + 1;
  const int ow = w - ks + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int t = 0; t < ks; ++t) acc += k[t] * src[static_cast<std::size_t>(y) * w + x + t];
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int t = 0; t < ks; ++t) acc += k[t] * tmp[static_cast<std::size_t>(y + t) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace

double ssim_plane(const Tensor<double>& a, const Tensor<double>& b, const SsimOptions& options) {
  expect_shape(b.shape(), a.shape(), "ssim");
  const int h = a.h();
  const int w = a.w();
  if (h < options.window || w < options.window) {
    throw std::invalid_argument("ssim: image " + a.shape().str() + " smaller than the " +
                                std::to_string(options.window) + "-pixel window");
  }
  const auto k = gaussian_window(options.window, options.sigma);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  std::vector<double> x(a.data(), a.data() + n), y(b.data(), b.data() + n);
  std::vector<double> xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w, k);
  const auto my = filter_valid(y, h, w, k);
  const auto sxx = filter_valid(xx, h, w, k);
  const auto syy = filter_valid(yy, h, w, k);
  const auto sxy = filter_valid(xy, h, w, k);
  const double c1 = options.k1 * options.k1;
  const double c2 = options.k2 * options.k2;
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

double ssim_y(const Image& sr, const Image& hr, const SsimOptions& options) {
  expect_shape(sr.shape(), hr.shape(), "ssim_y");
  return ssim_plane(rgb_to_y(sr), rgb_to_y(hr), options);
}

DecodedLandmarks heatmaps_to_landmarks(const Tensor<float>& heatmaps, double stride) {
  if (heatmaps.n() != 1 || heatmaps.c() != kNumLandmarks) {
    throw ShapeError("heatmaps_to_landmarks: expected (1,68,h,w), got " + heatmaps.shape().str());
  }
  const int h = heatmaps.h();
  const int w = heatmaps.w();
  DecodedLandmarks out;
  for (int k = 0; k < kNumLandmarks; ++k) {
    const float* m = heatmaps.plane(0, k);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const auto best = std::max_element(m, m + plane);
    const bool all_zero = std::all_of(m, m + plane, [](float v) { return v == 0.0f; });
    if (all_zero) {
      out.points[k] = {(w - 1) * stride / 2.0, (h - 1) * stride / 2.0};
      out.empty[k] = true;
      continue;
    }
    const int idx = static_cast<int>(best - m);
    const int px = idx % w;
    const int py = idx / w;
    const auto at = [&](int y, int x) { return static_cast<double>(m[static_cast<std::size_t>(y) * w + x]); };
    const auto refine = [](double l, double c, double r) {
      const double denom = l - 2 * c + r;
      if (denom >= 0) return 0.0;
      return std::clamp(0.5 * (l - r) / denom, -0.5, 0.5);
    };
    double dx = 0;
    double dy = 0;
    if (px > 0 && px + 1 < w) dx = refine(at(py, px - 1), at(py, px), at(py, px + 1));
    if (py > 0 && py + 1 < h) dy = refine(at(py - 1, px), at(py, px), at(py + 1, px));
    out.points[k] = {(px + dx) * stride, (py + dy) * stride};
  }
  return out;
}

double face_width(const LandmarkSet& landmarks) {
  const auto [lo, hi] = std::minmax_element(landmarks.begin(), landmarks.end(),
                                            [](const Point& a, const Point& b) { return a.x < b.x; });
  return hi->x - lo->x;
}

double nrmse(const LandmarkSet& pred, const LandmarkSet& gt, double width) {
  if (!(width > 0)) throw std::invalid_argument("nrmse: face width must be positive");
  double acc = 0;
  for (int k = 0; k < kNumLandmarks; ++k) {
    const double dx = pred[k].x - gt[k].x;
    const double dy = pred[k].y - gt[k].y;
    acc += dx * dx + dy * dy;
  }
  return std::sqrt(acc / kNumLandmarks) / width;
}

nlohmann::json to_json(const StepMetrics& m) {
  nlohmann::json j = {{"psnr_db", m.psnr_db}, {"ssim", m.ssim}};
  j["nrmse"] = m.nrmse ? nlohmann::json(*m.nrmse) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j = {{"id", r.id}, {"psnr_db", r.psnr_db}, {"ssim", r.ssim}};
  j["nrmse"] = r.nrmse ? nlohmann::json(*r.nrmse) : nlohmann::json(nullptr);
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : r.per_step) steps.push_back(to_json(s));
  j["per_step"] = steps;
  return j;
}

namespace {

std::optional<double> optional_number(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

MetricReport metric_report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.id = j.at("id").get<std::string>();
  r.psnr_db = j.at("psnr_db").get<double>();
  r.ssim = j.at("ssim").get<double>();
  r.nrmse = optional_number(j, "nrmse");
  if (j.contains("per_step")) {
    for (const auto& s : j.at("per_step")) {
      r.per_step.push_back({s.at("psnr_db").get<double>(), s.at("ssim").get<double>(),
                            optional_number(s, "nrmse")});
    }
  }
  return r;
}

MetricReport aggregate(const std::vector<MetricReport>& reports, const std::string& id) {
  if (reports.empty()) throw std::invalid_argument("aggregate: no reports");
  const double n = static_cast<double>(reports.size());
  MetricReport out;
  out.id = id;
  const std::size_t steps = reports.front().per_step.size();
  out.per_step.resize(steps);
  bool have_nrmse = true;
  std::vector<bool> step_nrmse(steps, true);
  double nrmse_sum = 0;
  std::vector<double> step_nrmse_sum(steps, 0.0);
  for (const auto& r : reports) {
    if (r.per_step.size() != steps) throw std::invalid_argument("aggregate: per-step length mismatch");
    out.psnr_db += r.psnr_db / n;
    out.ssim += r.ssim / n;
    if (r.nrmse) nrmse_sum += *r.nrmse; else have_nrmse = false;
    for (std::size_t s = 0; s < steps; ++s) {
      out.per_step[s].psnr_db += r.per_step[s].psnr_db / n;
      out.per_step[s].ssim += r.per_step[s].ssim / n;
      if (r.per_step[s].nrmse) step_nrmse_sum[s] += *r.per_step[s].nrmse; else step_nrmse[s] = false;
    }
  }
  if (have_nrmse) out.nrmse = nrmse_sum / n;
  for (std::size_t s = 0; s < steps; ++s)
    if (step_nrmse[s]) out.per_step[s].nrmse = step_nrmse_sum[s] / n;
  return out;
}

}  // namespace dic
