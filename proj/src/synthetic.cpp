// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#include "dic/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <vector>

namespace dic {
namespace {

using Poly = std::vector<Point>;

struct Rgb {
  double r, g, b;
};

Rgb mix(Rgb a, Rgb b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

// Canonical shape in face units: origin between the eyes' level and the nose,
// x to the right, y down, half face width 1.
LandmarkSet template_shape() {
  LandmarkSet s{};
  const double pi = std::numbers::pi;
  for (int i = 0; i <= 16; ++i) {
    const double t = pi * i / 16.0;
    s[i] = {-std::cos(t), -0.1 + 1.1 * std::sin(t)};
  }
  for (int j = 0; j < 5; ++j) {
    const double u = j / 4.0;
    const double arch = 0.08 * std::sin(pi * u);
    s[17 + j] = {-0.8 + 0.6 * u, -0.45 - arch};
    s[26 - j] = {0.8 - 0.6 * u, -0.45 - arch};
  }
  for (int j = 0; j < 4; ++j) s[27 + j] = {0.0, -0.3 + 0.15 * j};
  const double nose_x[5] = {-0.18, -0.09, 0.0, 0.09, 0.18};
  const double nose_y[5] = {0.25, 0.27, 0.28, 0.27, 0.25};
  for (int j = 0; j < 5; ++j) s[31 + j] = {nose_x[j], nose_y[j]};
  const Point left_eye[6] = {{-0.6, -0.25}, {-0.5, -0.3}, {-0.4, -0.3},
                             {-0.3, -0.25}, {-0.4, -0.2}, {-0.5, -0.2}};
  for (int j = 0; j < 6; ++j) s[36 + j] = left_eye[j];
  const Point right_eye[6] = {{0.3, -0.25}, {0.4, -0.3}, {0.5, -0.3},
                              {0.6, -0.25}, {0.5, -0.2}, {0.4, -0.2}};
  for (int j = 0; j < 6; ++j) s[42 + j] = right_eye[j];
  const Point outer[12] = {{-0.35, 0.55}, {-0.22, 0.5}, {-0.1, 0.47}, {0.0, 0.49},
                           {0.1, 0.47},   {0.22, 0.5},  {0.35, 0.55}, {0.22, 0.63},
                           {0.1, 0.67},   {0.0, 0.68},  {-0.1, 0.67}, {-0.22, 0.63}};
  for (int j = 0; j < 12; ++j) s[48 + j] = outer[j];
  const Point inner[8] = {{-0.28, 0.55}, {-0.1, 0.53}, {0.0, 0.535}, {0.1, 0.53},
                          {0.28, 0.55},  {0.1, 0.58},  {0.0, 0.585}, {-0.1, 0.58}};
  for (int j = 0; j < 8; ++j) s[60 + j] = inner[j];
  return s;
}

bool inside(const Poly& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = p.x - (a.x + t * dx);
  const double ey = p.y - (a.y + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

double polyline_distance(const Poly& line, Point p) {
  double best = 1e30;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) best = std::min(best, segment_distance(p, line[i], line[i + 1]));
  return best;
}

Poly pick(const LandmarkSet& lm, int first, int last) {
  return Poly(lm.begin() + first, lm.begin() + last + 1);
}

Point centroid(const Poly& poly) {
  Point c{};
  for (const auto& p : poly) {
    c.x += p.x;
    c.y += p.y;
  }
  return {c.x / static_cast<double>(poly.size()), c.y / static_cast<double>(poly.size())};
}

}  // namespace

SyntheticFace synthesize_face(std::uint64_t seed, int size) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 0.008);
  const auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

  // Shape prior.
  LandmarkSet shape = template_shape();
  const double jaw_width = range(0.9, 1.1);
  const double chin = range(0.9, 1.15);
  const double eye_open = range(0.6, 1.4);
  const double brow_lift = range(-0.06, 0.06);
  const double mouth_open = range(0.0, 1.0);
  const double mouth_width = range(0.85, 1.2);
  for (int i = 0; i <= 16; ++i) {
    shape[i].x *= jaw_width;
    if (shape[i].y > 0) shape[i].y *= chin;
  }
  for (int i = 17; i <= 26; ++i) shape[i].y += brow_lift;
  for (int e = 0; e < 2; ++e) {
    const int base = 36 + 6 * e;
    const double cy = (shape[base].y + shape[base + 3].y) / 2;
    for (int j = 0; j < 6; ++j) shape[base + j].y = cy + (shape[base + j].y - cy) * eye_open;
  }
  for (int i = 48; i <= 67; ++i) shape[i].x *= mouth_width;
  for (int i : {65, 66, 67}) shape[i].y += 0.08 * mouth_open;
  for (int i : {55, 56, 57, 58, 59}) shape[i].y += 0.08 * mouth_open;
  for (auto& p : shape) {
    p.x += jitter(rng);
    p.y += jitter(rng);
  }

  // Pose.
  const double scale = size * range(0.25, 0.33);
  const double angle = range(-0.17, 0.17);
  const double cx = size * 0.5 + range(-0.06, 0.06) * size;
  const double cy = size * 0.47 + range(-0.05, 0.05) * size;
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);
  const auto place = [&](Point p) {
    return Point{cx + scale * (ca * p.x - sa * p.y), cy + scale * (sa * p.x + ca * p.y)};
  };
  LandmarkSet lm{};
  for (int i = 0; i < kNumLandmarks; ++i) lm[i] = place(shape[i]);

  // Appearance.
  const double skin_r = range(0.45, 0.95);
  const double skin_g = skin_r * range(0.6, 0.85);
  const Rgb skin{skin_r, skin_g, skin_g * range(0.6, 0.9)};
  const Rgb bg_a{u(rng), u(rng), u(rng)};
  const Rgb bg_b{u(rng), u(rng), u(rng)};
  const Rgb hair{range(0.02, 0.45), range(0.02, 0.3), range(0.0, 0.2)};
  const Rgb lips{range(0.55, 0.85), range(0.15, 0.35), range(0.2, 0.4)};
  const Rgb iris{range(0.05, 0.4), range(0.1, 0.45), range(0.05, 0.5)};
  const Rgb brow = mix(hair, {0, 0, 0}, 0.3);
  const Rgb shade = mix(skin, {0, 0, 0}, 0.35);

  Poly face = pick(lm, 0, 16);
  for (int k = 1; k < 16; ++k) {
    const double t = std::numbers::pi * k / 16.0;
    face.push_back(place({jaw_width * std::cos(t), -0.1 - 1.0 * std::sin(t)}));
  }
  const Point hair_centre = place({0.0, -0.55});
  const double hair_rx = scale * 1.2 * jaw_width;
  const double hair_ry = scale * 0.85;
  const Poly left_brow = pick(lm, 17, 21);
  const Poly right_brow = pick(lm, 22, 26);
  const Poly bridge = pick(lm, 27, 30);
  const Poly nose_base = pick(lm, 31, 35);
  const Poly left_eye = pick(lm, 36, 41);
  const Poly right_eye = pick(lm, 42, 47);
  const Poly outer_lip = pick(lm, 48, 59);
  const Poly inner_lip = pick(lm, 60, 67);
  const Point left_iris = centroid(left_eye);
  const Point right_iris = centroid(right_eye);
  const double iris_r = 0.065 * scale;
  const double brow_w = 0.045 * scale;
  const double line_w = 0.018 * scale;

  const auto colour_at = [&](double x, double y) -> Rgb {
    const Point p{x, y};
    Rgb c = mix(bg_a, bg_b, std::clamp(y / size, 0.0, 1.0));
    const double hx = (x - hair_centre.x) / hair_rx;
    const double hy = (y - hair_centre.y) / hair_ry;
    if (hx * hx + hy * hy < 1.0) c = hair;
    if (!inside(face, x, y)) return c;
    const double dx = (x - cx) / scale;
    const double dy = (y - cy) / scale;
    c = mix(skin, shade, std::clamp(0.45 * (dx * dx + dy * dy) - 0.1, 0.0, 0.6));
    if (polyline_distance(face, p) < line_w * 1.5) c = mix(c, shade, 0.6);
    if (polyline_distance(left_brow, p) < brow_w || polyline_distance(right_brow, p) < brow_w) c = brow;
    if (polyline_distance(bridge, p) < line_w) c = mix(c, shade, 0.5);
    if (polyline_distance(nose_base, p) < line_w * 1.3) c = mix(c, shade, 0.8);
    for (const auto* eye : {&left_eye, &right_eye}) {
      if (!inside(*eye, x, y)) continue;
      c = {0.93, 0.92, 0.9};
      const Point ic = eye == &left_eye ? left_iris : right_iris;
      const double r = std::hypot(x - ic.x, y - ic.y);
      if (r < iris_r) c = r < iris_r * 0.45 ? Rgb{0.02, 0.02, 0.02} : iris;
    }
    for (const auto* eye : {&left_eye, &right_eye}) {
      Poly ring = *eye;
      ring.push_back(ring.front());
      if (polyline_distance(ring, p) < line_w) c = {0.1, 0.07, 0.06};
    }
    if (inside(outer_lip, x, y)) c = inside(inner_lip, x, y) && mouth_open > 0.25 ? Rgb{0.2, 0.03, 0.05} : lips;
    return c;
  };

  constexpr int kSuper = 4;
  SyntheticFace out;
  out.image = Image({1, 3, size, size});
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      Rgb acc{0, 0, 0};
      for (int sy = 0; sy < kSuper; ++sy)
        for (int sx = 0; sx < kSuper; ++sx) {
          // Pixel (x, y) covers [x − 0.5, x + 0.5) so landmark coordinates are pixel indices.
          const Rgb c = colour_at(x - 0.5 + (sx + 0.5) / kSuper, y - 0.5 + (sy + 0.5) / kSuper);
          acc.r += c.r;
          acc.g += c.g;
          acc.b += c.b;
        }
      constexpr double norm = 1.0 / (kSuper * kSuper);
      out.image.at(0, 0, y, x) = static_cast<float>(acc.r * norm);
      out.image.at(0, 1, y, x) = static_cast<float>(acc.g * norm);
      out.image.at(0, 2, y, x) = static_cast<float>(acc.b * norm);
    }
  }
  out.image = quantize_u8(out.image);
  out.landmarks = lm;
  return out;
}

std::filesystem::path write_synthetic_set(const std::filesystem::path& dir,
                                          const SyntheticSetOptions& options) {
  namespace fs = std::filesystem;
  if (options.train_count < 0 || options.test_count < 0 || options.train_count + options.test_count < 1) {
    throw std::invalid_argument("synthetic set: need at least one image");
  }
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "landmarks");
  Manifest manifest;
  const int total = options.train_count + options.test_count;
  for (int i = 0; i < total; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "face_%04d", i);
    const SyntheticFace face = synthesize_face(options.seed * 1000003ULL + static_cast<std::uint64_t>(i), options.size);
    const fs::path image = fs::path("images") / (std::string(name) + ".png");
    const fs::path landmarks = fs::path("landmarks") / (std::string(name) + ".txt");
    write_png(dir / image, face.image);
    write_landmarks(dir / landmarks, face.landmarks);
    manifest.entries.push_back({dir / image, dir / landmarks, i < options.train_count ? Split::Train : Split::Test});
  }
  const fs::path path = dir / "manifest.tsv";
  manifest.save(path);
  return path;
}

}  // namespace dic
