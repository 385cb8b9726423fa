// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#include "dic/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dic {

namespace fs = std::filesystem;

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw SampleError("unknown split '" + s + "' (expected train or test)");
}

std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

Manifest Manifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SampleError("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  Manifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 3) {
      throw SampleError(path.string() + ":" + std::to_string(lineno) +
                        ": expected 3 tab-separated fields");
    }
    auto resolve = [&](const std::string& p) {
      fs::path fp(p);
      return fp.is_absolute() ? fp : base / fp;
    };
    m.entries.push_back({resolve(fields[0]), resolve(fields[1]), parse_split(fields[2])});
  }
  return m;
}

void Manifest::save(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw SampleError("cannot write manifest " + path.string());
  const fs::path base = path.parent_path();
  // Paths under the manifest directory are written relative to it, others verbatim.
  auto portable = [&](const fs::path& p) {
    const fs::path rel = fs::relative(p, base);
    const bool inside = !rel.empty() && *rel.begin() != "..";
    return (inside ? rel : p).string();
  };
  for (const auto& e : entries) {
    out << portable(e.image_path) << '\t' << portable(e.landmark_path) << '\t'
        << to_string(e.split) << '\n';
  }
}

std::vector<ManifestEntry> Manifest::split(Split s) const {
  std::vector<ManifestEntry> out;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
               [s](const ManifestEntry& e) { return e.split == s; });
  return out;
}

LandmarkSet read_landmarks(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SampleError("cannot open landmark file " + path.string());
  std::vector<Point> pts;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::stringstream ss(line);
    Point p;
    if (!(ss >> p.x >> p.y)) throw SampleError(path.string() + ": malformed line '" + line + "'");
    pts.push_back(p);
  }
  if (pts.size() != kNumLandmarks) {
    throw SampleError(path.string() + ": expected 68 landmarks, found " + std::to_string(pts.size()));
  }
  LandmarkSet out;
  std::copy(pts.begin(), pts.end(), out.begin());
  return out;
}

void write_landmarks(const fs::path& path, const LandmarkSet& landmarks) {
  std::ofstream out(path);
  if (!out) throw SampleError("cannot write landmark file " + path.string());
  out.precision(17);
  for (const auto& p : landmarks) out << p.x << ' ' << p.y << '\n';
}

CropResult crop_and_resize(const Image& image, const LandmarkSet& landmarks, double margin,
                           int out) {
  if (image.size() == 0) throw SampleError("crop_and_resize: empty image");
  double min_x = landmarks[0].x, max_x = landmarks[0].x;
  double min_y = landmarks[0].y, max_y = landmarks[0].y;
  for (const auto& p : landmarks) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double box_w = max_x - min_x;
  const double box_h = max_y - min_y;
  if (!(box_w > 0.0) || !(box_h > 0.0)) {
    throw SampleError("crop_and_resize: degenerate landmark box " + std::to_string(box_w) + "x" +
                      std::to_string(box_h));
  }
  double side = std::max(box_w, box_h) * (1.0 + 2.0 * margin);
  side = std::min({side, static_cast<double>(image.w()), static_cast<double>(image.h())});
  const double cx = 0.5 * (min_x + max_x);
  const double cy = 0.5 * (min_y + max_y);
  const double x0 = std::clamp(cx - 0.5 * side, 0.0, image.w() - side);
  const double y0 = std::clamp(cy - 0.5 * side, 0.0, image.h() - side);

  CropResult result;
  result.image = resample_window(image, x0, y0, side, out);
  // Bicubic overshoot at edges would leave the HR crop outside the stored range.
  for (auto& v : result.image.vec()) v = std::clamp(v, 0.0f, 1.0f);
  const double scale = out / side;
  for (std::size_t k = 0; k < landmarks.size(); ++k) {
    result.landmarks[k] = {(landmarks[k].x - x0) * scale, (landmarks[k].y - y0) * scale};
  }
  return result;
}

Tensor<float> render_heatmaps(const LandmarkSet& landmarks, int size, double sigma, int hr_size) {
  if (!(sigma > 0.0)) throw std::invalid_argument("render_heatmaps: sigma must be positive");
  Tensor<float> maps({1, kNumLandmarks, size, size});
  const double stride = static_cast<double>(hr_size) / size;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int k = 0; k < kNumLandmarks; ++k) {
    const Point& p = landmarks[static_cast<std::size_t>(k)];
    if (p.x < 0.0 || p.y < 0.0 || p.x >= hr_size || p.y >= hr_size) continue;
    const double gx = p.x / stride;
    const double gy = p.y / stride;
    float* plane = maps.plane(0, k);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double d2 = (x - gx) * (x - gx) + (y - gy) * (y - gy);
        plane[y * size + x] = static_cast<float>(std::exp(-d2 * inv));
      }
  }
  return maps;
}

Image degrade(const Image& hr) {
  Image lr = bicubic_resize(hr, kLrSize, kLrSize);
  for (auto& v : lr.vec()) v = std::clamp(v, 0.0f, 1.0f);
  return lr;
}

Sample make_sample(Image hr, const LandmarkSet& landmarks, double sigma, std::string id) {
  expect_shape(hr.shape(), {1, 3, kHrSize, kHrSize}, "make_sample");
  Sample s;
  s.lr = degrade(hr);
  s.hr = std::move(hr);
  s.landmarks = landmarks;
  s.heatmaps = render_heatmaps(landmarks, kHeatmapSize, sigma, kHrSize);
  s.heatmap_sigma = sigma;
  s.id = std::move(id);
  return s;
}

Sample prepare_sample(const ManifestEntry& entry, const PrepareOptions& options) {
  Image image;
  try {
    image = read_png(entry.image_path);
  } catch (const ImageIoError& e) {
    throw SampleError(e.what());
  }
  const LandmarkSet lm = read_landmarks(entry.landmark_path);
  CropResult crop;
  try {
    crop = crop_and_resize(image, lm, options.margin, kHrSize);
  } catch (const SampleError& e) {
    throw SampleError(entry.image_path.string() + ": " + e.what());
  }
  return make_sample(std::move(crop.image), crop.landmarks, options.sigma,
                     entry.image_path.stem().string());
}

std::string to_string(Augmentation a) {
  switch (a) {
    case Augmentation::None: return "none";
    case Augmentation::Rot90: return "rot90";
    case Augmentation::Rot180: return "rot180";
    case Augmentation::Rot270: return "rot270";
    case Augmentation::HFlip: return "hflip";
  }
  return "none";
}

const std::array<int, kNumLandmarks>& flip_permutation() {
  static const std::array<int, kNumLandmarks> table = [] {
    std::array<int, kNumLandmarks> t{};
    for (int k = 0; k < kNumLandmarks; ++k) t[k] = k;
    auto pair = [&t](int a, int b) {
      t[a] = b;
      t[b] = a;
    };
    for (int k = 0; k < 8; ++k) pair(k, 16 - k);         // jaw
    for (int k = 0; k < 5; ++k) pair(17 + k, 26 - k);    // brows
    pair(31, 35);                                         // nose wings
    pair(32, 34);
    pair(36, 45);                                         // eyes, mirrored within each eye
    pair(37, 44);
    pair(38, 43);
    pair(39, 42);
    pair(40, 47);
    pair(41, 46);
    pair(48, 54);                                         // outer lip
    pair(49, 53);
    pair(50, 52);
    pair(55, 59);
    pair(56, 58);
    pair(60, 64);                                         // inner lip
    pair(61, 63);
    pair(65, 67);
    return t;
  }();
  return table;
}

Point transform_point(Point p, Augmentation op, int size) {
  const double last = size - 1;
  switch (op) {
    case Augmentation::None: return p;
    case Augmentation::Rot90: return {last - p.y, p.x};
    case Augmentation::Rot180: return {last - p.x, last - p.y};
    case Augmentation::Rot270: return {p.y, last - p.x};
    case Augmentation::HFlip: return {last - p.x, p.y};
  }
  return p;
}

template <typename T>
Tensor<T> transform_planes(const Tensor<T>& t, Augmentation op) {
  if (t.h() != t.w()) throw ShapeError("transform_planes: square planes required, got " + t.shape().str());
  const int n = t.h();
  Tensor<T> out(t.shape());
  for (int b = 0; b < t.n(); ++b)
    for (int c = 0; c < t.c(); ++c) {
      const T* src = t.plane(b, c);
      T* dst = out.plane(b, c);
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          // Destination pixel (x, y) takes the source pixel mapped onto it.
          int sx = x, sy = y;
          switch (op) {
            case Augmentation::None: break;
            case Augmentation::Rot90: sx = y; sy = n - 1 - x; break;
            case Augmentation::Rot180: sx = n - 1 - x; sy = n - 1 - y; break;
            case Augmentation::Rot270: sx = n - 1 - y; sy = x; break;
            case Augmentation::HFlip: sx = n - 1 - x; break;
          }
          dst[y * n + x] = src[sy * n + sx];
        }
    }
  return out;
}

template Tensor<float> transform_planes<float>(const Tensor<float>&, Augmentation);
template Tensor<double> transform_planes<double>(const Tensor<double>&, Augmentation);

Sample augment(const Sample& sample, Augmentation op) {
  if (op == Augmentation::None) return sample;
  Image hr = transform_planes(sample.hr, op);
  LandmarkSet lm;
  for (int k = 0; k < kNumLandmarks; ++k) {
    lm[k] = transform_point(sample.landmarks[k], op, kHrSize);
  }
  if (op == Augmentation::HFlip) {
    const auto& perm = flip_permutation();
    LandmarkSet permuted;
    for (int k = 0; k < kNumLandmarks; ++k) permuted[k] = lm[perm[k]];
    lm = permuted;
  }
  return make_sample(std::move(hr), lm, sample.heatmap_sigma, sample.id);
}

namespace {

void write_array(const fs::path& dir, const std::string& name, const Tensor<float>& t,
                 const std::string& id) {
  static_assert(std::endian::native == std::endian::little, "cache format is little-endian");
  std::ofstream bin(dir / (name + ".f32"), std::ios::binary);
  bin.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  if (!bin) throw SampleError("failed writing " + (dir / (name + ".f32")).string());
  nlohmann::json meta{{"shape", {t.n(), t.c(), t.h(), t.w()}}, {"dtype", "float32"}, {"id", id}};
  std::ofstream(dir / (name + ".json")) << meta.dump(2) << '\n';
}

Tensor<float> read_array(const fs::path& dir, const std::string& name, std::string* id) {
  std::ifstream js(dir / (name + ".json"));
  if (!js) throw SampleError("missing sidecar " + (dir / (name + ".json")).string());
  const auto meta = nlohmann::json::parse(js);
  if (meta.at("dtype") != "float32") throw SampleError("unsupported dtype in " + dir.string());
  const auto shp = meta.at("shape").get<std::vector<int>>();
  if (shp.size() != 4) throw SampleError("cache arrays must be 4-D");
  if (id) *id = meta.at("id").get<std::string>();
  Tensor<float> t({shp[0], shp[1], shp[2], shp[3]});
  std::ifstream bin(dir / (name + ".f32"), std::ios::binary);
  bin.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  if (!bin) throw SampleError("truncated array " + (dir / (name + ".f32")).string());
  return t;
}

}  // namespace

void save_sample_cache(const fs::path& dir, const Sample& sample) {
  fs::create_directories(dir);
  write_array(dir, "hr", sample.hr, sample.id);
  write_array(dir, "lr", sample.lr, sample.id);
  write_array(dir, "heatmaps", sample.heatmaps, sample.id);
  Tensor<float> lm({1, 1, kNumLandmarks, 2});
  for (int k = 0; k < kNumLandmarks; ++k) {
    lm[2 * k] = static_cast<float>(sample.landmarks[k].x);
    lm[2 * k + 1] = static_cast<float>(sample.landmarks[k].y);
  }
  write_array(dir, "landmarks", lm, sample.id);
  nlohmann::json meta{{"id", sample.id}, {"sigma", sample.heatmap_sigma}};
  std::ofstream(dir / "sample.json") << meta.dump(2) << '\n';
}

Sample load_sample_cache(const fs::path& dir) {
  Sample s;
  s.hr = read_array(dir, "hr", &s.id);
  s.lr = read_array(dir, "lr", nullptr);
  s.heatmaps = read_array(dir, "heatmaps", nullptr);
  const Tensor<float> lm = read_array(dir, "landmarks", nullptr);
  if (lm.size() != 2 * kNumLandmarks) throw SampleError("landmark array has wrong size in " + dir.string());
  for (int k = 0; k < kNumLandmarks; ++k) s.landmarks[k] = {lm[2 * k], lm[2 * k + 1]};
  std::ifstream js(dir / "sample.json");
  if (js) s.heatmap_sigma = nlohmann::json::parse(js).value("sigma", 1.0);
  return s;
}

}  // namespace dic
