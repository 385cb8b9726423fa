// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

// Sample preparation: manifest ingestion, landmark-driven cropping, ×8
// bicubic degradation, Gaussian heatmap rendering and geometric augmentation.

#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dic/image.hpp"

namespace dic {

inline constexpr int kNumLandmarks = 68;
inline constexpr int kHrSize = 128;
inline constexpr int kLrSize = 16;
inline constexpr int kHeatmapSize = 32;

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// 68 landmark positions in pixel units of the image they annotate.
using LandmarkSet = std::array<Point, kNumLandmarks>;

/// Raised when a sample cannot be produced (bad landmark file, degenerate box, unreadable image).
class SampleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { Train, Test };
Split parse_split(const std::string& s);
std::string to_string(Split s);

struct ManifestEntry {
  std::filesystem::path image_path;
  std::filesystem::path landmark_path;
  Split split = Split::Train;
};

/// Tab-separated `<image_path>\t<landmark_path>\t<split>` per line. Relative
/// paths are resolved against the manifest's directory. Blank lines and lines
/// starting with '#' are skipped.
struct Manifest {
  std::vector<ManifestEntry> entries;

  static Manifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  [[nodiscard]] std::vector<ManifestEntry> split(Split s) const;
};

/// 68 lines of `x y`.
LandmarkSet read_landmarks(const std::filesystem::path& path);
void write_landmarks(const std::filesystem::path& path, const LandmarkSet& landmarks);

struct Sample {
  Image hr;                 // {1,3,128,128}
  Image lr;                 // {1,3,16,16}, always degrade(hr)
  LandmarkSet landmarks;    // HR pixel coordinates
  Tensor<float> heatmaps;   // {1,68,32,32}
  double heatmap_sigma = 1.0;
  std::string id;
};

struct PrepareOptions {
  double margin = 0.25;  // fraction of the landmark box side added on each side
  double sigma = 1.0;    // heatmap Gaussian width in heatmap cells
};

struct CropResult {
  Image image;
  LandmarkSet landmarks;
};

/// Square crop around the landmark box (expanded by `margin` of its longer
/// side on every edge, shifted and shrunk to fit the image), resampled to
/// out × out. Landmarks go through the same affine map.
CropResult crop_and_resize(const Image& image, const LandmarkSet& landmarks, double margin,
                           int out = kHrSize);

/// Channel k holds exp(-((x - x_k/s)² + (y - y_k/s)²) / 2σ²) on a size × size
/// grid with s = hr_size / size. Landmarks outside [0, hr_size)² give a zero channel.
Tensor<float> render_heatmaps(const LandmarkSet& landmarks, int size = kHeatmapSize,
                              double sigma = 1.0, int hr_size = kHrSize);

/// Bicubic ×8 downsample to 16×16, saturated to [0, 1] as an 8-bit store would.
Image degrade(const Image& hr);

/// Builds a consistent sample from an HR crop and its landmarks.
Sample make_sample(Image hr, const LandmarkSet& landmarks, double sigma, std::string id);

/// Reads, crops and degrades one manifest entry.
Sample prepare_sample(const ManifestEntry& entry, const PrepareOptions& options);

enum class Augmentation { None, Rot90, Rot180, Rot270, HFlip };
inline constexpr std::array<Augmentation, 5> kAllAugmentations{
    Augmentation::None, Augmentation::Rot90, Augmentation::Rot180, Augmentation::Rot270,
    Augmentation::HFlip};
std::string to_string(Augmentation a);

/// Left/right landmark correspondence of the 68-point scheme; an involution.
const std::array<int, kNumLandmarks>& flip_permutation();

/// Rotations are clockwise. The HR image and landmarks are transformed
/// directly (hflip also permutes landmark indices); the LR image and the
/// heatmaps are re-derived from the transformed HR image and landmarks so
/// every sample invariant continues to hold exactly.
Sample augment(const Sample& sample, Augmentation op);

/// Maps one point through `op` on a size × size image.
Point transform_point(Point p, Augmentation op, int size);
/// Pixel-exact geometric transform of every plane of a square tensor.
template <typename T>
Tensor<T> transform_planes(const Tensor<T>& t, Augmentation op);

/// Prepared-sample cache: one directory per sample holding raw little-endian
/// float32 arrays (`<name>.f32`) each with a JSON sidecar (`<name>.json`:
/// shape, dtype, id).
void save_sample_cache(const std::filesystem::path& dir, const Sample& sample);
Sample load_sample_cache(const std::filesystem::path& dir);

}  // namespace dic
