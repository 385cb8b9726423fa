// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

// Procedural face images with exact 68-point annotations, for smoke tests and
// desk-scale experiments when no annotated photographs are at hand.

#pragma once

#include <cstdint>
#include <filesystem>

#include "dic/dataset.hpp"

namespace dic {

struct SyntheticFace {
  Image image;  // {1,3,size,size}
  LandmarkSet landmarks;
};

/// One face drawn from a seeded shape/appearance prior, rendered with 4×4 supersampling.
SyntheticFace synthesize_face(std::uint64_t seed, int size = 160);

struct SyntheticSetOptions {
  int train_count = 4;
  int test_count = 0;
  int size = 160;
  std::uint64_t seed = 1;
};

/// Writes images/, landmarks/ and manifest.tsv under `dir`; returns the manifest path.
std::filesystem::path write_synthetic_set(const std::filesystem::path& dir,
                                          const SyntheticSetOptions& options);

}  // namespace dic
