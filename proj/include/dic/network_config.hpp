// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

namespace dic {

/// Architecture hyper-parameters. Defaults reproduce the full-size model.
struct NetworkConfig {
  int channels = 48;        // SR feature width (per fusion group)
  int groups = 6;           // up/down projection pairs in each feedback block
  int fusion_depth = 2;     // grouped 3×3 convolutions in the attentive fusion
  int align_width = 256;    // A1 output channels; the recurrent hourglass runs at twice this
  int hourglass_depth = 4;  // pooling levels in the recurrent hourglass
  int disc_base = 32;       // discriminator width of the first layer

  void validate() const {
    if (channels < 1 || groups < 1 || fusion_depth < 1 || hourglass_depth < 1 || disc_base < 1)
      throw std::invalid_argument("network config: sizes must be positive");
    if (align_width < 4 || align_width % 4 != 0)
      throw std::invalid_argument("network config: align_width must be a positive multiple of 4");
  }
  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

inline void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = {{"channels", c.channels},         {"groups", c.groups},
       {"fusion_depth", c.fusion_depth}, {"align_width", c.align_width},
       {"hourglass_depth", c.hourglass_depth}, {"disc_base", c.disc_base}};
}

inline void from_json(const nlohmann::json& j, NetworkConfig& c) {
  c = NetworkConfig{};
  c.channels = j.value("channels", c.channels);
  c.groups = j.value("groups", c.groups);
  c.fusion_depth = j.value("fusion_depth", c.fusion_depth);
  c.align_width = j.value("align_width", c.align_width);
  c.hourglass_depth = j.value("hourglass_depth", c.hourglass_depth);
  c.disc_base = j.value("disc_base", c.disc_base);
}

/// DIC: attentive fusion; DIC_NL: no landmarks at all; DIC_CL: landmarks concatenated.
enum class Variant { DIC, DIC_NL, DIC_CL };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::DIC: return "dic";
    case Variant::DIC_NL: return "dic-nl";
    case Variant::DIC_CL: return "dic-cl";
  }
  return "dic";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "dic") return Variant::DIC;
  if (s == "dic-nl") return Variant::DIC_NL;
  if (s == "dic-cl") return Variant::DIC_CL;
  throw std::invalid_argument("unknown variant '" + s + "' (expected dic, dic-nl or dic-cl)");
}

inline bool uses_landmarks(Variant v) { return v != Variant::DIC_NL; }

}  // namespace dic
