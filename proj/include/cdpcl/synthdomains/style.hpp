#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cdpcl/synthdomains/image.hpp"

namespace cdpcl::synth {

struct Rgb {
  double r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Rendering parameters of one visual domain. Class identity is carried by
/// the texture (orientation and relative frequency per class, shared by all
/// domains) and by the palette colour (domain specific).
struct DomainStyle {
  std::string id;
  std::vector<Rgb> palette;  // one base colour per class
  double brightness = 0.0;   // additive offset
  double contrast = 0.0;     // contrast factor is 1 + contrast, about mid-grey
  double saturation = 0.0;   // saturation factor is 1 + saturation
  double noise_sigma = 0.02;
  double texture_frequency = 0.18;  // cycles per pixel of the base texture
  double texture_amplitude = 0.3;
  std::uint64_t seed = 0;

  /// Number of rendering parameters (palette counted once) that differ.
  std::size_t differences_from(const DomainStyle& other) const;
};

/// Evenly spaced hues at the given saturation and value.
std::vector<Rgb> make_palette(std::size_t classes, double hue_offset, double saturation, double value);

DomainStyle source_style(std::size_t classes);
/// Three unseen styles, each differing from the source in several parameters.
std::vector<DomainStyle> default_unseen_styles(std::size_t classes);

struct SceneSpec {
  std::size_t classes = 6;
  std::size_t height = 64;
  std::size_t width = 64;
};

/// Deterministic layered scene: a background class plus 2-5 rectangles,
/// ellipses or stripes, occasionally an ignore-labelled occluder.
/// Requires classes >= 2 and height, width >= 32.
DomainSample generate_scene(const DomainStyle& style, const SceneSpec& spec, std::uint64_t scene_seed);

}  // namespace cdpcl::synth
