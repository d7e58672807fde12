#include "cdpcl/synthdomains/style.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "cdpcl/errors.hpp"
#include "cdpcl/labels.hpp"
#include "cdpcl/rng.hpp"
#include "cdpcl/synthdomains/color.hpp"

namespace cdpcl::synth {

std::size_t DomainStyle::differences_from(const DomainStyle& o) const {
  std::size_t n = 0;
  n += palette != o.palette;
  n += brightness != o.brightness;
  n += contrast != o.contrast;
  n += saturation != o.saturation;
  n += noise_sigma != o.noise_sigma;
  n += texture_frequency != o.texture_frequency;
  n += texture_amplitude != o.texture_amplitude;
  return n;
}

std::vector<Rgb> make_palette(std::size_t classes, double hue_offset, double saturation, double value) {
  std::vector<Rgb> palette;
  palette.reserve(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    const auto [r, g, b] = hsv_to_rgb(hue_offset + static_cast<double>(c) / static_cast<double>(classes),
                                      saturation, value);
    palette.push_back({r, g, b});
  }
  return palette;
}

DomainStyle source_style(std::size_t classes) {
  DomainStyle s;
  s.id = "src_train";
  s.palette = make_palette(classes, 0.0, 0.6, 0.75);
  s.seed = hash_string("src_train");
  return s;
}

std::vector<DomainStyle> default_unseen_styles(std::size_t classes) {
  std::vector<DomainStyle> styles(3);
  auto& a = styles[0];
  a.id = "unseen_a";
  a.palette = make_palette(classes, 0.06, 0.6, 0.75);
  a.brightness = -0.08;
  a.noise_sigma = 0.04;
  a.seed = hash_string("unseen_a");

  auto& b = styles[1];
  b.id = "unseen_b";
  b.palette = make_palette(classes, -0.07, 0.6, 0.75);
  b.contrast = -0.3;
  b.saturation = -0.3;
  b.seed = hash_string("unseen_b");

  auto& c = styles[2];
  c.id = "unseen_c";
  c.palette = make_palette(classes, 0.03, 0.4, 0.9);
  c.brightness = 0.06;
  c.noise_sigma = 0.06;
  c.texture_frequency = 0.2;
  c.seed = hash_string("unseen_c");
  return styles;
}

namespace {

enum class ShapeKind { Rectangle, Ellipse, Stripe };

struct Region {
  ShapeKind kind;
  double cx, cy, rx, ry;  // centre and half extents
  bool horizontal;        // stripes only
  std::int32_t label;
  double phase;
  Rgb tint;

  bool contains(double x, double y) const {
    switch (kind) {
      case ShapeKind::Rectangle: return std::abs(x - cx) <= rx && std::abs(y - cy) <= ry;
      case ShapeKind::Ellipse: {
        const double dx = (x - cx) / rx, dy = (y - cy) / ry;
        return dx * dx + dy * dy <= 1.0;
      }
      case ShapeKind::Stripe: return horizontal ? std::abs(y - cy) <= ry : std::abs(x - cx) <= rx;
    }
    return false;
  }
};

// Class-specific texture: orientation cycles through three angles, frequency
// alternates between two multiples. Shared across domains.
double class_texture(std::size_t cls, double x, double y, double base_frequency, double phase) {
  const double angle = std::numbers::pi * static_cast<double>(cls % 3) / 3.0;
  const double mult = (cls / 3) % 2 == 0 ? 1.0 : 1.7;
  const double u = x * std::cos(angle) + y * std::sin(angle);
  return std::sin(2.0 * std::numbers::pi * base_frequency * mult * u + phase);
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

DomainSample generate_scene(const DomainStyle& style, const SceneSpec& spec, std::uint64_t scene_seed) {
  if (spec.classes < 2 || spec.classes > 254) throw ConfigError("scene needs between 2 and 254 classes");
  if (spec.height < 32 || spec.width < 32) throw ConfigError("scene must be at least 32x32");
  if (style.palette.size() != spec.classes) {
    throw ConfigError("style '" + style.id + "' has " + std::to_string(style.palette.size()) +
                      " palette colours for " + std::to_string(spec.classes) + " classes");
  }
  Rng rng(scene_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::int32_t> pick_class(0, static_cast<std::int32_t>(spec.classes) - 1);
  const double w = static_cast<double>(spec.width), h = static_cast<double>(spec.height);

  const auto tint = [&] {
    return Rgb{(unit(rng) - 0.5) * 0.08, (unit(rng) - 0.5) * 0.08, (unit(rng) - 0.5) * 0.08};
  };

  std::vector<Region> regions;
  regions.push_back({ShapeKind::Rectangle, w / 2, h / 2, w, h, true, pick_class(rng), unit(rng) * 6.3, tint()});
  const int count = std::uniform_int_distribution<int>(2, 5)(rng);
  for (int i = 0; i < count; ++i) {
    Region r{};
    r.kind = static_cast<ShapeKind>(std::uniform_int_distribution<int>(0, 2)(rng));
    r.cx = unit(rng) * w;
    r.cy = unit(rng) * h;
    r.rx = (0.1 + 0.2 * unit(rng)) * w;
    r.ry = (0.1 + 0.2 * unit(rng)) * h;
    if (r.kind == ShapeKind::Stripe) {
      r.rx = r.ry = 3.0 + 5.0 * unit(rng);
    }
    r.horizontal = unit(rng) < 0.5;
    r.label = pick_class(rng);
    r.phase = unit(rng) * 6.3;
    r.tint = tint();
    regions.push_back(r);
  }

  // Optional void patch, labelled with the ignore index.
  const bool occluder = unit(rng) < 0.25;
  const double ox = unit(rng) * (w - 8), oy = unit(rng) * (h - 8);
  const double osize = 4.0 + 4.0 * unit(rng);
  const double illumination = 0.9 + 0.2 * unit(rng);

  DomainSample sample;
  sample.image = Image(spec.height, spec.width);
  sample.labels.assign(spec.height * spec.width, 0);
  sample.domain = style.id;
  sample.seed = scene_seed;

  std::normal_distribution<double> noise(0.0, style.noise_sigma > 0 ? style.noise_sigma : 1.0);
  const double contrast = 1.0 + style.contrast;
  const double saturation = 1.0 + style.saturation;
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      const Region* top = &regions.front();
      for (const auto& r : regions) {
        if (r.contains(px, py)) top = &r;
      }
      std::array<double, 3> rgb;
      std::int32_t label = top->label;
      if (occluder && px >= ox && px < ox + osize && py >= oy && py < oy + osize) {
        label = kIgnoreIndex;
        rgb.fill(0.5);
      } else {
        const auto cls = static_cast<std::size_t>(label);
        const auto& base = style.palette[cls];
        const double t = 1.0 + style.texture_amplitude * class_texture(cls, px, py, style.texture_frequency, top->phase);
        rgb = {(base.r + top->tint.r) * t, (base.g + top->tint.g) * t, (base.b + top->tint.b) * t};
      }
      for (auto& v : rgb) v *= illumination;
      const double grey = luminance(rgb[0], rgb[1], rgb[2]);
      for (int c = 0; c < 3; ++c) {
        double v = grey + (rgb[c] - grey) * saturation;
        v = 0.5 + (v - 0.5) * contrast;
        v += style.brightness;
        if (style.noise_sigma > 0) v += noise(rng);
        sample.image.at(y, x, c) = clamp01(v);
      }
      sample.labels[y * spec.width + x] = label;
    }
  }
  return sample;
}

}  // namespace cdpcl::synth
