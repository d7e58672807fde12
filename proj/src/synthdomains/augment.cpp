#include "cdpcl/synthdomains/augment.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "cdpcl/synthdomains/color.hpp"

namespace cdpcl::synth {
namespace {

double draw_factor(double magnitude, Rng& rng) {
  if (magnitude <= 0) return 1.0;
  return std::uniform_real_distribution<double>(std::max(0.0, 1.0 - magnitude), 1.0 + magnitude)(rng);
}

}  // namespace

JitterFactors sample_jitter(const AugmentParams& p, Rng& rng) {
  JitterFactors f;
  f.brightness = draw_factor(p.brightness, rng);
  f.contrast = draw_factor(p.contrast, rng);
  f.saturation = draw_factor(p.saturation, rng);
  if (p.hue > 0) f.hue_shift = std::uniform_real_distribution<double>(-p.hue, p.hue)(rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (p.blur_probability > 0 && unit(rng) < p.blur_probability) {
    f.blur_sigma = std::uniform_real_distribution<double>(p.blur_sigma_min, p.blur_sigma_max)(rng);
  }
  return f;
}

Image gaussian_blur(const Image& image, double sigma) {
  if (!(sigma > 0)) return image;
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    total += kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
  }
  for (auto& k : kernel) k /= total;

  const auto h = static_cast<std::ptrdiff_t>(image.height), w = static_cast<std::ptrdiff_t>(image.width);
  // Reflect without repeating the edge pixel.
  const auto reflect = [](std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n == 1) return std::ptrdiff_t{0};
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
  };
  Image tmp(image.height, image.width), out(image.height, image.width);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
          acc += kernel[static_cast<std::size_t>(i + radius)] * image.at(y, reflect(x + i, w), c);
        }
        tmp.at(y, x, c) = acc;
      }
    }
  }
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
          acc += kernel[static_cast<std::size_t>(i + radius)] * tmp.at(reflect(y + i, h), x, c);
        }
        out.at(y, x, c) = acc;
      }
    }
  }
  return out;
}

Image apply_jitter(const Image& image, const JitterFactors& f, bool clamp) {
  Image out = image;
  auto& px = out.rgb;
  const auto limit = [clamp](double v) { return clamp ? std::clamp(v, 0.0, 1.0) : v; };

  if (f.brightness != 1.0) {
    for (auto& v : px) v = limit(v * f.brightness);
  }
  if (f.contrast != 1.0) {
    double mean = 0.0;
    for (std::size_t i = 0; i < out.pixels(); ++i) mean += luminance(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
    mean /= static_cast<double>(out.pixels());
    for (auto& v : px) v = limit(mean + (v - mean) * f.contrast);
  }
  if (f.saturation != 1.0) {
    for (std::size_t i = 0; i < out.pixels(); ++i) {
      const double grey = luminance(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
      for (int c = 0; c < 3; ++c) px[3 * i + c] = limit(grey + (px[3 * i + c] - grey) * f.saturation);
    }
  }
  if (f.hue_shift != 0.0) {
    for (std::size_t i = 0; i < out.pixels(); ++i) {
      auto [h, s, v] = rgb_to_hsv(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
      const auto rgb = hsv_to_rgb(h + f.hue_shift, s, v);
      for (int c = 0; c < 3; ++c) px[3 * i + c] = limit(rgb[c]);
    }
  }
  if (f.blur_sigma) out = gaussian_blur(out, *f.blur_sigma);
  return out;
}

Image augment(const Image& image, const AugmentParams& params, std::uint64_t aug_seed) {
  Rng rng(aug_seed);
  return apply_jitter(image, sample_jitter(params, rng));
}

}  // namespace cdpcl::synth
