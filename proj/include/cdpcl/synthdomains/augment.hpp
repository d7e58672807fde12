#pragma once

#include <cstdint>
#include <optional>

#include "cdpcl/rng.hpp"
#include "cdpcl/synthdomains/image.hpp"

namespace cdpcl::synth {

/// Photometric augmentation bounds. Geometry is never touched, so the source
/// labels stay valid for the augmented view.
struct AugmentParams {
  double brightness = 0.4;  // factor drawn from [1 - b, 1 + b]
  double contrast = 0.4;
  double saturation = 0.4;
  double hue = 0.1;  // shift drawn from [-hue, hue] turns
  double blur_probability = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
};

/// One concrete draw of the augmentation.
struct JitterFactors {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double hue_shift = 0.0;
  std::optional<double> blur_sigma;
};

JitterFactors sample_jitter(const AugmentParams& params, Rng& rng);

/// Applies brightness, contrast, saturation, hue, then blur. Values are
/// clamped to [0, 1] after each colour step unless clamp is false.
Image apply_jitter(const Image& image, const JitterFactors& factors, bool clamp = true);

Image gaussian_blur(const Image& image, double sigma);

Image augment(const Image& image, const AugmentParams& params, std::uint64_t aug_seed);

}  // namespace cdpcl::synth
