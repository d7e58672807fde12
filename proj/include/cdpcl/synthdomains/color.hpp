#pragma once

#include <array>

namespace cdpcl::synth {

// All channels in [0, 1]; hue in [0, 1) turns.
std::array<double, 3> rgb_to_hsv(double r, double g, double b);
std::array<double, 3> hsv_to_rgb(double h, double s, double v);

inline double luminance(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

}  // namespace cdpcl::synth
