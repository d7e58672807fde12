#include "cdpcl/synthdomains/color.hpp"

#include <algorithm>
#include <cmath>

namespace cdpcl::synth {

std::array<double, 3> rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  double h = 0.0;
  if (delta > 0.0) {
    if (mx == r) {
      h = std::fmod((g - b) / delta, 6.0);
    } else if (mx == g) {
      h = (b - r) / delta + 2.0;
    } else {
      h = (r - g) / delta + 4.0;
    }
    h /= 6.0;
    if (h < 0.0) h += 1.0;
  }
  const double s = mx > 0.0 ? delta / mx : 0.0;
  return {h, s, mx};
}

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

}  // namespace cdpcl::synth
