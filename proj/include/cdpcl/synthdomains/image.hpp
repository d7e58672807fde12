#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace cdpcl::synth {

/// H x W x 3 interleaved RGB in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> rgb;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), rgb(h * w * 3, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) { return rgb[(y * width + x) * 3 + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return rgb[(y * width + x) * 3 + c]; }
  std::size_t pixels() const { return height * width; }
};

struct DomainSample {
  Image image;
  std::vector<std::int32_t> labels;  // H x W, [0, C) or the ignore index
  std::string domain;
  std::uint64_t seed = 0;
  std::size_t index = 0;
};

}  // namespace cdpcl::synth
