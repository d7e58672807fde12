#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cdpcl/synthdomains/image.hpp"

namespace cdpcl::synth {

/// Binary PPM (P6, maxval 255). Channel values are rounded to the nearest
/// multiple of 1/255.
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

/// Binary PGM (P5, maxval 255) holding raw byte values.
struct GreyImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;
};

void write_pgm(const std::filesystem::path& path, const GreyImage& image);
GreyImage read_pgm(const std::filesystem::path& path);

}  // namespace cdpcl::synth
