#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace cdpcl {

/// Label value excluded from losses, pooling and evaluation.
inline constexpr std::int32_t kIgnoreIndex = 255;

/// Batch of class-index maps, B x H x W, row-major.
struct LabelMap {
  std::size_t batch = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::int32_t> data;

  std::size_t plane() const { return height * width; }
  std::int32_t at(std::size_t b, std::size_t y, std::size_t x) const { return data[(b * height + y) * width + x]; }
};

/// Throws DataError naming the first value outside [0, classes) that is not
/// the ignore index.
void validate_labels(const LabelMap& labels, std::size_t classes, std::int32_t ignore_index = kIgnoreIndex);

}  // namespace cdpcl
