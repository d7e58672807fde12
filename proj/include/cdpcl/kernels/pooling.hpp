#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace cdpcl::kernels {

/// Per-class sums of feature vectors over an NCHW map whose labels are given
/// at feature resolution (B*h*w). Labels outside [0, classes) are skipped.
/// sums is classes x channels, counts has one entry per class; both are
/// overwritten.
void class_sums(std::size_t batch, std::size_t channels, std::size_t plane, std::size_t classes,
                std::span<const double> features, std::span<const std::int32_t> labels,
                std::span<double> sums, std::span<std::size_t> counts);

/// Confusion counts (rows = truth, cols = prediction), accumulated (+=).
/// Pixels whose truth is outside [0, classes) are skipped.
void confusion_accumulate(std::size_t classes, std::span<const std::int32_t> truth,
                          std::span<const std::int32_t> prediction, std::span<std::uint64_t> counts);

namespace reference {

void class_sums(std::size_t batch, std::size_t channels, std::size_t plane, std::size_t classes,
                std::span<const double> features, std::span<const std::int32_t> labels,
                std::span<double> sums, std::span<std::size_t> counts);

void confusion_accumulate(std::size_t classes, std::span<const std::int32_t> truth,
                          std::span<const std::int32_t> prediction, std::span<std::uint64_t> counts);

}  // namespace reference
}  // namespace cdpcl::kernels
