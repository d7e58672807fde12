#pragma once

#include <cstdint>

namespace cdpcl::diagnostics {

enum class Warning {
  NumericGuard,         // log/div/normalize argument clamped to the guard epsilon
  CalibrationSkipped,   // fewer than two valid classes, or a zero-norm prototype
  EmptyActiveSet,       // contrastive loss had no anchor class
  SingletonActiveSet,   // positive excluded and only one anchor, term skipped
  AllPixelsIgnored,     // segmentation loss saw no labelled pixel
  kCount
};

void record(Warning kind);
std::uint64_t count(Warning kind);
void reset();

}  // namespace cdpcl::diagnostics
