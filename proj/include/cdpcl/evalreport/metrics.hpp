#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cdpcl::evalreport {

/// Pixel counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);

  /// Truth values outside [0, C) (the ignore index) are skipped; predictions
  /// must lie in [0, C).
  void add(std::span<const std::int32_t> truth, std::span<const std::int32_t> prediction);

  std::size_t classes() const { return classes_; }
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * classes_ + pred]; }
  std::span<const std::uint64_t> counts() const { return counts_; }
  std::uint64_t total() const;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

struct MiouResult {
  std::vector<double> per_class;  // TP / (TP + FP + FN); 0 for excluded classes
  std::vector<bool> counted;      // false when TP + FP + FN == 0
  double mean = 0.0;              // over counted classes; NaN if none
};

MiouResult miou(const ConfusionMatrix& cm);

}  // namespace cdpcl::evalreport
