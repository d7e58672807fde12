#include "cdpcl/evalreport/metrics.hpp"

#include <limits>
#include <numeric>
#include <string>

#include "cdpcl/errors.hpp"
#include "cdpcl/kernels/pooling.hpp"

namespace cdpcl::evalreport {

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {
  if (classes == 0) throw ContractError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(std::span<const std::int32_t> truth, std::span<const std::int32_t> prediction) {
  if (truth.size() != prediction.size()) {
    throw DimensionError("confusion matrix: " + std::to_string(truth.size()) + " labels vs " +
                         std::to_string(prediction.size()) + " predictions");
  }
  for (auto p : prediction) {
    if (p < 0 || static_cast<std::size_t>(p) >= classes_) {
      throw DataError("confusion matrix: prediction " + std::to_string(p) + " outside [0, " +
                      std::to_string(classes_) + ")");
    }
  }
  kernels::confusion_accumulate(classes_, truth, prediction, counts_);
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

MiouResult miou(const ConfusionMatrix& cm) {
  const auto c = cm.classes();
  MiouResult r{std::vector<double>(c, 0.0), std::vector<bool>(c, false), 0.0};
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < c; ++k) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < c; ++j) {
      row += cm.at(k, j);
      col += cm.at(j, k);
    }
    const auto tp = cm.at(k, k);
    const auto denom = row + col - tp;
    if (denom == 0) continue;
    r.counted[k] = true;
    r.per_class[k] = static_cast<double>(tp) / static_cast<double>(denom);
    sum += r.per_class[k];
    ++n;
  }
  r.mean = n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

}  // namespace cdpcl::evalreport
