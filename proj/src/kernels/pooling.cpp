#include "cdpcl/kernels/pooling.hpp"

#include <algorithm>
#include <vector>

#include "cdpcl/kernels/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cdpcl::kernels {
namespace {

bool in_range(std::int32_t label, std::size_t classes) {
  return label >= 0 && static_cast<std::size_t>(label) < classes;
}

}  // namespace

void class_sums(std::size_t batch, std::size_t channels, std::size_t plane, std::size_t classes,
                std::span<const double> features, std::span<const std::int32_t> labels,
                std::span<double> sums, std::span<std::size_t> counts) {
  std::fill(sums.begin(), sums.end(), 0.0);
  std::fill(counts.begin(), counts.end(), 0);
  for (auto l : labels) {
    if (in_range(l, classes)) ++counts[static_cast<std::size_t>(l)];
  }
  // Channels are independent; each visits pixels in (b, y, x) order, which
  // matches the reference summation order exactly.
  const auto n = static_cast<std::ptrdiff_t>(channels);
  const int threads = thread_count();
#pragma omp parallel for num_threads(threads) if (threads > 1) schedule(static)
  for (std::ptrdiff_t ch = 0; ch < n; ++ch) {
    for (std::size_t b = 0; b < batch; ++b) {
      const double* f = features.data() + (b * channels + static_cast<std::size_t>(ch)) * plane;
      const std::int32_t* lab = labels.data() + b * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        if (in_range(lab[p], classes)) sums[static_cast<std::size_t>(lab[p]) * channels + ch] += f[p];
      }
    }
  }
}

void confusion_accumulate(std::size_t classes, std::span<const std::int32_t> truth,
                          std::span<const std::int32_t> prediction, std::span<std::uint64_t> counts) {
  const int threads = thread_count();
  const auto n = static_cast<std::ptrdiff_t>(truth.size());
  std::vector<std::uint64_t> partial(static_cast<std::size_t>(threads) * classes * classes, 0);
#pragma omp parallel num_threads(threads) if (threads > 1)
  {
    int tid = 0;
#ifdef _OPENMP
    tid = omp_get_thread_num();
#endif
    auto* local = partial.data() + static_cast<std::size_t>(tid) * classes * classes;
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto t = truth[i];
      const auto p = prediction[i];
      if (in_range(t, classes) && in_range(p, classes)) ++local[static_cast<std::size_t>(t) * classes + p];
    }
  }
  for (int t = 0; t < threads; ++t) {
    for (std::size_t i = 0; i < classes * classes; ++i) counts[i] += partial[t * classes * classes + i];
  }
}

namespace reference {

void class_sums(std::size_t batch, std::size_t channels, std::size_t plane, std::size_t classes,
                std::span<const double> features, std::span<const std::int32_t> labels,
                std::span<double> sums, std::span<std::size_t> counts) {
  std::fill(sums.begin(), sums.end(), 0.0);
  std::fill(counts.begin(), counts.end(), 0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      const auto l = labels[b * plane + p];
      if (!in_range(l, classes)) continue;
      ++counts[static_cast<std::size_t>(l)];
      for (std::size_t ch = 0; ch < channels; ++ch) {
        sums[static_cast<std::size_t>(l) * channels + ch] += features[(b * channels + ch) * plane + p];
      }
    }
  }
}

void confusion_accumulate(std::size_t classes, std::span<const std::int32_t> truth,
                          std::span<const std::int32_t> prediction, std::span<std::uint64_t> counts) {
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (in_range(truth[i], classes) && in_range(prediction[i], classes)) {
      ++counts[static_cast<std::size_t>(truth[i]) * classes + prediction[i]];
    }
  }
}

}  // namespace reference
}  // namespace cdpcl::kernels
