#pragma once

#include <cstddef>
#include <vector>

#include "cdpcl/labels.hpp"
#include "cdpcl/numerics/tensor.hpp"

namespace cdpcl::protobank {

/// Masked batch averages of a feature map, one row per class.
struct ClassFeatures {
  Tensor features;            // C x N; differentiable w.r.t. the source feature map
  std::vector<bool> present;  // class has at least one labelled pixel in the batch
};

/// Read-only prototype rows with their initialization flags.
struct Prototypes {
  Tensor rows;  // C x N, never on a graph
  std::vector<bool> initialized;
};

/// Nearest-neighbour label downsampling: output (y, x) takes the top-left
/// pixel of its stride cell. Throws DimensionError on non-divisible sizes.
LabelMap downsample_labels(const LabelMap& labels, std::size_t height, std::size_t width);

/// features: B x N x h x w; labels: B x H x W with H, W integer multiples of
/// h, w. Absent classes get all-zero rows.
ClassFeatures pool_class_features(const Tensor& features, const LabelMap& labels, std::size_t classes,
                                  std::int32_t ignore_index = kIgnoreIndex);

/// EMA class prototypes: row <- m * row + (1 - m) * feature for each class
/// present in the update. A class seen for the first time is copied in
/// directly. Rows are stored unnormalized and are never differentiated.
class PrototypeBank {
 public:
  PrototypeBank(std::size_t classes, std::size_t dim, double momentum);

  void update(const ClassFeatures& cf);

  std::size_t classes() const { return classes_; }
  std::size_t dim() const { return dim_; }
  double momentum() const { return momentum_; }
  const std::vector<bool>& initialized() const { return initialized_; }
  std::span<const double> row(std::size_t c) const { return {rows_.data() + c * dim_, dim_}; }

  Tensor rows() const;
  Prototypes view() const { return {rows(), initialized_}; }

  /// Rebuild from serialized rows (C x N) and flags (C entries, 0 or 1).
  void restore(const Tensor& rows, const Tensor& flags);
  Tensor flags() const;

 private:
  std::size_t classes_;
  std::size_t dim_;
  double momentum_;
  std::vector<double> rows_;
  std::vector<bool> initialized_;
};

}  // namespace cdpcl::protobank
