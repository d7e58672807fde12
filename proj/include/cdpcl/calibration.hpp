#pragma once

#include <cstddef>
#include <vector>

#include "cdpcl/numerics/tensor.hpp"

namespace cdpcl::calibration {

/// Lower clamp on hard weights; negatives are divided by them in HPCL.
inline constexpr double kHardWeightFloor = 1e-4;

using ClassMask = std::vector<bool>;

std::size_t count_valid(const ClassMask& valid);

/// Elementwise |src - aug| on valid rows (C x N); invalid rows are zero.
Tensor difference_matrix(const Tensor& proto_src, const Tensor& proto_aug, const ClassMask& valid);

/// 1 - softmax over valid classes, independently for each feature column.
/// Invalid rows are 1. With fewer than two valid classes the whole matrix is
/// 1 and a CalibrationSkipped warning is recorded.
Tensor uncertainty_matrix(const Tensor& difference, const ClassMask& valid);

/// EMA-tracked uncertainty weights. The first update copies U_c in.
class UncertaintyMatrix {
 public:
  UncertaintyMatrix(std::size_t classes, std::size_t dim, double momentum);

  void update(const Tensor& current);

  const Tensor& value() const { return u_; }
  bool initialized() const { return initialized_; }
  double momentum() const { return momentum_; }

  void restore(const Tensor& u, bool initialized);

 private:
  Tensor u_;
  double momentum_;
  bool initialized_ = false;
};

/// S[i][k] = cos(src_i, aug_k). Rows and columns of invalid classes, and of
/// valid classes whose prototype norm is below the guard, are neutral
/// (diagonal 1, off-diagonal 0) so the derived hard weight is 1.
Tensor similarity_matrix(const Tensor& proto_src, const Tensor& proto_aug, const ClassMask& valid);

/// H = |M - E - S| clamped below at floor: H[i][i] = |S[i][i]|,
/// H[i][k] = |1 - S[i][k]|.
Tensor hard_weight_matrix(const Tensor& similarity, double floor = kHardWeightFloor);

}  // namespace cdpcl::calibration
