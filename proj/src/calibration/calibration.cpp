#include "cdpcl/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cdpcl/errors.hpp"
#include "cdpcl/numerics/diagnostics.hpp"
#include "cdpcl/numerics/ops.hpp"

namespace cdpcl::calibration {
namespace {

void check_bank_pair(const char* op, const Tensor& a, const Tensor& b, const ClassMask& valid) {
  if (a.rank() != 2 || a.shape() != b.shape() || valid.size() != a.dim(0)) {
    throw DimensionError(std::string(op) + ": prototype banks " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " with " + std::to_string(valid.size()) + " class flags");
  }
}

}  // namespace

std::size_t count_valid(const ClassMask& valid) {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
}

Tensor difference_matrix(const Tensor& proto_src, const Tensor& proto_aug, const ClassMask& valid) {
  check_bank_pair("difference_matrix", proto_src, proto_aug, valid);
  const auto classes = proto_src.dim(0), dim = proto_src.dim(1);
  std::vector<double> d(classes * dim, 0.0);
  const auto s = proto_src.values();
  const auto a = proto_aug.values();
  for (std::size_t c = 0; c < classes; ++c) {
    if (!valid[c]) continue;
    for (std::size_t j = 0; j < dim; ++j) d[c * dim + j] = std::abs(s[c * dim + j] - a[c * dim + j]);
  }
  return Tensor(proto_src.shape(), std::move(d));
}

Tensor uncertainty_matrix(const Tensor& difference, const ClassMask& valid) {
  if (difference.rank() != 2 || valid.size() != difference.dim(0)) {
    throw DimensionError("uncertainty_matrix: difference " + shape_string(difference.shape()) + " with " +
                         std::to_string(valid.size()) + " class flags");
  }
  const auto classes = difference.dim(0), dim = difference.dim(1);
  std::vector<double> u(classes * dim, 1.0);
  if (count_valid(valid) < 2) {
    diagnostics::record(diagnostics::Warning::CalibrationSkipped);
    return Tensor(difference.shape(), std::move(u));
  }
  const auto d = difference.values();
  for (std::size_t j = 0; j < dim; ++j) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) {
      if (valid[c]) m = std::max(m, d[c * dim + j]);
    }
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      if (valid[c]) z += std::exp(d[c * dim + j] - m);
    }
    for (std::size_t c = 0; c < classes; ++c) {
      if (valid[c]) u[c * dim + j] = 1.0 - std::exp(d[c * dim + j] - m) / z;
    }
  }
  return Tensor(difference.shape(), std::move(u));
}

UncertaintyMatrix::UncertaintyMatrix(std::size_t classes, std::size_t dim, double momentum)
    : u_(Tensor::full(Shape{classes, dim}, 1.0)), momentum_(momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("uncertainty momentum must lie in [0, 1), got " + std::to_string(momentum));
  }
}

void UncertaintyMatrix::update(const Tensor& current) {
  if (current.shape() != u_.shape()) {
    throw DimensionError("UncertaintyMatrix::update: expected " + shape_string(u_.shape()) + ", got " +
                         shape_string(current.shape()));
  }
  if (!initialized_) {
    u_ = current.detach();
    initialized_ = true;
    return;
  }
  std::vector<double> blended(u_.numel());
  const auto prev = u_.values();
  const auto cur = current.values();
  for (std::size_t i = 0; i < blended.size(); ++i) blended[i] = momentum_ * prev[i] + (1.0 - momentum_) * cur[i];
  u_ = Tensor(u_.shape(), std::move(blended));
}

void UncertaintyMatrix::restore(const Tensor& u, bool initialized) {
  if (u.shape() != u_.shape()) {
    throw DimensionError("UncertaintyMatrix::restore: expected " + shape_string(u_.shape()) + ", got " +
                         shape_string(u.shape()));
  }
  u_ = u.detach();
  initialized_ = initialized;
}

Tensor similarity_matrix(const Tensor& proto_src, const Tensor& proto_aug, const ClassMask& valid) {
  check_bank_pair("similarity_matrix", proto_src, proto_aug, valid);
  const auto classes = proto_src.dim(0), dim = proto_src.dim(1);
  const auto s = proto_src.values();
  const auto a = proto_aug.values();
  const auto norm = [dim](std::span<const double> v, std::size_t row) {
    double sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) sq += v[row * dim + j] * v[row * dim + j];
    return std::sqrt(sq);
  };

  ClassMask usable = valid;
  std::vector<double> ns(classes, 0.0), na(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    if (!valid[c]) continue;
    ns[c] = norm(s, c);
    na[c] = norm(a, c);
    if (ns[c] < kGuardEpsilon || na[c] < kGuardEpsilon) {
      diagnostics::record(diagnostics::Warning::CalibrationSkipped);
      usable[c] = false;
    }
  }

  std::vector<double> sim(classes * classes);
  for (std::size_t i = 0; i < classes; ++i) {
    for (std::size_t k = 0; k < classes; ++k) {
      if (!usable[i] || !usable[k]) {
        sim[i * classes + k] = i == k ? 1.0 : 0.0;
        continue;
      }
      double dot = 0.0;
      for (std::size_t j = 0; j < dim; ++j) dot += s[i * dim + j] * a[k * dim + j];
      sim[i * classes + k] = std::clamp(dot / (ns[i] * na[k]), -1.0, 1.0);
    }
  }
  return Tensor(Shape{classes, classes}, std::move(sim));
}

Tensor hard_weight_matrix(const Tensor& similarity, double floor) {
  if (similarity.rank() != 2 || similarity.dim(0) != similarity.dim(1)) {
    throw DimensionError("hard_weight_matrix: expected a square matrix, got " + shape_string(similarity.shape()));
  }
  const auto classes = similarity.dim(0);
  const auto s = similarity.values();
  std::vector<double> h(classes * classes);
  for (std::size_t i = 0; i < classes; ++i) {
    for (std::size_t k = 0; k < classes; ++k) {
      const double target = i == k ? 0.0 : 1.0;
      h[i * classes + k] = std::max(std::abs(target - s[i * classes + k]), floor);
    }
  }
  return Tensor(similarity.shape(), std::move(h));
}

}  // namespace cdpcl::calibration
