#include "cdpcl/protobank.hpp"

#include <string>

#include "cdpcl/errors.hpp"
#include "cdpcl/kernels/pooling.hpp"

namespace cdpcl {

void validate_labels(const LabelMap& labels, std::size_t classes, std::int32_t ignore_index) {
  if (labels.data.size() != labels.batch * labels.plane()) {
    throw DimensionError("labels: " + std::to_string(labels.data.size()) + " entries for a " +
                         std::to_string(labels.batch) + "x" + std::to_string(labels.height) + "x" +
                         std::to_string(labels.width) + " map");
  }
  for (auto l : labels.data) {
    if (l == ignore_index) continue;
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw DataError("label value " + std::to_string(l) + " outside [0, " + std::to_string(classes) +
                      ") and not the ignore index " + std::to_string(ignore_index));
    }
  }
}

}  // namespace cdpcl

namespace cdpcl::protobank {

LabelMap downsample_labels(const LabelMap& labels, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0 || labels.height % height != 0 || labels.width % width != 0) {
    throw DimensionError("downsample_labels: " + std::to_string(labels.height) + "x" +
                         std::to_string(labels.width) + " is not a multiple of " + std::to_string(height) +
                         "x" + std::to_string(width));
  }
  const auto sy = labels.height / height;
  const auto sx = labels.width / width;
  LabelMap out{labels.batch, height, width, std::vector<std::int32_t>(labels.batch * height * width)};
  for (std::size_t b = 0; b < labels.batch; ++b) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) out.data[(b * height + y) * width + x] = labels.at(b, y * sy, x * sx);
    }
  }
  return out;
}

ClassFeatures pool_class_features(const Tensor& features, const LabelMap& labels, std::size_t classes,
                                  std::int32_t ignore_index) {
  if (features.rank() != 4 || features.dim(0) != labels.batch) {
    throw DimensionError("pool_class_features: features " + shape_string(features.shape()) +
                         " do not match a label batch of " + std::to_string(labels.batch));
  }
  validate_labels(labels, classes, ignore_index);
  const auto batch = features.dim(0), channels = features.dim(1);
  const auto small = downsample_labels(labels, features.dim(2), features.dim(3));
  const auto plane = small.plane();

  std::vector<double> sums(classes * channels);
  std::vector<std::size_t> counts(classes);
  kernels::class_sums(batch, channels, plane, classes, features.values(), small.data, sums, counts);

  ClassFeatures cf;
  cf.present.resize(classes);
  std::vector<double> inv(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    cf.present[c] = counts[c] > 0;
    if (counts[c] == 0) continue;
    inv[c] = 1.0 / static_cast<double>(counts[c]);
    for (std::size_t ch = 0; ch < channels; ++ch) sums[c * channels + ch] *= inv[c];
  }
  cf.features = make_result(
      "pool_class_features", Shape{classes, channels}, std::move(sums), {features},
      [small_labels = small.data, inv, batch, channels, plane, classes](std::span<const double> g,
                                                                       const detail::GradSink& sink) {
        double* gf = sink[0];
        if (!gf) return;
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t p = 0; p < plane; ++p) {
            const auto l = small_labels[b * plane + p];
            if (l < 0 || static_cast<std::size_t>(l) >= classes) continue;
            const auto c = static_cast<std::size_t>(l);
            for (std::size_t ch = 0; ch < channels; ++ch) {
              gf[(b * channels + ch) * plane + p] += g[c * channels + ch] * inv[c];
            }
          }
        }
      });
  return cf;
}

PrototypeBank::PrototypeBank(std::size_t classes, std::size_t dim, double momentum)
    : classes_(classes), dim_(dim), momentum_(momentum), rows_(classes * dim, 0.0), initialized_(classes, false) {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("prototype momentum must lie in [0, 1), got " + std::to_string(momentum));
  }
}

void PrototypeBank::update(const ClassFeatures& cf) {
  if (cf.features.rank() != 2 || cf.features.dim(0) != classes_ || cf.features.dim(1) != dim_ ||
      cf.present.size() != classes_) {
    throw DimensionError("PrototypeBank::update: class features " + shape_string(cf.features.shape()) +
                         " do not match bank " + std::to_string(classes_) + "x" + std::to_string(dim_));
  }
  const auto v = cf.features.values();
  for (std::size_t c = 0; c < classes_; ++c) {
    if (!cf.present[c]) continue;
    double* row = rows_.data() + c * dim_;
    const double* f = v.data() + c * dim_;
    if (!initialized_[c]) {
      std::copy_n(f, dim_, row);
      initialized_[c] = true;
      continue;
    }
    for (std::size_t j = 0; j < dim_; ++j) row[j] = momentum_ * row[j] + (1.0 - momentum_) * f[j];
  }
}

Tensor PrototypeBank::rows() const { return Tensor(Shape{classes_, dim_}, rows_); }

Tensor PrototypeBank::flags() const {
  std::vector<double> f(classes_);
  for (std::size_t c = 0; c < classes_; ++c) f[c] = initialized_[c] ? 1.0 : 0.0;
  return Tensor(Shape{classes_}, std::move(f));
}

void PrototypeBank::restore(const Tensor& rows, const Tensor& flags) {
  if (rows.shape() != Shape{classes_, dim_} || flags.numel() != classes_) {
    throw DimensionError("PrototypeBank::restore: got rows " + shape_string(rows.shape()) + " and flags " +
                         shape_string(flags.shape()));
  }
  rows_.assign(rows.values().begin(), rows.values().end());
  for (std::size_t c = 0; c < classes_; ++c) initialized_[c] = flags[c] != 0.0;
}

}  // namespace cdpcl::protobank
