#include "cdpcl/segtrain/segnet.hpp"

#include <cmath>
#include <random>
#include "cdpcl/errors.hpp"
#include "cdpcl/numerics/ops.hpp"
#include "cdpcl/rng.hpp"

namespace cdpcl::segtrain {
namespace {

enum Param : std::size_t { kEnc1W, kEnc1B, kEnc2W, kEnc2B, kEnc3W, kEnc3B, kHeadW, kHeadB };

}  // namespace

SegNet::SegNet(const SegNetShape& shape, std::uint64_t seed) : shape_(shape) {
  Rng rng(derive_seed({seed, hash_string("segnet-init")}));
  const auto layer = [&](const char* name, std::size_t out, std::size_t in, std::size_t k) {
    const double bound = std::sqrt(1.0 / static_cast<double>(in * k * k));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> w(out * in * k * k), b(out);
    for (auto& x : w) x = u(rng);
    for (auto& x : b) x = u(rng);
    params_.push_back({std::string(name) + ".weight", Tensor(Shape{out, in, k, k}, std::move(w), true)});
    params_.push_back({std::string(name) + ".bias", Tensor(Shape{out}, std::move(b), true)});
  };
  layer("enc1", shape.width1, 3, 3);
  layer("enc2", shape.width2, shape.width1, 3);
  layer("enc3", shape.feat_dim, shape.width2, 3);
  layer("head", shape.classes, shape.feat_dim, 1);
}

void SegNet::check_input(const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw DimensionError("segnet: expected B x 3 x H x W images, got " + shape_string(images.shape()));
  }
  if (images.dim(2) % kOutputStride != 0 || images.dim(3) % kOutputStride != 0) {
    throw DimensionError("segnet: image size " + shape_string(images.shape()) + " not divisible by 4");
  }
}

Tensor SegNet::encode(const Tensor& images) const {
  check_input(images);
  const auto in = mul_scalar(add_scalar(images, -kInputMean), 1.0 / kInputStd);
  auto x = relu(conv2d(in, param(kEnc1W), param(kEnc1B), {1, 1}));
  x = relu(conv2d(x, param(kEnc2W), param(kEnc2B), {2, 1}));
  return relu(conv2d(x, param(kEnc3W), param(kEnc3B), {2, 1}));
}

Tensor SegNet::frozen_forward(const Tensor& images) const {
  NoGradGuard frozen;
  return encode(images);
}

Tensor SegNet::head(const Tensor& features) const {
  return upsample_nearest(conv2d(features, param(kHeadW), param(kHeadB)), kOutputStride);
}

ForwardResult SegNet::forward(const Tensor& images) const {
  auto features = encode(images);
  auto logits = head(features);
  return {std::move(features), std::move(logits)};
}

void SegNet::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void SegNet::load(const std::vector<NamedTensor>& checkpoint) {
  for (auto& p : params_) {
    const auto& src = find_tensor(checkpoint, p.name);
    if (src.shape() != p.tensor.shape()) {
      throw ConfigError("checkpoint tensor '" + p.name + "' has shape " + shape_string(src.shape()) +
                        ", model expects " + shape_string(p.tensor.shape()));
    }
    std::copy(src.values().begin(), src.values().end(), p.tensor.mutable_values().begin());
  }
}

}  // namespace cdpcl::segtrain
