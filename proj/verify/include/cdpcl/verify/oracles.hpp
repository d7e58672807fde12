#pragma once

// Straight-loop reimplementations used to cross-check the vectorized code.
// They share no code with the library beyond plain containers.

#include <cstdint>
#include <vector>

namespace cdpcl::verify::oracle {

using Matrix = std::vector<std::vector<double>>;

/// logits flat B x C x H x W, labels flat B x H x W.
double seg_loss(const std::vector<double>& logits, std::size_t batch, std::size_t classes, std::size_t height,
                std::size_t width, const std::vector<std::int32_t>& labels, std::int32_t ignore = 255);

struct Pooled {
  Matrix features;  // C x N
  std::vector<bool> present;
};

/// features flat B x N x h x w; labels flat B x H x W with top-left sampling
/// per stride cell.
Pooled pool(const std::vector<double>& features, std::size_t batch, std::size_t dim, std::size_t h, std::size_t w,
            const std::vector<std::int32_t>& labels, std::size_t height, std::size_t width, std::size_t classes,
            std::int32_t ignore = 255);

struct ContrastOptions {
  double tau = 0.8;
  bool include_positive = true;
  bool normalize = true;
};

/// Sum over anchors i (present and initialized) of
///   log sum_k exp(w_ik <p_k, c_i> / tau) - w_ii <p_i, c_i> / tau
/// with w = 1 when weights is null.
double contrast(const Matrix& protos, const std::vector<bool>& initialized, const Matrix& feats,
                const std::vector<bool>& present, const Matrix* weights, const ContrastOptions& opt);

double pcl(const Matrix& protos, const std::vector<bool>& initialized, const Matrix& feats,
           const std::vector<bool>& present, const ContrastOptions& opt);
double upcl(const Matrix& protos, const Matrix& u, const std::vector<bool>& initialized, const Matrix& feats,
            const std::vector<bool>& present, const ContrastOptions& opt);
double hpcl(const Matrix& protos, const Matrix& h, const std::vector<bool>& initialized, const Matrix& feats,
            const std::vector<bool>& present, const ContrastOptions& opt);

Matrix difference(const Matrix& src, const Matrix& aug, const std::vector<bool>& valid);
Matrix uncertainty(const Matrix& d, const std::vector<bool>& valid);
Matrix similarity(const Matrix& src, const Matrix& aug, const std::vector<bool>& valid);
Matrix hard_weight(const Matrix& s, double floor = 1e-4);

std::vector<std::vector<std::uint64_t>> confusion(const std::vector<std::int32_t>& truth,
                                                  const std::vector<std::int32_t>& pred, std::size_t classes);
/// Per-pixel brute force: for each class count TP, FP, FN directly from the
/// label maps. Returns per-class IoU (NaN when excluded) and the mean.
std::pair<std::vector<double>, double> miou(const std::vector<std::int32_t>& truth,
                                            const std::vector<std::int32_t>& pred, std::size_t classes);

/// Direct six-loop convolution, NCHW / OIHW, zero padding.
std::vector<double> conv2d(const std::vector<double>& x, const std::vector<double>& w, const std::vector<double>& b,
                           std::size_t batch, std::size_t cin, std::size_t h, std::size_t wd, std::size_t cout,
                           std::size_t k, std::size_t stride, std::size_t pad);

}  // namespace cdpcl::verify::oracle
