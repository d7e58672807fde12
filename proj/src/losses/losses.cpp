#include "cdpcl/losses.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "cdpcl/errors.hpp"
#include "cdpcl/numerics/diagnostics.hpp"
#include "cdpcl/numerics/ops.hpp"

namespace cdpcl::losses {

void LossConfig::validate() const {
  if (!(tau > 0) || !(tau_u > 0) || !(tau_h > 0)) throw ConfigError("temperatures must be positive");
  if (!(lambda1 >= 0) || !(lambda2 >= 0)) throw ConfigError("loss weights must be non-negative");
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::Baseline: return "baseline";
    case Ablation::Pcl: return "pcl";
    case Ablation::Upcl: return "upcl";
    case Ablation::Hpcl: return "hpcl";
    case Ablation::Cdpcl: return "cdpcl";
  }
  return "?";
}

Ablation parse_ablation(const std::string& name) {
  for (auto a : {Ablation::Baseline, Ablation::Pcl, Ablation::Upcl, Ablation::Hpcl, Ablation::Cdpcl}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown ablation '" + name + "' (expected baseline|pcl|upcl|hpcl|cdpcl)");
}

bool uses_pcl(Ablation a) { return a == Ablation::Pcl; }
bool uses_upcl(Ablation a) { return a == Ablation::Upcl || a == Ablation::Cdpcl; }
bool uses_hpcl(Ablation a) { return a == Ablation::Hpcl || a == Ablation::Cdpcl; }

Tensor seg_loss(const Tensor& logits, const LabelMap& labels, std::int32_t ignore_index) {
  if (logits.rank() != 4 || logits.dim(0) != labels.batch || logits.dim(2) != labels.height ||
      logits.dim(3) != labels.width) {
    throw DimensionError("seg_loss: logits " + shape_string(logits.shape()) + " vs labels " +
                         std::to_string(labels.batch) + "x" + std::to_string(labels.height) + "x" +
                         std::to_string(labels.width));
  }
  const auto classes = logits.dim(1);
  validate_labels(labels, classes, ignore_index);
  const auto plane = labels.plane();

  std::vector<std::size_t> picks;  // flat index into logits of each labelled pixel's true class
  picks.reserve(labels.data.size());
  for (std::size_t b = 0; b < labels.batch; ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      const auto l = labels.data[b * plane + p];
      if (l == ignore_index) continue;
      picks.push_back((b * classes + static_cast<std::size_t>(l)) * plane + p);
    }
  }
  if (picks.empty()) {
    diagnostics::record(diagnostics::Warning::AllPixelsIgnored);
    return Tensor::scalar(0.0);
  }

  const auto logp = log_softmax(logits, 1);
  const auto lp = logp.values();
  double total = 0.0;
  for (auto i : picks) total -= lp[i];
  const double inv = 1.0 / static_cast<double>(picks.size());
  return make_result("nll", Shape{}, {total * inv}, {logp},
                     [picks = std::move(picks), inv](std::span<const double> g, const detail::GradSink& sink) {
                       double* gl = sink[0];
                       if (!gl) return;
                       for (auto i : picks) gl[i] -= g[0] * inv;
                     });
}

namespace {

std::vector<std::size_t> active_classes(const protobank::Prototypes& prototypes,
                                        const protobank::ClassFeatures& cf) {
  const auto classes = cf.present.size();
  if (prototypes.rows.rank() != 2 || prototypes.rows.dim(0) != classes ||
      prototypes.initialized.size() != classes || cf.features.shape() != prototypes.rows.shape()) {
    throw DimensionError("contrastive loss: prototypes " + shape_string(prototypes.rows.shape()) +
                         " vs class features " + shape_string(cf.features.shape()));
  }
  std::vector<std::size_t> active;
  for (std::size_t c = 0; c < classes; ++c) {
    if (cf.present[c] && prototypes.initialized[c]) active.push_back(c);
  }
  return active;
}

// Shared InfoNCE core. rows: C x N constant prototypes (already rescaled for
// UPCL). pair_weight, if given, is a C x C constant multiplied into the
// (anchor, prototype) logits.
Tensor contrast(const Tensor& rows, const std::vector<bool>& initialized, const protobank::ClassFeatures& cf,
                const Tensor* pair_weight, double tau, const LossConfig& cfg) {
  const auto active = active_classes({rows, initialized}, cf);
  if (active.empty()) {
    diagnostics::record(diagnostics::Warning::EmptyActiveSet);
    return Tensor::scalar(0.0);
  }
  const auto n = active.size();
  if (!cfg.include_positive_in_denominator && n == 1) {
    diagnostics::record(diagnostics::Warning::SingletonActiveSet);
    return Tensor::scalar(0.0);
  }

  auto anchors = index_select(cf.features, 0, active);
  Tensor protos;
  {
    NoGradGuard frozen;
    protos = index_select(rows, 0, active);
    if (cfg.normalize_features) protos = l2_normalize(protos, 1);
  }
  if (cfg.normalize_features) anchors = l2_normalize(anchors, 1);

  auto logits = matmul(anchors, transpose(protos));  // [anchor i, prototype k]
  if (pair_weight) {
    const auto classes = cf.present.size();
    std::vector<double> w(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) w[i * n + k] = (*pair_weight)[active[i] * classes + active[k]];
    }
    logits = mul(logits, Tensor(Shape{n, n}, std::move(w)));
  }
  logits = mul_scalar(logits, 1.0 / tau);

  std::vector<std::size_t> diagonal(n);
  for (std::size_t i = 0; i < n; ++i) diagonal[i] = i * n + i;
  const auto positive = index_select(reshape(logits, Shape{n * n}), 0, diagonal);

  Tensor denominator_logits = logits;
  if (!cfg.include_positive_in_denominator) {
    std::vector<double> mask(n * n, 0.0);
    for (auto d : diagonal) mask[d] = -std::numeric_limits<double>::infinity();
    denominator_logits = add(logits, Tensor(Shape{n, n}, std::move(mask)));
  }
  return sum(sub(logsumexp(denominator_logits, 1), positive));
}

}  // namespace

Tensor pcl_loss(const protobank::Prototypes& prototypes, const protobank::ClassFeatures& cf,
                const LossConfig& cfg) {
  return contrast(prototypes.rows, prototypes.initialized, cf, nullptr, cfg.tau, cfg);
}

Tensor upcl_loss(const protobank::Prototypes& prototypes, const Tensor& uncertainty,
                 const protobank::ClassFeatures& cf, const LossConfig& cfg) {
  if (uncertainty.shape() != prototypes.rows.shape()) {
    throw DimensionError("upcl_loss: uncertainty " + shape_string(uncertainty.shape()) + " vs prototypes " +
                         shape_string(prototypes.rows.shape()));
  }
  Tensor weighted;
  {
    NoGradGuard frozen;
    weighted = mul(prototypes.rows, uncertainty);
  }
  return contrast(weighted, prototypes.initialized, cf, nullptr, cfg.tau_u, cfg);
}

Tensor hpcl_loss(const protobank::Prototypes& prototypes, const Tensor& hard_weights,
                 const protobank::ClassFeatures& cf, const LossConfig& cfg) {
  const auto classes = cf.present.size();
  if (hard_weights.shape() != Shape{classes, classes}) {
    throw DimensionError("hpcl_loss: hard weights " + shape_string(hard_weights.shape()) + " for " +
                         std::to_string(classes) + " classes");
  }
  std::vector<double> w(classes * classes);
  const auto h = hard_weights.values();
  for (std::size_t i = 0; i < classes; ++i) {
    for (std::size_t k = 0; k < classes; ++k) {
      w[i * classes + k] = i == k ? h[i * classes + k] : 1.0 / h[i * classes + k];
    }
  }
  const Tensor pair_weight(Shape{classes, classes}, std::move(w));
  return contrast(prototypes.rows, prototypes.initialized, cf, &pair_weight, cfg.tau_h, cfg);
}

Tensor total_loss(const Tensor& l_seg, const std::optional<Tensor>& l_1, double w1, const std::optional<Tensor>& l_2,
                  double w2) {
  const auto check = [](const char* name, const Tensor& t) {
    if (!std::isfinite(t.item())) {
      throw DivergenceError(std::string("total_loss: ") + name + " is " + std::to_string(t.item()));
    }
  };
  check("l_seg", l_seg);
  auto total = l_seg;
  if (l_1) {
    check("first contrastive term", *l_1);
    total = add(total, mul_scalar(*l_1, w1));
  }
  if (l_2) {
    check("second contrastive term", *l_2);
    total = add(total, mul_scalar(*l_2, w2));
  }
  return total;
}

Tensor total_loss(const Tensor& l_seg, const Tensor& l_upcl, const Tensor& l_hpcl, const LossConfig& cfg) {
  return total_loss(l_seg, l_upcl, cfg.lambda1, l_hpcl, cfg.lambda2);
}

}  // namespace cdpcl::losses
