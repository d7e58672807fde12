#pragma once

#include <optional>
#include <string>

#include "cdpcl/labels.hpp"
#include "cdpcl/numerics/tensor.hpp"
#include "cdpcl/protobank.hpp"

namespace cdpcl::losses {

struct LossConfig {
  double tau = 0.8;    // plain PCL
  double tau_u = 0.8;  // UPCL
  double tau_h = 0.8;  // HPCL
  double lambda1 = 0.1;
  double lambda2 = 0.01;
  bool include_positive_in_denominator = true;
  bool normalize_features = true;

  /// Throws ConfigError on non-positive temperatures or negative weights.
  void validate() const;
};

/// Which loss terms take part in training. Rows of the component ablation.
enum class Ablation { Baseline, Pcl, Upcl, Hpcl, Cdpcl };

std::string to_string(Ablation a);
/// Throws ConfigError for unknown names.
Ablation parse_ablation(const std::string& name);
bool uses_pcl(Ablation a);
bool uses_upcl(Ablation a);
bool uses_hpcl(Ablation a);

/// Mean over non-ignored pixels of -log softmax(logits)[label].
/// logits: B x C x H x W. Returns a constant 0 (with a warning) when every
/// pixel is ignored.
Tensor seg_loss(const Tensor& logits, const LabelMap& labels, std::int32_t ignore_index = kIgnoreIndex);

// Prototypical contrastive losses. Anchors are classes present in the batch
// with an initialized prototype; each anchor i contributes
//   -log( exp(l_ii) / sum_{k in denom(i)} exp(l_ik) ),  l_ik = <p_k, c_i> / tau
// summed over anchors. With normalize_features, c and p are L2-normalized
// first. Gradients reach only the class features.

Tensor pcl_loss(const protobank::Prototypes& prototypes, const protobank::ClassFeatures& cf,
                const LossConfig& cfg);

/// Prototype rows are rescaled elementwise by the uncertainty rows (C x N)
/// before normalization. Temperature tau_u.
Tensor upcl_loss(const protobank::Prototypes& prototypes, const Tensor& uncertainty,
                 const protobank::ClassFeatures& cf, const LossConfig& cfg);

/// Positive logit scaled by H[i][i], negative k by 1 / H[i][k]. The weights
/// apply after normalization so they are not cancelled by it. Temperature
/// tau_h.
Tensor hpcl_loss(const protobank::Prototypes& prototypes, const Tensor& hard_weights,
                 const protobank::ClassFeatures& cf, const LossConfig& cfg);

/// l_seg + w1 * l_1 + w2 * l_2 for the terms that are present. Throws
/// DivergenceError if any supplied term is non-finite.
Tensor total_loss(const Tensor& l_seg, const std::optional<Tensor>& l_1, double w1,
                  const std::optional<Tensor>& l_2, double w2);

/// Convenience form: both terms present, weights lambda1 and lambda2.
Tensor total_loss(const Tensor& l_seg, const Tensor& l_upcl, const Tensor& l_hpcl, const LossConfig& cfg);

}  // namespace cdpcl::losses
