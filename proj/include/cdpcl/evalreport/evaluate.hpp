#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cdpcl/evalreport/metrics.hpp"
#include "cdpcl/segtrain/trainer.hpp"
#include "cdpcl/synthdomains/dataset.hpp"

namespace cdpcl::evalreport {

/// Per-pixel argmax of the logits (lowest index on ties), B*H*W entries.
std::vector<std::int32_t> predict(const segtrain::SegNet& net, const Tensor& images);

struct DomainResult {
  std::string domain;
  std::size_t images = 0;
  ConfusionMatrix confusion;
  MiouResult miou;
};

/// Throws DataError on an empty dataset and ConfigError on a class-count
/// mismatch.
DomainResult evaluate_domain(const segtrain::Model& model, const synth::Dataset& data, std::size_t batch = 8);
std::vector<DomainResult> evaluate(const std::filesystem::path& checkpoint,
                                   const std::vector<std::filesystem::path>& domain_dirs);

/// Dataset-level class features against the model's prototype banks. Both
/// sides are L2-normalized, as in the contrastive losses.
struct DiscrepancyTables {
  std::string domain;
  std::size_t classes = 0;
  std::vector<bool> present;   // class has labelled pixels in the dataset
  std::vector<bool> src_init;  // source prototype initialized
  std::vector<bool> aug_init;
  std::vector<double> l1_src;  // mean |f - p| over feature dims; NaN when absent
  std::vector<double> l1_aug;
  std::vector<double> cos_src;  // C x C, [k][i] = cos(prototype k, feature i); NaN when absent
  std::vector<double> cos_aug;

  /// Mean diagonal minus mean off-diagonal over entries where both classes
  /// are available.
  double diagonal_margin(bool augmented) const;
};

DiscrepancyTables discrepancy_report(const segtrain::Model& model, const synth::Dataset& data,
                                     std::size_t batch = 8);

}  // namespace cdpcl::evalreport
