#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "cdpcl/calibration.hpp"
#include "cdpcl/labels.hpp"
#include "cdpcl/protobank.hpp"
#include "cdpcl/segtrain/config.hpp"
#include "cdpcl/segtrain/optimizer.hpp"
#include "cdpcl/segtrain/segnet.hpp"
#include "cdpcl/synthdomains/augment.hpp"
#include "cdpcl/synthdomains/dataset.hpp"

namespace cdpcl::segtrain {

struct Batch {
  Tensor images;  // B x 3 x H x W in [0, 1]
  LabelMap labels;
  std::vector<std::uint64_t> aug_seeds;  // one per image
};

/// Interleaved RGB images to a B x 3 x H x W tensor.
Tensor images_to_tensor(const std::vector<const synth::Image*>& images);
Tensor images_to_tensor(const std::vector<synth::Image>& images);
Batch make_batch(const synth::Dataset& data, const std::vector<std::size_t>& indices,
                 std::vector<std::uint64_t> aug_seeds = {});

/// Epoch-wise reshuffled index stream. The batch for iteration t is positions
/// [t * B, (t + 1) * B) of the concatenated epoch permutations, so batches are
/// a pure function of (seed, t).
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, std::size_t batch, std::uint64_t seed);
  std::vector<std::size_t> indices(std::size_t iteration) const;
  std::vector<std::uint64_t> aug_seeds(std::size_t iteration) const;

 private:
  const std::vector<std::size_t>& epoch(std::size_t e) const;

  std::size_t size_;
  std::size_t batch_;
  std::uint64_t seed_;
  mutable std::size_t cached_epoch_ = static_cast<std::size_t>(-1);
  mutable std::vector<std::size_t> cached_;
};

struct StepRecord {
  std::size_t iter = 0;
  double lr = 0.0;
  double l_seg = 0.0;
  double l_upcl = 0.0;  // PCL value in the pcl ablation
  double l_hpcl = 0.0;
  double l_total = 0.0;
  std::size_t active_classes = 0;
};

/// Everything that changes during training. Holds references into itself, so
/// it is neither copyable nor movable.
class TrainState {
 public:
  explicit TrainState(const TrainConfig& config);
  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;

  TrainConfig config;
  synth::AugmentParams augment;
  SegNet net;
  SgdMomentum optimizer;
  protobank::PrototypeBank bank_src;
  protobank::PrototypeBank bank_aug;
  calibration::UncertaintyMatrix uncertainty;
  std::size_t iteration = 0;

  std::vector<NamedTensor> checkpoint() const;
  void restore(const std::vector<NamedTensor>& checkpoint);
};

/// One iteration: augment, source forward, frozen augmented forward, class
/// pooling, bank updates, D / U, S / H, losses, backward, SGD step, counter.
/// Throws DivergenceError on a non-finite loss, before any parameter changes.
StepRecord train_step(TrainState& state, const Batch& batch);

std::string csv_header();
std::string csv_row(const StepRecord& r);

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::vector<StepRecord> records;
};

/// Writes <out_dir>/train.cfg, train_log.csv, checkpoint.cdpt and, with
/// checkpoint_every > 0, checkpoint_NNNNNN.cdpt. On divergence the state is
/// dumped to diverged.cdpt and DivergenceError is rethrown.
TrainResult train(const TrainConfig& config);

/// Locates the training split under data_dir.
std::filesystem::path resolve_domain_dir(const std::filesystem::path& data_dir, const std::string& domain);

/// Network and banks rebuilt from a checkpoint file.
struct Model {
  SegNet net;
  protobank::PrototypeBank bank_src;
  protobank::PrototypeBank bank_aug;
  std::size_t classes() const { return net.shape().classes; }
};
Model load_model(const std::filesystem::path& checkpoint);
Model model_from_tensors(const std::vector<NamedTensor>& tensors);

}  // namespace cdpcl::segtrain
