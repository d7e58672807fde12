#include "cdpcl/segtrain/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "cdpcl/errors.hpp"
#include "cdpcl/kernels/parallel.hpp"
#include "cdpcl/losses.hpp"
#include "cdpcl/rng.hpp"

namespace cdpcl::segtrain {

Tensor images_to_tensor(const std::vector<const synth::Image*>& images) {
  if (images.empty()) throw ContractError("images_to_tensor: empty batch");
  const auto h = images.front()->height, w = images.front()->width;
  std::vector<double> v(images.size() * 3 * h * w);
  for (std::size_t b = 0; b < images.size(); ++b) {
    const auto& img = *images[b];
    if (img.height != h || img.width != w) throw DimensionError("images_to_tensor: mixed image sizes in batch");
    double* out = v.data() + b * 3 * h * w;
    for (std::size_t p = 0; p < h * w; ++p) {
      for (std::size_t c = 0; c < 3; ++c) out[c * h * w + p] = img.rgb[p * 3 + c];
    }
  }
  return Tensor(Shape{images.size(), 3, h, w}, std::move(v));
}

Tensor images_to_tensor(const std::vector<synth::Image>& images) {
  std::vector<const synth::Image*> ptrs;
  for (const auto& img : images) ptrs.push_back(&img);
  return images_to_tensor(ptrs);
}

Batch make_batch(const synth::Dataset& data, const std::vector<std::size_t>& indices,
                 std::vector<std::uint64_t> aug_seeds) {
  if (indices.empty()) throw ContractError("make_batch: no indices");
  std::vector<const synth::Image*> imgs;
  const auto& first = data.samples.at(indices.front()).image;
  LabelMap labels{indices.size(), first.height, first.width, {}};
  labels.data.reserve(indices.size() * first.height * first.width);
  for (auto i : indices) {
    const auto& s = data.samples.at(i);
    imgs.push_back(&s.image);
    labels.data.insert(labels.data.end(), s.labels.begin(), s.labels.end());
  }
  if (aug_seeds.empty()) aug_seeds.assign(indices.size(), 0);
  if (aug_seeds.size() != indices.size()) throw ContractError("make_batch: one augmentation seed per image");
  return {images_to_tensor(imgs), std::move(labels), std::move(aug_seeds)};
}

BatchSampler::BatchSampler(std::size_t dataset_size, std::size_t batch, std::uint64_t seed)
    : size_(dataset_size), batch_(batch), seed_(seed) {
  if (size_ == 0 || batch_ == 0) throw ConfigError("batch sampler needs a non-empty dataset and batch");
}

const std::vector<std::size_t>& BatchSampler::epoch(std::size_t e) const {
  if (e != cached_epoch_) {
    cached_.resize(size_);
    std::iota(cached_.begin(), cached_.end(), std::size_t{0});
    Rng rng(derive_seed({seed_, hash_string("epoch"), e}));
    // Fisher-Yates with an explicit draw so the order does not depend on the
    // standard library's shuffle.
    for (std::size_t i = size_ - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng() % (i + 1));
      std::swap(cached_[i], cached_[j]);
    }
    cached_epoch_ = e;
  }
  return cached_;
}

std::vector<std::size_t> BatchSampler::indices(std::size_t iteration) const {
  std::vector<std::size_t> out;
  out.reserve(batch_);
  for (std::size_t k = 0; k < batch_; ++k) {
    const auto pos = iteration * batch_ + k;
    out.push_back(epoch(pos / size_)[pos % size_]);
  }
  return out;
}

std::vector<std::uint64_t> BatchSampler::aug_seeds(std::size_t iteration) const {
  std::vector<std::uint64_t> out;
  for (std::size_t k = 0; k < batch_; ++k) out.push_back(derive_seed({seed_, hash_string("augment"), iteration, k}));
  return out;
}

TrainState::TrainState(const TrainConfig& cfg)
    : config(cfg),
      net(SegNetShape{cfg.classes, cfg.feat_dim}, cfg.seed),
      optimizer(net.parameters(), cfg.momentum),
      bank_src(cfg.classes, cfg.feat_dim, cfg.m_p),
      bank_aug(cfg.classes, cfg.feat_dim, cfg.m_a),
      uncertainty(cfg.classes, cfg.feat_dim, cfg.m_u) {}

std::vector<NamedTensor> TrainState::checkpoint() const {
  auto out = net.parameters();
  for (auto& p : out) p.tensor = p.tensor.detach();
  for (auto& m : optimizer.state()) out.push_back(std::move(m));
  out.push_back({"proto_src", bank_src.rows()});
  out.push_back({"proto_aug", bank_aug.rows()});
  auto fs = bank_src.flags(), fa = bank_aug.flags();
  std::vector<double> flags(fs.values().begin(), fs.values().end());
  flags.insert(flags.end(), fa.values().begin(), fa.values().end());
  out.push_back({"proto_init_flags", Tensor(Shape{2, config.classes}, std::move(flags))});
  out.push_back({"uncertainty_u", uncertainty.value().detach()});
  out.push_back({"uncertainty_init", Tensor::scalar(uncertainty.initialized() ? 1.0 : 0.0)});
  out.push_back({"iteration", Tensor::scalar(static_cast<double>(iteration))});
  out.push_back({"max_iterations", Tensor::scalar(static_cast<double>(config.iters))});
  return out;
}

namespace {

void restore_banks(const std::vector<NamedTensor>& ckpt, protobank::PrototypeBank& src,
                   protobank::PrototypeBank& aug) {
  const auto& flags = find_tensor(ckpt, "proto_init_flags");
  const auto c = src.classes();
  if (flags.numel() != 2 * c) throw ConfigError("checkpoint proto_init_flags does not match the class count");
  const auto v = flags.values();
  src.restore(find_tensor(ckpt, "proto_src"), Tensor(Shape{c}, std::vector<double>(v.begin(), v.begin() + c)));
  aug.restore(find_tensor(ckpt, "proto_aug"), Tensor(Shape{c}, std::vector<double>(v.begin() + c, v.end())));
}

}  // namespace

void TrainState::restore(const std::vector<NamedTensor>& ckpt) {
  net.load(ckpt);
  optimizer.load(ckpt);
  restore_banks(ckpt, bank_src, bank_aug);
  uncertainty.restore(find_tensor(ckpt, "uncertainty_u"), find_tensor(ckpt, "uncertainty_init").item() != 0.0);
  const auto it = find_tensor(ckpt, "iteration").item();
  if (it < 0 || it > static_cast<double>(config.iters)) throw ConfigError("checkpoint iteration out of range");
  iteration = static_cast<std::size_t>(it);
}

StepRecord train_step(TrainState& st, const Batch& batch) {
  const auto& cfg = st.config;
  if (st.iteration >= cfg.iters) throw ContractError("train_step: already at max_iterations");
  const auto batch_size = batch.images.dim(0);
  if (batch.aug_seeds.size() != batch_size) throw ContractError("train_step: one augmentation seed per image");
  const auto h = batch.images.dim(2), w = batch.images.dim(3);

  // (1) photometric augmentation of the source batch
  std::vector<synth::Image> augmented;
  augmented.reserve(batch_size);
  {
    const auto src = batch.images.values();
    for (std::size_t b = 0; b < batch_size; ++b) {
      synth::Image img(h, w);
      for (std::size_t p = 0; p < h * w; ++p) {
        for (std::size_t c = 0; c < 3; ++c) img.rgb[p * 3 + c] = src[(b * 3 + c) * h * w + p];
      }
      augmented.push_back(synth::augment(img, st.augment, batch.aug_seeds[b]));
    }
  }
  // (2) source forward, (3) frozen augmented forward
  const auto out = st.net.forward(batch.images);
  const auto z_aug = st.net.frozen_forward(images_to_tensor(augmented));

  // (4) class pooling
  const auto cf_src = protobank::pool_class_features(out.features, batch.labels, cfg.classes);
  const auto cf_aug = protobank::pool_class_features(z_aug, batch.labels, cfg.classes);

  // (5) bank updates
  st.bank_src.update(cf_src);
  st.bank_aug.update(cf_aug);

  // (6) D, U_c, U
  calibration::ClassMask valid(cfg.classes);
  for (std::size_t c = 0; c < cfg.classes; ++c) valid[c] = st.bank_src.initialized()[c] && st.bank_aug.initialized()[c];
  const auto proto_src = st.bank_src.view();
  const auto proto_aug = st.bank_aug.view();
  if (calibration::count_valid(valid) >= 2) {
    const auto d = calibration::difference_matrix(proto_src.rows, proto_aug.rows, valid);
    st.uncertainty.update(calibration::uncertainty_matrix(d, valid));
  }
  // (7) S, H
  const auto s = calibration::similarity_matrix(proto_src.rows, proto_aug.rows, valid);
  const auto hw = calibration::hard_weight_matrix(s);

  // (8) losses
  const auto l_seg = losses::seg_loss(out.logits, batch.labels);
  std::optional<Tensor> l_1, l_2;
  if (losses::uses_pcl(cfg.ablation)) {
    auto pcl_cfg = cfg.loss;
    pcl_cfg.tau = cfg.loss.tau_u;
    l_1 = losses::pcl_loss(proto_src, cf_src, pcl_cfg);
  } else if (losses::uses_upcl(cfg.ablation)) {
    l_1 = losses::upcl_loss(proto_src, st.uncertainty.value(), cf_src, cfg.loss);
  }
  if (losses::uses_hpcl(cfg.ablation)) l_2 = losses::hpcl_loss(proto_aug, hw, cf_src, cfg.loss);
  const auto total = losses::total_loss(l_seg, l_1, cfg.loss.lambda1, l_2, cfg.loss.lambda2);

  // (9) backward, (10) SGD
  const double lr = poly_lr(st.iteration, cfg.iters, cfg.base_lr, cfg.lr_power);
  st.net.zero_grad();
  if (total.on_graph()) backward(total);
  st.optimizer.step(lr);

  StepRecord rec;
  rec.iter = st.iteration;
  rec.lr = lr;
  rec.l_seg = l_seg.item();
  rec.l_upcl = l_1 ? l_1->item() : 0.0;
  rec.l_hpcl = l_2 ? l_2->item() : 0.0;
  rec.l_total = total.item();
  for (std::size_t c = 0; c < cfg.classes; ++c) rec.active_classes += cf_src.present[c] && proto_src.initialized[c];

  // (11)
  ++st.iteration;
  return rec;
}

std::string csv_header() { return "iter,lr,l_seg,l_upcl,l_hpcl,l_total,active_classes"; }

std::string csv_row(const StepRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%zu", r.iter, r.lr, r.l_seg, r.l_upcl, r.l_hpcl,
                r.l_total, r.active_classes);
  return buf;
}

std::filesystem::path resolve_domain_dir(const std::filesystem::path& data_dir, const std::string& domain) {
  namespace fs = std::filesystem;
  if (fs::exists(data_dir / "manifest.tsv")) return data_dir;
  if (fs::exists(data_dir / domain / "manifest.tsv")) return data_dir / domain;
  throw ConfigError("no dataset at " + data_dir.string() + " (expected manifest.tsv or " + domain + "/manifest.tsv)");
}

TrainResult train(const TrainConfig& config) {
  namespace fs = std::filesystem;
  config.validate();
  kernels::retain_large_buffers();
  const auto data = synth::read_dataset(resolve_domain_dir(config.data_dir, config.train_domain));
  if (data.samples.empty()) throw ConfigError("training dataset is empty");
  if (data.meta.classes != config.classes) {
    throw ConfigError("dataset has " + std::to_string(data.meta.classes) + " classes, config says " +
                      std::to_string(config.classes));
  }
  for (const auto& s : data.samples) validate_labels(LabelMap{1, s.image.height, s.image.width, s.labels}, config.classes);

  TrainState state(config);
  const BatchSampler sampler(data.samples.size(), config.batch, config.seed);

  fs::create_directories(config.out_dir);
  {
    std::ofstream cfg_out(config.out_dir / "train.cfg");
    cfg_out << config.to_text();
  }
  TrainResult result;
  result.log = config.out_dir / "train_log.csv";
  result.checkpoint = config.out_dir / "checkpoint.cdpt";
  std::ofstream log(result.log);
  if (!log) throw Error("cannot write " + result.log.string());
  log << csv_header() << "\n";

  while (state.iteration < config.iters) {
    const auto it = state.iteration;
    StepRecord rec;
    try {
      rec = train_step(state, make_batch(data, sampler.indices(it), sampler.aug_seeds(it)));
    } catch (const DivergenceError& e) {
      log.flush();
      const auto dump = config.out_dir / "diverged.cdpt";
      save_checkpoint(dump, state.checkpoint());
      throw DivergenceError(std::string(e.what()) + " at iteration " + std::to_string(it) + "; state written to " +
                            dump.string());
    }
    log << csv_row(rec) << "\n";
    result.records.push_back(rec);
    if (config.checkpoint_every > 0 && state.iteration % config.checkpoint_every == 0 &&
        state.iteration < config.iters) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_%06zu.cdpt", state.iteration);
      save_checkpoint(config.out_dir / name, state.checkpoint());
    }
  }
  log.close();
  save_checkpoint(result.checkpoint, state.checkpoint());
  return result;
}

Model model_from_tensors(const std::vector<NamedTensor>& tensors) {
  const auto& head = find_tensor(tensors, "head.weight");
  const auto& enc1 = find_tensor(tensors, "enc1.weight");
  const auto& enc2 = find_tensor(tensors, "enc2.weight");
  if (head.rank() != 4 || enc1.rank() != 4 || enc2.rank() != 4) throw ConfigError("checkpoint weights are not 4-d");
  SegNetShape shape{head.dim(0), head.dim(1), enc1.dim(0), enc2.dim(0)};
  Model m{SegNet(shape, 0), protobank::PrototypeBank(shape.classes, shape.feat_dim, 0.0),
          protobank::PrototypeBank(shape.classes, shape.feat_dim, 0.0)};
  m.net.load(tensors);
  restore_banks(tensors, m.bank_src, m.bank_aug);
  return m;
}

Model load_model(const std::filesystem::path& checkpoint) { return model_from_tensors(load_checkpoint(checkpoint)); }

}  // namespace cdpcl::segtrain
