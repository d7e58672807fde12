#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "cdpcl/losses.hpp"

namespace cdpcl::segtrain {

struct TrainConfig {
  std::filesystem::path data_dir;  // split root written by gen-data, or a single domain directory
  std::filesystem::path out_dir;
  std::string train_domain = "src_train";
  std::uint64_t seed = 0;
  std::size_t classes = 6;
  std::size_t feat_dim = 32;
  std::size_t batch = 8;
  std::size_t iters = 2000;
  double base_lr = 1e-2;
  double momentum = 0.9;  // SGD
  double lr_power = 0.9;
  double m_p = 0.9;
  double m_a = 0.9;
  double m_u = 0.9;
  losses::LossConfig loss;
  losses::Ablation ablation = losses::Ablation::Cdpcl;
  std::size_t checkpoint_every = 0;  // 0: only the final checkpoint

  /// Throws ConfigError.
  void validate() const;

  /// Canonical key = value text; parse(to_text()) reproduces the config.
  std::string to_text() const;
};

/// Line-based `key = value`; '#' starts a comment. Unknown keys, duplicate
/// keys and malformed values are ConfigErrors naming the line.
TrainConfig parse_config(const std::string& text, const std::string& source = "<config>");
TrainConfig load_config(const std::filesystem::path& path);

/// Applies one `key = value` assignment, as from a command-line override.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);

}  // namespace cdpcl::segtrain
