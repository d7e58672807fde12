#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cdpcl/synthdomains/image.hpp"
#include "cdpcl/synthdomains/style.hpp"

namespace cdpcl::synth {

struct DatasetMeta {
  std::string domain;
  std::size_t classes = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t count = 0;
  std::uint64_t master_seed = 0;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<DomainSample> samples;
};

// On-disk layout of one domain directory:
//   manifest.tsv   one line per sample: image_path \t label_path \t domain \t seed
//   meta.txt       key = value lines: domain, classes, height, width, count, master_seed
//   images/NNNNNN.ppm, labels/NNNNNN.pgm
void write_dataset(const std::vector<DomainSample>& samples, const DatasetMeta& meta,
                   const std::filesystem::path& dir);
/// Throws ConfigError if the directory or its manifest is missing and
/// FormatError on malformed files.
Dataset read_dataset(const std::filesystem::path& dir);

/// Renders count scenes of one style. Scene i uses the stream seed
/// derive_seed({master_seed, style.seed, i}); samples are independent, so
/// generation is distributed over the kernel thread pool.
std::vector<DomainSample> generate_domain(const DomainStyle& style, const SceneSpec& spec, std::size_t count,
                                          std::uint64_t master_seed);

/// Per-channel mean and standard deviation over every pixel.
std::array<double, 6> pixel_statistics(const std::vector<DomainSample>& samples);
double statistics_distance(const std::array<double, 6>& a, const std::array<double, 6>& b);

struct SplitConfig {
  SceneSpec scene;
  std::size_t train_count = 200;
  std::size_t eval_count = 50;
  std::uint64_t seed = 0;
  DomainStyle source;
  std::vector<DomainStyle> unseen;
  double stats_margin = 0.05;  // minimum statistics_distance of each unseen domain from source

  static SplitConfig defaults(std::size_t classes = 6);
  /// Throws ConfigError: fewer than two unseen domains, a style differing from
  /// the source in fewer than two parameters, or bad counts.
  void validate() const;
};

/// Writes <out>/<source.id> with train_count samples and <out>/<unseen.id>
/// with eval_count samples each. Returns the directory names in that order.
std::vector<std::string> make_split(const SplitConfig& config, const std::filesystem::path& out_root);

}  // namespace cdpcl::synth
