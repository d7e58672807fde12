#include "cdpcl/synthdomains/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "cdpcl/errors.hpp"
#include "cdpcl/kernels/parallel.hpp"
#include "cdpcl/rng.hpp"
#include "cdpcl/synthdomains/netpbm.hpp"

namespace cdpcl::synth {
namespace fs = std::filesystem;

namespace {

std::string numbered(std::size_t i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu.%s", i, ext);
  return buf;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, '\t')) fields.push_back(f);
  return fields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void write_dataset(const std::vector<DomainSample>& samples, const DatasetMeta& meta, const fs::path& dir) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "labels");
  std::ofstream manifest(dir / "manifest.tsv", std::ios::trunc);
  if (!manifest) throw Error("cannot write manifest in " + dir.string());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto image_rel = "images/" + numbered(i, "ppm");
    const auto label_rel = "labels/" + numbered(i, "pgm");
    write_ppm(dir / image_rel, s.image);
    GreyImage labels{s.image.height, s.image.width, std::vector<std::uint8_t>(s.labels.size())};
    for (std::size_t p = 0; p < s.labels.size(); ++p) labels.data[p] = static_cast<std::uint8_t>(s.labels[p]);
    write_pgm(dir / label_rel, labels);
    manifest << image_rel << '\t' << label_rel << '\t' << s.domain << '\t' << s.seed << '\n';
  }
  std::ofstream info(dir / "meta.txt", std::ios::trunc);
  info << "domain = " << meta.domain << '\n'
       << "classes = " << meta.classes << '\n'
       << "height = " << meta.height << '\n'
       << "width = " << meta.width << '\n'
       << "count = " << samples.size() << '\n'
       << "master_seed = " << meta.master_seed << '\n';
  if (!manifest || !info) throw Error("write failed in " + dir.string());
}

Dataset read_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("dataset directory not found: " + dir.string());
  std::ifstream info(dir / "meta.txt");
  if (!info) throw ConfigError("dataset has no meta.txt: " + dir.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(info, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  Dataset ds;
  try {
    ds.meta.domain = kv.at("domain");
    ds.meta.classes = std::stoul(kv.at("classes"));
    ds.meta.height = std::stoul(kv.at("height"));
    ds.meta.width = std::stoul(kv.at("width"));
    ds.meta.count = std::stoul(kv.at("count"));
    ds.meta.master_seed = std::stoull(kv.at("master_seed"));
  } catch (const std::exception&) {
    throw FormatError((dir / "meta.txt").string() + ": missing or malformed key at byte offset 0");
  }

  std::ifstream manifest(dir / "manifest.tsv");
  if (!manifest) throw ConfigError("dataset has no manifest.tsv: " + dir.string());
  std::size_t offset = 0;
  while (std::getline(manifest, line)) {
    const auto line_offset = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 4) {
      throw FormatError((dir / "manifest.tsv").string() + ": expected 4 tab-separated fields at byte offset " +
                        std::to_string(line_offset));
    }
    DomainSample s;
    s.image = read_ppm(dir / fields[0]);
    const auto labels = read_pgm(dir / fields[1]);
    if (labels.height != s.image.height || labels.width != s.image.width) {
      throw FormatError((dir / fields[1]).string() + ": label size differs from image at byte offset 0");
    }
    s.labels.assign(labels.data.begin(), labels.data.end());
    s.domain = fields[2];
    s.seed = std::stoull(fields[3]);
    s.index = ds.samples.size();
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::vector<DomainSample> generate_domain(const DomainStyle& style, const SceneSpec& spec, std::size_t count,
                                          std::uint64_t master_seed) {
  std::vector<DomainSample> samples(count);
  const int threads = kernels::thread_count();
  const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for num_threads(threads) if (threads > 1) schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    samples[idx] = generate_scene(style, spec, derive_seed({master_seed, style.seed, idx}));
    samples[idx].index = idx;
  }
  return samples;
}

std::array<double, 6> pixel_statistics(const std::vector<DomainSample>& samples) {
  std::array<double, 3> sum{}, sq{};
  double n = 0;
  for (const auto& s : samples) {
    for (std::size_t p = 0; p < s.image.pixels(); ++p) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = s.image.rgb[3 * p + c];
        sum[c] += v;
        sq[c] += v * v;
      }
    }
    n += static_cast<double>(s.image.pixels());
  }
  std::array<double, 6> stats{};
  if (n == 0) return stats;
  for (std::size_t c = 0; c < 3; ++c) {
    stats[c] = sum[c] / n;
    stats[3 + c] = std::sqrt(std::max(0.0, sq[c] / n - stats[c] * stats[c]));
  }
  return stats;
}

double statistics_distance(const std::array<double, 6>& a, const std::array<double, 6>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return d;
}

SplitConfig SplitConfig::defaults(std::size_t classes) {
  SplitConfig cfg;
  cfg.scene.classes = classes;
  cfg.source = source_style(classes);
  cfg.unseen = default_unseen_styles(classes);
  return cfg;
}

void SplitConfig::validate() const {
  if (unseen.size() < 2) {
    throw ConfigError("split needs at least 2 unseen domains, got " + std::to_string(unseen.size()));
  }
  if (train_count == 0 || eval_count == 0) throw ConfigError("split sample counts must be positive");
  if (scene.classes < 2) throw ConfigError("split needs at least 2 classes");
  if (scene.height < 32 || scene.width < 32 || scene.height % 4 || scene.width % 4) {
    throw ConfigError("image size must be at least 32x32 and divisible by 4");
  }
  for (const auto& s : unseen) {
    if (s.id == source.id) throw ConfigError("unseen domain reuses the source id '" + s.id + "'");
    if (s.differences_from(source) < 2) {
      throw ConfigError("unseen style '" + s.id + "' must differ from the source in at least 2 parameters");
    }
  }
}

std::vector<std::string> make_split(const SplitConfig& config, const fs::path& out_root) {
  config.validate();
  const auto source = generate_domain(config.source, config.scene, config.train_count, config.seed);
  const auto source_stats = pixel_statistics(source);

  std::vector<std::pair<const DomainStyle*, std::vector<DomainSample>>> unseen;
  for (const auto& style : config.unseen) {
    auto samples = generate_domain(style, config.scene, config.eval_count, config.seed);
    const double gap = statistics_distance(pixel_statistics(samples), source_stats);
    if (gap < config.stats_margin) {
      throw ConfigError("unseen style '" + style.id + "' is too close to the source (statistics distance " +
                        std::to_string(gap) + " < " + std::to_string(config.stats_margin) + ")");
    }
    unseen.emplace_back(&style, std::move(samples));
  }

  const auto meta_for = [&](const DomainStyle& style, std::size_t count) {
    return DatasetMeta{style.id, config.scene.classes, config.scene.height, config.scene.width, count, config.seed};
  };
  std::vector<std::string> names{config.source.id};
  write_dataset(source, meta_for(config.source, source.size()), out_root / config.source.id);
  for (const auto& [style, samples] : unseen) {
    write_dataset(samples, meta_for(*style, samples.size()), out_root / style->id);
    names.push_back(style->id);
  }
  return names;
}

}  // namespace cdpcl::synth
