#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "cdpcl/errors.hpp"
#include "cdpcl/rng.hpp"
#include "cdpcl/synthdomains/augment.hpp"
#include "cdpcl/synthdomains/color.hpp"
#include "cdpcl/synthdomains/dataset.hpp"
#include "cdpcl/synthdomains/netpbm.hpp"
#include "cdpcl/synthdomains/style.hpp"
#include "test_util.hpp"

using namespace cdpcl;
using namespace cdpcl::synth;
namespace fs = std::filesystem;

TEST_CASE("scene generation is deterministic") {
  auto style = source_style(6);
  SceneSpec spec;
  auto a = generate_scene(style, spec, 99);
  auto b = generate_scene(style, spec, 99);
  CHECK(a.image.rgb == b.image.rgb);
  CHECK(a.labels == b.labels);
  auto c = generate_scene(style, spec, 100);
  CHECK(a.image.rgb != c.image.rgb);
}

TEST_CASE("flat noiseless style renders constant regions") {
  auto style = source_style(4);
  style.noise_sigma = 0.0;
  style.texture_amplitude = 0.0;
  SceneSpec spec{4, 32, 32};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto s = generate_scene(style, spec, seed);
    // a background, at most five shapes and an occluder; each colour belongs to one label
    std::map<std::array<double, 3>, std::int32_t> label_of;
    for (std::size_t p = 0; p < s.image.pixels(); ++p) {
      std::array<double, 3> rgb = {s.image.rgb[3 * p], s.image.rgb[3 * p + 1], s.image.rgb[3 * p + 2]};
      auto [it, fresh] = label_of.emplace(rgb, s.labels[p]);
      if (!fresh) CHECK(it->second == s.labels[p]);
    }
    CHECK(label_of.size() <= 7);
  }
}

TEST_CASE("labels cover every class over 100 scenes") {
  auto style = source_style(6);
  SceneSpec spec;
  std::vector<std::size_t> hist(6, 0);
  std::size_t total = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto s = generate_scene(style, spec, seed);
    for (auto l : s.labels) {
      CHECK((l == 255 || (l >= 0 && l < 6)));
      if (l != 255) ++hist[static_cast<std::size_t>(l)];
      ++total;
    }
  }
  for (auto h : hist) CHECK(static_cast<double>(h) >= 0.01 * static_cast<double>(total));
}

TEST_CASE("scene preconditions") {
  auto style = source_style(6);
  CHECK_THROWS_AS(generate_scene(style, SceneSpec{1, 64, 64}, 0), ConfigError);
  CHECK_THROWS_AS(generate_scene(style, SceneSpec{6, 16, 64}, 0), ConfigError);
}

TEST_CASE("augment identity and brightness") {
  auto s = generate_scene(source_style(6), SceneSpec{}, 3);
  JitterFactors none;
  CHECK(apply_jitter(s.image, none).rgb == s.image.rgb);

  AugmentParams off{0, 0, 0, 0, 0.0, 0.1, 2.0};
  CHECK(augment(s.image, off, 17).rgb == s.image.rgb);

  Image grey(4, 4, 0.5);
  JitterFactors bright;
  bright.brightness = 1.4;
  for (double v : apply_jitter(grey, bright, false).rgb) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("augment is deterministic per seed and stays in range") {
  auto s = generate_scene(source_style(6), SceneSpec{}, 4);
  AugmentParams params;
  CHECK(augment(s.image, params, 5).rgb == augment(s.image, params, 5).rgb);
  CHECK(augment(s.image, params, 5).rgb != augment(s.image, params, 6).rgb);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto a = augment(s.image, params, seed);
    CHECK(a.height == s.image.height);
    CHECK(a.width == s.image.width);
    for (double v : a.rgb) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("sampled jitter stays within its bounds") {
  AugmentParams params;
  Rng rng(61);
  bool blurred = false, sharp = false;
  for (int i = 0; i < 500; ++i) {
    auto f = sample_jitter(params, rng);
    CHECK(f.brightness >= 0.6);
    CHECK(f.brightness <= 1.4);
    CHECK(f.contrast >= 0.6);
    CHECK(f.contrast <= 1.4);
    CHECK(f.saturation >= 0.6);
    CHECK(f.saturation <= 1.4);
    CHECK(std::abs(f.hue_shift) <= 0.1);
    if (f.blur_sigma) {
      blurred = true;
      CHECK(*f.blur_sigma >= 0.1);
      CHECK(*f.blur_sigma <= 2.0);
    } else {
      sharp = true;
    }
  }
  CHECK(blurred);
  CHECK(sharp);
}

TEST_CASE("hsv roundtrip") {
  Rng rng(62);
  std::uniform_real_distribution<double> d(0, 1);
  for (int i = 0; i < 200; ++i) {
    double r = d(rng), g = d(rng), b = d(rng);
    auto hsv = rgb_to_hsv(r, g, b);
    auto rgb = hsv_to_rgb(hsv[0], hsv[1], hsv[2]);
    CHECK(std::abs(rgb[0] - r) <= 1e-12);
    CHECK(std::abs(rgb[1] - g) <= 1e-12);
    CHECK(std::abs(rgb[2] - b) <= 1e-12);
  }
}

TEST_CASE("gaussian blur keeps constant images") {
  Image flat(8, 8, 0.3);
  for (double v : gaussian_blur(flat, 1.5).rgb) CHECK(v == doctest::Approx(0.3).epsilon(1e-14));
}

TEST_CASE("netpbm roundtrip and quantization") {
  test::TempDir dir("netpbm");
  auto s = generate_scene(source_style(6), SceneSpec{}, 8);
  write_ppm(dir.path / "a.ppm", s.image);
  auto back = read_ppm(dir.path / "a.ppm");
  REQUIRE(back.rgb.size() == s.image.rgb.size());
  for (std::size_t i = 0; i < back.rgb.size(); ++i) CHECK(std::abs(back.rgb[i] - s.image.rgb[i]) <= 1.0 / 255.0);
  write_ppm(dir.path / "b.ppm", back);
  CHECK(read_ppm(dir.path / "b.ppm").rgb == back.rgb);

  GreyImage g{3, 2, {0, 1, 2, 3, 255, 17}};
  write_pgm(dir.path / "l.pgm", g);
  auto gb = read_pgm(dir.path / "l.pgm");
  CHECK(gb.height == 3);
  CHECK(gb.width == 2);
  CHECK(gb.data == g.data);
}

TEST_CASE("netpbm rejects malformed files") {
  test::TempDir dir("netpbm-bad");
  GreyImage g{2, 2, {1, 2, 3, 4}};
  write_pgm(dir.path / "ok.pgm", g);
  std::string bytes = test::read_file(dir.path / "ok.pgm");

  std::string bad = bytes;
  bad[1] = '6';
  test::write_file(dir.path / "magic.pgm", bad);
  try {
    read_pgm(dir.path / "magic.pgm");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("magic.pgm") != std::string::npos);
  }
  test::write_file(dir.path / "short.pgm", bytes.substr(0, bytes.size() - 1));
  CHECK_THROWS_AS(read_pgm(dir.path / "short.pgm"), FormatError);
  CHECK_THROWS_AS(read_ppm(dir.path / "ok.pgm"), FormatError);
  CHECK_THROWS_AS(read_ppm(dir.path / "missing.ppm"), FormatError);
}

TEST_CASE("dataset roundtrip") {
  test::TempDir dir("dataset");
  auto style = source_style(6);
  auto samples = generate_domain(style, SceneSpec{}, 5, 3);
  DatasetMeta meta{style.id, 6, 64, 64, samples.size(), 3};
  write_dataset(samples, meta, dir.path / "d");
  auto back = read_dataset(dir.path / "d");
  CHECK(back.meta.classes == 6);
  CHECK(back.meta.count == 5);
  REQUIRE(back.samples.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(back.samples[i].labels == samples[i].labels);
    CHECK(back.samples[i].seed == samples[i].seed);
    CHECK(back.samples[i].domain == style.id);
    for (std::size_t j = 0; j < samples[i].image.rgb.size(); ++j)
      CHECK(std::abs(back.samples[i].image.rgb[j] - samples[i].image.rgb[j]) <= 1.0 / 255.0);
  }
  std::ifstream manifest(dir.path / "d" / "manifest.tsv");
  std::size_t lines = 0;
  for (std::string line; std::getline(manifest, line);) ++lines;
  CHECK(lines == 5);
  CHECK_THROWS_AS(read_dataset(dir.path / "nothing"), ConfigError);
}

TEST_CASE("dataset read names a corrupted image") {
  test::TempDir dir("dataset-bad");
  auto samples = generate_domain(source_style(6), SceneSpec{}, 2, 1);
  write_dataset(samples, DatasetMeta{"src_train", 6, 64, 64, 2, 1}, dir.path);
  auto img = dir.path / "images" / "000001.ppm";
  std::string bytes = test::read_file(img);
  bytes[0] = 'Q';
  test::write_file(img, bytes);
  try {
    read_dataset(dir.path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("000001.ppm") != std::string::npos);
  }
}

TEST_CASE("default split layout and counts") {
  test::TempDir dir("split");
  auto cfg = SplitConfig::defaults(6);
  cfg.train_count = 6;
  cfg.eval_count = 4;
  cfg.scene.height = cfg.scene.width = 32;
  auto names = make_split(cfg, dir.path);
  CHECK(names == std::vector<std::string>{"src_train", "unseen_a", "unseen_b", "unseen_c"});
  CHECK(read_dataset(dir.path / "src_train").samples.size() == 6);
  auto src = read_dataset(dir.path / "src_train");
  for (std::size_t u = 1; u < names.size(); ++u) {
    auto d = read_dataset(dir.path / names[u]);
    CHECK(d.samples.size() == 4);
    CHECK(statistics_distance(pixel_statistics(d.samples), pixel_statistics(src.samples)) >= cfg.stats_margin);
  }
}

TEST_CASE("split is byte-identical for the same seed") {
  test::TempDir a("split-a"), b("split-b");
  auto cfg = SplitConfig::defaults(6);
  cfg.train_count = 3;
  cfg.eval_count = 2;
  make_split(cfg, a.path);
  make_split(cfg, b.path);
  CHECK(test::tree_digest(a.path) == test::tree_digest(b.path));
}

TEST_CASE("split config validation") {
  auto cfg = SplitConfig::defaults(6);
  cfg.unseen.resize(1);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SplitConfig::defaults(6);
  cfg.unseen[0] = cfg.source;
  cfg.unseen[0].id = "clone";
  cfg.unseen[0].noise_sigma += 0.01;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SplitConfig::defaults(6);
  for (const auto& s : cfg.unseen) CHECK(s.differences_from(cfg.source) >= 2);
}
