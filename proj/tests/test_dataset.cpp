#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "balistd/dataset.hpp"
#include "balistd/metrics.hpp"

using namespace balistd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("balistd_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("synth_generate: count zero, determinism, target geometry") {
  SynthConfig cfg;
  cfg.count = 0;
  CHECK(synth_generate<float>(cfg).empty());

  cfg.count = 200;
  cfg.seed = 42;
  const auto a = synth_generate<float>(cfg);
  const auto b = synth_generate<float>(cfg);
  REQUIRE(a.size() == 200);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK((a[i].image == b[i].image).all());
    CHECK((a[i].mask == b[i].mask).all());
  }

  for (const auto& s : a) {
    CHECK(s.image.minCoeff() >= 0.0f);
    CHECK(s.image.maxCoeff() <= 1.0f);
    const auto comps = connected_components(s.mask);
    CHECK(!comps.empty());
    CHECK(static_cast<int>(comps.size()) <= 3);
    for (const auto& c : comps) {
      CHECK(c.area >= 3);
      CHECK(c.area <= 81);
    }
  }
}

TEST_CASE("synthetic targets stay in the low-contrast regime") {
  SynthConfig cfg;
  cfg.count = 32;
  cfg.seed = 9;
  for (const auto& s : synth_generate<double>(cfg)) {
    // peak target value exceeds the local background by at most
    // contrast_max (plus clutter wiggle)
    for (const auto& comp : connected_components(s.mask)) {
      const int r = static_cast<int>(comp.centroid_r), c = static_cast<int>(comp.centroid_c);
      const int r0 = std::max(0, r - 6), c0 = std::max(0, c - 6);
      const int rn = std::min<int>(s.image.rows() - r0, 13), cn = std::min<int>(s.image.cols() - c0, 13);
      const auto patch = s.image.block(r0, c0, rn, cn);
      double bg_sum = 0;
      int bg_n = 0;
      for (int rr = 0; rr < rn; ++rr)
        for (int cc = 0; cc < cn; ++cc)
          if (!s.mask(r0 + rr, c0 + cc)) {
            bg_sum += patch(rr, cc);
            ++bg_n;
          }
      REQUIRE(bg_n > 0);
      const double contrast = patch.maxCoeff() - bg_sum / bg_n;
      CHECK(contrast <= 0.45 + 1e-9);
    }
  }
}

TEST_CASE("synth config validation") {
  SynthConfig cfg;
  cfg.radius_max = 5.0;  // half-peak area would exceed 81 px
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.size = 60;  // not divisible by 8
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.contrast_min = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("dataset round trip through disk reproduces identical arrays") {
  TempDir dir("roundtrip");
  SynthConfig cfg;
  cfg.count = 8;
  cfg.seed = 3;
  const auto samples = synth_generate<Real>(cfg);
  write_dataset(dir.path.string(), samples, 0.75);

  const auto manifest = load_manifest(dir.path.string());
  REQUIRE(manifest.entries.size() == 8);
  CHECK(manifest.split(true).size() == 6);
  CHECK(manifest.split(false).size() == 2);
  CHECK(manifest.hash_hex.size() == 64);

  // MANIFEST.sha content matches the recomputed hash
  std::ifstream sha((dir.path / "MANIFEST.sha").string());
  std::string stored;
  sha >> stored;
  CHECK(stored == manifest.hash_hex);

  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto loaded = load_sample<Real>(manifest.entries[i]);
    CHECK(loaded.id == samples[i].id);
    CHECK((loaded.image == samples[i].image).all());
    CHECK((loaded.mask == samples[i].mask).all());
  }
}

TEST_CASE("manifest hash changes when any file byte changes") {
  TempDir dir("hash");
  SynthConfig cfg;
  cfg.count = 4;
  cfg.seed = 1;
  write_dataset(dir.path.string(), synth_generate<Real>(cfg), 0.75);
  const auto before = load_manifest(dir.path.string()).hash_hex;

  // flip one byte in one mask file
  const auto victim = dir.path / "masks" / "synth_00002.png";
  std::fstream f(victim.string(), std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(-1, std::ios::end);
  char byte;
  f.read(&byte, 1);
  f.seekp(-1, std::ios::end);
  byte = static_cast<char>(byte ^ 0x01);
  f.write(&byte, 1);
  f.close();

  CHECK(dataset_hash(dir.path.string(), {"masks/synth_00002.png"}) != before);
  std::vector<std::string> rels{"splits.txt"};
  for (int i = 0; i < 4; ++i) {
    rels.push_back("images/synth_0000" + std::to_string(i) + ".png");
    rels.push_back("masks/synth_0000" + std::to_string(i) + ".png");
  }
  CHECK(dataset_hash(dir.path.string(), rels) != before);
}

TEST_CASE("load_manifest validation errors") {
  TempDir dir("empty");
  CHECK_THROWS_WITH_AS(load_manifest(dir.path.string()),
                       doctest::Contains("no entries"), std::runtime_error);

  // declared split with 4 pairs, 3 train / 1 test
  SynthConfig cfg;
  cfg.count = 4;
  cfg.seed = 2;
  write_dataset(dir.path.string(), synth_generate<Real>(cfg), 0.76);
  auto m = load_manifest(dir.path.string());
  CHECK(m.split(true).size() == 3);
  CHECK(m.split(false).size() == 1);

  // dimension mismatch error names both files
  TempDir dir2("mismatch");
  fs::create_directories(dir2.path / "images");
  fs::create_directories(dir2.path / "masks");
  Gray8 small{32, 32, std::vector<std::uint8_t>(32 * 32, 100)};
  Gray8 big{64, 64, std::vector<std::uint8_t>(64 * 64, 255)};
  write_png_gray8((dir2.path / "images" / "a.png").string(), small);
  write_png_gray8((dir2.path / "masks" / "a.png").string(), big);
  std::ofstream((dir2.path / "splits.txt").string()) << "a train\n";
  try {
    load_manifest(dir2.path.string());
    FAIL("expected dimension mismatch");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("images/a.png") != std::string::npos);
    CHECK(msg.find("masks/a.png") != std::string::npos);
    CHECK(msg.find("32x32") != std::string::npos);
    CHECK(msg.find("64x64") != std::string::npos);
  }

  // missing mask
  TempDir dir3("missingmask");
  fs::create_directories(dir3.path / "images");
  fs::create_directories(dir3.path / "masks");
  write_png_gray8((dir3.path / "images" / "b.png").string(), small);
  std::ofstream((dir3.path / "splits.txt").string()) << "b test\n";
  CHECK_THROWS_WITH_AS(load_manifest(dir3.path.string()), doctest::Contains("mask"),
                       std::runtime_error);
}

TEST_CASE("masks binarize at 128 on 8-bit sources") {
  TempDir dir("binarize");
  fs::create_directories(dir.path / "images");
  fs::create_directories(dir.path / "masks");
  Gray8 img{16, 16, std::vector<std::uint8_t>(256, 50)};
  Gray8 msk{16, 16, std::vector<std::uint8_t>(256, 0)};
  msk.pixels[0] = 127;
  msk.pixels[1] = 128;
  msk.pixels[2] = 255;
  write_png_gray8((dir.path / "images" / "c.png").string(), img);
  write_png_gray8((dir.path / "masks" / "c.png").string(), msk);
  std::ofstream((dir.path / "splits.txt").string()) << "c train\n";
  const auto m = load_manifest(dir.path.string());
  const auto s = load_sample<Real>(m.entries[0]);
  CHECK(s.mask(0, 0) == 0);
  CHECK(s.mask(0, 1) == 1);
  CHECK(s.mask(0, 2) == 1);
  CHECK(s.image(0, 0) == doctest::Approx(50.0 / 255.0));
}
