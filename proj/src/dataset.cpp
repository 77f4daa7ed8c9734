#include "balistd/dataset.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace balistd {

namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string dataset_hash(const std::string& root, const std::vector<std::string>& rel_paths) {
  std::vector<std::string> sorted = rel_paths;
  std::sort(sorted.begin(), sorted.end());

  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256 init failed");
  }
  for (const auto& rel : sorted) {
    EVP_DigestUpdate(ctx, rel.data(), rel.size());
    const char nul = '\0';
    EVP_DigestUpdate(ctx, &nul, 1);
    const auto bytes = read_file_bytes((fs::path(root) / rel).string());
    EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);

  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    char buf[3];
    std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

void write_dataset(const std::string& root, const std::vector<ImageSample<Real>>& samples,
                   double train_fraction) {
  if (samples.empty()) throw std::invalid_argument("write_dataset: no samples");
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw std::invalid_argument("train_fraction must be in (0,1)");

  fs::create_directories(fs::path(root) / "images");
  fs::create_directories(fs::path(root) / "masks");

  const int train_count =
      std::max(1, static_cast<int>(std::floor(samples.size() * train_fraction)));

  std::ofstream splits((fs::path(root) / "splits.txt").string());
  if (!splits) throw std::runtime_error("cannot write splits.txt under " + root);

  std::vector<std::string> rel_paths{"splits.txt"};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const std::string img_rel = "images/" + s.id + ".png";
    const std::string msk_rel = "masks/" + s.id + ".png";

    write_png_gray8((fs::path(root) / img_rel).string(), quantize_to_gray8(s.image));

    Gray8 m;
    m.height = static_cast<int>(s.mask.rows());
    m.width = static_cast<int>(s.mask.cols());
    m.pixels.resize(static_cast<std::size_t>(m.height) * m.width);
    for (int r = 0; r < m.height; ++r)
      for (int c = 0; c < m.width; ++c)
        m.pixels[static_cast<std::size_t>(r) * m.width + c] = s.mask(r, c) ? 255 : 0;
    write_png_gray8((fs::path(root) / msk_rel).string(), m);

    splits << s.id << ' ' << (static_cast<int>(i) < train_count ? "train" : "test") << '\n';
    rel_paths.push_back(img_rel);
    rel_paths.push_back(msk_rel);
  }
  splits.close();

  std::ofstream sha((fs::path(root) / "MANIFEST.sha").string());
  sha << dataset_hash(root, rel_paths) << '\n';
}

DatasetManifest load_manifest(const std::string& root) {
  const fs::path splits_path = fs::path(root) / "splits.txt";
  if (!fs::exists(splits_path))
    throw std::runtime_error("load_manifest: no entries (missing splits.txt in " + root + ")");

  DatasetManifest m;
  m.root = root;

  std::ifstream in(splits_path.string());
  std::string line;
  std::vector<std::string> rel_paths{"splits.txt"};
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id, tag;
    ss >> id >> tag;
    if (id.empty() || (tag != "train" && tag != "test"))
      throw std::runtime_error("load_manifest: bad splits.txt line " + std::to_string(lineno) +
                               ": '" + line + "'");
    ManifestEntry e;
    e.id = id;
    e.train = tag == "train";
    const std::string img_rel = "images/" + id + ".png";
    const std::string msk_rel = "masks/" + id + ".png";
    e.image_path = (fs::path(root) / img_rel).string();
    e.mask_path = (fs::path(root) / msk_rel).string();
    if (!fs::exists(e.image_path)) throw std::runtime_error("load_manifest: missing " + e.image_path);
    if (!fs::exists(e.mask_path)) throw std::runtime_error("load_manifest: missing mask " + e.mask_path);

    // validate dimensions and grayscale-ness now, with file names in errors
    const Gray8 img = read_png_gray8(e.image_path);
    const Gray8 msk = read_png_gray8(e.mask_path);
    if (img.height != msk.height || img.width != msk.width)
      throw std::runtime_error("load_manifest: dimension mismatch between " + e.image_path + " (" +
                               std::to_string(img.height) + "x" + std::to_string(img.width) +
                               ") and " + e.mask_path + " (" + std::to_string(msk.height) + "x" +
                               std::to_string(msk.width) + ")");

    m.entries.push_back(std::move(e));
    rel_paths.push_back(img_rel);
    rel_paths.push_back(msk_rel);
  }
  if (m.entries.empty()) throw std::runtime_error("load_manifest: no entries in " + root);

  m.hash_hex = dataset_hash(root, rel_paths);
  return m;
}

}  // namespace balistd
